"""posecast: one-stage 2D pose-sequence forecasting.

A single decoder forward predicts all future poses from the initial pose plus
conditioning context, using placeholder input rows that are identical at
training and inference; includes the relative distance/direction loss stack
with analytic gradients, four trajectory metrics, five baselines, and an
experiment harness.
"""

from .core import (
    DisplacementSequence,
    Pose,
    PoseSequence,
    apply_displacements,
    denormalize_pose,
    normalize_pose,
    DEFAULT_SIGMA,
)
from .data import Sample, SyntheticMotionSpec, generate_synthetic, load_dataset, split, write_dataset
from .losses import (
    DirectionMatrix,
    DistanceMatrix,
    LossWeights,
    batch_loss,
    direction_loss,
    direction_matrix,
    distance_loss,
    distance_matrix,
    pose_loss,
    sequence_loss,
    total_loss,
    total_loss_gradient,
    verify_gradient,
)
from .metrics import EvalReport, ade, evaluate, fde, hardness_scores, pck, rmse, select_hardest
from .model import (
    DecoderInput,
    ModelConfig,
    PoseDecoder,
    build_input_ntp,
    build_input_placeholder,
    make_model,
)
from .skeleton import SkeletonTopology, build_topology
from .training import BenchmarkConfig, TrainConfig, run_ablation, run_drift_experiment, train

__version__ = "0.1.0"
