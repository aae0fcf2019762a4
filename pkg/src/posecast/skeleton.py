"""Skeleton topologies: joint counts, canonical joint orders, adjacency edges.

The two built-in topologies are the 13-joint body skeleton and the 21-landmark
hand. Their joint orders and edge tables are a documented convention of this
package (see docs/FORMATS.md and docs/topologies.json); ingested data must use
the same joint order.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError

BODY13_JOINT_NAMES = (
    "head",
    "l_shoulder",
    "r_shoulder",
    "l_elbow",
    "r_elbow",
    "l_wrist",
    "r_wrist",
    "l_hip",
    "r_hip",
    "l_knee",
    "r_knee",
    "l_ankle",
    "r_ankle",
)

BODY13_EDGES = (
    (0, 1),   # head - l_shoulder
    (0, 2),   # head - r_shoulder
    (1, 2),   # l_shoulder - r_shoulder
    (1, 3),   # l_shoulder - l_elbow
    (3, 5),   # l_elbow - l_wrist
    (2, 4),   # r_shoulder - r_elbow
    (4, 6),   # r_elbow - r_wrist
    (1, 7),   # l_shoulder - l_hip
    (2, 8),   # r_shoulder - r_hip
    (7, 8),   # l_hip - r_hip
    (7, 9),   # l_hip - l_knee
    (9, 11),  # l_knee - l_ankle
    (8, 10),  # r_hip - r_knee
    (10, 12), # r_knee - r_ankle
)

HAND21_JOINT_NAMES = (
    "wrist",
    "thumb_cmc", "thumb_mcp", "thumb_ip", "thumb_tip",
    "index_mcp", "index_pip", "index_dip", "index_tip",
    "middle_mcp", "middle_pip", "middle_dip", "middle_tip",
    "ring_mcp", "ring_pip", "ring_dip", "ring_tip",
    "pinky_mcp", "pinky_pip", "pinky_dip", "pinky_tip",
)

# 5 wrist spokes to the finger bases, 3 chain edges inside each finger,
# plus the thumb-base/index-base link: 21 edges, wrist degree 5.
HAND21_EDGES = (
    (0, 1), (0, 5), (0, 9), (0, 13), (0, 17),
    (1, 2), (2, 3), (3, 4),
    (5, 6), (6, 7), (7, 8),
    (9, 10), (10, 11), (11, 12),
    (13, 14), (14, 15), (15, 16),
    (17, 18), (18, 19), (19, 20),
    (1, 5),
)

TOPOLOGY_KINDS = ("body13", "hand21", "custom")


@dataclass(frozen=True)
class SkeletonTopology:
    """Joint count plus an undirected adjacency edge list.

    Edges are stored with i < j, deduplicated, in a fixed order. Immutable
    after construction; safe to share across threads.
    """

    kind: str
    num_joints: int
    edges: tuple = field(default_factory=tuple)
    joint_names: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in TOPOLOGY_KINDS:
            raise ConfigurationError(f"unknown topology kind {self.kind!r}")
        if self.num_joints < 1:
            raise ConfigurationError("num_joints must be positive")
        seen = set()
        canon = []
        for i, j in self.edges:
            if i == j:
                raise ConfigurationError(f"self-loop edge ({i}, {j})")
            if not (0 <= i < self.num_joints and 0 <= j < self.num_joints):
                raise ConfigurationError(
                    f"edge ({i}, {j}) out of range for {self.num_joints} joints"
                )
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ConfigurationError(f"duplicate edge ({i}, {j})")
            seen.add(key)
            canon.append(key)
        object.__setattr__(self, "edges", tuple(canon))
        if self.joint_names and len(self.joint_names) != self.num_joints:
            raise ConfigurationError("joint_names length must equal num_joints")

    @property
    def pose_dim(self):
        return 2 * self.num_joints

    @property
    def num_edges(self):
        return len(self.edges)

    def degree(self, joint):
        return sum(1 for i, j in self.edges if joint in (i, j))

    def directed_edges(self):
        """Both orientations of every edge, shape (2E, 2) int array.

        The loss double sums over all (i, j) are equal to sums over this list
        because non-adjacent matrix entries are zero by construction.
        """
        e = np.asarray(self.edges, dtype=np.int64)
        return np.concatenate([e, e[:, ::-1]], axis=0)

    def adjacency_mask(self):
        mask = np.zeros((self.num_joints, self.num_joints), dtype=bool)
        for i, j in self.edges:
            mask[i, j] = True
            mask[j, i] = True
        return mask

    def check_pose_dim(self, dim):
        if dim != self.pose_dim:
            raise ContractError(
                f"pose has {dim} coordinates but topology {self.kind!r} "
                f"needs {self.pose_dim} (2 x {self.num_joints} joints)"
            )


def build_topology(kind, num_joints=None, edges=None):
    """Return the canonical topology for ``kind``.

    ``custom`` requires explicit num_joints and edges; body13/hand21 reject
    overrides so the canonical tables cannot be silently altered.
    """
    if kind == "body13":
        if num_joints not in (None, 13) or edges is not None:
            raise ConfigurationError("body13 topology is fixed; use kind='custom'")
        return SkeletonTopology("body13", 13, BODY13_EDGES, BODY13_JOINT_NAMES)
    if kind == "hand21":
        if num_joints not in (None, 21) or edges is not None:
            raise ConfigurationError("hand21 topology is fixed; use kind='custom'")
        return SkeletonTopology("hand21", 21, HAND21_EDGES, HAND21_JOINT_NAMES)
    if kind == "custom":
        if num_joints is None or edges is None:
            raise ConfigurationError("custom topology needs num_joints and edges")
        return SkeletonTopology("custom", int(num_joints), tuple(edges))
    raise ConfigurationError(
        f"unknown topology kind {kind!r}; expected one of {TOPOLOGY_KINDS}"
    )
