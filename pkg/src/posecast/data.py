"""Dataset records, JSONL ingestion/serialization, splits, and synthetic motion.

File format ("posecast-data-v1", see docs/FORMATS.md): one JSON object per
line, no header line. Required keys: id, topology, label, p0 (flat 2N array in
the canonical joint order), future (T x 2N nested arrays). Optional:
context_ref (precomputed-feature id), image_size ([width, height] in pixels).
Coordinates are stored already normalized.
"""

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .core import Pose, PoseSequence
from .errors import ConfigurationError, ContractError, DatasetError
from .skeleton import build_topology

SYNTHETIC_FAMILIES = ("linear_drift", "sinusoidal_swing", "circular_arc", "two_phase")


@dataclass(frozen=True)
class Sample:
    """One dataset record: initial pose, conditioning, and the future to predict."""

    id: str
    topology: str
    label: str
    p0: Pose
    future: PoseSequence
    context_ref: str = None
    image_size: tuple = None

    def __post_init__(self):
        if self.p0.coords.size != self.future.frames.shape[1]:
            raise ContractError(
                f"sample {self.id!r}: p0 width {self.p0.coords.size} != "
                f"future width {self.future.frames.shape[1]}"
            )

    @property
    def horizon(self):
        return self.future.horizon


def _require(record, key, line, path):
    if key not in record:
        raise DatasetError(f"missing field {key!r}", path=path, line=line)
    return record[key]


def _sample_from_record(record, line, path):
    sid = _require(record, "id", line, path)
    kind = _require(record, "topology", line, path)
    label = _require(record, "label", line, path)
    p0_raw = _require(record, "p0", line, path)
    future_raw = _require(record, "future", line, path)
    try:
        topo = build_topology(kind)
    except ConfigurationError as exc:
        raise DatasetError(str(exc), path=path, line=line) from None
    p0_arr = np.asarray(p0_raw, dtype=np.float64)
    if p0_arr.ndim != 1 or p0_arr.size != topo.pose_dim:
        raise DatasetError(
            f"p0 must have {topo.pose_dim} coordinates ({topo.num_joints} joints), "
            f"got shape {p0_arr.shape}",
            path=path, line=line,
        )
    future_arr = np.asarray(future_raw, dtype=np.float64)
    if future_arr.ndim != 2 or future_arr.shape[1] != topo.pose_dim:
        raise DatasetError(
            f"future must be T x {topo.pose_dim}, got shape {future_arr.shape}",
            path=path, line=line,
        )
    if not np.all(np.isfinite(p0_arr)) or not np.all(np.isfinite(future_arr)):
        raise DatasetError("non-finite coordinate", path=path, line=line)
    image_size = record.get("image_size")
    if image_size is not None:
        image_size = tuple(image_size)
        if len(image_size) != 2 or any(v <= 0 for v in image_size):
            raise DatasetError(f"bad image_size {image_size}", path=path, line=line)
    return Sample(
        id=str(sid), topology=kind, label=str(label),
        p0=Pose(p0_arr), future=PoseSequence(future_arr),
        context_ref=record.get("context_ref"), image_size=image_size,
    )


def load_dataset(path):
    """Read and validate a posecast-data-v1 JSONL file."""
    samples = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON: {exc.msg}", path=path, line=line_no) from None
            if not isinstance(record, dict):
                raise DatasetError("record must be a JSON object", path=path, line=line_no)
            sample = _sample_from_record(record, line_no, path)
            if sample.id in seen:
                raise DatasetError(f"duplicate id {sample.id!r}", path=path, line=line_no)
            seen.add(sample.id)
            samples.append(sample)
    return samples


def sample_to_record(sample):
    record = {
        "id": sample.id,
        "topology": sample.topology,
        "label": sample.label,
        "p0": [float(v) for v in sample.p0.coords],
        "future": [[float(v) for v in row] for row in sample.future.frames],
    }
    if sample.context_ref is not None:
        record["context_ref"] = sample.context_ref
    if sample.image_size is not None:
        record["image_size"] = [int(v) for v in sample.image_size]
    return record


def write_dataset(path, samples):
    """Write samples as posecast-data-v1 JSONL (one line per sample)."""
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample_to_record(sample), sort_keys=True) + "\n")


def split(samples, train_fraction=0.9, seed=0):
    """Deterministic disjoint/exhaustive train-test split by shuffled indices."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    n_train = int(round(train_fraction * len(samples)))
    train_idx = sorted(order[:n_train].tolist())
    test_idx = sorted(order[n_train:].tolist())
    return [samples[i] for i in train_idx], [samples[i] for i in test_idx]


@dataclass(frozen=True)
class SyntheticMotionSpec:
    """Closed-form motion family parameters for the synthetic generator.

    amplitude/frequency/phase parameterize the family's trajectory; noise_std
    is per-coordinate Gaussian noise added to every future frame. The label is
    the action string attached to every generated sample.
    """

    family: str
    amplitude: float
    frequency: float = 0.0
    phase: float = 0.0
    noise_std: float = 0.0
    label: str = None

    def __post_init__(self):
        if self.family not in SYNTHETIC_FAMILIES:
            raise ConfigurationError(
                f"unknown motion family {self.family!r}; expected one of {SYNTHETIC_FAMILIES}"
            )
        if not np.isfinite(self.amplitude):
            raise ConfigurationError("amplitude must be finite")
        if self.noise_std < 0:
            raise ConfigurationError("noise_std must be >= 0")
        if self.label is None:
            object.__setattr__(self, "label", self.family.replace("_", " "))


FAMILY_DEFAULTS = {
    "linear_drift": SyntheticMotionSpec("linear_drift", amplitude=0.004, phase=0.6,
                                        noise_std=0.004),
    "sinusoidal_swing": SyntheticMotionSpec("sinusoidal_swing", amplitude=0.12,
                                            frequency=2 * math.pi / 30, phase=0.3,
                                            noise_std=0.004),
    "circular_arc": SyntheticMotionSpec("circular_arc", amplitude=0.1,
                                        frequency=2 * math.pi / 45, phase=0.0,
                                        noise_std=0.004),
    "two_phase": SyntheticMotionSpec("two_phase", amplitude=0.006, phase=1.0,
                                     noise_std=0.004),
}


def family_offsets(spec, p0_coords, horizon):
    """Closed-form whole-pose offsets for t = 1..horizon, shape (T, 2).

    Trajectory direction/phase is tied to the initial pose through its
    centroid c: angle = phase + 2*pi*(c_x + c_y). Every joint shares the
    offset (rigid translation), so the noise-free future is an exact,
    independently recomputable function of (P0, spec).
    """
    pts = np.asarray(p0_coords, dtype=np.float64).reshape(-1, 2)
    cx, cy = pts[:, 0].mean(), pts[:, 1].mean()
    angle = spec.phase + 2 * math.pi * (cx + cy)
    t = np.arange(1, horizon + 1, dtype=np.float64)
    if spec.family == "linear_drift":
        v = spec.amplitude * np.array([math.cos(angle), math.sin(angle)])
        return t[:, None] * v[None, :]
    if spec.family == "sinusoidal_swing":
        x = spec.amplitude * np.sin(spec.frequency * t + angle)
        x = x - spec.amplitude * math.sin(angle)  # start at zero offset
        return np.stack([x, np.zeros_like(x)], axis=1)
    if spec.family == "circular_arc":
        ang_t = spec.frequency * t + angle
        return spec.amplitude * np.stack(
            [np.cos(ang_t) - math.cos(angle), np.sin(ang_t) - math.sin(angle)], axis=1
        )
    if spec.family == "two_phase":
        v = spec.amplitude * np.array([math.cos(angle), math.sin(angle)])
        w = 2.0 * spec.amplitude * np.array([-math.sin(angle), math.cos(angle)])
        switch = horizon // 2
        t1 = np.minimum(t, switch)
        t2 = np.maximum(t - switch, 0.0)
        return t1[:, None] * v[None, :] + t2[:, None] * w[None, :]
    raise ConfigurationError(f"unknown motion family {spec.family!r}")


def generate_synthetic(spec, n_samples, horizon, topology="body13", seed=0,
                       id_prefix=None):
    """Sample n closed-form motion trajectories with randomized initial poses."""
    if horizon < 1:
        raise ContractError(f"horizon must be >= 1, got {horizon}")
    if n_samples < 1:
        raise ContractError(f"n_samples must be >= 1, got {n_samples}")
    topo = build_topology(topology)
    rng = np.random.default_rng(seed)
    prefix = id_prefix if id_prefix is not None else spec.family
    samples = []
    for k in range(n_samples):
        p0 = rng.uniform(0.25, 0.75, size=topo.pose_dim)
        offsets = family_offsets(spec, p0, horizon)  # (T, 2)
        frames = p0[None, :] + np.tile(offsets, topo.num_joints)
        if spec.noise_std > 0:
            frames = frames + rng.normal(0.0, spec.noise_std, size=frames.shape)
        samples.append(
            Sample(
                id=f"{prefix}-{k:05d}", topology=topology, label=spec.label,
                p0=Pose(p0), future=PoseSequence(frames),
            )
        )
    return samples


def benchmark_dataset(n_per_family=200, horizon=45, topology="body13", seed=0,
                      noise_std=None):
    """The standard synthetic benchmark: all four families, one shared seed."""
    samples = []
    for k, family in enumerate(SYNTHETIC_FAMILIES):
        spec = FAMILY_DEFAULTS[family]
        if noise_std is not None:
            spec = replace(spec, noise_std=noise_std)
        samples.extend(
            generate_synthetic(
                spec, n_per_family, horizon, topology,
                seed=seed * 1009 + k,
            )
        )
    return samples


def benchmark_vocabulary():
    return tuple(FAMILY_DEFAULTS[f].label for f in SYNTHETIC_FAMILIES)
