"""Pose value types, coordinate normalization, and displacement application.

All types wrap read-only float64 numpy arrays and are immutable after
construction; operations are pure functions.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError

DEFAULT_SIGMA = 0.8


def _frozen_array(values, ndim, what):
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ContractError(f"{what} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{what} contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Pose:
    """One frame's keypoints as an interleaved (x1, y1, ..., xN, yN) vector."""

    coords: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.coords, 1, "pose coords")
        if arr.size == 0 or arr.size % 2 != 0:
            raise ContractError(f"pose coords length must be even and > 0, got {arr.size}")
        object.__setattr__(self, "coords", arr)

    @property
    def num_joints(self):
        return self.coords.size // 2

    def joints(self):
        """Coordinates as an (N, 2) array of (x, y) rows."""
        return self.coords.reshape(-1, 2)


@dataclass(frozen=True)
class PoseSequence:
    """T poses sharing one topology, stored as a (T, 2N) frame matrix."""

    frames: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.frames, 2, "sequence frames")
        if arr.shape[0] < 1:
            raise ContractError("sequence must have at least one frame")
        if arr.shape[1] == 0 or arr.shape[1] % 2 != 0:
            raise ContractError(f"frame width must be even and > 0, got {arr.shape[1]}")
        object.__setattr__(self, "frames", arr)

    @property
    def horizon(self):
        return self.frames.shape[0]

    @property
    def num_joints(self):
        return self.frames.shape[1] // 2

    def pose(self, t):
        return Pose(self.frames[t])


@dataclass(frozen=True)
class DisplacementSequence:
    """Per-frame offsets relative to the initial pose, shape (T, 2N)."""

    deltas: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.deltas, 2, "displacement deltas")
        object.__setattr__(self, "deltas", arr)

    @property
    def horizon(self):
        return self.deltas.shape[0]


def _check_norm_args(image_width, image_height, sigma):
    if image_width <= 0 or image_height <= 0:
        raise ConfigurationError(
            f"image dims must be positive, got {image_width}x{image_height}"
        )
    if sigma <= 0:
        raise ConfigurationError(f"sigma must be positive, got {sigma}")


def normalize_pose(raw, image_width, image_height, sigma=DEFAULT_SIGMA):
    """Pixel coordinates -> image-relative units: x / (W*sigma), y / (H*sigma).

    sigma slightly expands the unit box (default 0.8); denormalize_pose is the
    exact inverse up to floating round-off.
    """
    _check_norm_args(image_width, image_height, sigma)
    pts = raw.joints() / np.array([image_width * sigma, image_height * sigma])
    return Pose(pts.reshape(-1))


def denormalize_pose(normalized, image_width, image_height, sigma=DEFAULT_SIGMA):
    """Inverse of normalize_pose."""
    _check_norm_args(image_width, image_height, sigma)
    pts = normalized.joints() * np.array([image_width * sigma, image_height * sigma])
    return Pose(pts.reshape(-1))


def apply_displacements(p0, d):
    """Add each frame's offset to the initial pose: frame t = p0 + deltas[t].

    Every delta is relative to p0, not to the previous frame.
    """
    if d.deltas.shape[1] != p0.coords.size:
        raise ContractError(
            f"displacement width {d.deltas.shape[1]} != pose width {p0.coords.size}"
        )
    return PoseSequence(p0.coords[None, :] + d.deltas)
