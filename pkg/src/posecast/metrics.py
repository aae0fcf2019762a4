"""Evaluation metrics, per-timestamp curves, and hardness stratification.

Conventions (documented because the usual definitions leave them open):

* rmse: sqrt of the mean per-joint squared 2D distance, i.e.
  sqrt(sum of squared coordinate errors / (T * N)).
* pck: fraction of (t, joint) instances whose predicted position is strictly
  within delta of ground truth. Coordinates are already image-normalized, so
  no further normalization is applied. Default delta is 0.05 for body13 and
  0.15 for hand21.
* ade / fde: l2 norms taken over the flattened 2N frame vector; ade averages
  over timestamps, fde is the final timestamp.
* hardness: per joint, the variance of consecutive-frame displacement
  magnitudes within the ground-truth future sequence, averaged over joints.
  More (and more uneven) motion scores harder.

Dataset-level numbers are means of per-sample values; with a shared horizon
this makes the per-timestamp displacement curve average back to the dataset
ADE exactly.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .core import PoseSequence
from .errors import ConfigurationError, ContractError

PCK_DELTA_BY_KIND = {"body13": 0.05, "hand21": 0.15}
DEFAULT_HARDEST_FRACTION = 0.10


def default_pck_delta(kind):
    try:
        return PCK_DELTA_BY_KIND[kind]
    except KeyError:
        raise ConfigurationError(
            f"no default PCK threshold for topology kind {kind!r}; pass delta explicitly"
        ) from None


def _frames(seq):
    arr = seq.frames if isinstance(seq, PoseSequence) else np.asarray(seq, dtype=np.float64)
    if arr.ndim != 2:
        raise ContractError(f"expected (T, 2N) frames, got shape {arr.shape}")
    return arr.astype(np.float64)


def _paired(pred, gt):
    p, g = _frames(pred), _frames(gt)
    if p.shape != g.shape:
        raise ContractError(f"pred/gt shapes differ: {p.shape} vs {g.shape}")
    return p, g


def rmse(pred, gt):
    p, g = _paired(pred, gt)
    t, two_n = p.shape
    return float(np.sqrt(((p - g) ** 2).sum() / (t * (two_n // 2))))


def pck(pred, gt, delta):
    if delta <= 0:
        raise ConfigurationError(f"delta must be positive, got {delta}")
    p, g = _paired(pred, gt)
    dist = np.linalg.norm(p.reshape(p.shape[0], -1, 2) - g.reshape(p.shape[0], -1, 2), axis=-1)
    return float((dist < delta).mean())


def ade(pred, gt):
    p, g = _paired(pred, gt)
    return float(np.linalg.norm(p - g, axis=1).mean())


def fde(pred, gt):
    p, g = _paired(pred, gt)
    return float(np.linalg.norm(p[-1] - g[-1]))


def per_timestamp_report(preds, gts, delta):
    """Frame-position curves over a prediction set.

    Returns dict with "displacement" (mean over samples of the per-frame 2N
    l2 error) and "pck" arrays, each of length T. The displacement curve's
    mean equals the dataset ADE.
    """
    pairs = [_paired(p, g) for p, g in zip(preds, gts)]
    if not pairs:
        raise ContractError("need at least one prediction to build curves")
    horizon = pairs[0][0].shape[0]
    if any(p.shape[0] != horizon for p, _ in pairs):
        raise ContractError("all sequences must share one horizon")
    p = np.stack([pr for pr, _ in pairs])  # (S, T, 2N)
    g = np.stack([gt for _, gt in pairs])
    disp = np.linalg.norm(p - g, axis=2).mean(axis=0)
    joint_dist = np.linalg.norm(
        p.reshape(*p.shape[:2], -1, 2) - g.reshape(*g.shape[:2], -1, 2), axis=-1
    )
    pck_t = (joint_dist < delta).mean(axis=(0, 2))
    return {"displacement": disp, "pck": pck_t}


def hardness_scores(gts):
    """Per-sample motion-variance score over ground-truth future sequences."""
    scores = []
    for seq in gts:
        frames = _frames(seq)
        if frames.shape[0] < 2:
            scores.append(0.0)
            continue
        step = np.diff(frames, axis=0).reshape(frames.shape[0] - 1, -1, 2)
        mags = np.linalg.norm(step, axis=-1)  # (T-1, N)
        scores.append(float(mags.var(axis=0).mean()))
    return np.asarray(scores, dtype=np.float64)


def select_hardest(scores, fraction=DEFAULT_HARDEST_FRACTION):
    """Indices of the top `fraction` scores, descending, ties by lower index."""
    if not 0.0 <= fraction <= 1.0:
        raise ConfigurationError(f"fraction must be in [0, 1], got {fraction}")
    scores = np.asarray(scores, dtype=np.float64)
    count = int(np.floor(fraction * scores.size + 0.5))
    order = np.argsort(-scores, kind="stable")
    return order[:count]


@dataclass(frozen=True)
class EvalReport:
    """Aggregate metrics for one prediction set; serializes to stable JSON."""

    rmse: float
    pck: float
    ade: float
    fde: float
    delta: float
    n_samples: int
    per_timestamp_displacement: list = field(default_factory=list)
    per_timestamp_pck: list = field(default_factory=list)
    hardest_fraction: float = DEFAULT_HARDEST_FRACTION
    hardest: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "rmse": self.rmse,
            "pck": self.pck,
            "ade": self.ade,
            "fde": self.fde,
            "delta": self.delta,
            "n_samples": self.n_samples,
            "per_timestamp_displacement": list(self.per_timestamp_displacement),
            "per_timestamp_pck": list(self.per_timestamp_pck),
            "hardest_fraction": self.hardest_fraction,
            "hardest": dict(self.hardest),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @staticmethod
    def from_dict(data):
        return EvalReport(
            rmse=data["rmse"], pck=data["pck"], ade=data["ade"], fde=data["fde"],
            delta=data["delta"], n_samples=data["n_samples"],
            per_timestamp_displacement=list(data.get("per_timestamp_displacement", [])),
            per_timestamp_pck=list(data.get("per_timestamp_pck", [])),
            hardest_fraction=data.get("hardest_fraction", DEFAULT_HARDEST_FRACTION),
            hardest=dict(data.get("hardest", {})),
        )


def _mean_metrics(preds, gts, delta):
    return {
        "rmse": float(np.mean([rmse(p, g) for p, g in zip(preds, gts)])),
        "pck": float(np.mean([pck(p, g, delta) for p, g in zip(preds, gts)])),
        "ade": float(np.mean([ade(p, g) for p, g in zip(preds, gts)])),
        "fde": float(np.mean([fde(p, g) for p, g in zip(preds, gts)])),
    }


def evaluate(preds, gts, delta, hardest_fraction=DEFAULT_HARDEST_FRACTION):
    """Full EvalReport: scalar metrics, per-timestamp curves, hardest-decile slice."""
    preds = [_frames(p) for p in preds]
    gts = [_frames(g) for g in gts]
    if len(preds) != len(gts) or not preds:
        raise ContractError("pred/gt lists must be same nonempty length")
    overall = _mean_metrics(preds, gts, delta)
    curves = per_timestamp_report(preds, gts, delta)
    idx = select_hardest(hardness_scores(gts), hardest_fraction)
    hardest = {}
    if idx.size:
        hardest = _mean_metrics([preds[i] for i in idx], [gts[i] for i in idx], delta)
        hardest["n_samples"] = int(idx.size)
    return EvalReport(
        rmse=overall["rmse"], pck=overall["pck"], ade=overall["ade"], fde=overall["fde"],
        delta=float(delta), n_samples=len(preds),
        per_timestamp_displacement=[float(x) for x in curves["displacement"]],
        per_timestamp_pck=[float(x) for x in curves["pck"]],
        hardest_fraction=float(hardest_fraction), hardest=hardest,
    )
