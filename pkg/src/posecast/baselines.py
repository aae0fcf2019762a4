"""The five comparison systems: NN retrieval (pose / feature), LSTM next-pose
regression, the next-token transformer (built on PoseDecoder's ntp mode), and
the two-stage quantize-then-predict pipeline.

The codebook is a desk-scale k-means quantizer over whole-pose vectors:
k-means++ seeding, Lloyd iterations, fixed seed. encode() is exact
nearest-code search, so the end-to-end error of any code predictor is lower
bounded by the codebook's own reconstruction error, frame by frame.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .core import PoseSequence
from .errors import ConfigurationError, ContractError
from .metrics import rmse
from .model import sinusoidal_encoding

DEFAULT_CODEBOOK_SIZE = 64


def _flat_p0(samples):
    return np.stack([s.p0.coords for s in samples])


def _nearest_rows(x, centers):
    """argmin over squared distances without the (M, K, D) temporary.

    The expansion ||x||^2 - 2 x.c + ||c||^2 keeps ties resolving to the lowest
    index (argmin is stable) and is exact enough for quantization; encode/fit
    correctness against brute force is pinned by tests.
    """
    d2 = (
        (x ** 2).sum(axis=1, keepdims=True)
        - 2.0 * (x @ centers.T)
        + (centers ** 2).sum(axis=1)[None, :]
    )
    return d2.argmin(axis=1)


class PoseNearestNeighbor:
    """Retrieves the training future whose P0 is Euclidean-closest to the query."""

    def __init__(self, samples):
        if not samples:
            raise ConfigurationError("nearest-neighbor database is empty")
        self.samples = list(samples)
        self._keys = _flat_p0(self.samples)

    def nearest_index(self, query_coords):
        q = np.asarray(query_coords, dtype=np.float64).reshape(-1)
        if q.size != self._keys.shape[1]:
            raise ContractError(
                f"query width {q.size} != database width {self._keys.shape[1]}"
            )
        dist = np.linalg.norm(self._keys - q[None, :], axis=1)
        return int(np.argmin(dist))  # argmin takes the lowest index on ties

    def predict(self, p0):
        coords = getattr(p0, "coords", p0)
        return self.samples[self.nearest_index(coords)].future


class FeatureNearestNeighbor:
    """Same retrieval, but keyed on flattened context features."""

    def __init__(self, samples, provider):
        if not samples:
            raise ConfigurationError("nearest-neighbor database is empty")
        self.samples = list(samples)
        with torch.no_grad():
            feats = provider.batch_features(self.samples)
        self._keys = feats.reshape(len(self.samples), -1).double().numpy()

    def nearest_index(self, query_features):
        q = np.asarray(query_features, dtype=np.float64).reshape(-1)
        if q.size != self._keys.shape[1]:
            raise ContractError(
                f"feature width {q.size} != database width {self._keys.shape[1]}"
            )
        dist = np.linalg.norm(self._keys - q[None, :], axis=1)
        return int(np.argmin(dist))

    def predict(self, query_features):
        if isinstance(query_features, torch.Tensor):
            query_features = query_features.detach().numpy()
        return self.samples[self.nearest_index(query_features)].future


class LstmForecaster(nn.Module):
    """Next-pose LSTM over [previous pose, pooled context], residual output.

    The output layer starts at zero, so the untrained model repeats P0.
    cell_updates counts recurrence steps: generation runs exactly T of them.
    """

    def __init__(self, pose_dim, context_dim, hidden=128, layers=1):
        super().__init__()
        self.pose_dim = pose_dim
        self.context_dim = context_dim
        self.lstm = nn.LSTM(pose_dim + context_dim, hidden, num_layers=layers,
                            batch_first=True)
        self.head = nn.Linear(hidden, pose_dim)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)
        self.cell_updates = 0

    def _pool(self, context):
        if context.dim() == 2:
            context = context[None]
        return context.mean(dim=1)  # (B, d_M)

    def teacher_forced(self, p0, future, context):
        """Predictions for P1..PT given ground-truth previous poses."""
        p0 = torch.as_tensor(p0, dtype=torch.float32)
        if p0.dim() == 1:
            p0 = p0[None]
        future = torch.as_tensor(future, dtype=torch.float32)
        if future.dim() == 2:
            future = future[None]
        prev = torch.cat([p0[:, None, :], future[:, :-1, :]], dim=1)  # (B, T, 2N)
        ctx = self._pool(context)[:, None, :].expand(-1, prev.shape[1], -1)
        out, _ = self.lstm(torch.cat([prev, ctx], dim=2))
        self.cell_updates += prev.shape[1]
        return prev + self.head(out)

    def generate(self, p0, context, horizon):
        """Autoregressive rollout: feeds back its own predictions for T steps."""
        p0 = torch.as_tensor(p0, dtype=torch.float32)
        if p0.dim() == 1:
            p0 = p0[None]
        ctx = self._pool(context)
        if ctx.shape[0] == 1 and p0.shape[0] > 1:
            ctx = ctx.expand(p0.shape[0], -1)
        state = None
        prev = p0
        preds = []
        for _ in range(horizon):
            out, state = self.lstm(torch.cat([prev, ctx], dim=1)[:, None, :], state)
            prev = prev + self.head(out[:, 0, :])
            self.cell_updates += 1
            preds.append(prev)
        return torch.stack(preds, dim=1)


@dataclass(frozen=True)
class Codebook:
    """K pose code vectors; encode is exact nearest-code search."""

    vectors: np.ndarray  # (K, 2N)
    trained: bool = True

    def __post_init__(self):
        arr = np.asarray(self.vectors, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ConfigurationError(f"codebook needs K >= 2 code vectors, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("codebook vectors must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "vectors", arr)

    @property
    def size(self):
        return self.vectors.shape[0]

    def encode(self, poses):
        """Nearest code index per pose row; ties go to the lowest index."""
        arr = np.asarray(poses, dtype=np.float64)
        single = arr.ndim == 1
        flat = arr.reshape(-1, arr.shape[-1])
        if flat.shape[1] != self.vectors.shape[1]:
            raise ContractError(
                f"pose width {flat.shape[1]} != code width {self.vectors.shape[1]}"
            )
        idx = _nearest_rows(flat, self.vectors)
        return int(idx[0]) if single else idx.reshape(arr.shape[:-1])

    def decode(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.size):
            raise ContractError(f"code index out of range [0, {self.size})")
        return self.vectors[idx]

    def reconstruct(self, poses):
        return self.decode(self.encode(poses))


def vq_fit(poses, k=DEFAULT_CODEBOOK_SIZE, seed=0, max_iter=100):
    """k-means codebook over whole-pose vectors (k-means++ seeding + Lloyd)."""
    x = np.asarray(poses, dtype=np.float64).reshape(-1, np.asarray(poses).shape[-1])
    if k < 2:
        raise ConfigurationError(f"codebook size must be >= 2, got {k}")
    distinct = np.unique(x, axis=0).shape[0]
    if k > distinct:
        warnings.warn(
            f"degenerate codebook: K={k} exceeds {distinct} distinct training poses",
            RuntimeWarning,
        )
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(len(x))]
    closest = ((x - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[i] = x[rng.integers(len(x))]
            continue
        centers[i] = x[rng.choice(len(x), p=closest / total)]
        closest = np.minimum(closest, ((x - centers[i]) ** 2).sum(axis=1))

    assign = None
    for _ in range(max_iter):
        d2 = (
            (x ** 2).sum(axis=1, keepdims=True)
            - 2.0 * (x @ centers.T)
            + (centers ** 2).sum(axis=1)[None, :]
        )
        new_assign = d2.argmin(axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            members = x[assign == c]
            if len(members):
                centers[c] = members.mean(axis=0)
            else:  # re-seed empty clusters at the farthest point, deterministic
                centers[c] = x[d2.min(axis=1).argmax()]
    return Codebook(vectors=centers)


def reconstruction_rmse(codebook, sequences):
    """Mean per-sequence RMSE of encode-decode on ground-truth frames.

    This is the quantization floor: no code predictor can beat it.
    """
    values = []
    for seq in sequences:
        frames = seq.frames if isinstance(seq, PoseSequence) else np.asarray(seq)
        values.append(rmse(codebook.reconstruct(frames), frames))
    return float(np.mean(values))


class QuantizedTransformer(nn.Module):
    """Categorical next-code transformer for the two-stage baseline."""

    def __init__(self, codebook_size, d_model=64, n_heads=4, n_layers=2,
                 feedforward_width=128, context_dim=16, dropout=0.0):
        super().__init__()
        self.codebook_size = codebook_size
        self.embedding = nn.Embedding(codebook_size, d_model)
        self.ctx_proj = nn.Linear(context_dim, d_model)
        layer = nn.TransformerDecoderLayer(
            d_model=d_model, nhead=n_heads, dim_feedforward=feedforward_width,
            dropout=dropout, batch_first=True,
        )
        self.decoder = nn.TransformerDecoder(layer, num_layers=n_layers)
        self.head = nn.Linear(d_model, codebook_size)
        self.d_model = d_model
        self.forward_calls = 0

    def forward(self, codes, context):
        """Next-code logits (B, T, K) for teacher-forced code rows (B, T)."""
        self.forward_calls += 1
        if context.dim() == 2:
            context = context[None]
        t = codes.shape[1]
        x = self.embedding(codes) * math.sqrt(self.d_model)
        x = x + sinusoidal_encoding(t, self.d_model, codes.device)[None]
        mem = self.ctx_proj(context) * math.sqrt(self.d_model)
        mem = mem + sinusoidal_encoding(context.shape[1], self.d_model, context.device)[None]
        mask = torch.full((t, t), float("-inf"), device=codes.device).triu(1)
        return self.head(self.decoder(x, mem, tgt_mask=mask))

    def generate_codes(self, start_codes, context, horizon):
        """Greedy autoregressive decoding: exactly T forwards."""
        codes = torch.as_tensor(start_codes, dtype=torch.long)
        if codes.dim() == 0:
            codes = codes[None]
        if codes.dim() == 1:
            codes = codes[:, None]
        if context.dim() == 2:
            context = context[None].expand(codes.shape[0], -1, -1)
        out = []
        for _ in range(horizon):
            logits = self.forward(codes, context)
            nxt = logits[:, -1, :].argmax(dim=-1)
            out.append(nxt)
            codes = torch.cat([codes, nxt[:, None]], dim=1)
        return torch.stack(out, dim=1)


class QuantizedPipeline:
    """Codebook + token transformer; decodes predicted codes back to poses."""

    def __init__(self, codebook, model):
        self.codebook = codebook
        self.model = model

    def generate(self, p0, context, horizon):
        coords = getattr(p0, "coords", p0)
        return self.generate_batch(
            np.asarray(coords, dtype=np.float64).reshape(1, -1), context, horizon
        )[0]

    def generate_batch(self, p0_batch, context, horizon):
        """Greedy decode for a (B, 2N) batch of initial poses; (B, T, 2N) out."""
        start = self.codebook.encode(np.asarray(p0_batch, dtype=np.float64))
        with torch.no_grad():
            codes = self.model.generate_codes(
                torch.as_tensor(start, dtype=torch.long), context, horizon
            )
        return self.codebook.decode(codes.numpy())
