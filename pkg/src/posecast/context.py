"""Context-feature providers: trainable label embeddings or precomputed files.

Both providers return a fixed-shape (N_M, d_M) float matrix per sample. The
label provider is an nn.Module whose embedding table trains jointly with the
forecaster; the precomputed provider replays matrices exported offline in the
"posecast-feat-v1" container (see docs/FORMATS.md for the byte layout).
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import (
    ConfigurationError,
    FeatureShapeError,
    FeatureStoreError,
    MissingFeatureError,
    VocabularyError,
)

FEATURE_FORMAT = "posecast-feat-v1"
PROVIDER_KINDS = ("label_embedding", "precomputed_file")


@dataclass(frozen=True)
class ContextProviderConfig:
    kind: str
    d_m: int
    vocabulary: tuple = field(default_factory=tuple)
    n_rows: int = 1
    path: str = None

    def __post_init__(self):
        if self.kind not in PROVIDER_KINDS:
            raise ConfigurationError(f"unknown provider kind {self.kind!r}")
        if self.d_m < 1:
            raise ConfigurationError(f"d_m must be positive, got {self.d_m}")
        if self.kind == "label_embedding":
            if not self.vocabulary:
                raise ConfigurationError("label_embedding provider needs a vocabulary")
            if self.n_rows < 1:
                raise ConfigurationError(f"n_rows must be positive, got {self.n_rows}")
            object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        if self.kind == "precomputed_file" and not self.path:
            raise ConfigurationError("precomputed_file provider needs a path")


class LabelEmbeddingProvider(nn.Module):
    """Deterministic learned embedding per action label, shape (n_rows, d_m)."""

    def __init__(self, config):
        super().__init__()
        if config.kind != "label_embedding":
            raise ConfigurationError("config.kind must be 'label_embedding'")
        self.config = config
        self._index = {label: k for k, label in enumerate(config.vocabulary)}
        self.embedding = nn.Embedding(len(config.vocabulary), config.n_rows * config.d_m)

    @property
    def d_m(self):
        return self.config.d_m

    def label_index(self, label):
        try:
            return self._index[label]
        except KeyError:
            raise VocabularyError(label, self._index) from None

    def features(self, sample_or_label):
        label = getattr(sample_or_label, "label", sample_or_label)
        return self.batch_features([label])[0]

    def batch_features(self, samples_or_labels):
        """(B, n_rows, d_m) tensor; differentiable w.r.t. the embedding table."""
        labels = [getattr(s, "label", s) for s in samples_or_labels]
        idx = torch.tensor([self.label_index(l) for l in labels], dtype=torch.long)
        flat = self.embedding(idx)
        return flat.view(len(labels), self.config.n_rows, self.config.d_m)


def write_feature_file(path, features):
    """Write {id: float32 matrix} as a posecast-feat-v1 container.

    The data file holds row-major little-endian float32 matrices back to back;
    the sidecar index at path + ".index.json" records offsets and shapes.
    """
    entries = {}
    offset = 0
    with open(path, "wb") as fh:
        for fid in sorted(features):
            mat = np.ascontiguousarray(np.asarray(features[fid], dtype="<f4"))
            if mat.ndim != 2:
                raise FeatureShapeError(f"features for {fid!r} must be 2-D, got {mat.shape}")
            fh.write(mat.tobytes())
            entries[fid] = {"offset": offset, "rows": int(mat.shape[0]), "cols": int(mat.shape[1])}
            offset += mat.nbytes
    index = {"format": FEATURE_FORMAT, "dtype": "float32", "entries": entries}
    with open(path + ".index.json", "w", encoding="utf-8") as fh:
        json.dump(index, fh, sort_keys=True, indent=2)


class PrecomputedFeatureProvider:
    """Replays feature matrices from a posecast-feat-v1 container, bit-exactly.

    expected_d_m (and, once observed, the row count) are enforced up front so
    shape mismatches fail before any model forward pass.
    """

    def __init__(self, path, expected_d_m=None):
        if not os.path.exists(path):
            raise FeatureStoreError(f"feature file not found: {path}")
        index_path = path + ".index.json"
        if not os.path.exists(index_path):
            raise FeatureStoreError(f"feature index not found: {index_path}")
        with open(index_path, "r", encoding="utf-8") as fh:
            index = json.load(fh)
        if index.get("format") != FEATURE_FORMAT:
            raise FeatureStoreError(
                f"unsupported feature format {index.get('format')!r} in {index_path}"
            )
        self.path = path
        self.entries = index["entries"]
        shapes = {(e["rows"], e["cols"]) for e in self.entries.values()}
        if len(shapes) > 1:
            raise FeatureShapeError(
                f"feature file {path} mixes shapes {sorted(shapes)}; "
                "one experiment needs a constant shape"
            )
        self.shape = shapes.pop() if shapes else None
        if expected_d_m is not None and self.shape is not None and self.shape[1] != expected_d_m:
            raise FeatureShapeError(
                f"feature width {self.shape[1]} != expected d_M {expected_d_m} ({path})"
            )
        with open(path, "rb") as fh:
            self._data = fh.read()

    @property
    def d_m(self):
        return self.shape[1] if self.shape else None

    def parameters(self):
        return iter(())  # nothing trainable

    def features(self, sample_or_id):
        key = sample_or_id
        if hasattr(sample_or_id, "context_ref"):
            key = sample_or_id.context_ref or sample_or_id.id
        try:
            entry = self.entries[key]
        except KeyError:
            raise MissingFeatureError(key, self.path) from None
        rows, cols = entry["rows"], entry["cols"]
        start = entry["offset"]
        mat = np.frombuffer(
            self._data, dtype="<f4", count=rows * cols, offset=start
        ).reshape(rows, cols)
        return torch.from_numpy(mat.copy())

    def batch_features(self, samples_or_ids):
        return torch.stack([self.features(s) for s in samples_or_ids])


def build_provider(config):
    if config.kind == "label_embedding":
        return LabelEmbeddingProvider(config)
    return PrecomputedFeatureProvider(config.path, expected_d_m=config.d_m)
