import numpy as np
import pytest
import torch

from posecast.context import (
    ContextProviderConfig,
    LabelEmbeddingProvider,
    PrecomputedFeatureProvider,
    build_provider,
    write_feature_file,
)
from posecast.errors import (
    ConfigurationError,
    FeatureShapeError,
    FeatureStoreError,
    MissingFeatureError,
    VocabularyError,
)

VOCAB = ("swing golf", "serve tennis", "pitch baseball")


def label_provider(d_m=8, n_rows=1, seed=0):
    torch.manual_seed(seed)
    cfg = ContextProviderConfig(kind="label_embedding", d_m=d_m, vocabulary=VOCAB,
                                n_rows=n_rows)
    return LabelEmbeddingProvider(cfg)


def test_label_embedding_shape_and_determinism():
    provider = label_provider()
    feats = provider.features("swing golf")
    assert tuple(feats.shape) == (1, 8)
    again = provider.features("swing golf")
    assert torch.equal(feats, again)


def test_unknown_label_lists_vocabulary():
    provider = label_provider()
    with pytest.raises(VocabularyError) as err:
        provider.features("juggle")
    msg = str(err.value)
    assert "juggle" in msg
    for label in VOCAB:
        assert label in msg


def test_distinct_labels_distinct_after_training():
    provider = label_provider()
    opt = torch.optim.SGD(provider.parameters(), lr=0.1)
    targets = {label: torch.randn(1, 8) for label in VOCAB}
    for _ in range(50):
        loss = sum(
            ((provider.features(label) - targets[label]) ** 2).mean()
            for label in VOCAB
        )
        opt.zero_grad()
        loss.backward()
        opt.step()
    feats = [provider.features(label) for label in VOCAB]
    for i in range(len(feats)):
        for j in range(i + 1, len(feats)):
            assert not torch.allclose(feats[i], feats[j])


def test_batch_features_shape():
    provider = label_provider(n_rows=3)
    batch = provider.batch_features(["swing golf", "serve tennis"])
    assert tuple(batch.shape) == (2, 3, 8)


def test_provider_config_validation():
    with pytest.raises(ConfigurationError):
        ContextProviderConfig(kind="label_embedding", d_m=8, vocabulary=())
    with pytest.raises(ConfigurationError):
        ContextProviderConfig(kind="precomputed_file", d_m=8)
    with pytest.raises(ConfigurationError):
        ContextProviderConfig(kind="mystery", d_m=8)


def test_feature_file_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    path = str(tmp_path / "feats.bin")
    stored = {
        "s1": rng.normal(size=(2, 6)).astype(np.float32),
        "s2": rng.normal(size=(2, 6)).astype(np.float32),
    }
    write_feature_file(path, stored)
    provider = PrecomputedFeatureProvider(path)
    for fid, mat in stored.items():
        got = provider.features(fid).numpy()
        assert got.dtype == np.float32
        assert np.array_equal(got, mat)


def test_missing_id_names_the_id(tmp_path):
    path = str(tmp_path / "feats.bin")
    write_feature_file(path, {"known": np.zeros((1, 4), dtype=np.float32)})
    provider = PrecomputedFeatureProvider(path)
    with pytest.raises(MissingFeatureError) as err:
        provider.features("ghost")
    assert "ghost" in str(err.value)


def test_width_mismatch_fails_before_forward(tmp_path):
    path = str(tmp_path / "feats.bin")
    write_feature_file(path, {"a": np.zeros((1, 4), dtype=np.float32)})
    with pytest.raises(FeatureShapeError):
        PrecomputedFeatureProvider(path, expected_d_m=16)


def test_mixed_shapes_rejected(tmp_path):
    path = str(tmp_path / "feats.bin")
    write_feature_file(path, {
        "a": np.zeros((1, 4), dtype=np.float32),
        "b": np.zeros((2, 4), dtype=np.float32),
    })
    with pytest.raises(FeatureShapeError):
        PrecomputedFeatureProvider(path)


def test_missing_file_is_distinct_error(tmp_path):
    with pytest.raises(FeatureStoreError):
        PrecomputedFeatureProvider(str(tmp_path / "nope.bin"))


def test_build_provider_dispatch(tmp_path):
    cfg = ContextProviderConfig(kind="label_embedding", d_m=4, vocabulary=("a",))
    assert isinstance(build_provider(cfg), LabelEmbeddingProvider)
    path = str(tmp_path / "f.bin")
    write_feature_file(path, {"x": np.zeros((1, 4), dtype=np.float32)})
    cfg2 = ContextProviderConfig(kind="precomputed_file", d_m=4, path=path)
    assert isinstance(build_provider(cfg2), PrecomputedFeatureProvider)


def test_provider_resolves_sample_context_ref(tmp_path):
    from posecast.data import SyntheticMotionSpec, generate_synthetic
    from dataclasses import replace

    (sample,) = generate_synthetic(
        SyntheticMotionSpec("linear_drift", amplitude=0.01), 1, 3, seed=0
    )
    sample = replace(sample, context_ref="stored-id")
    path = str(tmp_path / "f.bin")
    mat = np.arange(8, dtype=np.float32).reshape(2, 4)
    write_feature_file(path, {"stored-id": mat})
    provider = PrecomputedFeatureProvider(path)
    assert np.array_equal(provider.features(sample).numpy(), mat)
