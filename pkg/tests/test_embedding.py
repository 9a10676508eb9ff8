import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from langdiar.embedding import (
    EmbeddingSequence,
    ExtractorSpec,
    embed_windows,
    load_external_embeddings,
    make_extractor,
    mean_pool,
    sliding_extract,
    stat_pool,
    window_starts,
)
from langdiar.errors import ConfigError, DataError, TooShortError
from langdiar.features import FeatureSequence, FrameSpec
from langdiar.io import write_embeddings, write_matrix


def _seq(n, d=3, seed=0):
    x = np.random.default_rng(seed).standard_normal((n, d))
    return FeatureSequence(x, np.arange(n) * 0.01, np.ones(n), FrameSpec())


def test_pool_examples():
    w = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(mean_pool(w), [2, 3])
    assert np.array_equal(stat_pool(w), [2, 3, 1, 1])
    assert np.array_equal(mean_pool(np.array([[5.0, 6.0]])), [5, 6])
    assert np.array_equal(stat_pool(np.full((4, 2), 7.0)), [7, 7, 0, 0])


def test_window_counts():
    assert len(window_starts(300, 200)) == 101
    s = window_starts(400, 200, 20)
    assert np.array_equal(s, np.arange(0, 201, 20))
    with pytest.raises(TooShortError):
        window_starts(10, 20)


@settings(max_examples=40)
@given(st.integers(1, 60), st.integers(1, 20), st.integers(1, 5))
def test_sliding_count_property(n, N, shift):
    if n < N:
        with pytest.raises(TooShortError):
            sliding_extract(make_extractor(ExtractorSpec("mean-pool", N)), _seq(n), N, shift)
        return
    es = sliding_extract(make_extractor(ExtractorSpec("mean-pool", N)), _seq(n), N, shift)
    assert len(es) == (n - N) // shift + 1


def test_batch_matches_single_window():
    seq = _seq(50, 4)
    for kind in ("mean-pool", "stat-pool"):
        ex = make_extractor(ExtractorSpec(kind, 10))
        es = sliding_extract(ex, seq, 10)
        for i in (0, 17, 40):
            assert np.allclose(es.embeddings[i], ex.embed(seq.features[i:i + 10]))


def test_sliding_uses_voiced_only():
    seq = _seq(20)
    mask = np.ones(20, bool)
    mask[5:10] = False
    seq = seq.replace(voiced_mask=mask)
    es = sliding_extract(make_extractor(ExtractorSpec("mean-pool", 4)), seq, 4)
    assert len(es) == 15 - 4 + 1
    assert np.isclose(es.starts[5], 0.10)


def test_test_linear_is_seeded():
    spec = ExtractorSpec("test-linear", 10, input_dim=3, output_dim=5, seed=4)
    a, b = make_extractor(spec), make_extractor(spec)
    w = _seq(10).features
    assert np.array_equal(a.embed(w), b.embed(w))
    assert a.embed(w).shape == (5,)


def test_extractor_spec_guard():
    with pytest.raises(ConfigError):
        ExtractorSpec("xvector")
    with pytest.raises(ConfigError):
        make_extractor(ExtractorSpec("external-file"))


@given(arrays(np.float64, (6, 3), elements=st.floats(-1e3, 1e3)))
def test_stat_pool_std_nonnegative(w):
    out = stat_pool(w)
    assert np.all(out[3:] >= 0)
    assert np.allclose(out[:3], w.mean(0))


def test_external_round_trip(tmp_path):
    x = np.random.default_rng(2).standard_normal((7, 6)).astype(np.float32)
    es = EmbeddingSequence(x, np.arange(7) * 0.5)
    write_embeddings(tmp_path / "e.mat", es)
    back = load_external_embeddings(tmp_path / "e.mat", 6)
    assert np.array_equal(back.embeddings, x.astype(np.float64))
    assert np.array_equal(back.starts, es.starts)


def test_external_errors(tmp_path):
    write_matrix(tmp_path / "big.mat", np.zeros((3, 512)), np.arange(3.0))
    with pytest.raises(DataError, match="512"):
        load_external_embeddings(tmp_path / "big.mat", 256)
    write_matrix(tmp_path / "empty.mat", np.zeros((0, 4)), np.zeros(0))
    with pytest.raises(DataError, match="empty"):
        load_external_embeddings(tmp_path / "empty.mat", 4)
    write_matrix(tmp_path / "notimes.mat", np.zeros((2, 4)))
    with pytest.raises(DataError):
        load_external_embeddings(tmp_path / "notimes.mat", 4)


def test_embed_windows_chunking():
    seq = _seq(1200, 2)
    ex = make_extractor(ExtractorSpec("stat-pool", 30))
    starts = np.arange(0, 1171)
    a = embed_windows(ex, seq.features, 30, starts, chunk=64)
    b = embed_windows(ex, seq.features, 30, starts, chunk=5000)
    assert np.array_equal(a, b)
