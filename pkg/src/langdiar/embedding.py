"""Window-level representation vectors from voiced feature frames.

Extractors map a window of N consecutive voiced frames to one vector. Neural
extractors are not implemented here; their output enters through
:func:`load_external_embeddings`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, TooShortError
from .features import FeatureSequence

EXTRACTOR_KINDS = ("stat-pool", "mean-pool", "test-linear", "external-file")


def mean_pool(window: np.ndarray) -> np.ndarray:
    window = np.atleast_2d(np.asarray(window, dtype=np.float64))
    return window.mean(axis=0)


def stat_pool(window: np.ndarray) -> np.ndarray:
    """Concatenated column mean and population standard deviation."""
    window = np.atleast_2d(np.asarray(window, dtype=np.float64))
    return np.concatenate([window.mean(axis=0), window.std(axis=0)])


@dataclass(frozen=True)
class ExtractorSpec:
    kind: str = "stat-pool"
    window_len: int = 200
    input_dim: int | None = None
    output_dim: int | None = None
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.kind not in EXTRACTOR_KINDS:
            raise ConfigError(f"unknown extractor kind {self.kind!r}; expected one of {EXTRACTOR_KINDS}")
        if self.window_len < 1:
            raise ConfigError("window_len must be >= 1")
        if self.input_dim is not None and self.output_dim is None and self.kind != "test-linear":
            object.__setattr__(self, "output_dim", self.expected_output_dim(self.input_dim))

    def expected_output_dim(self, d: int) -> int | None:
        if self.kind == "stat-pool":
            return 2 * d
        if self.kind == "mean-pool":
            return d
        return self.output_dim

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("kind", "window_len", "input_dim", "output_dim", "seed", "name")}


class Extractor:
    """Pure window -> vector mapping. Subclasses implement :meth:`embed_batch`."""

    spec: ExtractorSpec

    def embed(self, window: np.ndarray) -> np.ndarray:
        window = np.atleast_2d(np.asarray(window, dtype=np.float64))
        return self.embed_batch(window[None])[0]

    def embed_batch(self, windows: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class MeanPoolExtractor(Extractor):
    def __init__(self, spec: ExtractorSpec):
        self.spec = spec

    def embed_batch(self, windows):
        return windows.mean(axis=1)


class StatPoolExtractor(Extractor):
    def __init__(self, spec: ExtractorSpec):
        self.spec = spec

    def embed_batch(self, windows):
        return np.concatenate([windows.mean(axis=1), windows.std(axis=1)], axis=1)


class TestLinearExtractor(Extractor):
    """Fixed seeded random projection of the stat-pool vector.

    Gives tests a deterministic extractor whose geometry they can reason about.
    """

    __test__ = False  # not a pytest class

    def __init__(self, spec: ExtractorSpec):
        if spec.input_dim is None or spec.output_dim is None:
            raise ConfigError("test-linear extractor needs input_dim and output_dim")
        self.spec = spec
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        self.matrix = rng.standard_normal((spec.output_dim, 2 * spec.input_dim)) / np.sqrt(2 * spec.input_dim)

    def embed_batch(self, windows):
        pooled = np.concatenate([windows.mean(axis=1), windows.std(axis=1)], axis=1)
        return pooled @ self.matrix.T


def make_extractor(spec: ExtractorSpec) -> Extractor:
    if spec.kind == "stat-pool":
        return StatPoolExtractor(spec)
    if spec.kind == "mean-pool":
        return MeanPoolExtractor(spec)
    if spec.kind == "test-linear":
        return TestLinearExtractor(spec)
    raise ConfigError("external-file embeddings are loaded with load_external_embeddings, not extracted")


@dataclass
class EmbeddingSequence:
    embeddings: np.ndarray
    starts: np.ndarray
    source_spec: ExtractorSpec | None = None
    # index of the first voiced frame of each window
    frame_index: np.ndarray | None = None

    def __post_init__(self):
        self.embeddings = np.atleast_2d(np.asarray(self.embeddings, dtype=np.float64))
        self.starts = np.asarray(self.starts, dtype=np.float64)
        if len(self.starts) != self.embeddings.shape[0]:
            raise DataError("embeddings and starts differ in length")
        if len(self.starts) > 1 and np.any(np.diff(self.starts) <= 0):
            raise DataError("embedding start times must be strictly increasing")

    def __len__(self):
        return self.embeddings.shape[0]


def window_starts(n_frames: int, N: int, shift: int = 1) -> np.ndarray:
    if n_frames < N:
        raise TooShortError("utterance too short for analysis window", n_frames, N)
    return np.arange(0, n_frames - N + 1, shift)


def embed_windows(extractor: Extractor, feats: np.ndarray, N: int, starts: np.ndarray,
                  chunk: int = 512) -> np.ndarray:
    """Embed windows ``feats[s:s+N]`` for every ``s`` in ``starts``."""
    view = np.lib.stride_tricks.sliding_window_view(feats, N, axis=0)  # (n-N+1, d, N)
    out = []
    for lo in range(0, len(starts), chunk):
        idx = starts[lo:lo + chunk]
        out.append(extractor.embed_batch(np.swapaxes(view[idx], 1, 2)))
    if not out:
        return np.zeros((0, 0))
    return np.vstack(out)


def sliding_extract(extractor: Extractor, voiced: FeatureSequence, N: int, shift: int = 1) -> EmbeddingSequence:
    """One embedding per window of ``N`` consecutive voiced frames, stepping by ``shift``.

    Only voiced rows of ``voiced`` are used. ``starts`` holds the start time of
    each window's first frame.
    """
    v = voiced.voiced() if not voiced.voiced_mask.all() else voiced
    if shift < 1:
        raise ConfigError("shift must be >= 1")
    idx = window_starts(len(v), N, shift)
    emb = embed_windows(extractor, v.features, N, idx)
    return EmbeddingSequence(emb, v.frame_starts[idx], getattr(extractor, "spec", None), idx)


def load_external_embeddings(path, expected_dim: int) -> EmbeddingSequence:
    """Load embeddings produced by an external extractor (DKM1 matrix with start times)."""
    from .io import read_matrix

    mat, times = read_matrix(path)
    if mat.shape[0] == 0:
        raise DataError(f"{path}: empty embedding file")
    if times is None:
        raise DataError(f"{path}: embedding file lacks start times")
    if mat.shape[1] != expected_dim:
        raise DataError(f"{path}: embedding dimension {mat.shape[1]} != expected {expected_dim}")
    if len(times) > 1 and np.any(np.diff(times) <= 0):
        raise DataError(f"{path}: start times are not strictly increasing")
    spec = ExtractorSpec(kind="external-file", window_len=1, output_dim=expected_dim, name=str(path))
    return EmbeddingSequence(mat.astype(np.float64), times, spec)
