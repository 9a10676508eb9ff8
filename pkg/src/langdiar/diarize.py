"""Fixed-segmentation and change-point diarization, AHC, label/segment conversion."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .backend import Backend
from .config import ChangePointConfig, PipelineConfig, round_to_odd
from .embedding import Extractor, embed_windows, sliding_extract
from .errors import ConfigError, DataError, TooShortError
from .features import FeatureSequence, energy_vad

log = logging.getLogger(__name__)

TIME_EPS = 1e-9


@dataclass(frozen=True)
class Segment:
    onset: float
    duration: float
    label: str

    def __post_init__(self):
        if self.duration <= 0:
            raise DataError(f"segment duration must be > 0, got {self.duration}")
        if self.onset < 0:
            raise DataError(f"segment onset must be >= 0, got {self.onset}")

    @property
    def end(self) -> float:
        return self.onset + self.duration


@dataclass
class Diarization:
    """Non-overlapping labelled segments of one utterance, sorted by onset.

    Adjacent segments with the same label and no gap are merged.
    """

    utterance_id: str
    segments: list = field(default_factory=list)

    def __post_init__(self):
        segs = sorted(self.segments, key=lambda s: (s.onset, s.end))
        merged: list[Segment] = []
        for s in segs:
            if merged:
                prev = merged[-1]
                if s.onset < prev.end - TIME_EPS:
                    raise DataError(
                        f"{self.utterance_id}: overlapping segments at {s.onset:.3f} "
                        f"({prev.label} until {prev.end:.3f})"
                    )
                if s.label == prev.label and abs(s.onset - prev.end) <= TIME_EPS:
                    merged[-1] = Segment(prev.onset, s.end - prev.onset, prev.label)
                    continue
            merged.append(s)
        self.segments = merged

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    @property
    def labels(self) -> list:
        return sorted({s.label for s in self.segments})

    @property
    def span(self) -> tuple[float, float]:
        if not self.segments:
            return 0.0, 0.0
        return self.segments[0].onset, self.segments[-1].end

    def change_times(self) -> np.ndarray:
        """Onsets of segments whose label differs from the preceding segment."""
        segs = self.segments
        return np.array([b.onset for a, b in zip(segs, segs[1:]) if a.label != b.label])

    def label_time(self) -> dict:
        out: dict = {}
        for s in self.segments:
            out[s.label] = out.get(s.label, 0.0) + s.duration
        return out


# ---------------------------------------------------------------- label sequences

def _label_name(c, label_names):
    if isinstance(c, str):
        return c
    c = int(c)
    if label_names is not None:
        return label_names[c]
    return f"L{c}"


def labels_to_segments(labels, locations, frame_shift: float, utterance_id: str = "utt",
                       label_names=None, skip_labels=()) -> Diarization:
    """Turn a per-position label sequence into segments.

    For every class, the positions carrying it are split into runs wherever
    the index difference is not 1; a run covering positions a..b becomes the
    segment [locations[a], locations[b] + frame_shift).
    """
    labels = np.asarray(labels)
    locations = np.asarray(locations, dtype=np.float64)
    if len(labels) != len(locations):
        raise DataError(f"{len(labels)} labels for {len(locations)} locations")
    segs = []
    for cls in dict.fromkeys(labels.tolist()):
        if cls in skip_labels:
            continue
        idx = np.flatnonzero(labels == cls)
        breaks = np.flatnonzero(np.diff(idx) != 1)
        starts = np.r_[idx[0], idx[breaks + 1]]
        ends = np.r_[idx[breaks], idx[-1]]
        name = _label_name(cls, label_names)
        for a, b in zip(starts, ends):
            onset = locations[a]
            segs.append(Segment(float(onset), float(locations[b] + frame_shift - onset), name))
    return Diarization(utterance_id, segs)


def label_sequence_to_diarization(labels, tick: float = 0.2, utterance_id: str = "utt",
                                  silence_label=None, offset: float = 0.0) -> Diarization:
    """Segments from a fixed-rate label sequence (one label per ``tick`` seconds)."""
    labels = np.asarray(labels)
    locations = offset + np.arange(len(labels)) * tick
    skip = () if silence_label is None else (silence_label,)
    return labels_to_segments(labels, locations, tick, utterance_id, skip_labels=skip)


def segments_to_labels(d: Diarization, frame_shift: float, n_frames: int | None = None,
                       start: float = 0.0, fill=None) -> list:
    """Rasterise segments onto a frame grid; frames outside every segment get ``fill``."""
    if n_frames is None:
        n_frames = int(round((d.span[1] - start) / frame_shift))
    out = [fill] * n_frames
    for s in d.segments:
        a = int(round((s.onset - start) / frame_shift))
        b = int(round((s.end - start) / frame_shift))
        for k in range(max(a, 0), min(b, n_frames)):
            out[k] = s.label
    return out


# ---------------------------------------------------------------- clustering

def _first_occurrence_labels(assign: np.ndarray) -> np.ndarray:
    mapping: dict = {}
    return np.array([mapping.setdefault(a, len(mapping)) for a in assign.tolist()], dtype=int)


def ahc_from_distances(dist, K: int = 2) -> np.ndarray:
    """Average-linkage agglomerative clustering down to ``K`` clusters.

    Cluster-to-cluster distance is the mean of all original pairwise distances.
    Ties go to the lexicographically smallest (cluster, cluster) pair, where a
    cluster is identified by its smallest member index. Labels are numbered by
    first occurrence.
    """
    D = np.array(dist, dtype=np.float64)
    n = D.shape[0]
    if D.shape != (n, n):
        raise DataError("distance matrix must be square")
    if n == 0:
        return np.zeros(0, dtype=int)
    if n <= K:
        if n < K:
            warnings.warn(f"{n} vectors for {K} clusters; each vector is its own cluster", stacklevel=2)
        return np.arange(n)

    S = 0.5 * (D + D.T)
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    assign = np.arange(n)
    idx = np.arange(n)
    best = np.full(n, np.inf)
    arg = np.full(n, -1)

    def refresh(r):
        valid = active & (idx > r)
        if not valid.any():
            best[r], arg[r] = np.inf, -1
            return
        avg = np.where(valid, S[r] / (size[r] * size), np.inf)
        j = int(np.argmin(avg))
        best[r], arg[r] = avg[j], j

    for r in range(n):
        refresh(r)

    for _ in range(n - K):
        r = int(np.argmin(best))
        j = int(arg[r])
        S[r, :] += S[j, :]
        S[:, r] += S[:, j]
        size[r] += size[j]
        active[j] = False
        best[j], arg[j] = np.inf, -1
        assign[assign == j] = r

        stale = np.flatnonzero(active & ((arg == r) | (arg == j)))
        for q in stale:
            refresh(q)
        refresh(r)
        # rows before r may now prefer the merged cluster
        lower = np.flatnonzero(active[:r])
        lower = lower[(arg[lower] != r)]
        if len(lower):
            cand = S[lower, r] / (size[lower] * size[r])
            better = (cand < best[lower]) | ((cand == best[lower]) & (r < arg[lower]))
            upd = lower[better]
            best[upd] = cand[better]
            arg[upd] = r
    return _first_occurrence_labels(assign)


def ahc(vectors, distance="euclidean", K: int = 2) -> np.ndarray:
    """Average-linkage AHC on ``vectors``.

    ``distance`` is ``"euclidean"``, a :class:`Backend` (its distance matrix), or
    a callable ``f(x, y) -> float``.
    """
    X = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if isinstance(distance, Backend):
        D = distance.distance_matrix(X)
    elif distance == "euclidean":
        sq = np.sum(X * X, axis=1)
        D = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2 * X @ X.T, 0.0))
        np.fill_diagonal(D, 0.0)
    elif callable(distance):
        n = len(X)
        D = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                D[i, j] = D[j, i] = distance(X[i], X[j])
    else:
        raise ConfigError(f"unsupported distance {distance!r}")
    return ahc_from_distances(D, K)


# ---------------------------------------------------------------- change detection

@dataclass
class DivergenceContour:
    values: np.ndarray
    positions: np.ndarray
    times: np.ndarray

    def __len__(self):
        return len(self.values)


def divergence_contour(voiced: FeatureSequence, extractor: Extractor, backend: Backend,
                       N: int) -> DivergenceContour:
    """Distance between the embeddings of the N frames before and the N frames from each position.

    Positions i run over N..l'-N (voiced-frame indices), giving l'-2N+1 values.
    """
    v = voiced if voiced.voiced_mask.all() else voiced.voiced()
    n = len(v)
    if n < 2 * N:
        raise TooShortError("too short for change detection", n, 2 * N)
    starts = np.arange(0, n - N + 1)
    emb = backend.project(embed_windows(extractor, v.features, N, starts))
    count = n - 2 * N + 1
    values = backend.paired_distance(emb[:count], emb[N:N + count])
    positions = np.arange(N, N + count)
    return DivergenceContour(values, positions, v.frame_starts[positions])


def hamming_kernel(h_l: int) -> np.ndarray:
    w = np.hamming(h_l)
    return w / w.sum()


def smooth_contour(D, h_l: int) -> np.ndarray:
    """Unit-DC-gain Hamming smoothing, same length, reflected edges."""
    D = np.asarray(D, dtype=np.float64)
    if h_l < 1 or h_l % 2 == 0:
        raise ConfigError(f"smoothing length must be odd and >= 1, got {h_l}")
    if h_l > len(D):
        raise DataError(f"smoothing length {h_l} exceeds contour length {len(D)}")
    if h_l == 1:
        return D.copy()
    half = h_l // 2
    mode = "reflect" if len(D) > 1 else "edge"
    padded = np.pad(D, half, mode=mode)
    return np.convolve(padded, hamming_kernel(h_l), mode="valid")


def threshold_contour(Ds, alpha: float) -> np.ndarray:
    """Constant threshold: ``alpha`` times the mean of the smoothed contour."""
    Ds = np.asarray(Ds, dtype=np.float64)
    if Ds.size == 0:
        raise DataError("empty contour")
    return np.full(Ds.shape, alpha * Ds.mean())


def pick_change_points(Ds, Th, min_dist: int) -> np.ndarray:
    """Indices of local maxima above threshold, at least ``min_dist`` apart.

    A local maximum rises strictly from its left neighbour and does not fall
    below its right one (first sample of a plateau). Conflicts are resolved
    greedily by height, earlier index first on ties.
    """
    Ds = np.asarray(Ds, dtype=np.float64)
    Th = np.broadcast_to(np.asarray(Th, dtype=np.float64), Ds.shape)
    if len(Ds) < 3:
        return np.zeros(0, dtype=int)
    i = np.arange(1, len(Ds) - 1)
    is_peak = (Ds[i] > Ds[i - 1]) & (Ds[i] >= Ds[i + 1]) & (Ds[i] > Th[i])
    cands = i[is_peak]
    order = sorted(cands.tolist(), key=lambda k: (-Ds[k], k))
    kept: list[int] = []
    for k in order:
        if all(abs(k - j) >= min_dist for j in kept):
            kept.append(k)
    return np.array(sorted(kept), dtype=int)


def segment_midpoints(change_times, start: float, end: float) -> tuple[np.ndarray, np.ndarray]:
    """Segment boundaries (with virtual start/end points) and their midpoints."""
    bounds = np.r_[start, np.sort(np.asarray(change_times, dtype=np.float64)), end]
    return bounds, 0.5 * (bounds[:-1] + bounds[1:])


def merge_short_segments(bounds: np.ndarray, min_frames: int) -> np.ndarray:
    """Drop boundaries so every segment (in frame indices) has at least ``min_frames`` frames.

    A short segment joins its predecessor; the first segment joins its successor.
    """
    b = list(int(x) for x in bounds)
    k = 0
    while len(b) > 2 and k < len(b) - 1:
        if b[k + 1] - b[k] < min_frames:
            warnings.warn(f"segment [{b[k]}, {b[k + 1]}) has < {min_frames} frames; merged", stacklevel=2)
            del b[k if k > 0 else k + 1]
            k = max(k - 1, 0)
            continue
        k += 1
    return np.array(b, dtype=int)


def segment_windows(bounds: np.ndarray, N: int, n_frames: int) -> list[tuple[int, int]]:
    """Window of N frames centred on each segment midpoint, clipped to segment and utterance."""
    out = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        mid = (int(a) + int(b)) // 2
        lo = max(mid - N // 2, int(a), 0)
        hi = min(lo + N, int(b), n_frames)
        out.append((lo, hi))
    return out


def segment_embeddings(voiced: FeatureSequence, bounds, N: int, extractor: Extractor,
                       backend: Backend) -> np.ndarray:
    feats = voiced.features
    rows = [extractor.embed(feats[lo:hi]) for lo, hi in segment_windows(np.asarray(bounds), N, len(feats))]
    return backend.project(np.vstack(rows))


@dataclass
class ChangePointResult:
    contour: DivergenceContour
    smoothed: np.ndarray
    threshold: np.ndarray
    change_index: np.ndarray  # voiced-frame indices
    change_times: np.ndarray


def detect_change_points(voiced: FeatureSequence, extractor: Extractor, backend: Backend,
                         cp: ChangePointConfig) -> ChangePointResult:
    contour = divergence_contour(voiced, extractor, backend, cp.N)
    h_l = cp.smoothing_len
    if h_l > len(contour):
        clamped = round_to_odd(len(contour))
        if clamped > len(contour):
            clamped -= 2
        log.warning("smoothing length %d exceeds contour length %d; using %d", h_l, len(contour), clamped)
        h_l = max(clamped, 1)
    Ds = smooth_contour(contour.values, h_l)
    Th = threshold_contour(Ds, cp.alpha)
    peaks = pick_change_points(Ds, Th, cp.min_peak_distance)
    idx = contour.positions[peaks]
    return ChangePointResult(contour, Ds, Th, idx, contour.times[peaks])


# ---------------------------------------------------------------- pipelines

def _voiced(features: FeatureSequence, cfg: PipelineConfig) -> FeatureSequence:
    return energy_vad(features, cfg.vad_factor).voiced()


def diarize_fixed(features: FeatureSequence, cfg: PipelineConfig, extractor: Extractor,
                  backend: Backend, utterance_id: str = "utt") -> Diarization:
    """VAD -> sliding embeddings (shift 1) -> projection -> AHC -> segments."""
    v = _voiced(features, cfg)
    seq = sliding_extract(extractor, v, cfg.N, 1)
    P = backend.project(seq.embeddings)
    labels = ahc_from_distances(backend.distance_matrix(P), cfg.K)
    return labels_to_segments(labels, seq.starts, v.spec.frame_shift, utterance_id)


def diarize_changepoint(features: FeatureSequence, cfg: PipelineConfig, extractor: Extractor,
                        backend: Backend, utterance_id: str = "utt",
                        cp: ChangePointConfig | None = None) -> Diarization:
    """VAD -> divergence contour -> smoothing -> threshold -> peaks -> segment embeddings -> AHC."""
    cp = cp or cfg.changepoint
    v = _voiced(features, cfg)
    result = detect_change_points(v, extractor, backend, cp)
    n = len(v)
    bounds = merge_short_segments(np.r_[0, result.change_index, n], cfg.min_segment_frames)
    if len(bounds) == 2:
        labels = np.zeros(1, dtype=int)
    else:
        emb = segment_embeddings(v, bounds, cp.N, extractor, backend)
        labels = ahc_from_distances(backend.distance_matrix(emb), cfg.K)
    shift = v.spec.frame_shift
    times = np.r_[v.frame_starts[bounds[:-1]], v.frame_starts[-1] + shift]
    segs = [Segment(float(a), float(b - a), f"L{int(c)}") for a, b, c in zip(times[:-1], times[1:], labels)]
    return Diarization(utterance_id, segs)


def diarize(features: FeatureSequence, cfg: PipelineConfig, extractor: Extractor, backend: Backend,
            utterance_id: str = "utt") -> Diarization:
    if cfg.mode == "fixed":
        return diarize_fixed(features, cfg, extractor, backend, utterance_id)
    if cfg.mode == "changepoint":
        return diarize_changepoint(features, cfg, extractor, backend, utterance_id)
    raise ConfigError(f"unknown mode {cfg.mode!r}")
