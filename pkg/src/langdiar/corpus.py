"""Synthetic code-switched utterances at the feature level with ground-truth RTTM.

Every class emits i.i.d. Gaussian feature frames; segment durations are
log-normal. Randomness comes from PCG64 generators: utterance ``i`` of a corpus
uses seed ``spec.seed + i``, and inside an utterance the layout and the
frame samples draw from two child streams ``SeedSequence([seed, 0])`` and
``SeedSequence([seed, 1])``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diarize import Diarization, Segment
from .errors import ConfigError, DataError
from .features import FeatureSequence, FrameSpec

LAYOUT_STREAM, FRAME_STREAM = 0, 1


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


@dataclass(frozen=True)
class Duration:
    median: float
    log_sigma: float = 0.5

    @property
    def mean(self) -> float:
        return self.median * math.exp(self.log_sigma ** 2 / 2)

    @classmethod
    def from_mean(cls, mean: float, log_sigma: float = 0.5) -> "Duration":
        return cls(mean / math.exp(log_sigma ** 2 / 2), log_sigma)


@dataclass(frozen=True)
class CorpusSpec:
    """Generator settings. Class 0 is the primary class; utterances start with it.

    ``separation`` is the Mahalanobis distance between class means (unit
    within-class covariance) unless ``class_means`` is given explicitly.
    ``imbalance`` is the intended primary:secondary time ratio, checked against
    :meth:`expected_time_ratio`, not enforced by sampling.
    """

    n_classes: int = 2
    class_names: tuple = ("L0", "L1")
    durations: tuple = (Duration(3.0), Duration(3.0))
    switch_model: str = "alternating"
    stay_prob: float = 0.0
    n_segments: int = 6
    silence: Duration | None = None
    feature_dim: int = 13
    separation: float = 6.0
    class_means: tuple | None = None
    class_covs: tuple | None = None
    imbalance: float | None = None
    frame_shift: float = 0.01
    frame_len: float = 0.02
    min_frames: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 1 or len(self.class_names) != self.n_classes or len(self.durations) != self.n_classes:
            raise ConfigError("class_names and durations must have n_classes entries")
        for d in self.durations + ((self.silence,) if self.silence else ()):
            if d.median <= 0 or d.log_sigma < 0:
                raise ConfigError(f"invalid duration model {d}")
        if self.switch_model not in ("alternating", "markov"):
            raise ConfigError(f"unknown switch model {self.switch_model!r}")
        if not 0 <= self.stay_prob < 1:
            raise ConfigError("stay_prob must be in [0, 1)")
        if self.n_segments < 1:
            raise ConfigError("n_segments must be >= 1")
        if self.frame_shift <= 0:
            raise ConfigError("frame_shift must be > 0")
        if self.class_covs is not None:
            for c in self.class_covs:
                if np.linalg.eigvalsh(np.asarray(c, float)).min() < -1e-9:
                    raise ConfigError("class covariances must be PSD")

    def means(self) -> np.ndarray:
        if self.class_means is not None:
            return np.asarray(self.class_means, dtype=np.float64)
        d = self.feature_dim
        m = np.zeros((self.n_classes, d))
        if self.n_classes == 2:
            m[0, 0], m[1, 0] = -self.separation / 2, self.separation / 2
        else:
            if self.n_classes > d:
                raise ConfigError("more classes than feature dimensions; give class_means")
            for k in range(self.n_classes):
                m[k, k] = self.separation / math.sqrt(2)
        return m

    def covs(self) -> np.ndarray:
        if self.class_covs is not None:
            return np.asarray(self.class_covs, dtype=np.float64)
        return np.stack([np.eye(self.feature_dim)] * self.n_classes)

    def expected_time_ratio(self) -> float:
        """Expected class-0 : class-1 time for the alternating layout."""
        if self.n_classes < 2:
            return math.inf
        n0 = (self.n_segments + 1) // 2
        n1 = self.n_segments // 2
        if n1 == 0:
            return math.inf
        return n0 * self.durations[0].mean / (n1 * self.durations[1].mean)

    def replace(self, **kw) -> "CorpusSpec":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["durations"] = [dataclasses.asdict(d) for d in self.durations]
        doc["class_names"] = list(self.class_names)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "CorpusSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known - {"preset"}
        if unknown:
            raise ConfigError(f"unknown corpus spec keys: {sorted(unknown)}")
        base = CORPUS_PRESETS[doc["preset"]] if "preset" in doc else cls()
        kw = {k: v for k, v in doc.items() if k != "preset"}
        if "durations" in kw:
            kw["durations"] = tuple(Duration(**d) if isinstance(d, dict) else Duration(*d) for d in kw["durations"])
        if kw.get("silence") is not None and isinstance(kw["silence"], dict):
            kw["silence"] = Duration(**kw["silence"])
        for key in ("class_names", "class_means", "class_covs"):
            if kw.get(key) is not None:
                kw[key] = tuple(tuple(x) if isinstance(x, list) else x for x in kw[key])
        return dataclasses.replace(base, **kw)


CORPUS_PRESETS = {
    # both classes with a ~3 s median segment
    "ttsf": CorpusSpec(durations=(Duration(3.0), Duration(3.0)), n_segments=6),
    # primary ~1.5 s, secondary ~0.5 s mean; P S P S P S P gives an expected 4:1 time ratio
    "mscs": CorpusSpec(
        class_names=("P", "S"),
        durations=(Duration.from_mean(1.5), Duration.from_mean(0.5)),
        n_segments=7,
        imbalance=4.0,
    ),
}


@dataclass
class SynthUtterance:
    utterance_id: str
    features: FeatureSequence
    reference: Diarization
    change_times: np.ndarray
    frame_labels: np.ndarray  # class index per frame, -1 for silence

    @property
    def duration(self) -> float:
        return len(self.features) * self.features.spec.frame_shift


def _layout(spec: CorpusSpec, rng: np.random.Generator) -> list[tuple[int, int]]:
    """(class or -1 for silence, n_frames) runs, adjacent same-class draws already merged."""
    classes = []
    c = 0
    for k in range(spec.n_segments):
        if k > 0 and spec.n_classes > 1:
            if spec.switch_model == "alternating":
                c = (c + 1) % spec.n_classes
            elif rng.random() >= spec.stay_prob:
                others = [x for x in range(spec.n_classes) if x != c]
                c = others[int(rng.integers(len(others)))]
        classes.append(c)
    runs: list[list[int]] = []
    for k, c in enumerate(classes):
        d = spec.durations[c]
        frames = max(spec.min_frames, int(round(rng.lognormal(math.log(d.median), d.log_sigma) / spec.frame_shift)))
        if k > 0 and spec.silence is not None:
            s = spec.silence
            gap = max(1, int(round(rng.lognormal(math.log(s.median), s.log_sigma) / spec.frame_shift)))
            runs.append([-1, gap])
        if runs and runs[-1][0] == c:
            runs[-1][1] += frames
        else:
            runs.append([c, frames])
    return [(c, n) for c, n in runs]


def synth_utterance(spec: CorpusSpec, seed: int | None = None, utterance_id: str | None = None) -> SynthUtterance:
    seed = spec.seed if seed is None else seed
    layout = _layout(spec, _rng(seed, LAYOUT_STREAM))
    if not any(c >= 0 for c, _ in layout):
        raise DataError("spec produced no speech segments")
    rng = _rng(seed, FRAME_STREAM)
    means, covs = spec.means(), spec.covs()
    chol = [np.linalg.cholesky(c + 1e-12 * np.eye(len(c))) for c in covs]
    d = means.shape[1]

    blocks, energies, labels = [], [], []
    for c, n in layout:
        z = rng.standard_normal((n, d))
        if c >= 0:
            blocks.append(means[c] + z @ chol[c].T)
            energies.append(rng.lognormal(0.0, 0.3, n))
        else:
            blocks.append(z)
            energies.append(1e-4 * rng.lognormal(0.0, 0.3, n))
        labels.append(np.full(n, c))
    feats = np.vstack(blocks)
    frame_labels = np.concatenate(labels)
    shift = spec.frame_shift
    starts = np.round(np.arange(len(feats)) * shift, 9)

    segs, changes = [], []
    pos = 0
    prev = None
    for c, n in layout:
        onset = round(pos * shift, 9)
        if c >= 0:
            segs.append(Segment(onset, round(n * shift, 9), spec.class_names[c]))
            if prev is not None and prev != c:
                changes.append(onset)
            prev = c
        pos += n
    uid = utterance_id or f"synth{seed:06d}"
    fs = FeatureSequence(feats, starts, np.concatenate(energies), FrameSpec(max(spec.frame_len, shift), shift))
    return SynthUtterance(uid, fs, Diarization(uid, segs), np.array(changes), frame_labels)


def synth_corpus(spec: CorpusSpec, n_utterances: int, prefix: str = "utt"):
    """Generate ``n_utterances`` utterances with seeds ``spec.seed + i``."""
    if n_utterances < 1:
        raise ConfigError("n_utterances must be >= 1")
    utts = [synth_utterance(spec, spec.seed + i, f"{prefix}{i:05d}") for i in range(n_utterances)]
    return utts, manifest(spec, utts)


def manifest(spec: CorpusSpec, utts) -> dict:
    entries = []
    totals = {name: 0.0 for name in spec.class_names}
    for i, u in enumerate(utts):
        lt = u.reference.label_time()
        for k, v in lt.items():
            totals[k] += v
        entries.append({
            "id": u.utterance_id, "seed": spec.seed + i, "duration": round(u.duration, 6),
            "class_time": {k: round(v, 6) for k, v in lt.items()},
            "n_changes": int(len(u.change_times)),
        })
    return {"spec": spec.to_dict(), "utterances": entries,
            "class_time": {k: round(v, 6) for k, v in totals.items()}}


def write_corpus(out_dir, spec: CorpusSpec, utts) -> dict:
    """Write ``<id>.feats`` (features + frame times), ``<id>.energy``, ``<id>.rttm`` and manifest.json."""
    from .io import write_matrix, write_rttm

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for u in utts:
        write_matrix(out / f"{u.utterance_id}.feats", u.features.features, u.features.frame_starts)
        write_matrix(out / f"{u.utterance_id}.energy", u.features.energies[:, None])
        write_rttm(u.reference, out / f"{u.utterance_id}.rttm")
    man = manifest(spec, utts)
    (out / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return man


def read_feature_file(feats_path, frame_spec: FrameSpec | None = None) -> FeatureSequence:
    """Load ``<id>.feats`` plus the sibling ``<id>.energy`` when present."""
    from .io import read_matrix

    feats_path = Path(feats_path)
    mat, times = read_matrix(feats_path)
    if times is None:
        raise DataError(f"{feats_path}: feature file lacks frame times")
    energy_path = feats_path.with_suffix(".energy")
    if energy_path.exists():
        energies = read_matrix(energy_path)[0][:, 0].astype(np.float64)
    else:
        energies = np.ones(len(times))
    if frame_spec is None:
        shift = float(np.round(np.median(np.diff(times)), 6)) if len(times) > 1 else 0.01
        frame_spec = FrameSpec(max(0.02, shift), shift)
    return FeatureSequence(mat.astype(np.float64), times, energies, frame_spec)
