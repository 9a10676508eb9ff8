"""Corpus-level helpers: back-end training from ground truth, batch diarization, trials."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .backend import Backend, make_trials, score_trials, train_backend
from .config import ChangePointConfig, PipelineConfig
from .diarize import Diarization, detect_change_points, diarize
from .embedding import Extractor, embed_windows
from .errors import TooShortError
from .evaluation import average_cpd, average_reports, cpd_metrics, eer, score
from .features import energy_vad, vad_mask

log = logging.getLogger(__name__)


def class_pooled_windows(utts, extractor: Extractor, N: int, shift: int | None = None,
                         vad_factor: float = 0.06):
    """Embeddings of N-frame windows over the voiced frames of each class, pooled across utterances.

    Returns ``(embeddings, labels)`` with class names as labels.
    """
    shift = shift or N
    pooled: dict = {}
    for u in utts:
        voiced = vad_mask(u.features.energies, vad_factor)
        names = reference_frame_labels(u.reference, u.features)
        for name in u.reference.labels:
            pooled.setdefault(name, []).append(u.features.features[voiced & (names == name)])
    embs, labels = [], []
    for name in sorted(pooled):
        rows = np.vstack(pooled[name])
        if len(rows) < N:
            continue
        starts = np.arange(0, len(rows) - N + 1, shift)
        embs.append(embed_windows(extractor, rows, N, starts))
        labels.extend([name] * len(starts))
    if not embs:
        raise TooShortError("no class has enough frames for the analysis window", 0, N)
    return np.vstack(embs), np.array(labels)


def reference_frame_labels(reference: Diarization, features) -> np.ndarray:
    """Reference label at the centre of each frame step (``None`` outside every segment)."""
    t = features.frame_starts + 0.5 * features.spec.frame_shift
    out = np.full(len(t), None, dtype=object)
    for s in reference.segments:
        out[(t >= s.onset) & (t < s.end)] = s.label
    return out


@dataclass
class LabeledUtterance:
    utterance_id: str
    features: object
    reference: Diarization


def train_backend_on_corpus(utts, extractor: Extractor, N: int, chain=("whiten", "lnorm"),
                            scorer: str = "gplda", lda_dim: int | None = None,
                            shift: int | None = None) -> Backend:
    X, y = class_pooled_windows(utts, extractor, N, shift)
    meta = {"N": N, "extractor": extractor.spec.to_dict(), "n_train": int(len(y))}
    return train_backend(X, y, chain, scorer, lda_dim, meta)


def trial_eer(utts, extractor: Extractor, backend: Backend, N: int, n_pairs: int = 2000,
              seed: int = 0, shift: int | None = None) -> float:
    """EER over random within-class / between-class window pairs."""
    X, y = class_pooled_windows(utts, extractor, N, shift)
    trials = make_trials(backend.project(X), y, n_pairs, n_pairs, seed)
    tgt, non = score_trials(backend, trials)
    return eer(tgt, non)


@dataclass
class BatchResult:
    hypotheses: list
    reports: list
    average: dict


def diarize_corpus(utts, cfg: PipelineConfig, extractor: Extractor, backend: Backend) -> BatchResult:
    hyps, reports = [], []
    for u in utts:
        hyp = diarize(u.features, cfg, extractor, backend, u.utterance_id)
        hyps.append(hyp)
        reports.append(score(u.reference, hyp))
    return BatchResult(hyps, reports, average_reports(reports))


def change_detection_corpus(utts, extractor: Extractor, backend: Backend, cp: ChangePointConfig,
                            vad_factor: float = 0.06):
    """ROI change-detection scores per utterance and averaged.

    An utterance too short for the contour (fewer than 2N voiced frames)
    counts as having no detections.
    """
    reports = []
    for u in utts:
        v = energy_vad(u.features, vad_factor).voiced()
        try:
            hyp_times = detect_change_points(v, extractor, backend, cp).change_times
        except TooShortError:
            hyp_times = np.zeros(0)
        ref_changes = u.reference.change_times()
        if len(ref_changes) == 0:
            continue
        reports.append(cpd_metrics(ref_changes, hyp_times, u.reference.span))
    return reports, average_cpd(reports)
