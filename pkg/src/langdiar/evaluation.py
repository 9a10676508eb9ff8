"""DER / JER with optimal label mapping, ROI change-detection scores, and EER.

Segment times are snapped to a 1 ms grid before scoring.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .diarize import Diarization
from .errors import DataError

GRID = 1000  # ticks per second
MAX_MAPPING_CLASSES = 8


def _ticks(t: float) -> int:
    return int(round(t * GRID))


def _intervals(d: Diarization):
    out = []
    for s in d.segments:
        a, b = _ticks(s.onset), _ticks(s.end)
        if b > a:
            out.append((a, b, s.label))
    return out


def _collar_zones(ref_iv, collar: float):
    c = _ticks(collar)
    if c <= 0:
        return []
    zones = []
    for a, b, _ in ref_iv:
        zones.append((a - c, a + c))
        zones.append((b - c, b + c))
    return zones


@dataclass
class _Overlap:
    ref_labels: list
    hyp_labels: list
    overlap: np.ndarray  # ref x hyp, seconds
    ref_time: np.ndarray
    hyp_time: np.ndarray
    false_alarm: float  # hyp speech where ref is silent


def _overlap_stats(ref: Diarization, hyp: Diarization, collar: float = 0.0) -> _Overlap:
    ref_iv, hyp_iv = _intervals(ref), _intervals(hyp)
    if not ref_iv:
        raise DataError(f"{ref.utterance_id}: empty reference")
    zones = _collar_zones(ref_iv, collar)
    points = sorted({p for a, b, _ in ref_iv + hyp_iv for p in (a, b)} | {p for z in zones for p in z})
    pts = np.array(points)
    lo, hi = pts[:-1], pts[1:]
    mid2 = lo + hi  # twice the midpoint, stays integer

    def label_at(iv, labels):
        starts = np.array([2 * a for a, _, _ in iv])
        ends = np.array([2 * b for _, b, _ in iv])
        k = np.searchsorted(starts, mid2, side="right") - 1
        ok = (k >= 0) & (mid2 < ends[np.clip(k, 0, None)]) if len(iv) else np.zeros(len(mid2), bool)
        lab_idx = np.array([labels.index(iv[i][2]) for i in range(len(iv))]) if iv else np.zeros(0, int)
        out = np.full(len(mid2), -1)
        out[ok] = lab_idx[k[ok]]
        return out

    ref_labels = sorted({l for _, _, l in ref_iv})
    hyp_labels = sorted({l for _, _, l in hyp_iv})
    r = label_at(ref_iv, ref_labels)
    h = label_at(hyp_iv, hyp_labels)
    dur = (hi - lo).astype(np.float64) / GRID
    if zones:
        zs = np.array([2 * a for a, _ in zones])
        ze = np.array([2 * b for _, b in zones])
        in_zone = ((mid2[:, None] > zs[None, :]) & (mid2[:, None] < ze[None, :])).any(axis=1)
        dur = np.where(in_zone, 0.0, dur)

    nr, nh = len(ref_labels), len(hyp_labels)
    ov = np.zeros((nr, nh))
    both = (r >= 0) & (h >= 0)
    np.add.at(ov, (r[both], h[both]), dur[both])
    ref_time = np.bincount(r[r >= 0], weights=dur[r >= 0], minlength=nr)
    hyp_time = np.bincount(h[h >= 0], weights=dur[h >= 0], minlength=nh)
    fa = float(dur[(h >= 0) & (r < 0)].sum())
    return _Overlap(ref_labels, hyp_labels, ov, ref_time, hyp_time, fa)


def _best_mapping(st: _Overlap) -> dict:
    nr, nh = len(st.ref_labels), len(st.hyp_labels)
    if nr > MAX_MAPPING_CLASSES or nh > MAX_MAPPING_CLASSES:
        raise DataError(f"label mapping supports at most {MAX_MAPPING_CLASSES} classes per side "
                        f"(ref {nr}, hyp {nh})")
    best, best_val = {}, -1.0
    if nh <= nr:
        for perm in itertools.permutations(range(nr), nh):
            val = sum(st.overlap[perm[j], j] for j in range(nh))
            if val > best_val:
                best_val, best = val, {st.hyp_labels[j]: st.ref_labels[perm[j]] for j in range(nh)}
    else:
        for perm in itertools.permutations(range(nh), nr):
            val = sum(st.overlap[i, perm[i]] for i in range(nr))
            if val > best_val:
                best_val, best = val, {st.hyp_labels[perm[i]]: st.ref_labels[i] for i in range(nr)}
    return best


def best_mapping(ref: Diarization, hyp: Diarization, collar: float = 0.0) -> dict:
    """Injective hypothesis->reference label mapping minimising DER."""
    return _best_mapping(_overlap_stats(ref, hyp, collar))


@dataclass
class ScoreReport:
    der: float
    jer: float
    mapping: dict
    per_class_jaccard_error: dict
    missed: float = 0.0
    false_alarm: float = 0.0
    confusion: float = 0.0
    scored_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "der": self.der, "jer": self.jer, "mapping": self.mapping,
            "per_class_jaccard_error": self.per_class_jaccard_error,
            "missed": self.missed, "false_alarm": self.false_alarm,
            "confusion": self.confusion, "scored_time": self.scored_time,
        }


def score(ref: Diarization, hyp: Diarization, collar: float = 0.0, mapping: dict | None = None) -> ScoreReport:
    """DER and JER (percent) under the best (or given) label mapping."""
    st = _overlap_stats(ref, hyp, collar)
    if mapping is None:
        mapping = _best_mapping(st)
    total = float(st.ref_time.sum())
    if total <= 0:
        raise DataError(f"{ref.utterance_id}: no scored reference time")
    ri = {l: i for i, l in enumerate(st.ref_labels)}
    hi = {l: i for i, l in enumerate(st.hyp_labels)}
    correct = sum(st.overlap[ri[r], hi[h]] for h, r in mapping.items() if h in hi and r in ri)
    both = float(st.overlap.sum())
    missed = total - both
    confusion = both - correct
    der = 100.0 * (missed + st.false_alarm + confusion) / total

    inverse = {r: h for h, r in mapping.items()}
    per_class = {}
    for r in st.ref_labels:
        h = inverse.get(r)
        if h is None or h not in hi:
            per_class[r] = 100.0
            continue
        inter = st.overlap[ri[r], hi[h]]
        union = st.ref_time[ri[r]] + st.hyp_time[hi[h]] - inter
        per_class[r] = 100.0 * (1.0 - inter / union) if union > 0 else 100.0
    jer = float(np.mean(list(per_class.values())))
    return ScoreReport(der, jer, dict(mapping), per_class, missed, st.false_alarm, confusion, total)


def der(ref: Diarization, hyp: Diarization, collar: float = 0.0) -> float:
    return score(ref, hyp, collar).der


def jer(ref: Diarization, hyp: Diarization, collar: float = 0.0) -> float:
    return score(ref, hyp, collar).jer


@dataclass
class CpdReport:
    idr: float
    mr: float
    far: float
    dm: float
    n_roi: int = 0
    counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"idr": self.idr, "mr": self.mr, "far": self.far, "dm": self.dm,
                "n_roi": self.n_roi, "counts": self.counts}


def roi_bounds(ref_changes, span: tuple[float, float]) -> np.ndarray:
    """ROI edges: span start, midpoints between consecutive reference changes, span end."""
    ref = np.asarray(ref_changes, dtype=np.float64)
    return np.r_[span[0], 0.5 * (ref[:-1] + ref[1:]), span[1]]


def cpd_metrics(ref_changes, hyp_changes, span: tuple[float, float]) -> CpdReport:
    """Identification / miss / false-alarm rates over regions of interest around each true change.

    A ROI with exactly one detection is identified, none is a miss, more than one is a
    false alarm. ``dm`` is the mean |detected - true| over identified ROIs (NaN if none).
    """
    ref = np.sort(np.asarray(ref_changes, dtype=np.float64))
    hyp = np.sort(np.asarray(hyp_changes, dtype=np.float64))
    if ref.size == 0:
        raise DataError("reference has no change points")
    if ref[0] < span[0] or ref[-1] > span[1]:
        raise DataError("reference change points fall outside the span")
    edges = roi_bounds(ref, span)
    # half-open ROIs, the last one closed on the right
    roi = np.searchsorted(edges, hyp, side="right") - 1
    roi[hyp == edges[-1]] = len(ref) - 1
    inside = (roi >= 0) & (roi < len(ref))
    counts = np.bincount(roi[inside], minlength=len(ref))
    n = len(ref)
    n_id, n_miss, n_fa = int((counts == 1).sum()), int((counts == 0).sum()), int((counts > 1).sum())
    devs = [abs(hyp[inside][roi[inside] == k][0] - ref[k]) for k in np.flatnonzero(counts == 1)]
    dm = float(np.mean(devs)) if devs else float("nan")
    idr, mr = 100.0 * n_id / n, 100.0 * n_miss / n
    # FAR as the complement keeps idr + mr + far == 100 exact in floating point
    far = 100.0 - (idr + mr)
    return CpdReport(idr, mr, far, dm, n,
                     {"identified": n_id, "missed": n_miss, "false_alarm": n_fa})


def eer(target_scores, nontarget_scores) -> float:
    """Equal error rate in percent.

    Thresholds sweep the pooled scores (plus +inf); a trial is accepted when
    its score >= threshold. The crossing of FRR and FAR is interpolated
    linearly between the two bracketing thresholds.
    """
    tgt = np.sort(np.asarray(target_scores, dtype=np.float64))
    non = np.sort(np.asarray(nontarget_scores, dtype=np.float64))
    if tgt.size == 0 or non.size == 0:
        raise DataError("EER needs non-empty target and non-target score lists")
    thr = np.r_[np.unique(np.r_[tgt, non]), np.inf]
    frr = np.searchsorted(tgt, thr, side="left") / tgt.size
    far = 1.0 - np.searchsorted(non, thr, side="left") / non.size
    diff = frr - far
    k = int(np.flatnonzero(diff >= 0)[0])
    if diff[k] == 0 or k == 0:
        return 100.0 * float(frr[k])
    d_frr = frr[k] - frr[k - 1]
    d_far = far[k] - far[k - 1]
    s = (far[k - 1] - frr[k - 1]) / (d_frr - d_far)
    return 100.0 * float(frr[k - 1] + s * d_frr)


def average_reports(reports: list[ScoreReport]) -> dict:
    """Mean DER/JER across utterances, in input order."""
    if not reports:
        return {"der": float("nan"), "jer": float("nan"), "n": 0}
    return {"der": float(np.mean([r.der for r in reports])),
            "jer": float(np.mean([r.jer for r in reports])), "n": len(reports)}


def average_cpd(reports: list[CpdReport]) -> dict:
    if not reports:
        return {"idr": float("nan"), "mr": float("nan"), "far": float("nan"), "dm": float("nan"), "n": 0}
    dms = [r.dm for r in reports if not np.isnan(r.dm)]
    return {"idr": float(np.mean([r.idr for r in reports])),
            "mr": float(np.mean([r.mr for r in reports])),
            "far": float(np.mean([r.far for r in reports])),
            "dm": float(np.mean(dms)) if dms else float("nan"), "n": len(reports)}
