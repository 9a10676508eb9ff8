"""Slow, independent reference implementations used as test oracles."""

import itertools

import numpy as np


def raster(d, n_ms, codes):
    """Label code per millisecond cell (-1 where silent)."""
    cells = np.full(n_ms, -1)
    for s in d.segments:
        a = int(round(s.onset * 1000))
        b = int(round(s.end * 1000))
        cells[a:min(b, n_ms)] = codes[s.label]
    return cells


def grid_scores(ref, hyp):
    """DER and JER by exhaustive mapping search over a millisecond raster."""
    end = max([s.end for s in ref.segments] + [s.end for s in hyp.segments])
    n = int(round(end * 1000)) + 1
    ref_labels = sorted({s.label for s in ref.segments})
    hyp_labels = sorted({s.label for s in hyp.segments})
    r = raster(ref, n, {l: i for i, l in enumerate(ref_labels)})
    h = raster(hyp, n, {l: i for i, l in enumerate(hyp_labels)})
    ref_total = int(np.sum(r >= 0))

    best = None
    slots = list(range(len(ref_labels))) + [None] * len(hyp_labels)
    for perm in sorted(set(itertools.permutations(slots, len(hyp_labels))), key=str):
        # hypothesis code -> reference code, -2 for unmapped
        table = np.array([-2 if p is None else p for p in perm] + [-1])
        mapped = table[h]  # h == -1 picks the trailing -1
        err = int(np.sum((r >= 0) | (h >= 0)) - np.sum((r >= 0) & (mapped == r)))
        if best is None or err < best[0]:
            best = (err, perm)
    err, perm = best
    der = 100.0 * err / ref_total

    errs = []
    for ri in range(len(ref_labels)):
        hi = perm.index(ri) if ri in perm else None
        if hi is None:
            errs.append(100.0)
            continue
        inter = np.sum((r == ri) & (h == hi))
        union = np.sum((r == ri) | (h == hi))
        errs.append(100.0 * (1 - inter / union))
    return der, float(np.mean(errs))


def ahc_bruteforce(D, K):
    """Average linkage recomputing every cluster-pair mean at each step."""
    D = np.asarray(D, dtype=float)
    clusters = [[i] for i in range(len(D))]
    while len(clusters) > K:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                val = float(np.mean(D[np.ix_(clusters[a], clusters[b])]))
                key = (val, min(clusters[a]), min(clusters[b]))
                if best is None or key < best[0]:
                    best = (key, a, b)
        _, a, b = best
        clusters[a] = sorted(clusters[a] + clusters[b])
        del clusters[b]
        clusters.sort(key=min)
    owner = {}
    for c in clusters:
        for i in c:
            owner[i] = min(c)
    labels, seen = [], {}
    for i in range(len(D)):
        labels.append(seen.setdefault(owner[i], len(seen)))
    return np.array(labels)


def eer_sweep(targets, nontargets):
    """EER by explicit loops over every candidate threshold."""
    thresholds = sorted(set(targets) | set(nontargets)) + [float("inf")]
    pts = []
    for t in thresholds:
        frr = sum(1 for x in targets if x < t) / len(targets)
        far = sum(1 for x in nontargets if x >= t) / len(nontargets)
        pts.append((frr, far))
    for (f0, a0), (f1, a1) in zip(pts, pts[1:]):
        if f0 == a0:
            return 100.0 * f0
        if (f0 - a0) < 0 <= (f1 - a1):
            # intersection of the two straight segments
            s = (a0 - f0) / ((f1 - f0) - (a1 - a0))
            return 100.0 * (f0 + s * (f1 - f0))
    f, a = pts[-1]
    return 100.0 * f


def same_partition(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.array_equal(a[:, None] == a[None, :], b[:, None] == b[None, :])
