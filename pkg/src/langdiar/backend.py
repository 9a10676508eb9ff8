"""Statistical back-end: LDA, WCCN, whitening, length norm, two-covariance GPLDA, cosine."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigError, DataError

CHAIN_STEPS = ("lda", "wccn", "whiten", "lnorm")
SCORERS = ("gplda", "cosine")


def _epsilon(mat: np.ndarray) -> float:
    d = mat.shape[0]
    tr = float(np.trace(mat))
    return 1e-6 * tr / d if tr > 0 else 1e-12


def _ill_conditioned(mat: np.ndarray, rcond: float = 1e-12) -> bool:
    w = np.linalg.eigvalsh(mat)
    return w[0] <= rcond * max(abs(w[-1]), np.finfo(float).tiny)


def regularized(mat: np.ndarray, always: bool = False) -> np.ndarray:
    """Add eps*I (eps = 1e-6 trace/D) when ``always`` or when ``mat`` is near singular."""
    mat = 0.5 * (mat + mat.T)
    if always or _ill_conditioned(mat):
        mat = mat + _epsilon(mat) * np.eye(mat.shape[0])
        if _ill_conditioned(mat, 1e-15):
            raise DataError("matrix is singular even after regularisation")
    return mat


def _as_labels(labels) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    classes, inv = np.unique(labels, return_inverse=True)
    return classes, inv


def _class_stats(X, labels):
    X = np.asarray(X, dtype=np.float64)
    classes, inv = _as_labels(labels)
    if len(inv) != X.shape[0]:
        raise DataError("labels and data differ in length")
    counts = np.bincount(inv, minlength=len(classes))
    means = np.vstack([X[inv == c].mean(axis=0) for c in range(len(classes))])
    return X, classes, inv, counts, means


def within_between_scatter(X, labels):
    """Population within-class and size-weighted between-class scatter."""
    X, classes, inv, counts, means = _class_stats(X, labels)
    n = X.shape[0]
    mu = X.mean(axis=0)
    centred = X - means[inv]
    sw = centred.T @ centred / n
    dm = means - mu
    sb = (dm * (counts / n)[:, None]).T @ dm
    return sw, sb, mu


def train_lda(X, labels, out_dim: int) -> np.ndarray:
    """Fisher LDA. Rows of the result are projection directions, best first."""
    X = np.asarray(X, dtype=np.float64)
    D = X.shape[1]
    classes, _ = _as_labels(labels)
    if len(classes) < 2:
        raise DataError("LDA needs at least two classes")
    if out_dim > D or out_dim < 1:
        raise ConfigError(f"LDA out_dim {out_dim} not in [1, {D}]")
    if out_dim > len(classes) - 1:
        warnings.warn(
            f"LDA out_dim {out_dim} exceeds between-class rank {len(classes) - 1}; "
            "trailing directions carry no Fisher discrimination",
            stacklevel=2,
        )
    sw, sb, _ = within_between_scatter(X, labels)
    sw = regularized(sw, always=True)
    vals, vecs = scipy.linalg.eigh(0.5 * (sb + sb.T), sw)
    order = np.argsort(-vals, kind="stable")[:out_dim]
    return vecs[:, order].T.copy()


def train_wccn(X, labels) -> np.ndarray:
    """Cholesky factor L with L L^T = inverse of the average per-class covariance.

    Apply as ``x @ L`` (i.e. ``L^T x``).
    """
    X, classes, inv, counts, means = _class_stats(X, labels)
    if np.any(counts < 2):
        raise DataError("WCCN needs at least two samples per class")
    covs = [np.cov(X[inv == c], rowvar=False, bias=True).reshape(X.shape[1], X.shape[1])
            for c in range(len(classes))]
    w = regularized(np.mean(covs, axis=0))
    return np.linalg.cholesky(np.linalg.inv(w))


def train_whitener(X) -> tuple[np.ndarray, np.ndarray]:
    """Mean and symmetric inverse square root of the (population) covariance."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise DataError("whitening needs at least two samples")
    mu = X.mean(axis=0)
    c = regularized(np.cov(X, rowvar=False, bias=True).reshape(X.shape[1], X.shape[1]))
    vals, vecs = np.linalg.eigh(c)
    return mu, (vecs / np.sqrt(vals)) @ vecs.T


def length_normalize(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise DataError("cannot length-normalise a zero vector")
    return x / norms


def cosine_similarity(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise DataError("cosine similarity of a zero vector")
    return float(np.clip(x @ y / (nx * ny), -1.0, 1.0))


@dataclass
class ProjectionSet:
    """mean subtraction -> LDA -> WCCN -> whitening -> length normalisation."""

    mean: np.ndarray
    lda: np.ndarray | None = None
    wccn: np.ndarray | None = None
    whitener: np.ndarray | None = None
    apply_length_norm: bool = False
    # mean removed right before whitening (zero unless LDA/WCCN shift it)
    whiten_mean: np.ndarray | None = None

    @property
    def in_dim(self) -> int:
        return len(self.mean)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X) - self.mean
        if self.lda is not None:
            X = X @ self.lda.T
        if self.wccn is not None:
            X = X @ self.wccn
        if self.whitener is not None:
            if self.whiten_mean is not None:
                X = X - self.whiten_mean
            X = X @ self.whitener.T
        if self.apply_length_norm:
            X = length_normalize(X)
        return X[0] if single else X


def train_projection(X, labels, chain=("whiten", "lnorm"), lda_dim: int | None = None) -> ProjectionSet:
    X = np.asarray(X, dtype=np.float64)
    unknown = set(chain) - set(CHAIN_STEPS)
    if unknown:
        raise ConfigError(f"unknown projection steps {sorted(unknown)}")
    mu = X.mean(axis=0)
    proj = ProjectionSet(mean=mu)
    Y = X - mu
    if "lda" in chain:
        proj.lda = train_lda(Y, labels, lda_dim if lda_dim is not None else min(X.shape[1], 150))
        Y = Y @ proj.lda.T
    if "wccn" in chain:
        proj.wccn = train_wccn(Y, labels)
        Y = Y @ proj.wccn
    if "whiten" in chain:
        wmu, proj.whitener = train_whitener(Y)
        proj.whiten_mean = wmu
    proj.apply_length_norm = "lnorm" in chain
    return proj


@dataclass
class GpldaModel:
    sigma_w: np.ndarray
    sigma_b: np.ndarray
    mu: np.ndarray
    _kernel: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.sigma_w = np.atleast_2d(np.asarray(self.sigma_w, dtype=np.float64))
        self.sigma_b = np.atleast_2d(np.asarray(self.sigma_b, dtype=np.float64))
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        if self.sigma_w.shape != self.sigma_b.shape or self.sigma_w.shape[0] != len(self.mu):
            raise DataError("GPLDA model dimensions disagree")

    @property
    def dim(self) -> int:
        return len(self.mu)

    def kernel(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadratic-form matrices (Q, P) with d(x, y) = x'Qx + y'Qy + 2 x'Py.

        With T = Sigma + B, the inverse of [[T, B], [B, T]] has diagonal blocks
        ((T+B)^-1 + (T-B)^-1)/2 and off-diagonal blocks ((T+B)^-1 - (T-B)^-1)/2.
        """
        if self._kernel is None:
            t = self.sigma_w + self.sigma_b
            b = self.sigma_b
            t_inv = np.linalg.inv(regularized(t))
            plus = np.linalg.inv(regularized(t + b))
            minus = np.linalg.inv(regularized(t - b))
            q = 0.5 * (plus + minus) - t_inv
            p = 0.5 * (plus - minus)
            self._kernel = (0.5 * (q + q.T), 0.5 * (p + p.T))
        return self._kernel

    def pairwise(self, X, Y=None) -> np.ndarray:
        """Distance matrix between rows of X and rows of Y."""
        q, p = self.kernel()
        X = np.atleast_2d(X)
        Y = X if Y is None else np.atleast_2d(Y)
        qx = np.einsum("ij,jk,ik->i", X, q, X)
        qy = qx if Y is X else np.einsum("ij,jk,ik->i", Y, q, Y)
        return qx[:, None] + qy[None, :] + 2.0 * (X @ p @ Y.T)

    def paired(self, X, Y) -> np.ndarray:
        """Distances between corresponding rows of X and Y."""
        q, p = self.kernel()
        X, Y = np.atleast_2d(X), np.atleast_2d(Y)
        return (np.einsum("ij,jk,ik->i", X, q, X) + np.einsum("ij,jk,ik->i", Y, q, Y)
                + 2.0 * np.einsum("ij,jk,ik->i", X, p, Y))


def _psd_project(mat):
    mat = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(mat)
    return (vecs * np.clip(vals, 0.0, None)) @ vecs.T


def train_gplda(X, labels) -> GpldaModel:
    """Closed-form moment estimate of the two-covariance model."""
    X = np.asarray(X, dtype=np.float64)
    classes, inv = _as_labels(labels)
    if len(classes) < 2:
        raise DataError("GPLDA needs at least two classes")
    if np.any(np.bincount(inv) < 2):
        raise DataError("GPLDA needs at least two samples per class")
    sw, sb, mu = within_between_scatter(X, labels)
    return GpldaModel(_psd_project(sw), _psd_project(sb), mu)


def gplda_distance(model: GpldaModel, x, y) -> float:
    """Direct evaluation of the block-matrix GPLDA distance for one pair.

    Larger values mean the pair is more likely to come from different classes.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    t = model.sigma_w + model.sigma_b
    b = model.sigma_b
    m = regularized(np.block([[t, b], [b, t]]))
    t = regularized(t)
    z = np.concatenate([x, y])
    return float(z @ np.linalg.solve(m, z) - x @ np.linalg.solve(t, x) - y @ np.linalg.solve(t, y))


@dataclass
class Backend:
    """Trained projection chain plus scorer.

    ``distance`` is GPLDA distance or ``1 - cosine``; ``similarity`` is its negation
    (``-d`` for GPLDA, cosine for cosine) so targets score high.
    """

    projection: ProjectionSet
    scorer: str = "gplda"
    gplda: GpldaModel | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scorer not in SCORERS:
            raise ConfigError(f"unknown scorer {self.scorer!r}")
        if self.scorer == "gplda" and self.gplda is None:
            raise ConfigError("gplda scorer requires a trained GPLDA model")

    def project(self, X) -> np.ndarray:
        return self.projection.apply(X)

    def distance_matrix(self, P) -> np.ndarray:
        P = np.atleast_2d(P)
        if self.scorer == "gplda":
            d = self.gplda.pairwise(P)
            return 0.5 * (d + d.T)
        U = length_normalize(P)
        return 1.0 - np.clip(U @ U.T, -1.0, 1.0)

    def paired_distance(self, A, B) -> np.ndarray:
        if self.scorer == "gplda":
            return self.gplda.paired(A, B)
        return 1.0 - np.clip(np.sum(length_normalize(A) * length_normalize(B), axis=1), -1.0, 1.0)

    def similarity(self, x, y) -> float:
        if self.scorer == "gplda":
            return -gplda_distance(self.gplda, x, y)
        return cosine_similarity(x, y)


def train_backend(X, labels, chain=("whiten", "lnorm"), scorer: str = "gplda",
                  lda_dim: int | None = None, meta: dict | None = None) -> Backend:
    proj = train_projection(X, labels, chain, lda_dim)
    gp = train_gplda(proj.apply(X), labels) if scorer == "gplda" else None
    return Backend(proj, scorer, gp, dict(meta or {}, chain=list(chain), lda_dim=lda_dim))


@dataclass
class TrialSet:
    left: np.ndarray
    right: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=bool)
        if not (len(self.left) == len(self.right) == len(self.target)):
            raise DataError("trial arrays differ in length")

    def __len__(self):
        return len(self.target)


def make_trials(X, labels, n_target: int = 2000, n_nontarget: int = 2000, seed: int = 0) -> TrialSet:
    """Random within-class (target) and between-class (nontarget) pairs."""
    X = np.asarray(X, dtype=np.float64)
    classes, inv = _as_labels(labels)
    if len(classes) < 2:
        raise DataError("trials need at least two classes")
    members = [np.flatnonzero(inv == c) for c in range(len(classes))]
    usable = [c for c, m in enumerate(members) if len(m) >= 2]
    if not usable:
        raise DataError("no class has two samples for a target trial")
    rng = np.random.Generator(np.random.PCG64(seed))
    li, ri = [], []
    for _ in range(n_target):
        c = usable[rng.integers(len(usable))]
        a, b = rng.choice(members[c], size=2, replace=False)
        li.append(a)
        ri.append(b)
    for _ in range(n_nontarget):
        c1, c2 = rng.choice(len(classes), size=2, replace=False)
        li.append(rng.choice(members[c1]))
        ri.append(rng.choice(members[c2]))
    target = np.r_[np.ones(n_target, bool), np.zeros(n_nontarget, bool)]
    return TrialSet(X[li], X[ri], target)


def score_trials(scorer, trials: TrialSet) -> tuple[np.ndarray, np.ndarray]:
    """Apply a similarity ``scorer(x, y)`` to every trial; returns (target, nontarget) scores."""
    if isinstance(scorer, Backend):
        scores = -scorer.paired_distance(trials.left, trials.right)
        if scorer.scorer == "cosine":
            scores = scores + 1.0
    else:
        scores = np.array([scorer(x, y) for x, y in zip(trials.left, trials.right)], dtype=np.float64)
    return scores[trials.target], scores[~trials.target]
