"""Similarity measures: Pearson, Spearman, Kendall tau-b, linear CKA, RSA.

Undefined correlations (constant input, all-tied ranks, zero-norm centered
Gram) raise UndefinedStatError; aggregating callers convert that signal to 0
and keep a count rather than letting NaN propagate.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, ParameterError, UndefinedStatError

logger = logging.getLogger(__name__)


def _as_vector_pair(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ParameterError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise ParameterError("need at least 2 observations")
    return x, y


def pearson(x, y) -> float:
    """Product-moment correlation of two equal-length vectors."""
    x, y = _as_vector_pair(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedStatError("correlation undefined for constant input")
    return float(xc @ yc) / math.sqrt(sxx * syy)


def midranks(x) -> np.ndarray:
    """Fractional ranks, ties averaged (rank 1 = smallest)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    boundaries = np.flatnonzero(np.r_[True, sx[1:] != sx[:-1], True])
    starts, ends = boundaries[:-1], boundaries[1:]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(x.shape[0])
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def spearman(x, y) -> float:
    """Rank correlation: Pearson of mid-ranks."""
    x, y = _as_vector_pair(x, y)
    return pearson(midranks(x), midranks(y))


def _count_inversions(a) -> int:
    """Strict inversions (i < j with a[i] > a[j]) by merge counting."""
    a = list(a)
    buf = list(a)

    def sort(lo, hi):
        if hi - lo <= 1:
            return 0
        mid = (lo + hi) // 2
        inv = sort(lo, mid) + sort(mid, hi)
        i, j, k = lo, mid, lo
        while i < mid and j < hi:
            if a[j] < a[i]:
                buf[k] = a[j]
                j += 1
                inv += mid - i
            else:
                buf[k] = a[i]
                i += 1
            k += 1
        if i < mid:
            buf[k:hi] = a[i:mid]
        a[lo:hi] = buf[lo:hi]
        return inv

    return sort(0, len(a))


def _tie_term(sorted_values) -> int:
    """sum t*(t-1)/2 over tie groups of an already-sorted sequence."""
    boundaries = np.flatnonzero(
        np.r_[True, sorted_values[1:] != sorted_values[:-1], True]
    )
    counts = np.diff(boundaries)
    return int(np.sum(counts * (counts - 1) // 2))


def kendall_tau(x, y) -> float:
    """Tie-corrected Kendall tau-b.

    Discordant pairs come from merge-sort inversion counting, so large
    inputs stay O(n log n); the result is exactly the pair-enumeration
    definition (C - D) / sqrt((C+D+T_x)(C+D+T_y)).
    """
    x, y = _as_vector_pair(x, y)
    n = x.shape[0]
    perm = np.lexsort((y, x))
    xs, ys = x[perm], y[perm]
    n0 = n * (n - 1) // 2
    n1 = _tie_term(xs)
    n2 = _tie_term(np.sort(y, kind="mergesort"))
    pair_codes = np.r_[True, (xs[1:] != xs[:-1]) | (ys[1:] != ys[:-1]), True]
    n3 = int(np.sum((counts := np.diff(np.flatnonzero(pair_codes))) * (counts - 1) // 2))
    if n0 == n1 or n0 == n2:
        raise UndefinedStatError("tau undefined: all pairs tied in one vector")
    disc = _count_inversions(ys)
    conc = n0 - n1 - n2 + n3 - disc
    return (conc - disc) / math.sqrt((n0 - n2) * (n0 - n1))


def _double_center(K):
    return K - K.mean(axis=0, keepdims=True) - K.mean(axis=1, keepdims=True) + K.mean()


def linear_cka(a, b) -> float:
    """Linear centered kernel alignment between two row-aligned matrices.

    Gram matrices K = A A^T and L = B B^T are double-centered; the score is
    their normalized Frobenius inner product.  Invariant to orthogonal
    right-transformations and isotropic scaling of either input.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ParameterError("inputs must be 2-D (rows = stimuli)")
    if a.shape[0] != b.shape[0]:
        raise ParameterError(f"row count mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 3:
        raise ParameterError("need at least 3 rows")
    kc = _double_center(a @ a.T)
    lc = _double_center(b @ b.T)
    den = math.sqrt(float(np.sum(kc * kc))) * math.sqrt(float(np.sum(lc * lc)))
    if den == 0.0:
        raise UndefinedStatError("CKA undefined: a centered Gram matrix is zero")
    return float(np.sum(kc * lc)) / den


@dataclass(frozen=True)
class RDM:
    """Correlation-distance representational dissimilarity matrix."""

    matrix: np.ndarray
    stimulus_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "stimulus_ids", tuple(self.stimulus_ids))
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ParameterError("RDM matrix must be square")
        if len(self.stimulus_ids) != m.shape[0]:
            raise ParameterError("stimulus_ids length != matrix size")
        if np.max(np.abs(m - m.T)) > 1e-10:
            raise ParameterError("RDM must be symmetric")
        if np.max(np.abs(np.diag(m))) > 1e-10:
            raise ParameterError("RDM diagonal must be zero")
        if m.min() < -1e-10 or m.max() > 2 + 1e-10:
            raise ParameterError("RDM entries must lie in [0, 2]")

    @property
    def n(self):
        return self.matrix.shape[0]

    def upper_triangle(self) -> np.ndarray:
        iu = np.triu_indices(self.n, k=1)
        return self.matrix[iu]


def compute_rdm(x, stimulus_ids) -> RDM:
    """1 - Pearson between every pair of rows.

    Constant rows have no defined correlation; their dissimilarity to every
    other stimulus is set to 1 (chance level) and the event is logged.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ParameterError("need a matrix with >= 2 rows and >= 2 columns")
    if len(stimulus_ids) != x.shape[0]:
        raise ParameterError("stimulus_ids length != row count")
    xc = x - x.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.sum(xc * xc, axis=1))
    constant = norms == 0.0
    if np.any(constant):
        logger.warning("compute_rdm: %d constant rows set to dissimilarity 1",
                       int(constant.sum()))
    safe = np.where(constant, 1.0, norms)
    u = xc / safe[:, None]
    corr = np.clip(u @ u.T, -1.0, 1.0)
    d = 1.0 - corr
    d[constant, :] = 1.0
    d[:, constant] = 1.0
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return RDM(matrix=d, stimulus_ids=tuple(stimulus_ids))


def rsa_score(rdm_a: RDM, rdm_b: RDM, rank: str = "spearman") -> float:
    """Rank correlation of the strict upper triangles of two RDMs."""
    if rdm_a.stimulus_ids != rdm_b.stimulus_ids:
        raise AlignmentError("RDMs must share stimulus ids in the same order")
    if rank not in ("spearman", "kendall"):
        raise ParameterError(f"rank must be spearman or kendall, got {rank!r}")
    va, vb = rdm_a.upper_triangle(), rdm_b.upper_triangle()
    return spearman(va, vb) if rank == "spearman" else kendall_tau(va, vb)
