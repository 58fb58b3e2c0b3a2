"""Missing-data weighted distance covariance and its normalized statistic.

For a variable observed with presence indicators ``d`` and presence
probability ``P``, the weighted pairwise distances are

    a'_ij = |x_i - x_j| * d_i * d_j / P**2

which are double centered to ``A'``. With ``B'`` built the same way from the
response,

    dcov_sq = mean(A' * B')
    t2      = mean(a') * mean(b')
    T       = n * dcov_sq / t2

``T`` has expectation close to one under independence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .data import MissingnessMask

CLAMP_TOL = 1e-12


class DegenerateInputError(ValueError):
    """A variable has zero spread, so the normalizer vanishes."""


def _as_samples(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("samples must be a vector or an (n, d) matrix")
    return x


def pairwise_distances(x) -> np.ndarray:
    """Euclidean distance matrix of the rows of ``x``."""
    x = _as_samples(x)
    if x.shape[1] == 1:
        v = x[:, 0]
        return np.abs(v[:, None] - v[None, :])
    return cdist(x, x)


def double_center(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    row = a.mean(axis=1, keepdims=True)
    col = a.mean(axis=0, keepdims=True)
    return a - row - col + a.mean()


@dataclass(frozen=True)
class CenteredDistanceMatrix:
    weighted: np.ndarray  # a'
    centered: np.ndarray  # A'
    row_means: np.ndarray
    col_means: np.ndarray
    grand_mean: float

    @property
    def n(self) -> int:
        return self.weighted.shape[0]


@dataclass(frozen=True)
class DcovResult:
    dcov_sq: float
    t2: float
    statistic: float
    n: int
    clamped: bool = False


def _resolve_mask(x, mask):
    if mask is None:
        return MissingnessMask.from_values(x)
    if mask.n != x.shape[0]:
        raise ValueError(f"mask covers {mask.n} subjects, samples have {x.shape[0]}")
    return mask


def weighted_centered_distances(samples, mask: MissingnessMask | None = None
                                ) -> CenteredDistanceMatrix:
    """Weighted distances ``a'`` and their double-centered form ``A'``.

    Rows marked absent by ``mask`` get zero weight; a row is also treated as
    absent when any coordinate is non-finite. When ``mask`` is omitted it is
    derived from the non-finite entries of ``samples``.
    """
    x = _as_samples(samples)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two samples")
    mask = _resolve_mask(x, mask)
    if mask.presence_prob <= 0:
        raise ValueError("presence probability must be positive")
    present = mask.present & np.isfinite(x).all(axis=1)
    if not present.all():
        x = np.where(present[:, None], x, 0.0)
    a = pairwise_distances(x)
    if not present.all():
        a = a * np.outer(present, present)
    if mask.presence_prob != 1.0:
        a = a / (mask.presence_prob * mask.presence_prob)
    # a' is exactly symmetric, so reusing the row means (and adding the
    # pair before subtracting) keeps A' exactly symmetric as well
    row = a.mean(axis=1)
    grand = a.mean()
    centered = a - (row[:, None] + row[None, :]) + grand
    return CenteredDistanceMatrix(a, centered, row, row.copy(), float(grand))


def _finish(cross_sum, mean_a, mean_b, n) -> DcovResult:
    t2 = mean_a * mean_b
    if not t2 > 0:
        raise DegenerateInputError("a variable is constant over its observed subjects")
    dcov_sq = cross_sum / (n * n)
    clamped = False
    if dcov_sq < 0:
        # tiny negatives come from rounding; larger ones only arise with
        # missing-data weights, which break conditional negative definiteness
        clamped = dcov_sq < -CLAMP_TOL * t2
        dcov_sq = 0.0
    return DcovResult(float(dcov_sq), float(t2), float(n * dcov_sq / t2), n, clamped)


def dcov_from_centered(cx: CenteredDistanceMatrix, cy: CenteredDistanceMatrix) -> DcovResult:
    if cx.n != cy.n:
        raise ValueError(f"sample sizes differ: {cx.n} vs {cy.n}")
    cross = float(np.sum(cx.centered * cy.centered))
    return _finish(cross, cx.grand_mean, cy.grand_mean, cx.n)


def dcov_statistic(x, y, mask_x: MissingnessMask | None = None,
                   mask_y: MissingnessMask | None = None) -> DcovResult:
    """Weighted distance covariance of ``x`` (n, p) and ``y`` (n, q).

    Examples
    --------
    >>> r = dcov_statistic([0., 1., 2.], [0., 1., 2.])
    >>> round(r.statistic, 6)
    1.875
    """
    x = _as_samples(x)
    y = _as_samples(y)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"sample sizes differ: {x.shape[0]} vs {y.shape[0]}")
    return dcov_from_centered(weighted_centered_distances(x, mask_x),
                              weighted_centered_distances(y, mask_y))


def permutation_statistics(x, y, mask_x=None, mask_y=None, n_permutations=999,
                           seed=None):
    """Observed statistic plus ``n_permutations`` statistics with ``y`` rows shuffled.

    Distances are computed once; each permutation only re-indexes ``B'``.
    The normalizer is permutation invariant.
    """
    if n_permutations < 1:
        raise ValueError("need at least one permutation")
    cx = weighted_centered_distances(x, mask_x)
    cy = weighted_centered_distances(y, mask_y)
    observed = dcov_from_centered(cx, cy)
    rng = np.random.default_rng(seed)
    n = cx.n
    A = cx.centered
    B = cy.centered
    scale = n / (n * n * observed.t2)
    perm_stats = np.empty(n_permutations)
    for b in range(n_permutations):
        idx = rng.permutation(n)
        perm_stats[b] = max(float(np.sum(A * B[np.ix_(idx, idx)])), 0.0) * scale
    return observed, perm_stats


def permutation_pvalue(x, y, mask_x=None, mask_y=None, n_permutations=999, seed=None) -> float:
    """``(1 + #{T_perm >= T_obs}) / (B + 1)``."""
    observed, perm = permutation_statistics(x, y, mask_x, mask_y, n_permutations, seed)
    exceed = np.count_nonzero(perm >= observed.statistic * (1 - 1e-12))
    return (1 + exceed) / (n_permutations + 1)


# --------------------------------------------------------------------------
# genome-wide scan against one fixed response

_LEVELS = np.array([0.0, 1.0, 2.0])
_LEVEL_DIST = np.abs(_LEVELS[:, None] - _LEVELS[None, :])


class ResponseDistances:
    """Centered response distances, built once and shared by every SNP test.

    ``scan`` evaluates many predictor columns against the same response. For
    genotype columns taking values in {0, 1, 2} (plus missing), the cross
    sum ``sum_ij |g_i - g_j| B'_ij`` collapses to a 3 x 3 quadratic form in
    level indicators, which turns the O(n^2) work per SNP into a matrix
    product against ``B'``.
    """

    def __init__(self, y, mask: MissingnessMask | None = None):
        self.cy = weighted_centered_distances(y, mask)
        self.n = self.cy.n

    def statistic(self, x, mask: MissingnessMask | None = None) -> DcovResult:
        x = _as_samples(x)
        if x.shape[0] != self.n:
            raise ValueError(f"sample sizes differ: {x.shape[0]} vs {self.n}")
        cx = weighted_centered_distances(x, mask)
        cross = float(np.sum(cx.weighted * self.cy.centered))
        return _finish(cross, cx.grand_mean, self.cy.grand_mean, self.n)

    def scan(self, g) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Scan the columns of ``g`` (n, m), NaN marking missing calls.

        Returns ``(dcov_sq, t2, statistic, status)`` arrays where status is 0
        for a valid test, 1 for a degenerate (constant) column and 2 when a
        negative estimate was clamped. Degenerate entries are NaN.
        """
        g = np.asarray(g, dtype=float)
        if g.ndim != 2 or g.shape[0] != self.n:
            raise ValueError(f"expected an ({self.n}, m) genotype block")
        m = g.shape[1]
        n = self.n
        finite = np.isfinite(g)
        present_frac = finite.mean(axis=0)
        if np.isin(g[finite], _LEVELS).all():
            ind = np.stack([(g == lv) for lv in _LEVELS], axis=2).astype(float)  # (n, m, 3)
            prod = (self.cy.centered @ ind.reshape(n, 3 * m)).reshape(n, m, 3)
            gram = np.einsum("imk,iml->mkl", ind, prod)
            cross_raw = np.einsum("mkl,kl->m", gram, _LEVEL_DIST)
            counts = ind.sum(axis=0)  # (m, 3)
            sum_a_raw = np.einsum("mk,ml,kl->m", counts, counts, _LEVEL_DIST)
        else:
            cross_raw = np.empty(m)
            sum_a_raw = np.empty(m)
            for j in range(m):
                v = np.where(finite[:, j], g[:, j], 0.0)
                a = np.abs(v[:, None] - v[None, :])
                a *= np.outer(finite[:, j], finite[:, j])
                cross_raw[j] = np.sum(a * self.cy.centered)
                sum_a_raw[j] = a.sum()
        with np.errstate(divide="ignore", invalid="ignore"):
            w = 1.0 / (present_frac * present_frac)
            dcov_sq = cross_raw * w / (n * n)
            t2 = sum_a_raw * w / (n * n) * self.cy.grand_mean
        status = np.zeros(m, dtype=np.int8)
        bad = ~(t2 > 0) | (present_frac == 0)
        status[bad] = 1
        neg = ~bad & (dcov_sq < 0)
        status[neg & (dcov_sq < -CLAMP_TOL * np.where(bad, 1.0, t2))] = 2
        dcov_sq = np.where(neg, 0.0, dcov_sq)
        with np.errstate(divide="ignore", invalid="ignore"):
            stat = n * dcov_sq / t2
        dcov_sq[bad] = np.nan
        t2 = np.where(bad, np.nan, t2)
        stat[bad] = np.nan
        return dcov_sq, t2, stat, status


def batch_statistics(xs, ys) -> np.ndarray:
    """Statistic ``T`` for each of many independent (x, y) sample pairs.

    ``xs`` has shape (k, n, p) and ``ys`` shape (k, n, q); data are complete.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim == 2:
        xs = xs[:, :, None]
    if ys.ndim == 2:
        ys = ys[:, :, None]
    out = np.empty(xs.shape[0])
    for k in range(xs.shape[0]):
        a = pairwise_distances(xs[k])
        b = pairwise_distances(ys[k])
        n = a.shape[0]
        # sum(A' * B') == sum(a' * B') because B' is doubly centered
        cross = np.sum(a * double_center(b))
        t2 = a.mean() * b.mean()
        if not t2 > 0:
            raise DegenerateInputError(f"pair {k} has a constant variable")
        out[k] = max(cross / (n * n), 0.0) * n / t2
    return out
