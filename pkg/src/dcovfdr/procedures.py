"""Multiple-testing procedures that turn per-test statistics into reject sets.

Algorithm 1
    Gamma-null p-values, Storey q-values, reject ``q <= alpha``.
Algorithm 2
    Gamma-null p-values, probit z-scores, two-component Gaussian mixture,
    reject the left tail in ``z`` whose average local fdr stays under alpha.
Algorithm 3
    Two-component Gamma mixture fitted to the raw statistics, reject the
    right tail in ``T`` whose average local fdr stays under alpha.
Algorithm 4
    Per-region least-squares slope tests, one selected p-value per SNP,
    then the probit / Gaussian-mixture path of Algorithm 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, optimize, stats as sps

from .mixtures import EMConfig, MixtureModel, fit_gamma_mixture, fit_gaussian_mixture, local_fdr
from .nulls import GammaNull, gamma_pvalues_grouped, probit_transform

DEFAULT_LAMBDAS = tuple(np.round(np.arange(0.05, 0.951, 0.05), 2))
ALGORITHMS = (1, 2, 3, 4)


def _alphas(alphas):
    if np.ndim(alphas) == 0:
        alphas = [alphas]
    out = tuple(float(a) for a in alphas)
    for a in out:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {a}")
    return out


@dataclass
class RejectionReport:
    """Per-test values and per-alpha decisions of one procedure.

    Array fields hold NaN where a quantity does not apply to the algorithm
    (or the test was excluded as untestable).
    """

    algorithm: int
    test_ids: tuple
    statistic: np.ndarray
    pvalue: np.ndarray
    qvalue: np.ndarray
    z: np.ndarray
    locfdr_z: np.ndarray
    locfdr_t: np.ndarray
    alphas: tuple
    reject: dict  # alpha -> bool array
    threshold: dict  # alpha -> cutoff on the algorithm's scale (nan: none)
    pfdr: dict  # alpha -> estimated pFDR of the reject set (nan: empty)
    pi0: float = np.nan
    gamma_null: GammaNull | None = None
    model: MixtureModel | None = None
    counters: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.test_ids)

    def n_rejected(self, alpha) -> int:
        return int(np.count_nonzero(self.reject[alpha]))

    def rejected_ids(self, alpha) -> list:
        return [t for t, r in zip(self.test_ids, self.reject[alpha]) if r]


def _blank(m):
    return np.full(m, np.nan)


def _report(algorithm, m, test_ids, alphas, **arrays):
    if test_ids is None:
        test_ids = tuple(range(m))
    test_ids = tuple(test_ids)
    if len(test_ids) != m:
        raise ValueError("test_ids must align with the statistics")
    cols = {k: _blank(m) for k in ("statistic", "pvalue", "qvalue", "z", "locfdr_z", "locfdr_t")}
    cols.update({k: np.asarray(v, dtype=float) for k, v in arrays.items()})
    return RejectionReport(algorithm, test_ids, alphas=alphas, reject={}, threshold={},
                           pfdr={}, **cols)


def empty_report(algorithm, alphas) -> RejectionReport:
    """A report over zero tests."""
    alphas = _alphas(alphas)
    rep = _report(algorithm, 0, (), alphas)
    for a in alphas:
        rep.reject[a] = np.zeros(0, dtype=bool)
        rep.threshold[a] = np.nan
        rep.pfdr[a] = np.nan
    return rep


# --------------------------------------------------------------------------
# pi0 and q-values

def _smoothing_spline_fit(x, y, df):
    """Fitted values of a natural cubic smoothing spline with ``df`` degrees of freedom.

    Uses the Reinsch form ``S = (I + lam K)^-1`` with knots at every ``x``
    and picks ``lam`` so that ``trace(S) == df``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 3 or df >= n:
        return y.copy()
    h = np.diff(x)
    Q = np.zeros((n, n - 2))
    R = np.zeros((n - 2, n - 2))
    for j in range(1, n - 1):
        Q[j - 1, j - 1] = 1.0 / h[j - 1]
        Q[j, j - 1] = -1.0 / h[j - 1] - 1.0 / h[j]
        Q[j + 1, j - 1] = 1.0 / h[j]
        R[j - 1, j - 1] = (h[j - 1] + h[j]) / 3.0
        if j < n - 2:
            R[j - 1, j] = R[j, j - 1] = h[j] / 6.0
    K = Q @ linalg.solve(R, Q.T, assume_a="pos")
    K = 0.5 * (K + K.T)
    mu, U = linalg.eigh(K)
    mu = np.clip(mu, 0.0, None)
    if df <= 2:
        lam = np.inf
    else:
        def gap(loglam):
            return np.sum(1.0 / (1.0 + np.exp(loglam) * mu)) - df
        loglam = optimize.brentq(gap, -60.0, 60.0, xtol=1e-12)
        lam = np.exp(loglam)
    with np.errstate(over="ignore"):
        shrink = 1.0 / (1.0 + lam * mu)
    return U @ (shrink * (U.T @ y))


def pi0_curve(pvalues, lambdas=DEFAULT_LAMBDAS):
    p = np.asarray(pvalues, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    m = p.size
    return np.array([np.count_nonzero(p > lam) / (m * (1.0 - lam)) for lam in lambdas])


def estimate_pi0(pvalues, lambdas=DEFAULT_LAMBDAS, df=3, nonpositive="one") -> float:
    """Storey's pi0 with the cubic-spline smoother evaluated at the largest lambda.

    Positive estimates are clamped to ``[1/m, 1]``. A smoothed value at or
    below zero means the estimator broke down (typically p-values that are
    not uniform under the null); ``nonpositive="one"`` then falls back to
    pi0 = 1 as the reference q-value software does, while
    ``nonpositive="floor"`` returns ``1/m``.
    """
    if nonpositive not in ("one", "floor"):
        raise ValueError("nonpositive must be 'one' or 'floor'")
    p = np.asarray(pvalues, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("no p-values")
    if p.size < 10:
        raise ValueError("need at least 10 p-values to estimate pi0")
    if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
        raise ValueError("p-values must lie in [0, 1]")
    lambdas = np.sort(np.asarray(lambdas, dtype=float))
    curve = pi0_curve(p, lambdas)
    est = _smoothing_spline_fit(lambdas, curve, df)[-1]
    if est <= 0 and nonpositive == "one":
        return 1.0
    return float(np.clip(est, 1.0 / p.size, 1.0))


def qvalues(pvalues, pi0=1.0):
    """Step-up q-values ``min_{j >= i} pi0 m p_(j) / j``, capped at 1."""
    p = np.asarray(pvalues, dtype=float)
    m = p.size
    if m == 0:
        return p.copy()
    order = np.argsort(p, kind="stable")
    ranked = pi0 * m * p[order] / np.arange(1, m + 1)
    q_sorted = np.minimum.accumulate(ranked[::-1])[::-1]
    q = np.empty(m)
    q[order] = np.minimum(q_sorted, 1.0)
    return q


def qvalue_procedure(pvalues, alphas, pi0="smoother", test_ids=None,
                     lambdas=DEFAULT_LAMBDAS) -> RejectionReport:
    """Reject every test whose q-value is at most alpha.

    ``pi0`` is a number, ``"smoother"`` (Storey's estimate) or ``"bh"``
    (pi0 = 1, i.e. Benjamini-Hochberg).
    """
    alphas = _alphas(alphas)
    p = np.asarray(pvalues, dtype=float)
    if pi0 == "smoother":
        pi0 = estimate_pi0(p, lambdas)
    elif pi0 == "bh":
        pi0 = 1.0
    pi0 = float(pi0)
    q = qvalues(p, pi0)
    rep = _report(1, p.size, test_ids, alphas, pvalue=p, qvalue=q)
    rep.pi0 = pi0
    for a in alphas:
        rej = q <= a
        rep.reject[a] = rej
        if rej.any():
            rep.threshold[a] = float(q[rej].max())
            rep.pfdr[a] = float(q[rej].max())
        else:
            rep.threshold[a] = np.nan
            rep.pfdr[a] = np.nan
    return rep


# --------------------------------------------------------------------------
# threshold search on local fdr

def pfdr_threshold(values, local_fdrs, alpha, tail="right"):
    """Most inclusive tail region whose mean local fdr is at most ``alpha``.

    Candidate cutoffs are the observed values, scanned from the most to the
    least extreme; tied values enter together.

    Returns
    -------
    threshold : float
        NaN when nothing qualifies.
    reject : ndarray of int
        Indices of rejected tests, in input order.
    estimate : float
        Mean local fdr over the reject set (NaN when empty).
    """
    v = np.asarray(values, dtype=float)
    f = np.asarray(local_fdrs, dtype=float)
    if v.shape != f.shape:
        raise ValueError(f"values and local fdrs differ in length: {v.shape} vs {f.shape}")
    if tail not in ("left", "right"):
        raise ValueError("tail must be 'left' or 'right'")
    empty = (np.nan, np.array([], dtype=int), np.nan)
    if v.size == 0:
        return empty
    order = np.argsort(-v if tail == "right" else v, kind="stable")
    vs = v[order]
    running = np.cumsum(f[order]) / np.arange(1, v.size + 1)
    group_end = np.append(vs[1:] != vs[:-1], True)
    ok = np.flatnonzero(group_end & (running <= alpha))
    if ok.size == 0:
        return empty
    k = ok[-1]
    cut = float(vs[k])
    reject = np.sort(order[:k + 1])
    return cut, reject, float(f[reject].mean())


def _apply_thresholds(rep, values, fdrs, tail):
    valid = np.isfinite(values)
    idx = np.flatnonzero(valid)
    for a in rep.alphas:
        cut, rej, est = pfdr_threshold(values[valid], fdrs[valid], a, tail)
        mask = np.zeros(rep.m, dtype=bool)
        mask[idx[rej]] = True
        rep.reject[a] = mask
        rep.threshold[a] = cut
        rep.pfdr[a] = est


def locfdr_z_procedure(pvalues, alphas, test_ids=None, config: EMConfig | None = None,
                       algorithm=2) -> RejectionReport:
    """Probit-transform p-values, fit a Gaussian mixture, threshold the left tail."""
    alphas = _alphas(alphas)
    p = np.asarray(pvalues, dtype=float)
    valid = np.isfinite(p)
    z = _blank(p.size)
    z[valid], n_clamped = probit_transform(p[valid])
    model = fit_gaussian_mixture(z[valid], config)
    fdr = _blank(p.size)
    fdr[valid] = local_fdr(model, z[valid])
    rep = _report(algorithm, p.size, test_ids, alphas, pvalue=p, z=z, locfdr_z=fdr)
    rep.model = model
    rep.pi0 = model.pi0
    rep.counters["probit_clamped"] = n_clamped
    _apply_thresholds(rep, z, fdr, "left")
    return rep


# --------------------------------------------------------------------------
# algorithms on dCov statistics

def _gamma_p(stats, groups):
    t = np.asarray(stats, dtype=float)
    valid = np.isfinite(t)
    p = _blank(t.size)
    g = None if groups is None else np.asarray(groups)[valid]
    p[valid], nulls = gamma_pvalues_grouped(t[valid], g)
    return t, p, nulls


def algorithm1_qvalue(stats, alphas, test_ids=None, pi0="smoother", groups=None,
                      pvalues=None) -> RejectionReport:
    """Gamma-null p-values followed by Storey q-values.

    ``pvalues`` overrides the Gamma null (e.g. permutation p-values).
    """
    t, p, nulls = _gamma_p(stats, groups) if pvalues is None else (
        np.asarray(stats, dtype=float), np.asarray(pvalues, dtype=float), {})
    valid = np.isfinite(p)
    sub = qvalue_procedure(p[valid], alphas, pi0=pi0)
    rep = _report(1, t.size, test_ids, sub.alphas, statistic=t, pvalue=p)
    rep.qvalue[valid] = sub.qvalue
    rep.pi0 = sub.pi0
    rep.gamma_null = nulls.get(None)
    for a in sub.alphas:
        rej = np.zeros(t.size, dtype=bool)
        rej[valid] = sub.reject[a]
        rep.reject[a] = rej
        rep.threshold[a] = sub.threshold[a]
        rep.pfdr[a] = sub.pfdr[a]
    return rep


def algorithm2_locfdr_z(stats, alphas, test_ids=None, config=None, groups=None,
                        pvalues=None) -> RejectionReport:
    t, p, nulls = _gamma_p(stats, groups) if pvalues is None else (
        np.asarray(stats, dtype=float), np.asarray(pvalues, dtype=float), {})
    rep = locfdr_z_procedure(p, alphas, test_ids, config)
    rep.statistic = t
    rep.gamma_null = nulls.get(None)
    return rep


def algorithm3_locfdr_t(stats, alphas, test_ids=None, config=None) -> RejectionReport:
    """Gamma mixture on the raw statistics; reject ``T >= t_cut``."""
    alphas = _alphas(alphas)
    t = np.asarray(stats, dtype=float)
    valid = np.isfinite(t)
    model = fit_gamma_mixture(t[valid], config)
    fdr = _blank(t.size)
    fdr[valid] = local_fdr(model, t[valid])
    rep = _report(3, t.size, test_ids, alphas, statistic=t, locfdr_t=fdr)
    rep.model = model
    rep.pi0 = model.pi0
    _apply_thresholds(rep, t, fdr, "right")
    return rep


# --------------------------------------------------------------------------
# algorithm 4: simple linear regression baseline

def slr_pvalues(genotypes, phenotypes):
    """Two-sided slope t-test p-values for every (SNP, region) pair.

    Parameters
    ----------
    genotypes : (n, m) array, NaN for missing calls
    phenotypes : (n, q) array, complete

    Returns
    -------
    (m, q) array of p-values; rows of untestable SNPs (constant on their
    observed subjects, or fewer than three observed) are NaN.
    """
    G = np.asarray(genotypes, dtype=float)
    Y = np.asarray(phenotypes, dtype=float)
    if G.ndim == 1:
        G = G[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if G.shape[0] != Y.shape[0]:
        raise ValueError("genotype and phenotype subject counts differ")
    m, q = G.shape[1], Y.shape[1]
    out = np.full((m, q), np.nan)
    finite = np.isfinite(G)
    complete = finite.all(axis=0)

    def block(X, Yb):
        n_obs = X.shape[0]
        Xc = X - X.mean(axis=0)
        Yc = Yb - Yb.mean(axis=0)
        sxx = np.einsum("ij,ij->j", Xc, Xc)
        syy = np.einsum("ij,ij->j", Yc, Yc)
        sxy = Xc.T @ Yc
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = sxy / sxx[:, None]
            rss = np.maximum(syy[None, :] - slope * sxy, 0.0)
            se = np.sqrt(rss / (n_obs - 2) / sxx[:, None])
            tstat = np.abs(slope) / se
        tstat = np.where((rss == 0) & (slope != 0), np.inf, tstat)
        p = 2.0 * sps.t.sf(tstat, n_obs - 2)
        p = np.where(np.isnan(tstat), 1.0, p)  # zero slope and zero residual
        bad = ~(sxx > 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0) ** 2)) | (n_obs < 3)
        p[bad] = np.nan
        return p

    if complete.any():
        out[complete] = block(G[:, complete], Y)
    for j in np.flatnonzero(~complete):
        obs = finite[:, j]
        if obs.sum() < 3:
            continue
        out[j] = block(G[obs, j:j + 1], Y[obs])[0]
    return out


def select_region_pvalues(pmat, mode="min_p"):
    pmat = np.asarray(pmat, dtype=float)
    if mode == "min_p":
        return pmat.min(axis=1)
    if mode == "max_p":
        return pmat.max(axis=1)
    raise ValueError(f"unknown region selection mode {mode!r}")


def algorithm4_slr_baseline(genotypes, phenotypes, alphas, test_ids=None, mode="min_p",
                            config=None) -> RejectionReport:
    """Per-SNP best-region regression p-value, then the Algorithm 2 local fdr path."""
    pmat = slr_pvalues(genotypes, phenotypes)
    p = select_region_pvalues(pmat, mode)
    excluded = int(np.count_nonzero(np.isnan(p)))
    rep = locfdr_z_procedure(p, alphas, test_ids, config, algorithm=4)
    rep.counters["untestable"] = excluded
    return rep


def run_algorithm(algorithm, stats, alphas, test_ids=None, pvalues=None, groups=None,
                  pi0="smoother", config=None) -> RejectionReport:
    """Dispatch algorithms 1-3 on a vector of dCov statistics."""
    if algorithm == 1:
        return algorithm1_qvalue(stats, alphas, test_ids, pi0=pi0, groups=groups,
                                 pvalues=pvalues)
    if algorithm == 2:
        return algorithm2_locfdr_z(stats, alphas, test_ids, config, groups=groups,
                                   pvalues=pvalues)
    if algorithm == 3:
        return algorithm3_locfdr_t(stats, alphas, test_ids, config)
    raise ValueError(f"algorithm must be 1, 2 or 3 here, got {algorithm!r}")
