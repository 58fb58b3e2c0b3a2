"""Moment-matched Gamma null for the dCov statistic, and the probit map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

PROBIT_EPS = 1e-15


@dataclass(frozen=True)
class GammaNull:
    shape: float
    scale: float
    source_moments: tuple = (np.nan, np.nan)

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError(f"shape and scale must be positive, got {self.shape}, {self.scale}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def variance(self) -> float:
        return self.shape * self.scale * self.scale

    def sf(self, t):
        return gamma_pvalue(self, t)


def fit_gamma_null(stats) -> GammaNull:
    """shape = mean**2 / var, scale = var / mean from the sample moments."""
    stats = np.asarray(stats, dtype=float).ravel()
    if stats.size < 2:
        raise ValueError("need at least two statistics to fit a Gamma null")
    if not np.isfinite(stats).all():
        raise ValueError("statistics must be finite")
    mean = stats.mean()
    var = stats.var(ddof=1)
    if not mean > 0:
        raise ValueError(f"mean of statistics must be positive, got {mean}")
    if not var > 0:
        raise ValueError("statistics have zero variance")
    return GammaNull(mean * mean / var, var / mean, (float(mean), float(var)))


def gamma_pvalue(null: GammaNull, t):
    """Upper tail P(T >= t) under ``null``; scalar in, scalar out."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(np.isnan(t_arr)):
        raise ValueError("statistic must be non-negative")
    p = special.gammaincc(null.shape, t_arr / null.scale)
    return float(p) if np.ndim(p) == 0 else p


def gamma_pvalues_grouped(stats, groups=None):
    """p-values with one Gamma null per group (a single global fit when ``groups`` is None).

    Returns the p-values and a dict mapping group label to its fitted null.
    """
    stats = np.asarray(stats, dtype=float)
    if groups is None:
        null = fit_gamma_null(stats)
        return gamma_pvalue(null, stats), {None: null}
    groups = np.asarray(groups)
    if groups.shape != stats.shape:
        raise ValueError("groups must align with statistics")
    p = np.empty_like(stats)
    nulls = {}
    for label in sorted(set(groups.tolist()), key=str):
        sel = groups == label
        nulls[label] = fit_gamma_null(stats[sel])
        p[sel] = gamma_pvalue(nulls[label], stats[sel])
    return p, nulls


def probit_transform(p, eps=PROBIT_EPS):
    """Standard normal quantile of ``p`` after clamping into ``[eps, 1 - eps]``.

    Returns ``(z, n_clamped)``.
    """
    p_arr = np.asarray(p, dtype=float)
    if np.isnan(p_arr).any():
        raise ValueError("p-values must not be NaN")
    clipped = np.clip(p_arr, eps, 1.0 - eps)
    n_clamped = int(np.count_nonzero(clipped != p_arr))
    z = special.ndtri(clipped)
    if np.ndim(z) == 0:
        z = float(z)
    return z, n_clamped
