"""Two-component Gaussian and Gamma mixtures fitted by EM, and local fdr.

Both fits are deterministic: components are seeded by a quantile split of
the sorted data (the lowest 10% for z-scores, where alternatives sit in
the left tail; the highest 10% for raw statistics, where they sit in the
right tail) and refined by EM until the relative log-likelihood change
drops below ``tol``. The same is repeated from a few other split fractions
and the run with the highest final log-likelihood is kept (ties go to the
earlier fraction), since a single split can stall in a poor local maximum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

GAUSSIAN = "gaussian"
GAMMA = "gamma"

_LOG_2PI = np.log(2.0 * np.pi)
_GAMMA_ZERO_SHIFT = 1e-12


class MixtureFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class EMConfig:
    tol: float = 1e-8
    max_iter: int = 1000
    weight_floor: float = 1e-4
    sd_floor: float = 1e-6
    newton_max_iter: int = 100
    newton_tol: float = 1e-12
    init_fractions: tuple = (0.10, 0.05, 0.02, 0.20, 0.50)
    min_points: int = 10


@dataclass(frozen=True)
class MixtureModel:
    """Null + alternative two-groups model.

    ``null_params``/``alt_params`` are ``(mean, sd)`` for the Gaussian family
    and ``(shape, scale)`` for the Gamma family.
    """

    family: str
    pi0: float
    null_params: tuple
    alt_params: tuple
    loglik: float = np.nan
    iterations: int = 0
    converged: bool = False
    loglik_trace: tuple = field(default=(), repr=False)

    @property
    def pi1(self) -> float:
        return 1.0 - self.pi0

    def _check(self, v):
        v = np.asarray(v, dtype=float)
        if np.isnan(v).any():
            raise ValueError("local fdr undefined at NaN")
        if self.family == GAMMA:
            if (v < 0).any():
                raise ValueError("Gamma mixture support is [0, inf)")
            v = np.maximum(v, _GAMMA_ZERO_SHIFT)
        return v

    def log_densities(self, v):
        """Log component densities ``(log f0(v), log f1(v))``."""
        v = self._check(v)
        if self.family == GAUSSIAN:
            return _norm_logpdf(v, *self.null_params), _norm_logpdf(v, *self.alt_params)
        logv = np.log(v)
        return (_gamma_logpdf(v, logv, *self.null_params),
                _gamma_logpdf(v, logv, *self.alt_params))

    def null_mean(self) -> float:
        return _component_mean(self.family, self.null_params)

    def alt_mean(self) -> float:
        return _component_mean(self.family, self.alt_params)

    def to_text(self, prefix="") -> str:
        """Plain ``key=value`` lines."""
        names = ("mean", "sd") if self.family == GAUSSIAN else ("shape", "scale")
        items = [("family", self.family), ("pi0", self.pi0)]
        items += [(f"null_{k}", v) for k, v in zip(names, self.null_params)]
        items += [(f"alt_{k}", v) for k, v in zip(names, self.alt_params)]
        items += [("loglik", self.loglik), ("iterations", self.iterations),
                  ("converged", self.converged)]
        return "".join(f"{prefix}{k}={_fmt(v)}\n" for k, v in items)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _component_mean(family, params):
    return params[0] if family == GAUSSIAN else params[0] * params[1]


def _norm_logpdf(x, mean, sd):
    u = (x - mean) / sd
    return -0.5 * u * u - np.log(sd) - 0.5 * _LOG_2PI


def _gamma_logpdf(x, logx, shape, scale):
    return ((shape - 1.0) * logx - x / scale - special.gammaln(shape)
            - shape * np.log(scale))


def local_fdr(model: MixtureModel, v):
    """pi0 f0(v) / (pi0 f0(v) + pi1 f1(v)), evaluated in log space."""
    l0, l1 = model.log_densities(v)
    with np.errstate(divide="ignore"):
        a = np.log(model.pi0) + l0
        b = np.log(model.pi1) + l1
    out = np.exp(a - np.logaddexp(a, b))
    # both terms -inf (far outside either component): call it null
    out = np.where(np.isnan(out), 1.0, out)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------

def _validate(x, cfg, nonneg=False):
    x = np.asarray(x, dtype=float).ravel()
    if x.size < cfg.min_points:
        raise ValueError(f"need at least {cfg.min_points} points, got {x.size}")
    if not np.isfinite(x).all():
        raise ValueError("values must be finite")
    if nonneg and (x < 0).any():
        raise ValueError("Gamma mixture requires non-negative values")
    if np.ptp(x) == 0:
        raise ValueError("all values are identical")
    return x


def _split(x, frac, alt_low):
    order = np.argsort(x, kind="stable")
    k = max(2, int(round(frac * x.size)))
    k = min(k, x.size - 2)
    if alt_low:
        return order[k:], order[:k]
    return order[:-k], order[-k:]


def _em_loop(x, logpdfs, params, pi0, m_step, cfg):
    """Shared E/M iteration; ``params`` is [null, alt]."""
    trace = []
    prev = None
    converged = False
    it = 0
    while True:
        l0, l1 = logpdfs(params[0]), logpdfs(params[1])
        a = np.log(pi0) + l0
        b = np.log1p(-pi0) + l1
        ll_i = np.logaddexp(a, b)
        ll = float(ll_i.sum())
        trace.append(ll)
        if prev is not None and abs(ll - prev) < cfg.tol * abs(prev):
            converged = True
            break
        if it >= cfg.max_iter:
            break
        prev = ll
        r0 = np.exp(a - ll_i)
        r1 = 1.0 - r0
        pi0 = float(np.clip(r0.mean(), cfg.weight_floor, 1.0 - cfg.weight_floor))
        params = [m_step(r0, 0, params[0]), m_step(r1, 1, params[1])]
        it += 1
    return params, pi0, ll, it, converged, tuple(trace)


def _multi_start(x, alt_low, mom, logpdfs, m_step, cfg):
    best = None
    for frac in cfg.init_fractions:
        null_idx, alt_idx = _split(x, frac, alt_low)
        params = [mom(null_idx), mom(alt_idx)]
        pi0 = float(np.clip(null_idx.size / x.size, cfg.weight_floor, 1 - cfg.weight_floor))
        fit = _em_loop(x, logpdfs, params, pi0, m_step, cfg)
        if best is None or fit[2] > best[2]:
            best = fit
    return best


def fit_gaussian_mixture(z, config: EMConfig | None = None) -> MixtureModel:
    """Two-component Gaussian mixture on z-scores.

    The null component is the one whose mean is closer to zero (ties go to
    the heavier component).
    """
    cfg = config or EMConfig()
    x = _validate(z, cfg)

    def mom(sel):
        return (float(x[sel].mean()), max(float(x[sel].std()), cfg.sd_floor))

    def logpdfs(p):
        return _norm_logpdf(x, *p)

    def m_step(r, _k, _old):
        w = r.sum()
        if not w > 0:
            raise MixtureFitError("a component lost all responsibility")
        mean = float(np.dot(r, x) / w)
        var = float(np.dot(r, (x - mean) ** 2) / w)
        return (mean, max(np.sqrt(var), cfg.sd_floor))

    params, pi0, ll, it, conv, trace = _multi_start(x, True, mom, logpdfs, m_step, cfg)
    (n_p, a_p), (w0, w1) = params, (pi0, 1.0 - pi0)
    d0, d1 = abs(n_p[0]), abs(a_p[0])
    if d1 < d0 or (d1 == d0 and w1 > w0):
        n_p, a_p, pi0 = a_p, n_p, w1
    return MixtureModel(GAUSSIAN, pi0, tuple(n_p), tuple(a_p), ll, it, conv, trace)


def solve_gamma_shape(s, start=None, max_iter=100, tol=1e-12, component=None):
    """Solve ``log(a) - digamma(a) = s`` for the Gamma shape ``a`` (s > 0).

    Newton iteration from the closed-form approximation of Minka (2002).
    """
    if not s > 0:
        raise MixtureFitError(
            f"component {component}: log-moment gap {s} must be positive")
    a = start if start else (3.0 - s + np.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    for _ in range(max_iter):
        f = np.log(a) - special.digamma(a) - s
        if abs(f) < tol:
            return float(a)
        fp = 1.0 / a - special.polygamma(1, a)
        if not (np.isfinite(f) and fp != 0 and np.isfinite(fp)):
            break
        new = a - f / fp
        a = new if new > 0 else a / 2.0
    else:
        f = np.log(a) - special.digamma(a) - s
        if abs(f) < max(tol, 1e-10):
            return float(a)
    raise MixtureFitError(
        f"component {component}: Gamma shape Newton iteration did not converge")


def fit_gamma_mixture(t, config: EMConfig | None = None) -> MixtureModel:
    """Two-component Gamma mixture on non-negative statistics.

    The M-step solves each component's weighted shape equation by Newton's
    method; the scale follows in closed form. The null component is the one
    with the smaller mean.
    """
    cfg = config or EMConfig()
    x = _validate(t, cfg, nonneg=True)
    x = np.maximum(x, _GAMMA_ZERO_SHIFT)
    logx = np.log(x)

    def mom(sel):
        m = float(x[sel].mean())
        v = float(x[sel].var())
        if not v > 0:
            v = max(m * m * 1e-6, 1e-300)
        return (m * m / v, v / m)

    def logpdfs(p):
        return _gamma_logpdf(x, logx, *p)

    def m_step(r, k, _old):
        w = r.sum()
        if not w > 0:
            raise MixtureFitError(f"component {k} lost all responsibility")
        mean = float(np.dot(r, x) / w)
        mlog = float(np.dot(r, logx) / w)
        s = np.log(mean) - mlog
        shape = solve_gamma_shape(s, max_iter=cfg.newton_max_iter,
                                  tol=cfg.newton_tol, component=k)
        return (shape, mean / shape)

    params, pi0, ll, it, conv, trace = _multi_start(x, False, mom, logpdfs, m_step, cfg)
    n_p, a_p = params
    if n_p[0] * n_p[1] > a_p[0] * a_p[1]:
        n_p, a_p, pi0 = a_p, n_p, 1.0 - pi0
    return MixtureModel(GAMMA, pi0, tuple(n_p), tuple(a_p), ll, it, conv, trace)


def fit_mixture(values, family, config=None) -> MixtureModel:
    if family == GAUSSIAN:
        return fit_gaussian_mixture(values, config)
    if family == GAMMA:
        return fit_gamma_mixture(values, config)
    raise ValueError(f"unknown mixture family {family!r}")
