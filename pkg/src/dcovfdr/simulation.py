"""Monte Carlo designs for size, FDR and power of the selection procedures.

Three designs, each with ``m`` = 1000 (predictor, response) pairs split
19:1 between null and alternative:

1. ``n = 50`` bivariate normal pairs, correlation 0.8 under the alternative
   and 0 under the null.
2. ``n = 100``, predictor ~ N(0, 1), 30-dimensional response. Alternative
   responses are 10 copies of the predictor, 10 copies of ``exp`` of it and
   10 copies of its square; null responses are MVN(0, I).
3. As design 2 with null covariance 1 on the diagonal and 0.5 elsewhere.

Every replicate draws from ``numpy.random.default_rng([seed, replicate])``,
so results do not depend on execution order or worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .dcov import batch_statistics
from .nulls import fit_gamma_null, gamma_pvalue
from .procedures import RejectionReport, run_algorithm

NOMINAL_SIZES = tuple(np.round(np.arange(0.1, 1.01, 0.1), 1))
STUDY_ALPHAS = (0.05, 0.10, 0.15, 0.20)


@dataclass(frozen=True)
class SimDesign:
    design_id: int
    n: int
    q: int
    m: int = 1000
    m_alt: int = 50
    rho: float = 0.8
    offdiag: float = 0.0

    def __post_init__(self):
        if self.design_id not in (1, 2, 3):
            raise ValueError(f"unknown design {self.design_id!r}")
        if not 0 <= self.m_alt <= self.m:
            raise ValueError("m_alt must lie in [0, m]")

    @classmethod
    def standard(cls, design_id: int, all_null=False, m=1000) -> "SimDesign":
        """Design 1, 2 or 3 at its reference sizes, 5% alternatives."""
        if design_id == 1:
            d = cls(1, n=50, q=1, m=m, m_alt=m // 20)
        elif design_id == 2:
            d = cls(2, n=100, q=30, m=m, m_alt=m // 20)
        elif design_id == 3:
            d = cls(3, n=100, q=30, m=m, m_alt=m // 20, offdiag=0.5)
        else:
            raise ValueError(f"unknown design {design_id!r}")
        if all_null:
            d = cls(d.design_id, d.n, d.q, d.m, 0, d.rho, d.offdiag)
        return d

    @property
    def m_null(self) -> int:
        return self.m - self.m_alt

    def null_covariance(self) -> np.ndarray:
        cov = np.full((self.q, self.q), self.offdiag)
        np.fill_diagonal(cov, 1.0)
        return cov


@dataclass
class SimStudy:
    design: SimDesign
    genotypes: np.ndarray  # (m, n, 1)
    phenotypes: np.ndarray  # (m, n, q)
    is_alt: np.ndarray  # (m,) bool

    @property
    def test_ids(self) -> tuple:
        return tuple(range(self.design.m))


def _rng(seed, replicate=None):
    if isinstance(seed, np.random.Generator):
        return seed
    key = [int(seed)] if replicate is None else [int(seed), int(replicate)]
    return np.random.default_rng(key)


def simulate_study(design: SimDesign, seed, replicate=None) -> SimStudy:
    """Draw one study of ``design.m`` tests; alternatives are placed at random."""
    rng = _rng(seed, replicate)
    m, n, q = design.m, design.n, design.q
    is_alt = np.zeros(m, dtype=bool)
    is_alt[:design.m_alt] = True
    is_alt = rng.permutation(is_alt)
    if design.design_id == 1:
        z = rng.standard_normal((m, n, 2))
        rho = np.where(is_alt, design.rho, 0.0)[:, None]
        g = z[:, :, 0]
        y = rho * g + np.sqrt(1.0 - rho * rho) * z[:, :, 1]
        return SimStudy(design, g[:, :, None], y[:, :, None], is_alt)
    g = rng.standard_normal((m, n))
    chol = np.linalg.cholesky(design.null_covariance())
    y = rng.standard_normal((m, n, q)) @ chol.T
    if design.m_alt:
        ga = g[is_alt][:, :, None]
        k = q // 3
        r = q - 2 * k
        y[is_alt] = np.concatenate(
            [np.repeat(ga, k, axis=2), np.repeat(np.exp(ga), k, axis=2),
             np.repeat(ga * ga, r, axis=2)], axis=2)
    return SimStudy(design, g[:, :, None], y, is_alt)


def study_statistics(study: SimStudy) -> np.ndarray:
    return batch_statistics(study.genotypes, study.phenotypes)


# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplicateOutcome:
    fdp: float
    power: float
    R: int
    V: int
    S: int


def _truth_array(report: RejectionReport, truth):
    if isinstance(truth, dict):
        if set(truth) != set(report.test_ids):
            raise ValueError("truth labels and report test ids differ")
        return np.array([bool(truth[t]) for t in report.test_ids])
    truth = np.asarray(truth, dtype=bool)
    if truth.shape != (report.m,):
        raise ValueError(f"truth has {truth.size} labels for {report.m} tests")
    return truth


def evaluate_replicate(report: RejectionReport, truth, alpha) -> ReplicateOutcome:
    """FDP = V / max(R, 1) and power = S / m1 for one alpha.

    ``truth`` is a boolean array aligned with the report (True = alternative)
    or a mapping from test id to that flag.
    """
    alt = _truth_array(report, truth)
    rej = report.reject[alpha]
    R = int(rej.sum())
    V = int((rej & ~alt).sum())
    S = R - V
    m1 = int(alt.sum())
    return ReplicateOutcome(V / max(R, 1), S / m1 if m1 else 0.0, R, V, S)


def evaluate_report(report: RejectionReport, truth) -> dict:
    return {a: evaluate_replicate(report, truth, a) for a in report.alphas}


# --------------------------------------------------------------------------
# size

def _size_run(args):
    design, seed, r, nominal = args
    t = study_statistics(simulate_study(design, seed, r))
    p = gamma_pvalue(fit_gamma_null(t), t)
    return [float(np.mean(p <= u)) for u in nominal]


def size_analysis(design: SimDesign, runs=50, seed=0, nominal=NOMINAL_SIZES, workers=1):
    """Average fraction of Gamma-null p-values at or below each nominal level.

    ``design`` is forced to all-null. Returns ``{nominal: size}`` and the
    per-run matrix (runs x levels).
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    if design.m_alt:
        design = SimDesign(design.design_id, design.n, design.q, design.m, 0,
                           design.rho, design.offdiag)
    nominal = tuple(float(u) for u in nominal)
    jobs = [(design, seed, r, nominal) for r in range(runs)]
    per_run = np.array(_map(_size_run, jobs, workers))
    return dict(zip(nominal, per_run.mean(axis=0))), per_run


# --------------------------------------------------------------------------
# FDR / power

@dataclass
class PowerCell:
    algorithm: int
    alpha: float
    mean_fdr: float
    sd_fdr: float
    mean_power: float
    sd_power: float
    replicates: int


@dataclass
class PowerStudy:
    design: SimDesign
    cells: dict  # (algorithm, alpha) -> PowerCell
    records: list = field(default_factory=list)  # one dict per (replicate, algorithm, alpha)

    def cell(self, algorithm, alpha) -> PowerCell:
        return self.cells[(algorithm, float(alpha))]

    def to_tsv(self) -> str:
        """Table layout: one row per alpha, FDR (sd) and power (sd) per algorithm."""
        algs = sorted({a for a, _ in self.cells})
        alphas = sorted({al for _, al in self.cells})
        head = ["design", "alpha"]
        for a in algs:
            head += [f"alg{a}_fdr", f"alg{a}_fdr_sd", f"alg{a}_power", f"alg{a}_power_sd"]
        lines = ["\t".join(head)]
        for al in alphas:
            row = [str(self.design.design_id), f"{al:.2f}"]
            for a in algs:
                c = self.cells[(a, al)]
                row += [f"{c.mean_fdr:.3f}", f"{c.sd_fdr:.3f}",
                        f"{c.mean_power:.3f}", f"{c.sd_power:.3f}"]
            lines.append("\t".join(row))
        return "\n".join(lines) + "\n"

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


def _power_run(args):
    design, seed, r, algorithms, alphas = args
    study = simulate_study(design, seed, r)
    t = study_statistics(study)
    out = []
    for alg in algorithms:
        rep = run_algorithm(alg, t, alphas, study.test_ids)
        for a, o in evaluate_report(rep, study.is_alt).items():
            out.append({"design": design.design_id, "replicate": r, "algorithm": alg,
                        "alpha": a, **asdict(o)})
    return out


def power_study(design: SimDesign, algorithms=(1, 2, 3), alphas=STUDY_ALPHAS,
                replicates=1000, seed=0, workers=1) -> PowerStudy:
    """Mean / sd of FDP and power per (algorithm, alpha) over replicates."""
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    alphas = tuple(float(a) for a in alphas)
    jobs = [(design, seed, r, tuple(algorithms), alphas) for r in range(replicates)]
    records = [rec for chunk in _map(_power_run, jobs, workers) for rec in chunk]
    cells = {}
    for alg in algorithms:
        for a in alphas:
            sel = [rec for rec in records if rec["algorithm"] == alg and rec["alpha"] == a]
            fdp = np.array([rec["fdp"] for rec in sel])
            pw = np.array([rec["power"] for rec in sel])
            sd = (lambda v: float(v.std(ddof=1)) if v.size > 1 else 0.0)
            cells[(alg, a)] = PowerCell(alg, a, float(fdp.mean()), sd(fdp),
                                        float(pw.mean()), sd(pw), len(sel))
    return PowerStudy(design, cells, records)


def size_table_tsv(sizes_by_design: dict) -> str:
    """``{design_id: {nominal: size}}`` as a Size x Simulation table."""
    ids = sorted(sizes_by_design)
    nominal = sorted(next(iter(sizes_by_design.values())))
    lines = ["\t".join(["size"] + [f"simulation_{d}" for d in ids])]
    for u in nominal:
        lines.append("\t".join([f"{u:.1f}"] + [f"{sizes_by_design[d][u]:.3f}" for d in ids]))
    return "\n".join(lines) + "\n"


def _map(fn, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


# --------------------------------------------------------------------------
# genome-scan style data: many discrete SNPs against one shared response

def simulate_scan_study(n=100, m=1000, q=30, m_alt=50, maf=0.3, noise=1.0,
                        missing_rate=0.0, seed=0):
    """Genotype / phenotype matrices for exercising the scan pipeline.

    A latent factor ``h`` ~ N(0, 1) drives the response: 10 columns of
    ``h``, 10 of ``exp(h)``, the rest ``h**2``, each plus N(0, noise**2).
    Alternative SNPs discretize ``h`` plus unit noise into {0, 1, 2} at the
    Hardy-Weinberg quantiles of ``maf``; null SNPs are Binomial(2, maf).
    ``missing_rate`` blanks genotype calls completely at random.

    Returns ``(GenotypeMatrix, PhenotypeMatrix, is_alt)``.
    """

    from .data import GenotypeMatrix, PhenotypeMatrix

    rng = _rng(seed)
    h = rng.standard_normal(n)
    k = q // 3
    cols = [np.repeat(h[:, None], k, 1), np.repeat(np.exp(h)[:, None], k, 1),
            np.repeat((h * h)[:, None], q - 2 * k, 1)]
    y = np.concatenate(cols, axis=1) + noise * rng.standard_normal((n, q))
    is_alt = np.zeros(m, dtype=bool)
    is_alt[:m_alt] = True
    is_alt = rng.permutation(is_alt)
    g = rng.binomial(2, maf, size=(n, m)).astype(float)
    if m_alt:
        # P(0) = (1-maf)^2, P(2) = maf^2
        cut = special.ndtri(np.array([(1 - maf) ** 2, 1 - maf * maf])) * np.sqrt(2.0)
        latent = h[:, None] + rng.standard_normal((n, m_alt))
        g[:, is_alt] = np.digitize(latent, cut).astype(float)
    if missing_rate:
        g[rng.random((n, m)) < missing_rate] = np.nan
    width = len(str(n - 1))
    subjects = [f"S{i:0{width}d}" for i in range(n)]
    snps = [f"rs{j + 1}" for j in range(m)]
    regions = [f"R{r + 1}" for r in range(q)]
    return GenotypeMatrix(subjects, snps, g), PhenotypeMatrix(subjects, regions, y), is_alt
