"""Genome-wide scan: every SNP against one shared multivariate phenotype.

The phenotype-side centered distance matrix is built once and handed to a
pool of workers, each of which scans fixed-size blocks of SNP columns.
Blocks do not depend on the worker count and results are gathered by SNP
index, so reports are byte-identical for any number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .data import (DEFAULT_MISSING, GenotypeMatrix, PhenotypeMatrix, align_subjects,
                   read_genotype_file, read_phenotype_file, read_region_map_file,
                   roi_aggregate)
from .dcov import ResponseDistances
from .mixtures import MixtureFitError
from .nulls import gamma_pvalues_grouped
from .procedures import (RejectionReport, algorithm4_slr_baseline, empty_report,
                         run_algorithm)

WORKERS_ENV = "DCOVFDR_WORKERS"
DEFAULT_ALPHAS = (0.05, 0.10, 0.15, 0.20)
MIN_PERMUTATIONS = 99
REPORT_FILE = "report.tsv"
PLOT_FILE = "plot_data.csv"
COUNTS_FILE = "rejection_counts.tsv"
MANIFEST_FILE = "manifest.json"

_COLUMNS = (("T", "statistic"), ("p", "pvalue"), ("q", "qvalue"), ("z", "z"),
            ("locfdr_z", "locfdr_z"), ("locfdr_t", "locfdr_t"))


class ConfigError(ValueError):
    """Invalid pipeline configuration (a usage error)."""


class PipelineError(RuntimeError):
    """A stage failed; ``module`` names the component that raised."""

    def __init__(self, module, cause):
        self.module = module
        self.cause = cause
        super().__init__(f"[{module}] {_one_line(cause)}")


def _one_line(exc):
    text = str(exc) or type(exc).__name__
    return " ".join(text.split())


@dataclass(frozen=True)
class PipelineConfig:
    genotype_path: str
    phenotype_path: str
    out_dir: str
    region_map_path: str | None = None
    algorithm: int = 3
    alphas: tuple = DEFAULT_ALPHAS
    null: str = "gamma"
    permutations: int = 999
    seed: int = 0
    workers: int = 1
    missing_sentinel: str = DEFAULT_MISSING
    pi0_mode: str = "smoother"
    region_selection: str = "min_p"
    null_groups_path: str | None = None
    block_size: int = 512

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))

    def validate(self) -> "PipelineConfig":
        if self.algorithm not in (1, 2, 3, 4):
            raise ConfigError(f"algorithm must be 1, 2, 3 or 4, got {self.algorithm!r}")
        if not self.alphas:
            raise ConfigError("at least one alpha is required")
        for a in self.alphas:
            if not 0.0 < a < 1.0:
                raise ConfigError(f"alpha must lie in (0, 1), got {a}")
        if self.null not in ("gamma", "permutation"):
            raise ConfigError(f"null must be 'gamma' or 'permutation', got {self.null!r}")
        if self.null == "permutation":
            if self.permutations < MIN_PERMUTATIONS:
                raise ConfigError(
                    f"permutation null needs at least {MIN_PERMUTATIONS} permutations")
            if self.algorithm not in (1, 2):
                raise ConfigError("the permutation null only feeds algorithms 1 and 2")
        if self.null_groups_path and self.algorithm not in (1, 2):
            raise ConfigError("grouped Gamma nulls only apply to algorithms 1 and 2")
        if self.null_groups_path and self.null == "permutation":
            raise ConfigError("grouped nulls and the permutation null are exclusive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.block_size < 1:
            raise ConfigError("block size must be at least 1")
        if self.pi0_mode not in ("smoother", "bh"):
            raise ConfigError(f"pi0 mode must be 'smoother' or 'bh', got {self.pi0_mode!r}")
        if self.region_selection not in ("min_p", "max_p"):
            raise ConfigError("region selection must be 'min_p' or 'max_p'")
        return self


def workers_from_env(default=1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"{WORKERS_ENV} must be at least 1")
    return value


# --------------------------------------------------------------------------
# scan

_WORKER_RESPONSE = None


def _init_worker(response):
    global _WORKER_RESPONSE
    _WORKER_RESPONSE = response


def _scan_block(block):
    return _WORKER_RESPONSE.scan(block)


def _perm_block(args):
    block, start, seed, n_perm = args
    return _permutation_pvalues(_WORKER_RESPONSE, block, start, seed, n_perm)


def _blocks(g, block_size):
    return [g[:, s:s + block_size] for s in range(0, g.shape[1], block_size)]


def _pool_map(fn, items, response, workers):
    if workers <= 1 or len(items) <= 1:
        _init_worker(response)
        try:
            return [fn(it) for it in items]
        finally:
            _init_worker(None)
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(response,)) as pool:
        return list(pool.map(fn, items))


@dataclass
class ScanResult:
    dcov_sq: np.ndarray
    t2: np.ndarray
    statistic: np.ndarray
    status: np.ndarray  # 0 ok, 1 degenerate, 2 clamped negative estimate

    @property
    def degenerate(self) -> np.ndarray:
        return self.status == 1


def scan_statistics(genotypes, response: ResponseDistances, workers=1, block_size=512
                    ) -> ScanResult:
    """dCov statistics of every column of ``genotypes`` (n, m) against ``response``."""
    g = np.asarray(genotypes, dtype=float)
    if g.shape[1] == 0:
        empty = np.zeros(0)
        return ScanResult(empty, empty, empty, np.zeros(0, dtype=np.int8))
    parts = _pool_map(_scan_block, _blocks(g, block_size), response, workers)
    return ScanResult(*(np.concatenate(col) for col in zip(*parts)))


def _permutation_pvalues(response, block, start, seed, n_perm):
    """Permutation p-values for each column of ``block``.

    Permuting the genotype rows gives the same null as permuting the
    response rows and lets every permutation of one SNP go through the
    vectorized scan at once. SNP ``start + j`` draws from
    ``default_rng([seed, start + j])``.
    """
    _, _, observed, status = response.scan(block)
    out = np.full(block.shape[1], np.nan)
    n = block.shape[0]
    for j in range(block.shape[1]):
        if status[j] == 1:
            continue
        rng = np.random.default_rng([int(seed), start + j])
        perms = np.stack([rng.permutation(n) for _ in range(n_perm)], axis=1)
        _, _, null_stats, _ = response.scan(block[:, j][perms])
        exceed = np.count_nonzero(null_stats >= observed[j] * (1 - 1e-12))
        out[j] = (1 + exceed) / (n_perm + 1)
    return out


def permutation_scan(genotypes, response, seed, n_permutations=999, workers=1, block_size=512):
    g = np.asarray(genotypes, dtype=float)
    if g.shape[1] == 0:
        return np.zeros(0)
    starts = range(0, g.shape[1], block_size)
    jobs = [(g[:, s:s + block_size], s, seed, n_permutations) for s in starts]
    return np.concatenate(_pool_map(_perm_block, jobs, response, workers))


# --------------------------------------------------------------------------
# orchestration

@dataclass
class PipelineResult:
    report: RejectionReport
    manifest: dict
    files: dict | None = None


class _stage:
    """Re-raise any failure inside the block as a PipelineError for ``module``."""

    def __init__(self, module):
        self.module = module

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None or isinstance(exc, (PipelineError, KeyboardInterrupt)):
            return False
        module = "mixtures" if isinstance(exc, MixtureFitError) else self.module
        raise PipelineError(module, exc) from exc


def read_null_groups(path, snp_ids):
    """Group label per SNP from a two-column ``snp_id<TAB>group`` file."""
    labels = {}
    with open(path, encoding="utf-8", newline="") as f:
        for k, row in enumerate(csv.reader(f, delimiter="\t"), start=1):
            if not row or not "".join(row).strip():
                continue
            if k == 1 and row[0].strip().lower() == "snp_id":
                continue
            if len(row) != 2:
                raise ValueError(f"line {k}: expected 'snp_id<TAB>group'")
            labels[row[0].strip()] = row[1].strip()
    missing = [s for s in snp_ids if s not in labels]
    if missing:
        raise ValueError(f"{len(missing)} SNPs have no null group, first {missing[0]!r}")
    return np.array([labels[s] for s in snp_ids], dtype=object)


def load_inputs(config: PipelineConfig):
    """Parse, aggregate (when a region map is given) and align the inputs."""
    with _stage("core-data"):
        g = read_genotype_file(config.genotype_path, missing=config.missing_sentinel)
        p = read_phenotype_file(config.phenotype_path, missing=config.missing_sentinel)
        if config.region_map_path:
            rmap = read_region_map_file(config.region_map_path)
            p = roi_aggregate(p.values, rmap, p.subject_ids)
        return align_subjects(g, p)


def analyze(genotypes: GenotypeMatrix, phenotypes: PhenotypeMatrix,
            config: PipelineConfig, groups=None) -> PipelineResult:
    """Scan and select on in-memory matrices (subjects must already be aligned)."""
    config.validate()
    if tuple(genotypes.subject_ids) != tuple(phenotypes.subject_ids):
        raise PipelineError("core-data", ValueError("subjects are not aligned"))
    snp_ids = tuple(genotypes.snp_ids)
    counters = {"snps": len(snp_ids), "subjects": len(genotypes.subject_ids)}
    manifest = {"config": _config_echo(config), "seed": config.seed, "counters": counters}
    if not snp_ids:
        rep = empty_report(config.algorithm, config.alphas)
        manifest["counters"].update(tests=0)
        return PipelineResult(rep, _finish_manifest(manifest, rep))

    if config.algorithm == 4:
        with _stage("fdr-procedures"):
            rep = algorithm4_slr_baseline(genotypes.values, phenotypes.values, config.alphas,
                                          snp_ids, mode=config.region_selection)
        counters["excluded_snps"] = [s for s, p in zip(snp_ids, rep.pvalue) if np.isnan(p)]
        return PipelineResult(rep, _finish_manifest(manifest, rep))

    with _stage("dcov-engine"):
        response = ResponseDistances(phenotypes.values)
        scan = scan_statistics(genotypes.values, response, config.workers, config.block_size)
    counters["excluded_snps"] = [s for s, d in zip(snp_ids, scan.degenerate) if d]
    counters["negative_dcov_clamped"] = int(np.count_nonzero(scan.status == 2))

    pvalues = None
    nulls = {}
    if config.null == "permutation":
        with _stage("dcov-engine"):
            pvalues = permutation_scan(genotypes.values, response, config.seed,
                                       config.permutations, config.workers, config.block_size)
    elif config.algorithm in (1, 2):
        with _stage("null-models"):
            t = scan.statistic
            valid = np.isfinite(t)
            pvalues = np.full(t.size, np.nan)
            g = None if groups is None else np.asarray(groups)[valid]
            pvalues[valid], nulls = gamma_pvalues_grouped(t[valid], g)

    with _stage("fdr-procedures"):
        pi0 = config.pi0_mode
        rep = run_algorithm(config.algorithm, scan.statistic, config.alphas, snp_ids,
                            pvalues=pvalues, pi0=pi0)
    if nulls:
        rep.gamma_null = nulls.get(None, rep.gamma_null)
        manifest["gamma_nulls"] = {
            ("global" if k is None else str(k)): {"shape": v.shape, "scale": v.scale}
            for k, v in nulls.items()}
    return PipelineResult(rep, _finish_manifest(manifest, rep))


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Read inputs, scan, select and write every report file under ``config.out_dir``."""
    config.validate()
    g, p = load_inputs(config)
    groups = None
    if config.null_groups_path:
        with _stage("core-data"):
            groups = read_null_groups(config.null_groups_path, g.snp_ids)
    result = analyze(g, p, config, groups)
    with _stage("cli-pipeline"):
        result.files = emit_report(result.report, config.out_dir, result.manifest)
    return result


def _config_echo(config):
    out = asdict(config)
    out["alphas"] = list(config.alphas)
    return out


def _finish_manifest(manifest, rep: RejectionReport):
    counters = manifest["counters"]
    counters.update({k: v for k, v in rep.counters.items()})
    counters["tests"] = int(np.count_nonzero(
        np.isfinite(rep.pvalue) | np.isfinite(rep.statistic)))
    manifest["algorithm"] = rep.algorithm
    manifest["pi0"] = rep.pi0
    if rep.gamma_null is not None and "gamma_nulls" not in manifest:
        manifest["gamma_nulls"] = {"global": {"shape": rep.gamma_null.shape,
                                              "scale": rep.gamma_null.scale}}
    if rep.model is not None:
        m = rep.model
        manifest["mixture"] = {
            "family": m.family, "pi0": m.pi0, "null_params": list(m.null_params),
            "alt_params": list(m.alt_params), "loglik": m.loglik,
            "em_iterations": m.iterations, "converged": m.converged}
    manifest["rejections"] = {_alpha_key(a): rep.n_rejected(a) for a in rep.alphas}
    manifest["thresholds"] = {_alpha_key(a): rep.threshold[a] for a in rep.alphas}
    manifest["versions"] = {"dcovfdr": __version__, "numpy": np.__version__,
                            "scipy": scipy.__version__}
    return manifest


# --------------------------------------------------------------------------
# report files

def _alpha_key(a) -> str:
    return f"{float(a):g}"


def _num(v) -> str:
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def _plot_columns(algorithm):
    """(statistic attribute, header, descending?) and the curve column."""
    if algorithm == 4:
        return ("z", "z", False), ("locfdr_z", "locfdr_z")
    curve = {1: ("qvalue", "q"), 2: ("locfdr_z", "locfdr_z"), 3: ("locfdr_t", "locfdr_t")}
    return ("statistic", "T", True), curve[algorithm]


def format_report(rep: RejectionReport) -> str:
    """Per-test TSV followed by a ``# key=value`` footer."""
    out = io.StringIO()
    head = ["test_id"] + [c for c, _ in _COLUMNS] + [f"reject@{_alpha_key(a)}" for a in rep.alphas]
    out.write("\t".join(head) + "\n")
    cols = [getattr(rep, attr) for _, attr in _COLUMNS]
    for i, tid in enumerate(rep.test_ids):
        row = [str(tid)] + [_num(c[i]) for c in cols]
        row += ["1" if rep.reject[a][i] else "0" for a in rep.alphas]
        out.write("\t".join(row) + "\n")
    foot = [("algorithm", rep.algorithm), ("tests", rep.m), ("pi0", _num(rep.pi0))]
    for a in rep.alphas:
        k = _alpha_key(a)
        foot += [(f"threshold@{k}", _num(rep.threshold[a])), (f"pfdr@{k}", _num(rep.pfdr[a])),
                 (f"rejected@{k}", rep.n_rejected(a))]
    if rep.gamma_null is not None:
        foot += [("gamma_null_shape", _num(rep.gamma_null.shape)),
                 ("gamma_null_scale", _num(rep.gamma_null.scale))]
    for k in sorted(rep.counters):
        foot.append((k, rep.counters[k]))
    for k, v in foot:
        out.write(f"# {k}={v}\n")
    if rep.model is not None:
        out.write(rep.model.to_text(prefix="# mixture_"))
    return out.getvalue()


def format_plot_data(rep: RejectionReport) -> str:
    """CSV of (test_id, statistic, curve) sorted most significant first; NaN last."""
    (stat_attr, stat_name, desc), (curve_attr, curve_name) = _plot_columns(rep.algorithm)
    stat = np.asarray(getattr(rep, stat_attr), dtype=float)
    curve = np.asarray(getattr(rep, curve_attr), dtype=float)
    key = -stat if desc else stat
    key = np.where(np.isnan(key), np.inf, key)
    order = np.lexsort((np.arange(rep.m), np.isnan(stat), key)) if rep.m else []
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["test_id", stat_name, curve_name])
    for i in order:
        w.writerow([rep.test_ids[i], _num(stat[i]), _num(curve[i])])
    return out.getvalue()


def format_rejection_counts(rep: RejectionReport) -> str:
    lines = ["alpha\trejected"]
    lines += [f"{_alpha_key(a)}\t{rep.n_rejected(a)}" for a in rep.alphas]
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if math.isnan(obj) else float(obj)
    return obj


def emit_report(rep: RejectionReport, out_dir, manifest: dict | None = None) -> dict:
    """Write the report TSV, plot-data CSV, per-alpha counts and manifest.

    Returns the written paths keyed by kind. Raises ``OSError`` when the
    directory cannot be created or written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"report": out / REPORT_FILE, "plot_data": out / PLOT_FILE,
             "rejection_counts": out / COUNTS_FILE}
    texts = {"report": format_report(rep), "plot_data": format_plot_data(rep),
             "rejection_counts": format_rejection_counts(rep)}
    if manifest is not None:
        files["manifest"] = out / MANIFEST_FILE
        texts["manifest"] = json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n"
    for k, path in files.items():
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(texts[k])
    return {k: str(v) for k, v in files.items()}
