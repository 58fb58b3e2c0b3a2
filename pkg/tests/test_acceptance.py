"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary, then asserts. Tolerances are fixed up front; nothing here is
loosened to make a run pass.
"""

import math

import numpy as np
import pytest

from conftest import POWER_REPLICATES, SIZE_RUNS, record_criterion
from dcovfdr.data import MissingnessMask, write_genotype_file, write_phenotype_file
from dcovfdr.dcov import dcov_statistic, permutation_statistics, weighted_centered_distances
from dcovfdr.mixtures import (GAMMA, GAUSSIAN, MixtureModel, fit_gamma_mixture,
                              fit_gaussian_mixture, local_fdr)
from dcovfdr.nulls import fit_gamma_null, gamma_pvalue
from dcovfdr.pipeline import PipelineConfig, run_pipeline
from dcovfdr.simulation import SimDesign, simulate_scan_study, simulate_study, study_statistics
from dcovfdr.procedures import run_algorithm

from oracles import naive_dcov

ALPHAS = (0.05, 0.10, 0.15, 0.20)


def _check(number, title, failures, detail):
    passed = not failures
    record_criterion(number, title, passed, detail if passed else "; ".join(failures))
    assert passed, "; ".join(failures)


# 1 -------------------------------------------------------------------------

def test_criterion_1_size_calibration(size_tables):
    targets = [(1, 0.1, 0.115), (1, 0.5, 0.472), (1, 0.9, 0.940), (2, 0.5, 0.498),
               (3, 0.5, 0.499)]
    failures, seen = [], []
    for design, u, ref in targets:
        got = size_tables[design][u]
        seen.append(f"d{design}@{u}={got:.3f}")
        if abs(got - ref) > 0.03:
            failures.append(f"design {design} nominal {u}: {got:.3f} vs {ref} (+-0.03)")
    _check(1, f"size calibration ({SIZE_RUNS} runs)", failures, ", ".join(seen))


# 2 -------------------------------------------------------------------------

def test_criterion_2_fdr_control(power_studies):
    failures = []
    worst = -np.inf
    for design, study in power_studies.items():
        for alg in (1, 2, 3):
            for a in ALPHAS:
                fdr = study.cell(alg, a).mean_fdr
                worst = max(worst, fdr - a)
                if fdr > a + 0.03:
                    failures.append(f"design {design} alg {alg} alpha {a}: FDR {fdr:.3f}")
    _check(2, f"FDR <= alpha + 0.03 ({POWER_REPLICATES} replicates)", failures,
           f"largest FDR - alpha = {worst:.3f}")


# 3 -------------------------------------------------------------------------

def test_criterion_3_power_reproduction(power_studies):
    d1, d2, d3 = (power_studies[d] for d in (1, 2, 3))
    failures, seen = [], []

    def near(label, got, ref, tol):
        seen.append(f"{label}={got:.3f}")
        if abs(got - ref) > tol:
            failures.append(f"{label}: {got:.3f} vs {ref} (+-{tol})")

    near("d1 alg2 a0.05", d1.cell(2, 0.05).mean_power, 0.882, 0.07)
    near("d1 alg3 a0.05", d1.cell(3, 0.05).mean_power, 0.904, 0.07)
    p1 = d1.cell(1, 0.05).mean_power
    seen.append(f"d1 alg1 a0.05={p1:.3f}")
    if p1 > 0.05:
        failures.append(f"d1 alg1 a0.05: {p1:.3f} > 0.05")
    near("d2 alg2 a0.20", d2.cell(2, 0.20).mean_power, 0.964, 0.07)
    for alg in (1, 2, 3):
        for a in ALPHAS:
            gap = d2.cell(alg, a).mean_power - d3.cell(alg, a).mean_power
            if not 0.0 <= gap <= 0.05:
                failures.append(f"d2-d3 power gap alg {alg} alpha {a}: {gap:.3f}")
    _check(3, f"power reproduction ({POWER_REPLICATES} replicates)", failures, ", ".join(seen))


# 4 -------------------------------------------------------------------------

def test_criterion_4_local_fdr_beats_qvalue(power_studies):
    failures = []
    for design, study in power_studies.items():
        for a in ALPHAS:
            base = study.cell(1, a).mean_power
            for alg in (2, 3):
                if not study.cell(alg, a).mean_power > base:
                    failures.append(f"design {design} alpha {a}: alg {alg} "
                                    f"{study.cell(alg, a).mean_power:.3f} vs alg 1 {base:.3f}")
    _check(4, "alg 2 and 3 power > alg 1 everywhere", failures, "strict at all 12 cells")


# 5 -------------------------------------------------------------------------

def test_criterion_5_oracle_equivalence():
    rng = np.random.default_rng(505)
    failures = []
    worst_rel = 0.0
    for k in range(100):
        n = int(rng.integers(2, 51))
        x = rng.normal(size=(n, int(rng.integers(1, 11))))
        y = rng.normal(size=(n, int(rng.integers(1, 11))))
        got = dcov_statistic(x, y)
        _, _, ref = naive_dcov(x.tolist(), y.tolist())
        ref = max(ref, 0.0)
        rel = abs(got.statistic - ref) / max(abs(ref), 1e-300)
        if ref == 0.0:
            rel = abs(got.statistic)
        worst_rel = max(worst_rel, rel)
        if rel > 1e-12:
            failures.append(f"instance {k}: relative error {rel:.2e}")
    worst_gap, compared = 0.0, 0
    for k in range(20):
        x = rng.normal(size=(50, int(rng.integers(1, 11))))
        y = rng.normal(size=(50, int(rng.integers(1, 11))))
        obs, perm = permutation_statistics(x, y, n_permutations=999, seed=k)
        p_perm = (1 + np.count_nonzero(perm >= obs.statistic * (1 - 1e-12))) / 1000
        # Gamma moment-matched to this instance's permutation null
        p_gamma = gamma_pvalue(fit_gamma_null(perm), obs.statistic)
        if 0.05 <= p_perm <= 0.95:
            compared += 1
            worst_gap = max(worst_gap, abs(p_gamma - p_perm))
            if abs(p_gamma - p_perm) > 0.05:
                failures.append(f"p instance {k}: gamma {p_gamma:.3f} vs perm {p_perm:.3f}")
    _check(5, "naive dcov oracle and gamma vs permutation", failures,
           f"max rel err {worst_rel:.1e}; max |p gap| {worst_gap:.3f} over {compared}")


# 6 -------------------------------------------------------------------------

def test_criterion_6_mcar_unbiased():
    rng = np.random.default_rng(606)
    draws = 100_000
    x = rng.normal(size=(draws, 2, 3))
    keep = rng.random((draws, 2)) >= 0.2
    vals = np.empty(draws)
    for k in range(draws):
        mask = MissingnessMask(keep[k], 0.8)
        vals[k] = weighted_centered_distances(x[k], mask).weighted[0, 1]
    complete = np.linalg.norm(x[:, 0] - x[:, 1], axis=1)
    # a'_12 - |X1 - X2| has mean zero when the weighting is unbiased
    diff = vals - complete
    se = diff.std(ddof=1) / math.sqrt(draws)
    z = diff.mean() / se
    exact = 4 / math.sqrt(math.pi)
    z_exact = (vals.mean() - exact) / (vals.std(ddof=1) / math.sqrt(draws))
    failures = []
    if abs(z) > 3:
        failures.append(f"paired gap {diff.mean():.4f} is {z:.2f} se")
    if abs(z_exact) > 3:
        failures.append(f"mean {vals.mean():.4f} vs E|X1-X2| {exact:.4f} ({z_exact:.2f} se)")
    _check(6, "MCAR weighted distances unbiased", failures,
           f"{draws} draws, z = {z:.2f} (paired), {z_exact:.2f} (closed form)")


# 7 -------------------------------------------------------------------------

def test_criterion_7_em_properties():
    rng = np.random.default_rng(707)
    failures = []
    fits = []

    n = 10_000
    m = fit_gaussian_mixture(rng.standard_normal(n))
    fits.append(m)
    if not (abs(m.null_params[0]) <= 0.05 and abs(m.null_params[1] - 1) <= 0.05
            and m.pi0 >= 0.95):
        failures.append(f"N(0,1) recovery {m.null_params}, pi0 {m.pi0:.3f}")

    alt = rng.random(n) < 0.1
    m = fit_gaussian_mixture(np.where(alt, rng.normal(-5, 1, n), rng.standard_normal(n)))
    fits.append(m)
    if not (abs(m.null_params[0]) <= 0.15 and abs(m.alt_params[0] + 5) <= 0.15
            and abs(m.pi0 - 0.9) <= 0.03):
        failures.append(f"Gaussian two-group recovery {m.null_params}, {m.alt_params}")

    m = fit_gamma_mixture(rng.gamma(1.0, 1.0, n))
    fits.append(m)
    if not (abs(m.null_params[0] - 1) <= 0.1 and abs(m.null_params[1] - 1) <= 0.1):
        failures.append(f"Gamma(1,1) recovery {m.null_params}")

    alt = rng.random(n) < 0.05
    m = fit_gamma_mixture(np.where(alt, rng.gamma(20.0, 1.0, n), rng.gamma(1.0, 1.0, n)))
    fits.append(m)
    if not (abs(m.pi0 - 0.95) <= 0.02 and abs(m.null_mean() - 1) <= 0.1
            and abs(m.alt_mean() / 20 - 1) <= 0.1):
        failures.append(f"Gamma two-group recovery pi0 {m.pi0:.3f}")

    for d in (1, 2, 3):
        for r in range(5):
            t = study_statistics(simulate_study(SimDesign.standard(d), 9, r))
            for alg in (2, 3):
                fits.append(run_algorithm(alg, t, 0.1).model)
    bad = sum(not (np.diff(f.loglik_trace) >= -1e-10).all() for f in fits)
    if bad:
        failures.append(f"{bad} of {len(fits)} fits had a decreasing log-likelihood")

    total, outside = 0, 0
    for k in range(1000):
        pi0 = rng.uniform(1e-4, 1 - 1e-4)
        if k % 2:
            model = MixtureModel(GAUSSIAN, pi0, (rng.normal(0, 5), rng.uniform(1e-6, 10)),
                                 (rng.normal(0, 5), rng.uniform(1e-6, 10)))
            v = rng.normal(0, 50, 1000)
        else:
            model = MixtureModel(GAMMA, pi0, tuple(rng.uniform(1e-3, 50, 2)),
                                 tuple(rng.uniform(1e-3, 50, 2)))
            v = rng.exponential(50, 1000)
        f = local_fdr(model, v)
        total += f.size
        outside += int(np.count_nonzero(~((f >= 0) & (f <= 1))))
    if outside:
        failures.append(f"{outside} local fdr values outside [0, 1]")
    _check(7, "EM monotone, recovery, local fdr in [0, 1]", failures,
           f"{len(fits)} monotone fits, {total} fuzzed local fdr values")


# 8 -------------------------------------------------------------------------

def _report_bytes(files):
    return {k: open(v, "rb").read() for k, v in files.items() if k != "manifest"}


def test_criterion_8_pipeline_determinism(tmp_path):
    g, p, _ = simulate_scan_study(n=100, m=1000, missing_rate=0.01, seed=808)
    write_genotype_file(g, tmp_path / "g.tsv")
    write_phenotype_file(p, tmp_path / "p.tsv")
    failures, counts = [], {}
    for alg in (1, 2, 3, 4):
        outputs = []
        for workers in (1, 4):
            cfg = PipelineConfig(str(tmp_path / "g.tsv"), str(tmp_path / "p.tsv"),
                                 str(tmp_path / f"out{alg}_{workers}"), algorithm=alg,
                                 alphas=ALPHAS, seed=8, workers=workers, block_size=128)
            res = run_pipeline(cfg)
            outputs.append(_report_bytes(res.files))
        if outputs[0] != outputs[1]:
            failures.append(f"alg {alg}: reports differ between 1 and 4 workers")
        c = [res.report.n_rejected(a) for a in ALPHAS]
        counts[alg] = c
        if any(b < a for a, b in zip(c, c[1:])):
            failures.append(f"alg {alg}: counts {c} decrease in alpha")
    _check(8, "pipeline byte-identical at 1/4 workers, counts monotone", failures,
           " ".join(f"alg{a}={c}" for a, c in counts.items()))
