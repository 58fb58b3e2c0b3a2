"""Gamma approximation versus permutation p-values for the same scan.

The Gamma null costs one moment fit; the permutation null costs B extra
dCov evaluations per SNP. Both rank the SNPs almost identically, but the
Gamma is matched to the moments of every statistic, alternatives included.
A handful of very strong signals inflates its variance, so their p-values
come out far larger than under permutation and q-values lose them. A Gamma
matched to the null statistics alone shows what the approximation gives
when it is not contaminated.

    python demos/permutation_vs_gamma.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np
from scipy import stats as sps

from dcovfdr.dcov import ResponseDistances
from dcovfdr.nulls import fit_gamma_null, gamma_pvalue
from dcovfdr.pipeline import permutation_scan, scan_statistics
from dcovfdr.procedures import qvalue_procedure
from dcovfdr.simulation import simulate_scan_study

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out.mkdir(parents=True, exist_ok=True)

g, p, is_alt = simulate_scan_study(n=120, m=400, m_alt=20, seed=3)
response = ResponseDistances(p.values)
t = scan_statistics(g.values, response).statistic

p_gamma = gamma_pvalue(fit_gamma_null(t), t)
p_perm = permutation_scan(g.values, response, seed=3, n_permutations=499)

rho = sps.spearmanr(p_gamma, p_perm).statistic
q_gamma = qvalue_procedure(p_gamma, 0.1, pi0="bh").reject[0.1]
q_perm = qvalue_procedure(p_perm, 0.1, pi0="bh").reject[0.1]
p_clean = gamma_pvalue(fit_gamma_null(t[~is_alt]), t)
q_clean = qvalue_procedure(p_clean, 0.1, pi0="bh").reject[0.1]
print(f"Spearman correlation of p-values: {rho:.3f}")
print(f"rejected at q <= 0.10: gamma {q_gamma.sum()}, permutation {q_perm.sum()}, "
      f"both {np.count_nonzero(q_gamma & q_perm)}, null-only gamma {q_clean.sum()}")

with open(out / "permutation_vs_gamma.tsv", "w") as fh:
    fh.write("snp\tT\tp_gamma\tp_permutation\tis_alt\n")
    for s, ti, a, b, alt in zip(g.snp_ids, t, p_gamma, p_perm, is_alt):
        fh.write(f"{s}\t{ti:.6g}\t{a:.6g}\t{b:.6g}\t{int(alt)}\n")
