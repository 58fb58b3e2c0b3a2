import json
import subprocess
import sys

import numpy as np
import pytest

from dcovfdr.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from dcovfdr.data import write_genotype_file, write_phenotype_file
from dcovfdr.simulation import simulate_scan_study


@pytest.fixture(scope="module")
def inputs(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    g, p, _ = simulate_scan_study(n=60, m=200, m_alt=10, seed=5)
    write_genotype_file(g, d / "g.tsv")
    write_phenotype_file(p, d / "p.tsv")
    return d


def _args(d, out, *extra):
    return ["--genotypes", str(d / "g.tsv"), "--phenotypes", str(d / "p.tsv"),
            "--out", str(d / out), *extra]


def test_success_writes_reports(inputs, capsys):
    assert main(_args(inputs, "ok", "--algorithm", "3", "--alpha", "0.05,0.1")) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("alpha=0.05\trejected=")
    for name in ("report.tsv", "plot_data.csv", "rejection_counts.tsv", "manifest.json"):
        assert (inputs / "ok" / name).exists()


def test_alpha_flag_repeats_and_lists(inputs):
    main(_args(inputs, "al", "--alpha", "0.05", "--alpha", "0.1,0.2"))
    m = json.loads((inputs / "al" / "manifest.json").read_text())
    assert m["config"]["alphas"] == [0.05, 0.1, 0.2]


@pytest.mark.parametrize("extra", [
    ["--alpha", "0"], ["--alpha", "x"], ["--algorithm", "7"], ["--null", "permutation",
    "--permutations", "10", "--algorithm", "1"], ["--workers", "0"], ["--bogus"],
])
def test_usage_errors_exit_one(inputs, capsys, extra):
    assert main(_args(inputs, "bad", *extra)) == EXIT_USAGE
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("dcovfdr: usage error:")


def test_missing_required_flags(capsys):
    assert main([]) == EXIT_USAGE


def test_runtime_error_exit_two(inputs, tmp_path, capsys):
    (tmp_path / "g.tsv").write_text("id\trs1\nA\t9\n")
    args = ["--genotypes", str(tmp_path / "g.tsv"), "--phenotypes", str(inputs / "p.tsv"),
            "--out", str(tmp_path / "o")]
    assert main(args) == EXIT_RUNTIME
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "[core-data]" in err[0]


def test_worker_env_override(inputs, monkeypatch):
    monkeypatch.setenv("DCOVFDR_WORKERS", "2")
    assert main(_args(inputs, "env")) == EXIT_OK
    m = json.loads((inputs / "env" / "manifest.json").read_text())
    assert m["config"]["workers"] == 2
    assert main(_args(inputs, "env1", "--workers", "1")) == EXIT_OK
    m = json.loads((inputs / "env1" / "manifest.json").read_text())
    assert m["config"]["workers"] == 1


def test_bad_worker_env_is_usage_error(inputs, monkeypatch):
    monkeypatch.setenv("DCOVFDR_WORKERS", "many")
    assert main(_args(inputs, "envbad")) == EXIT_USAGE


def test_module_entry_point(inputs):
    proc = subprocess.run([sys.executable, "-m", "dcovfdr", *_args(inputs, "sub")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    counts = (inputs / "sub" / "rejection_counts.tsv").read_text().splitlines()
    assert len(counts) == 5
    assert np.all(np.diff([int(c.split("\t")[1]) for c in counts[1:]]) >= 0)
