"""Command-line entry point for the genome-wide scan.

Exit status is 0 on success, 1 for usage errors and 2 when a stage of the
run fails; failures print one ``dcovfdr: error: [module] cause`` line.
"""

from __future__ import annotations

import argparse
import sys

from .data import DEFAULT_MISSING
from .pipeline import (DEFAULT_ALPHAS, WORKERS_ENV, ConfigError, PipelineConfig,
                       PipelineError, run_pipeline, workers_from_env)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _alpha_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty alpha list")
    return values


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dcovfdr",
                description="Scan SNPs against a multivariate phenotype with distance "
                            "covariance and select associations at controlled FDR.")
    p.add_argument("--genotypes", required=True, help="subjects x SNPs table (0/1/2)")
    p.add_argument("--phenotypes", required=True,
                   help="subjects x regions table, or subjects x voxels with --region-map")
    p.add_argument("--region-map", help="voxel_index<TAB>region file; averages voxels per region")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--algorithm", type=int, choices=(1, 2, 3, 4), default=3)
    p.add_argument("--alpha", type=_alpha_list, action="append",
                   help="FDR level(s); repeat or comma-separate (default 0.05,0.1,0.15,0.2)")
    p.add_argument("--null", choices=("gamma", "permutation"), default="gamma")
    p.add_argument("--permutations", type=int, default=999)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int,
                   help=f"worker processes (default: ${WORKERS_ENV} or 1)")
    p.add_argument("--missing-sentinel", default=DEFAULT_MISSING)
    p.add_argument("--pi0", choices=("smoother", "bh"), default="smoother",
                   help="pi0 estimate for algorithm 1")
    p.add_argument("--region-selection", choices=("min_p", "max_p"), default="min_p",
                   help="per-SNP p-value across regions for algorithm 4")
    p.add_argument("--null-groups",
                   help="snp_id<TAB>group file; fit one Gamma null per group")
    p.add_argument("--block-size", type=int, default=512, help="SNPs per scan task")
    return p


def config_from_args(args) -> PipelineConfig:
    alphas = [a for chunk in args.alpha for a in chunk] if args.alpha else DEFAULT_ALPHAS
    workers = args.workers if args.workers is not None else workers_from_env()
    return PipelineConfig(
        genotype_path=args.genotypes, phenotype_path=args.phenotypes, out_dir=args.out,
        region_map_path=args.region_map, algorithm=args.algorithm, alphas=tuple(alphas),
        null=args.null, permutations=args.permutations, seed=args.seed, workers=workers,
        missing_sentinel=args.missing_sentinel, pi0_mode=args.pi0,
        region_selection=args.region_selection, null_groups_path=args.null_groups,
        block_size=args.block_size).validate()


def main(argv=None) -> int:
    parser = build_parser()
    try:
        config = config_from_args(parser.parse_args(argv))
    except (UsageError, ConfigError) as exc:
        print(f"dcovfdr: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = run_pipeline(config)
    except PipelineError as exc:
        print(f"dcovfdr: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for a in result.report.alphas:
        print(f"alpha={a:g}\trejected={result.report.n_rejected(a)}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
