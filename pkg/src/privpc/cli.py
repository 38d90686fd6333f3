"""Command-line entry point: ``privpc <subcommand>``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import DataError, forward_sample, load_csv, resolve_network, write_csv
from .discovery import ENGINES, DiscoveryConfig, optimal_subsample_size, run_engine
from .evaluation import (
    BENCH_MODES,
    SweepSpec,
    bench,
    f1_score,
    run_sweep,
    verify_bounds,
    write_bench_csv,
    write_bounds_csv,
)
from .stats import DEFAULT_THRESHOLD

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_BOUNDS = 4


class UsageError(Exception):
    pass


def _subsample(value: str) -> str | int:
    if value in ("auto", "full"):
        return value
    try:
        m = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'auto', 'full' or a positive integer")
    if m < 1:
        raise argparse.ArgumentTypeError("subsample size must be positive")
    return m


def _add_data_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV dataset")
    src.add_argument("--network", help="builtin network name or network JSON to sample from")
    p.add_argument("--n", type=int, default=100000, help="rows to sample with --network")
    p.add_argument("--data-seed", type=int, default=0, help="sampling seed with --network")


def _add_engine_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1.0, help="per-window budget")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--tweak", type=float, default=0.5)
    p.add_argument("--subsample", type=_subsample, default="auto")
    p.add_argument("--min-block-size", type=int, default=5)
    p.add_argument("--max-order", type=int, default=None)
    p.add_argument("--delta-prime", type=float, default=1e-6)
    p.add_argument("--test", default="kendall", help="kendall or spearman")
    p.add_argument("--signed", action="store_true", help="combine signed per-block statistics")
    p.add_argument("--resume-after-reject", action="store_true")


def _load_data(args):
    if args.data:
        return load_csv(args.data), None
    spec = resolve_network(args.network)
    return forward_sample(spec, args.n, args.data_seed), list(spec.edges)


def _config(args) -> DiscoveryConfig:
    return DiscoveryConfig(
        test_kind=args.test,
        threshold=args.threshold,
        tweak=args.tweak,
        epsilon=args.epsilon,
        subsample=args.subsample,
        min_block_size=args.min_block_size,
        max_order=args.max_order,
        seed=args.seed,
        delta_prime=args.delta_prime,
        signed=args.signed,
        resume_after_reject=args.resume_after_reject,
    )


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_generate(args) -> int:
    spec = resolve_network(args.network)
    d = forward_sample(spec, args.n, args.seed)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_csv(d, args.out)
    else:
        sys.stdout.write(d.to_csv())
    return EXIT_OK


def cmd_discover(args) -> int:
    d, truth = _load_data(args)
    report = run_engine(args.engine, d, _config(args))
    doc = report.to_dict(include_timing=not args.no_timing)
    if truth is not None:
        precision, recall, f1 = f1_score(report.skeleton, truth)
        doc["accuracy"] = {"precision": precision, "recall": recall, "f1": f1}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        _write(out / "report.json", text)
        _write(out / "skeleton.dot", report.skeleton.to_dot())
        _write(out / "edges.txt", report.skeleton.to_edge_list())
        _write(out / "ledger.json", report.ledger.to_json() + "\n")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = SweepSpec.load(args.spec)
    if args.workers is not None:
        spec.workers = args.workers
    out = args.out or spec.output_dir
    if not out:
        raise UsageError("sweep needs --out or an output_dir entry in the sweep file")
    rows = run_sweep(spec, out)
    failures = sum(r.failures for r in rows)
    print(f"{len(rows)} rows written to {out}" + (f" ({failures} failed runs)" if failures else ""))
    return EXIT_OK


def cmd_bench(args) -> int:
    d, _ = _load_data(args)
    base = _config(args)
    rows = bench(d, modes=args.modes, epsilon=args.epsilon, repetitions=args.repetitions, base=base, master_seed=args.seed)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_bench_csv(rows, args.out, include_timing=not args.no_timing)
    for r in rows:
        secs = "N/A" if r.seconds_median is None else f"{r.seconds_median:.4f}s"
        print(f"{r.mode:12s} {secs:>10s} {r.note}")
    return EXIT_OK


def cmd_verify_bounds(args) -> int:
    checks = verify_bounds(trials=args.trials, seed=args.seed)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_bounds_csv(checks, args.out)
    failed = [c for c in checks if not c.ok]
    for c in checks:
        t2 = "n/a" if c.type2_rate is None else f"{c.type2_rate:.5f}<={c.type2_bound:.5f}"
        status = "ok" if c.ok else "FAIL"
        print(
            f"{status:4s} alpha={c.alpha:g} t={c.tweak:g} eps={c.epsilon:g} Delta={c.sensitivity:g} "
            f"type1 {c.type1_rate:.5f}<={c.type1_bound:.5f} type2 {t2}"
        )
    print(f"{len(checks) - len(failed)}/{len(checks)} grid points within bounds")
    if failed:
        worst = failed[0]
        print(
            f"first violation: alpha={worst.alpha:g} t={worst.tweak:g} eps={worst.epsilon:g} Delta={worst.sensitivity:g}",
            file=sys.stderr,
        )
        return EXIT_BOUNDS
    return EXIT_OK


def cmd_optimal_m(args) -> int:
    print(optimal_subsample_size(args.n, args.epsilon))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privpc", description="Differentially private causal skeleton discovery")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a dataset from a network")
    p.add_argument("--network", required=True)
    p.add_argument("--n", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (stdout when omitted)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("discover", help="run one engine")
    _add_data_args(p)
    _add_engine_args(p)
    p.add_argument("--engine", choices=ENGINES, default="privpc")
    p.add_argument("--out", help="directory for report.json, skeleton.dot, edges.txt, ledger.json")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock fields")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("sweep", help="run a budget sweep from a JSON spec")
    p.add_argument("spec")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="time the engines")
    _add_data_args(p)
    _add_engine_args(p)
    p.add_argument("--modes", nargs="+", choices=sorted(BENCH_MODES), default=["pc", "svtpc", "privpc", "privpc-full"])
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--out", help="CSV path")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock columns from the CSV")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify-bounds", help="check error bounds by Monte Carlo")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path")
    p.set_defaults(func=cmd_verify_bounds)

    p = sub.add_parser("optimal-m", help="print the optimal subsample size")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.set_defaults(func=cmd_optimal_m)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (DataError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, ValueError, IndexError, KeyError) as exc:
        print(f"argument error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
