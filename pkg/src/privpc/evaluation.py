"""Experiment harness: F1 scoring, budget sweeps, timing, and error-bound checks."""

from __future__ import annotations

import csv
import json
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset, forward_sample, load_csv, resolve_network
from .discovery import ENGINES, DiscoveryConfig, Skeleton, run_engine
from .mechanisms import (
    SieveExamineConfig,
    monte_carlo_error_rates,
    type1_bound,
    type2_bound,
    type2_bound_examine_tail,
)
from .rng import derive_rng, derive_seed

TIMING_FIELDS = ("durations", "seconds", "seconds_mean", "seconds_std", "seconds_median")


# --------------------------------------------------------------------------
# F1
# --------------------------------------------------------------------------


def _edge_set(graph, names: Sequence[str]) -> set[frozenset]:
    if isinstance(graph, Skeleton):
        if set(graph.names) != set(names):
            raise ValueError("graphs are over different vertex sets")
        return {frozenset(e) for e in graph.edge_names()}
    out = set()
    for u, v in graph:
        for x in (u, v):
            if x not in names:
                raise ValueError(f"edge endpoint {x!r} is not a vertex of the predicted graph")
        out.add(frozenset((u, v)))
    return out


def f1_score(predicted: Skeleton, truth) -> tuple[float, float, float]:
    """Precision, recall and F1 of undirected edges against ``truth``.

    ``truth`` is a Skeleton or an iterable of ``(u, v)`` name pairs. Two
    empty edge sets score 1; exactly one empty edge set scores 0.
    """
    pred = {frozenset(e) for e in predicted.edge_names()}
    true = _edge_set(truth, predicted.names)
    if not pred and not true:
        return 1.0, 1.0, 1.0
    if not pred or not true:
        return (0.0 if pred else 1.0), (0.0 if true else 1.0), 0.0
    hits = len(pred & true)
    precision, recall = hits / len(pred), hits / len(true)
    f1 = 0.0 if hits == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


# --------------------------------------------------------------------------
# Sweep specification and results
# --------------------------------------------------------------------------


def default_budget_grid() -> list[float]:
    """21 log-spaced per-window budgets from 0.01 to 10."""
    return [float(f"{x:.6g}") for x in np.logspace(-2, 1, 21)]


@dataclass
class DatasetSource:
    """Either a CSV path or a network (builtin name or JSON path) sampled with ``n`` and ``seed``."""

    network: str | None = None
    csv: str | None = None
    n: int = 100000
    seed: int = 0

    def __post_init__(self):
        if (self.network is None) == (self.csv is None):
            raise ValueError("dataset needs exactly one of 'network' or 'csv'")
        if self.n < 1:
            raise ValueError("n must be positive")

    def load(self) -> tuple[Dataset, list[tuple[str, str]] | None]:
        if self.csv is not None:
            return load_csv(self.csv), None
        spec = resolve_network(self.network)
        return forward_sample(spec, self.n, self.seed), list(spec.edges)

    @property
    def label(self) -> str:
        if self.csv is not None:
            return Path(self.csv).stem
        return Path(self.network).stem


@dataclass
class SweepSpec:
    dataset: DatasetSource
    engines: list[str]
    epsilons: list[float] = field(default_factory=default_budget_grid)
    repetitions: int = 5
    master_seed: int = 0
    output_dir: str | None = None
    truth_edges: list[tuple[str, str]] | None = None
    threshold: float | None = None
    tweak: float | None = None
    subsample: str | int | None = None
    min_block_size: int | None = None
    max_order: int | None = None
    delta_prime: float | None = None
    signed: bool | None = None
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.dataset, dict):
            self.dataset = DatasetSource(**self.dataset)
        if isinstance(self.engines, str):
            self.engines = [self.engines]
        for e in self.engines:
            if e not in ENGINES:
                raise ValueError(f"unknown engine {e!r}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if any(e != "pc" for e in self.engines) and not self.epsilons:
            raise ValueError("private engines need a non-empty budget grid")
        if any(not eps > 0 for eps in self.epsilons):
            raise ValueError("budgets must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepSpec":
        doc = dict(doc)
        if "engine" in doc:
            doc["engines"] = doc.pop("engine")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown sweep fields: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> "SweepSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def config(self, epsilon: float, seed: int) -> DiscoveryConfig:
        overrides = {
            k: getattr(self, k)
            for k in ("threshold", "tweak", "subsample", "min_block_size", "max_order", "delta_prime", "signed")
            if getattr(self, k) is not None
        }
        return DiscoveryConfig(epsilon=epsilon, seed=seed, **overrides)

    def run_seeds(self) -> list[int]:
        return [derive_seed(self.master_seed, "repetition", r) for r in range(self.repetitions)]


@dataclass(frozen=True)
class MetricsRow:
    engine: str
    epsilon: float | None
    epsilon_total_mean: float
    epsilon_total_std: float
    f1_mean: float
    f1_std: float
    precision_mean: float
    recall_mean: float
    seconds_mean: float
    seconds_std: float
    runs: int
    failures: int
    seeds: str

    def sort_key(self):
        return (self.engine, -1.0 if self.epsilon is None else self.epsilon)


_FLOAT_FIELDS = {
    "epsilon_total_mean",
    "epsilon_total_std",
    "f1_mean",
    "f1_std",
    "precision_mean",
    "recall_mean",
    "seconds_mean",
    "seconds_std",
}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(rows: Iterable[MetricsRow], path: str | Path, include_timing: bool = True) -> None:
    names = [f.name for f in fields(MetricsRow) if include_timing or f.name not in TIMING_FIELDS]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in rows:
            writer.writerow([_fmt(getattr(row, n)) for n in names])


def read_metrics_csv(path: str | Path) -> list[MetricsRow]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            vals = {}
            for f in fields(MetricsRow):
                raw = rec.get(f.name, "")
                if f.name == "epsilon":
                    vals[f.name] = None if raw == "" else float(raw)
                elif f.name in _FLOAT_FIELDS:
                    vals[f.name] = float(raw) if raw != "" else float("nan")
                elif f.name in ("runs", "failures"):
                    vals[f.name] = int(raw)
                else:
                    vals[f.name] = raw
            out.append(MetricsRow(**vals))
    return out


def write_plot_csv(rows: Iterable[MetricsRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epsilon_total_mean", "f1_mean", "f1_std", "epsilon"])
        for r in sorted(rows, key=lambda r: r.epsilon_total_mean):
            writer.writerow([_fmt(r.epsilon_total_mean), _fmt(r.f1_mean), _fmt(r.f1_std), _fmt(r.epsilon)])


# --------------------------------------------------------------------------
# Sweep execution
# --------------------------------------------------------------------------

_WORKER_DATA: dict = {}


def _init_worker(source: DatasetSource) -> None:
    _WORKER_DATA["dataset"] = source.load()


def _run_one(task: tuple) -> dict:
    engine, eps_index, epsilon, rep, cfg, truth = task
    d, spec_truth = _WORKER_DATA["dataset"]
    truth = truth if truth is not None else spec_truth
    record = {"engine": engine, "epsilon": epsilon, "epsilon_index": eps_index, "repetition": rep, "seed": cfg.seed}
    try:
        report = run_engine(engine, d, cfg)
    except Exception as exc:  # recorded per run; the sweep continues
        record["error"] = f"{type(exc).__name__}: {exc}"
        return record
    record["report"] = report.to_dict()
    record["epsilon_total"] = report.epsilon_total
    record["seconds"] = report.durations["search"]
    if truth is not None:
        precision, recall, f1 = f1_score(report.skeleton, truth)
        record.update(precision=precision, recall=recall, f1=f1)
    return record


def _std(values: list[float]) -> float:
    return statistics.pstdev(values) if len(values) > 1 else 0.0


def _aggregate(engine: str, epsilon: float | None, records: list[dict]) -> MetricsRow:
    ok = [r for r in records if "error" not in r]
    seeds = ";".join(str(r["seed"]) for r in records)

    def col(name):
        return [float(r[name]) for r in ok if name in r]

    def mean(vals):
        return float(statistics.fmean(vals)) if vals else float("nan")

    f1s, secs, tots = col("f1"), col("seconds"), col("epsilon_total")
    return MetricsRow(
        engine=engine,
        epsilon=epsilon,
        epsilon_total_mean=mean(tots),
        epsilon_total_std=_std(tots),
        f1_mean=mean(f1s),
        f1_std=_std(f1s),
        precision_mean=mean(col("precision")),
        recall_mean=mean(col("recall")),
        seconds_mean=mean(secs),
        seconds_std=_std(secs),
        runs=len(records),
        failures=len(records) - len(ok),
        seeds=seeds,
    )


def _strip_timing(obj):
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in obj.items() if k not in TIMING_FIELDS}
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


def strip_timing(obj):
    """Drop wall-clock fields from a JSON-like document."""
    return _strip_timing(obj)


def run_sweep(spec: SweepSpec, output_dir: str | Path | None = None) -> list[MetricsRow]:
    """Run every ``(engine, budget, repetition)`` point and aggregate per ``(engine, budget)``.

    The same derived seeds are used at every grid point. The non-private
    engine ignores the budget grid and yields a single row.
    """
    out = Path(output_dir or spec.output_dir) if (output_dir or spec.output_dir) else None
    seeds = spec.run_seeds()
    tasks = []
    for engine in spec.engines:
        grid = [(None, None)] if engine == "pc" else list(enumerate(spec.epsilons))
        for eps_index, eps in grid:
            for rep, seed in enumerate(seeds):
                cfg = spec.config(eps if eps is not None else 1.0, seed)
                tasks.append((engine, eps_index, eps, rep, cfg, spec.truth_edges))

    if spec.workers > 1:
        with ProcessPoolExecutor(
            max_workers=spec.workers, initializer=_init_worker, initargs=(spec.dataset,)
        ) as pool:
            records = list(pool.map(_run_one, tasks))
    else:
        _init_worker(spec.dataset)
        records = [_run_one(t) for t in tasks]

    grouped: dict[tuple, list[dict]] = {}
    for rec in records:
        grouped.setdefault((rec["engine"], rec["epsilon"]), []).append(rec)
    rows = sorted((_aggregate(e, eps, recs) for (e, eps), recs in grouped.items()), key=MetricsRow.sort_key)

    if out is not None:
        (out / "runs").mkdir(parents=True, exist_ok=True)
        for rec in records:
            tag = "na" if rec["epsilon_index"] is None else f"{rec['epsilon_index']:02d}"
            name = f"{rec['engine']}_eps{tag}_rep{rec['repetition']:02d}.json"
            (out / "runs" / name).write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        write_metrics_csv(rows, out / "metrics.csv")
        for engine in spec.engines:
            write_plot_csv([r for r in rows if r.engine == engine], out / f"plot_{engine}.csv")
    return rows


# --------------------------------------------------------------------------
# Matched-budget comparison
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BudgetComparison:
    budgets: tuple[float, ...]
    f1_a: tuple[float, ...]
    f1_b: tuple[float, ...]

    @property
    def mean_a(self) -> float:
        return float(np.mean(self.f1_a))

    @property
    def mean_b(self) -> float:
        return float(np.mean(self.f1_b))


def _curve(rows: Sequence[MetricsRow]) -> tuple[np.ndarray, np.ndarray]:
    pts = sorted((r.epsilon_total_mean, r.f1_mean) for r in rows if r.epsilon_total_mean > 0)
    x = np.log([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    return x, y


def compare_at_matched_budget(rows_a: Sequence[MetricsRow], rows_b: Sequence[MetricsRow], points: int = 5) -> BudgetComparison:
    """Interpolate both F1-vs-total-epsilon curves (log axis) at shared budgets.

    The budgets are log-spaced across the overlap of the two curves' ranges.
    """
    xa, ya = _curve(rows_a)
    xb, yb = _curve(rows_b)
    lo, hi = max(xa[0], xb[0]), min(xa[-1], xb[-1])
    if lo > hi:
        raise ValueError("the two curves do not overlap in total budget")
    grid = np.linspace(lo, hi, points)
    return BudgetComparison(
        budgets=tuple(float(v) for v in np.exp(grid)),
        f1_a=tuple(float(v) for v in np.interp(grid, xa, ya)),
        f1_b=tuple(float(v) for v in np.interp(grid, xb, yb)),
    )


# --------------------------------------------------------------------------
# Timing
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchRow:
    mode: str
    engine: str
    subsample: str
    seconds_median: float | None
    seconds_mean: float | None
    seconds_std: float | None
    runs: int
    note: str = ""


BENCH_MODES = {
    "pc": ("pc", None),
    "svtpc": ("svtpc", None),
    "privpc": ("privpc", "auto"),
    "privpc-full": ("privpc", "full"),
}


def bench(
    d: Dataset,
    modes: Sequence[str] = ("pc", "svtpc", "privpc", "privpc-full"),
    epsilon: float = 1.0,
    repetitions: int = 5,
    base: DiscoveryConfig | None = None,
    master_seed: int = 0,
) -> list[BenchRow]:
    """Median search time per mode; timing covers the engine call only.

    ``privpc-full`` forces the subsample to the whole dataset. An ``em-pc``
    row is appended as N/A because that engine is not implemented.
    """
    base = base or DiscoveryConfig()
    rows = []
    for mode in modes:
        if mode not in BENCH_MODES:
            raise ValueError(f"unknown bench mode {mode!r}")
        engine, sub = BENCH_MODES[mode]
        times = []
        for rep in range(repetitions):
            cfg = replace(base, epsilon=epsilon, seed=derive_seed(master_seed, "repetition", rep))
            if sub is not None:
                cfg = replace(cfg, subsample=sub)
            start = time.perf_counter()
            run_engine(engine, d, cfg)
            times.append(time.perf_counter() - start)
        rows.append(
            BenchRow(mode, engine, sub or "-", statistics.median(times), statistics.fmean(times), _std(times), repetitions)
        )
    rows.append(BenchRow("em-pc", "em-pc", "-", None, None, None, 0, "N/A: not implemented"))
    return rows


def write_bench_csv(rows: Sequence[BenchRow], path: str | Path, include_timing: bool = True) -> None:
    names = [f.name for f in fields(BenchRow) if include_timing or f.name not in TIMING_FIELDS]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in rows:
            writer.writerow(["N/A" if getattr(row, n) is None else _fmt(getattr(row, n)) for n in names])


# --------------------------------------------------------------------------
# Error-bound verification
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundPoint:
    alpha: float
    tweak: float
    epsilon: float
    sensitivity: float


@dataclass(frozen=True)
class BoundCheck:
    alpha: float
    tweak: float
    epsilon: float
    sensitivity: float
    eps_prime: float
    type1_rate: float
    type1_bound: float
    type1_slack: float
    type1_ok: bool
    type2_rate: float | None
    type2_bound: float | None
    type2_slack: float | None
    type2_ok: bool | None
    type2_examine_tail_bound: float | None
    type2_examine_tail_ok: bool | None

    @property
    def ok(self) -> bool:
        return self.type1_ok and self.type2_ok is not False


def default_bound_grid() -> list[BoundPoint]:
    """``alpha x t x eps x Delta`` = 3 x 3 x 3 x 2 interior points plus ``alpha = -t`` boundary points."""
    pts = []
    for alpha in (0.1, 0.5, 2.0):
        for t in (0.0, 0.1, 0.5):
            for eps in (0.5, 1.0, 2.0):
                for sens in (0.1, 1.0):
                    pts.append(BoundPoint(alpha, t, eps, sens))
    for t in (0.0, 0.5):
        for eps in (0.5, 2.0):
            pts.append(BoundPoint(0.0 - t, t, eps, 1.0))
    return pts


def verify_bounds(
    grid: Sequence[BoundPoint] | None = None,
    trials: int = 100_000,
    seed: int = 0,
    dataset_size: int = 200,
    subsample_size: int = 100,
) -> list[BoundCheck]:
    """Monte Carlo error rates against the analytic bounds, allowing 4 binomial sigma.

    The type-II check only applies where ``alpha >= t``.
    """
    if trials < 10_000:
        raise ValueError("trials must be at least 10^4")
    out = []
    for idx, pt in enumerate(grid if grid is not None else default_bound_grid()):
        cfg = SieveExamineConfig(
            epsilon=pt.epsilon,
            threshold=0.0,
            tweak=pt.tweak,
            subsample_size=subsample_size,
            full_sensitivity=pt.sensitivity,
            dataset_size=dataset_size,
        )
        eps_prime = cfg.eps_prime()
        rates = monte_carlo_error_rates(pt.alpha, cfg, trials, derive_rng(seed, "verify-bounds", idx))
        b1 = type1_bound(pt.alpha, pt.tweak, eps_prime, pt.sensitivity)
        s1 = 4.0 * math.sqrt(b1 * (1.0 - b1) / trials)
        t2 = b2 = s2 = ok2 = tail = tail_ok = None
        if pt.alpha >= pt.tweak:
            t2 = rates.type2
            b2 = type2_bound(pt.alpha, pt.tweak, pt.epsilon, eps_prime, pt.sensitivity)
            s2 = 4.0 * math.sqrt(max(b2 * (1.0 - b2), 0.0) / trials)
            ok2 = t2 <= b2 + s2
            tail = type2_bound_examine_tail(pt.alpha, pt.tweak, pt.epsilon, eps_prime, pt.sensitivity)
            tail_ok = t2 <= tail + 4.0 * math.sqrt(max(tail * (1.0 - tail), 0.0) / trials)
        out.append(
            BoundCheck(
                pt.alpha, pt.tweak, pt.epsilon, pt.sensitivity, eps_prime,
                rates.type1, b1, s1, rates.type1 <= b1 + s1,
                t2, b2, s2, ok2, tail, tail_ok,
            )
        )
    return out


def write_bounds_csv(checks: Sequence[BoundCheck], path: str | Path) -> None:
    names = [f.name for f in fields(BoundCheck)] + ["ok"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for c in checks:
            vals = [getattr(c, n) for n in names[:-1]] + [c.ok]
            writer.writerow(["" if v is None else _fmt(v) for v in vals])
