"""Skeleton discovery: non-private PC, SVT-PC, and Priv-PC.

All three engines share one traversal. Ordered pairs ``(i, j)`` are visited
in lexicographic order at each conditioning-set size, and conditioning sets
are the lexicographic combinations of ``Adj(i) - {j}`` on the live graph.
A test ``i _||_ j | S`` is never repeated, whichever endpoint proposed it.
The engines differ only in how a single test is decided.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .data import Dataset, subsample_indices
from .ledger import PrivacyLedger
from .mechanisms import amplified_epsilon
from .rng import derive_rng
from .stats import DEFAULT_THRESHOLD, TestKind, evaluate_test, sensitivity

ENGINES = ("pc", "privpc", "svtpc")


class Skeleton:
    """Undirected graph over named vertices, backed by a symmetric boolean matrix."""

    def __init__(self, names: Sequence[str], adjacency: np.ndarray | None = None):
        self.names = tuple(names)
        p = len(self.names)
        if adjacency is None:
            adjacency = np.ones((p, p), dtype=bool)
            np.fill_diagonal(adjacency, False)
        adj = np.array(adjacency, dtype=bool)
        if adj.shape != (p, p):
            raise ValueError(f"adjacency must be {p}x{p}")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if adj.diagonal().any():
            raise ValueError("adjacency must have an empty diagonal")
        self.adjacency = adj

    @classmethod
    def complete(cls, names: Sequence[str]) -> "Skeleton":
        return cls(names)

    @classmethod
    def empty(cls, names: Sequence[str]) -> "Skeleton":
        return cls(names, np.zeros((len(names), len(names)), dtype=bool))

    @classmethod
    def from_edges(cls, names: Sequence[str], edges) -> "Skeleton":
        """Build from ``(u, v)`` pairs given as names or indices; direction is ignored."""
        sk = cls.empty(names)
        index = {n: k for k, n in enumerate(sk.names)}
        for u, v in edges:
            a = index[u] if isinstance(u, str) else int(u)
            b = index[v] if isinstance(v, str) else int(v)
            if a == b:
                raise ValueError(f"self-loop on {sk.names[a]}")
            sk.adjacency[a, b] = sk.adjacency[b, a] = True
        return sk

    @property
    def p(self) -> int:
        return len(self.names)

    def neighbors(self, v: int) -> list[int]:
        return [int(u) for u in np.flatnonzero(self.adjacency[v])]

    def has_edge(self, u: int, v: int) -> bool:
        return bool(self.adjacency[u, v])

    def remove_edge(self, u: int, v: int) -> None:
        self.adjacency[u, v] = self.adjacency[v, u] = False

    def edges(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(np.triu(self.adjacency, 1))
        return [(int(a), int(b)) for a, b in zip(rows, cols)]

    def edge_names(self) -> list[tuple[str, str]]:
        return sorted(tuple(sorted((self.names[a], self.names[b]))) for a, b in self.edges())

    def copy(self) -> "Skeleton":
        return Skeleton(self.names, self.adjacency.copy())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Skeleton)
            and self.names == other.names
            and np.array_equal(self.adjacency, other.adjacency)
        )

    def __repr__(self) -> str:
        return f"Skeleton(p={self.p}, edges={self.edge_names()})"

    def to_edge_list(self) -> str:
        return "".join(f"{a}\t{b}\n" for a, b in self.edge_names())

    def to_dot(self) -> str:
        lines = ["graph skeleton {"]
        lines += [f'  "{n}";' for n in self.names]
        lines += [f'  "{a}" -- "{b}";' for a, b in self.edge_names()]
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"vertices": list(self.names), "edges": [list(e) for e in self.edge_names()]}


@dataclass(frozen=True)
class DiscoveryConfig:
    """Engine parameters.

    ``subsample`` is ``"auto"``, ``"full"`` or a row count. With
    ``resume_after_reject`` a sieve pass whose examine keeps the edge moves
    on to the next conditioning set instead of the next edge.
    """

    test_kind: TestKind = TestKind.KENDALL
    threshold: float = DEFAULT_THRESHOLD
    tweak: float = 0.5
    epsilon: float = 1.0
    subsample: str | int = "auto"
    min_block_size: int = 5
    max_order: int | None = None
    seed: int = 0
    delta_prime: float = 1e-6
    signed: bool = False
    resume_after_reject: bool = False
    record_trace: bool = False

    def __post_init__(self):
        object.__setattr__(self, "test_kind", TestKind.parse(self.test_kind))
        if not self.test_kind.rank_based:
            raise ValueError(f"{self.test_kind.value} cannot drive discovery (unbounded sensitivity)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.tweak < 0:
            raise ValueError("tweak must be non-negative")
        if self.max_order is not None and self.max_order < 0:
            raise ValueError("max_order must be >= 0")
        if self.min_block_size < 2:
            raise ValueError("min_block_size must be at least 2")
        if not 0.0 < self.delta_prime < 1.0:
            raise ValueError("delta_prime must be in (0, 1)")
        if isinstance(self.subsample, str):
            if self.subsample not in ("auto", "full"):
                try:
                    object.__setattr__(self, "subsample", int(self.subsample))
                except ValueError:
                    raise ValueError(f"subsample must be 'auto', 'full' or an integer, got {self.subsample!r}")
        if isinstance(self.subsample, int) and self.subsample < 1:
            raise ValueError("subsample size must be at least 1")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["test_kind"] = self.test_kind.value
        return out


@dataclass
class OrderCounts:
    evaluations: int = 0
    passes: int = 0
    examines: int = 0
    deletions: int = 0
    rows: int = 0


@dataclass
class RunReport:
    engine: str
    skeleton: Skeleton
    ledger: PrivacyLedger
    per_order: dict[int, OrderCounts]
    durations: dict[str, float]
    seed: int
    config: DiscoveryConfig
    n: int
    subsample_size: int | None = None
    trace: list[tuple] = field(default_factory=list)

    @property
    def windows(self) -> int:
        return len(self.ledger)

    @property
    def epsilon_total(self) -> float:
        return self.ledger.compose().epsilon

    @property
    def delta_total(self) -> float:
        return self.ledger.compose().delta

    @property
    def rows_evaluated(self) -> int:
        return sum(c.rows for c in self.per_order.values())

    def totals(self) -> OrderCounts:
        out = OrderCounts()
        for c in self.per_order.values():
            for name in ("evaluations", "passes", "examines", "deletions", "rows"):
                setattr(out, name, getattr(out, name) + getattr(c, name))
        return out

    def to_dict(self, include_timing: bool = True) -> dict:
        comp = self.ledger.compose()
        doc = {
            "engine": self.engine,
            "seed": self.seed,
            "n": self.n,
            "subsample_size": self.subsample_size,
            "config": self.config.to_dict(),
            "skeleton": self.skeleton.to_dict(),
            "privacy": {
                "windows": self.windows,
                "epsilon_total": comp.epsilon,
                "delta_total": comp.delta,
                "method": comp.method,
                "basic_epsilon": comp.basic_epsilon,
                "advanced_epsilon": comp.advanced_epsilon,
                "delta_prime": self.ledger.target_delta_prime,
            },
            "per_order": {str(k): asdict(v) for k, v in sorted(self.per_order.items())},
            "rows_evaluated": self.rows_evaluated,
        }
        if include_timing:
            doc["durations"] = dict(self.durations)
        return doc

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# Sub-sampling rate
# --------------------------------------------------------------------------


def _noise_level(n: int, m: int, eps: float) -> float:
    return math.sqrt(n / m) / amplified_epsilon(n, m, eps)


def optimal_subsample_size(n: int, eps: float) -> int:
    """Row count minimizing the sieve noise level ``sqrt(n/m) / eps'(m)``, kept in ``(n/20, n]``."""
    if n < 20:
        raise ValueError(f"need n >= 20, got {n}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    lo, hi = n // 20 + 1, n

    def level(x: float) -> float:
        # continuous relaxation for the golden-section step
        half = eps / 2.0
        ratio = n / x
        if half < 30.0:
            e1 = math.log1p(ratio * math.expm1(half))
        else:
            e1 = half + math.log(ratio) + math.log1p((1.0 - ratio) / ratio * math.exp(-half))
        return math.sqrt(ratio) / e1

    a, b = float(lo), float(hi)
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
    fc, fd = level(c), level(d)
    while b - a > 1.0:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = level(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = level(d)
    centre = int(round((a + b) / 2.0))
    candidates = {lo, hi} | {m for m in range(centre - 3, centre + 4) if lo <= m <= hi}
    return min(sorted(candidates), key=lambda m: (_noise_level(n, m, eps), -m))


def resolve_subsample(cfg: DiscoveryConfig, n: int) -> int:
    if cfg.subsample == "full":
        return n
    if cfg.subsample == "auto":
        return optimal_subsample_size(n, cfg.epsilon) if n >= 20 else n
    m = int(cfg.subsample)
    if not 1 <= m <= n:
        raise ValueError(f"subsample size {m} must be in [1, {n}]")
    return m


# --------------------------------------------------------------------------
# Traversal
# --------------------------------------------------------------------------

# decide(i, j, S, order) -> (delete, stop_edge)
Decision = Callable[[int, int, tuple[int, ...], int], tuple[bool, bool]]


def _traverse(skeleton: Skeleton, max_order: int, decide: Decision) -> None:
    p = skeleton.p
    adj = skeleton.adjacency
    tested: set[tuple[int, int, tuple[int, ...]]] = set()
    order = 0
    while order <= max_order and any(adj[v].sum() - 1 >= order for v in range(p)):
        for i in range(p):
            for j in range(p):
                if i == j or not adj[i, j]:
                    continue
                others = [v for v in np.flatnonzero(adj[i]) if v != j]
                if len(others) < order:
                    continue
                for S in combinations((int(v) for v in others), order):
                    key = (min(i, j), max(i, j), S)
                    if key in tested:
                        continue
                    tested.add(key)
                    delete, stop = decide(i, j, S, order)
                    if delete:
                        skeleton.remove_edge(i, j)
                        break
                    if stop:
                        break
        order += 1


class _Tester:
    """Statistic evaluation plus sensitivity lookups for one dataset."""

    def __init__(self, d: Dataset, cfg: DiscoveryConfig):
        # narrow codes make subsample gathers and key arithmetic cheaper
        width = np.min_scalar_type(max(d.cardinalities) - 1)
        self.rows = np.asfortranarray(d.rows.astype(width))
        self.cards = d.cardinalities
        self.n = d.n
        self.cfg = cfg
        self.kind = cfg.test_kind

    def score(self, rows: np.ndarray, i: int, j: int, S: tuple[int, ...]) -> tuple[float, int]:
        """Score and block count; ``(-inf, 1)`` when every block was dropped."""
        res = evaluate_test(rows, self.cards, i, j, S, self.kind, self.cfg.min_block_size, self.cfg.signed)
        if res is None:
            return -math.inf, 1
        return res.score, res.blocks_used

    def sensitivity(self, k: int) -> float:
        return sensitivity(self.kind, self.n, k, self.cfg.min_block_size).value

    def threshold_sensitivity(self, max_order: int) -> float:
        # largest block count any test in the run can produce
        largest = sorted(self.cards, reverse=True)[:max_order]
        k_max = min(self.n // self.cfg.min_block_size, math.prod(largest) if largest else 1)
        return self.sensitivity(max(1, k_max))


def _max_order(cfg: DiscoveryConfig, p: int) -> int:
    natural = max(p - 2, 0)
    return natural if cfg.max_order is None else min(cfg.max_order, natural)


def _check_dataset(d: Dataset) -> None:
    if d.p < 2:
        raise ValueError("need at least two variables")


def _finish(engine, skeleton, ledger, counts, t0, t1, cfg, d, m=None, trace=None) -> RunReport:
    t2 = time.perf_counter()
    return RunReport(
        engine=engine,
        skeleton=skeleton,
        ledger=ledger,
        per_order=dict(sorted(counts.items())),
        durations={"setup": t1 - t0, "search": t2 - t1, "total": t2 - t0},
        seed=cfg.seed,
        config=cfg,
        n=d.n,
        subsample_size=m,
        trace=trace or [],
    )


# --------------------------------------------------------------------------
# Engines
# --------------------------------------------------------------------------


def run_pc(d: Dataset, cfg: DiscoveryConfig) -> RunReport:
    """Non-private PC: delete ``i - j`` as soon as some ``S`` scores at or above ``T``."""
    _check_dataset(d)
    t0 = time.perf_counter()
    tester = _Tester(d, cfg)
    skeleton = Skeleton.complete(d.columns)
    counts: dict[int, OrderCounts] = {}
    trace: list[tuple] = []
    t1 = time.perf_counter()

    def decide(i, j, S, order):
        c = counts.setdefault(order, OrderCounts())
        score, _ = tester.score(tester.rows, i, j, S)
        c.evaluations += 1
        c.rows += tester.n
        indep = score >= cfg.threshold
        if indep:
            c.passes += 1
            c.deletions += 1
        if cfg.record_trace:
            trace.append((order, i, j, S, 0, "test", indep))
        return indep, False

    _traverse(skeleton, _max_order(cfg, d.p), decide)
    return _finish("pc", skeleton, PrivacyLedger(cfg.delta_prime), counts, t0, t1, cfg, d, trace=trace)


def pc_skeleton(d: Dataset, cfg: DiscoveryConfig | None = None) -> Skeleton:
    return run_pc(d, cfg or DiscoveryConfig()).skeleton


def priv_pc(d: Dataset, cfg: DiscoveryConfig) -> RunReport:
    """PC with each test run through a sieve-and-examine window.

    The sieve scores the test on the window's subsample of ``m`` rows with
    Laplace noise ``4 sqrt(n/m) Delta / eps'`` against the noisy tweaked
    threshold ``T - t + Lap(2 sqrt(n/m) Delta_T / eps')``. A sieve pass
    triggers the examine on all ``n`` rows with noise ``2 Delta / eps``
    against ``T``. The examine runs on the full data, so its noise uses the
    full-data sensitivity without the ``sqrt(n/m)`` factor. Every sieve pass
    closes the window: ``(eps, 0)`` is charged and the subsample and the
    noisy threshold are redrawn, always at the subsample scale.
    ``Delta`` is recomputed per test from that test's block count.
    """
    _check_dataset(d)
    t0 = time.perf_counter()
    n = d.n
    m = resolve_subsample(cfg, n)
    tester = _Tester(d, cfg)
    max_order = _max_order(cfg, d.p)
    eps_prime = amplified_epsilon(n, m, cfg.epsilon)
    inflate = math.sqrt(n / m)
    thr_scale = 2.0 * inflate * tester.threshold_sensitivity(max_order) / eps_prime
    ledger = PrivacyLedger(cfg.delta_prime)
    skeleton = Skeleton.complete(d.columns)
    counts: dict[int, OrderCounts] = {}
    trace: list[tuple] = []
    state: dict = {"window": -1}

    def open_window():
        state["window"] += 1
        rng = derive_rng(cfg.seed, "privpc", state["window"])
        state["rng"] = rng
        state["rows"] = tester.rows if m == n else tester.rows[subsample_indices(n, m, rng)]
        state["threshold"] = cfg.threshold - cfg.tweak + rng.laplace(0.0, thr_scale)

    open_window()
    t1 = time.perf_counter()

    def decide(i, j, S, order):
        c = counts.setdefault(order, OrderCounts())
        rng = state["rng"]
        score, k = tester.score(state["rows"], i, j, S)
        c.evaluations += 1
        c.rows += m
        noisy = score + rng.laplace(0.0, 4.0 * inflate * tester.sensitivity(k) / eps_prime)
        if noisy < state["threshold"]:
            if cfg.record_trace:
                trace.append((order, i, j, S, state["window"], "sieve", False))
            return False, False
        c.passes += 1
        c.examines += 1
        c.rows += n
        full_score, k_full = tester.score(tester.rows, i, j, S)
        delete = full_score + rng.laplace(0.0, 2.0 * tester.sensitivity(k_full) / cfg.epsilon) >= cfg.threshold
        if delete:
            c.deletions += 1
        if cfg.record_trace:
            trace.append((order, i, j, S, state["window"], "sieve", True))
            trace.append((order, i, j, S, state["window"], "examine", delete))
        ledger.charge(cfg.epsilon, 0.0, "sieve-and-examine")
        open_window()
        return delete, not cfg.resume_after_reject

    _traverse(skeleton, max_order, decide)
    return _finish("privpc", skeleton, ledger, counts, t0, t1, cfg, d, m=m, trace=trace)


def svt_pc(d: Dataset, cfg: DiscoveryConfig) -> RunReport:
    """PC with each test answered by the sparse vector technique on the full data.

    Threshold noise ``2 Delta_T / eps``, query noise ``4 Delta / eps``, no
    tweak and no examine. A noisy pass deletes the edge, charges ``(eps, 0)``
    and redraws the threshold.
    """
    _check_dataset(d)
    t0 = time.perf_counter()
    n = d.n
    tester = _Tester(d, cfg)
    max_order = _max_order(cfg, d.p)
    thr_scale = 2.0 * tester.threshold_sensitivity(max_order) / cfg.epsilon
    ledger = PrivacyLedger(cfg.delta_prime)
    skeleton = Skeleton.complete(d.columns)
    counts: dict[int, OrderCounts] = {}
    trace: list[tuple] = []
    state: dict = {"window": -1}

    def open_window():
        state["window"] += 1
        rng = derive_rng(cfg.seed, "svtpc", state["window"])
        state["rng"] = rng
        state["threshold"] = cfg.threshold + rng.laplace(0.0, thr_scale)

    open_window()
    t1 = time.perf_counter()

    def decide(i, j, S, order):
        c = counts.setdefault(order, OrderCounts())
        score, k = tester.score(tester.rows, i, j, S)
        c.evaluations += 1
        c.rows += n
        noisy = score + state["rng"].laplace(0.0, 4.0 * tester.sensitivity(k) / cfg.epsilon)
        above = noisy >= state["threshold"]
        if cfg.record_trace:
            trace.append((order, i, j, S, state["window"], "svt", above))
        if above:
            c.passes += 1
            c.deletions += 1
            ledger.charge(cfg.epsilon, 0.0, "svt-above-threshold")
            open_window()
        return above, False

    _traverse(skeleton, max_order, decide)
    return _finish("svtpc", skeleton, ledger, counts, t0, t1, cfg, d, trace=trace)


def run_engine(engine: str, d: Dataset, cfg: DiscoveryConfig) -> RunReport:
    if engine == "pc":
        return run_pc(d, cfg)
    if engine == "privpc":
        return priv_pc(d, cfg)
    if engine == "svtpc":
        return svt_pc(d, cfg)
    raise ValueError(f"unknown engine {engine!r}; choose from {', '.join(ENGINES)}")
