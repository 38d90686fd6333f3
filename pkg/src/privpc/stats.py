"""Rank-correlation independence statistics and their sensitivity bounds.

Scores are oriented so that larger means "more independent":
``score = -|raw_statistic|``. The negation is 1-Lipschitz, so every
sensitivity bound on the raw statistic carries over to the score.

Ties are pervasive with categorical data. A pair tied in either
coordinate is neither concordant nor discordant, and Spearman ranks use
the average rank of a tied group.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .data import Blocks, conditional_tables

# Two-sided 5% normal critical value, on the score axis.
DEFAULT_ALPHA = 0.05
DEFAULT_THRESHOLD = -NormalDist().inv_cdf(1.0 - DEFAULT_ALPHA / 2)


class UndefinedStatisticError(ValueError):
    """The statistic is not defined for the given input (too few rows, no blocks)."""


class TestKind(str, enum.Enum):
    KENDALL = "conditional-kendall-tau"
    SPEARMAN = "conditional-spearman-rho"
    CHI_SQUARED = "chi-squared"
    G_TEST = "g-test"

    __test__ = False  # keep pytest from collecting this as a test class

    @classmethod
    def parse(cls, value: "str | TestKind") -> "TestKind":
        if isinstance(value, cls):
            return value
        aliases = {
            "kendall": cls.KENDALL,
            "tau": cls.KENDALL,
            "spearman": cls.SPEARMAN,
            "rho": cls.SPEARMAN,
            "chi2": cls.CHI_SQUARED,
            "g": cls.G_TEST,
        }
        key = str(value).lower()
        if key in aliases:
            return aliases[key]
        return cls(key)

    @property
    def rank_based(self) -> bool:
        return self in (TestKind.KENDALL, TestKind.SPEARMAN)


@dataclass(frozen=True)
class ScoreResult:
    score: float
    raw_statistic: float
    blocks_used: int
    rows_used: int


@dataclass(frozen=True)
class SensitivityBound:
    value: float
    basis_rows: int
    kind: TestKind
    min_block_size: int


# --------------------------------------------------------------------------
# Count-table kernels. Tables are (k, ra, rb) with categories in ascending
# order along both axes.
# --------------------------------------------------------------------------


def concordance_difference(tables: np.ndarray) -> np.ndarray:
    """``C - D`` per block from stacked contingency tables."""
    t = np.asarray(tables, dtype=np.int64)
    if t.ndim == 2:
        t = t[None]
    k, ra, rb = t.shape
    # ge[x, y] = #(a >= x, b >= y);  le[x, y] = #(a >= x, b <= y)
    ge = t[:, ::-1, ::-1].cumsum(axis=1).cumsum(axis=2)[:, ::-1, ::-1]
    le = t[:, ::-1, :].cumsum(axis=1)[:, ::-1, :].cumsum(axis=2)
    above = np.zeros((k, ra + 1, rb + 1), dtype=np.int64)
    above[:, :ra, :rb] = ge
    below = np.zeros((k, ra + 1, rb + 1), dtype=np.int64)
    below[:, :ra, 1:] = le
    concordant = (t * above[:, 1:, 1:]).sum(axis=(1, 2))
    discordant = (t * below[:, 1:, :rb]).sum(axis=(1, 2))
    return concordant - discordant


def _kendall_from_tables(tables: np.ndarray, signed: bool) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(tables, dtype=np.int64)
    sizes = t.sum(axis=(1, 2))
    diff = concordance_difference(t)
    if not signed:
        diff = np.abs(diff)
    return 2.0 * diff / (sizes * (sizes - 1.0)), sizes


def _average_ranks(counts: np.ndarray) -> np.ndarray:
    """Average 1-based rank of each category given per-category counts (last axis)."""
    before = np.cumsum(counts, axis=-1) - counts
    return before + (counts + 1) / 2.0


def _spearman_from_tables(tables: np.ndarray, signed: bool) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(tables, dtype=np.int64)
    sizes = t.sum(axis=(1, 2))
    rank_a = _average_ranks(t.sum(axis=2))
    rank_b = _average_ranks(t.sum(axis=1))
    d2 = (rank_a[:, :, None] - rank_b[:, None, :]) ** 2
    sum_d2 = (t * d2).sum(axis=(1, 2))
    n = sizes.astype(np.float64)
    rho = 1.0 - 6.0 * sum_d2 / (n * (n * n - 1.0))
    if not signed:
        rho = np.abs(rho)
    return rho, sizes


def _encode_pair(a: Sequence, b: Sequence) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 1 or b.ndim != 1 or a.size != b.size:
        raise ValueError("a and b must be 1-D sequences of equal length")
    if a.size < 2:
        raise UndefinedStatisticError(f"rank statistics need at least 2 observations, got {a.size}")
    ua, ca = np.unique(a, return_inverse=True)
    ub, cb = np.unique(b, return_inverse=True)
    return np.bincount(ca.ravel() * ub.size + cb.ravel(), minlength=ua.size * ub.size).reshape(
        1, ua.size, ub.size
    )


def kendall_tau(a: Sequence, b: Sequence, signed: bool = False) -> float:
    """``2|C - D| / (n(n-1))``; ``signed=True`` drops the absolute value."""
    tau, _ = _kendall_from_tables(_encode_pair(a, b), signed)
    return float(tau[0])


def spearman_rho(a: Sequence, b: Sequence, signed: bool = False) -> float:
    """``|1 - 6 sum(d^2) / (n(n^2 - 1))|`` over average ranks."""
    rho, _ = _spearman_from_tables(_encode_pair(a, b), signed)
    return float(rho[0])


def _kendall_weights(sizes: np.ndarray) -> np.ndarray:
    n = sizes.astype(np.float64)
    return 9.0 * n * (n - 1.0) / (2.0 * (2.0 * n + 5.0))


def _combine(per_block: np.ndarray, weights: np.ndarray) -> float:
    return float((weights * per_block).sum() / math.sqrt(weights.sum()))


def _result(raw: float, sizes: np.ndarray) -> ScoreResult:
    return ScoreResult(score=-abs(raw), raw_statistic=raw, blocks_used=int(sizes.size), rows_used=int(sizes.sum()))


def _stack(blocks: Blocks) -> list[np.ndarray]:
    if blocks.empty:
        raise UndefinedStatisticError("no blocks survived the block-size floor")
    tables = blocks.tables()
    if min(int(t.sum()) for t in tables) < 2:
        raise UndefinedStatisticError("every block needs at least 2 rows")
    return tables


def score_from_tables(tables: np.ndarray, kind: TestKind = TestKind.KENDALL, signed: bool = False) -> ScoreResult:
    """Conditional rank statistic from stacked same-shape tables."""
    t = np.asarray(tables)
    if t.shape[0] == 0:
        raise UndefinedStatisticError("no blocks survived the block-size floor")
    if kind is TestKind.KENDALL:
        per_block, sizes = _kendall_from_tables(t, signed)
        weights = _kendall_weights(sizes)
    elif kind is TestKind.SPEARMAN:
        per_block, sizes = _spearman_from_tables(t, signed)
        weights = (sizes - 1).astype(np.float64)
    else:
        raise ValueError(f"{kind.value} has unbounded sensitivity; use the reconciled wrapper")
    if sizes.min() < 2:
        raise UndefinedStatisticError("every block needs at least 2 rows")
    return _result(_combine(per_block, weights), sizes)


def _score_blocks(blocks: Blocks, kind: TestKind, signed: bool) -> ScoreResult:
    tables = _stack(blocks)
    parts, sizes = [], []
    for t in tables:
        stat, size = (_kendall_from_tables if kind is TestKind.KENDALL else _spearman_from_tables)(t[None], signed)
        parts.append(stat[0])
        sizes.append(size[0])
    sizes = np.asarray(sizes)
    per_block = np.asarray(parts)
    weights = _kendall_weights(sizes) if kind is TestKind.KENDALL else (sizes - 1).astype(np.float64)
    return _result(_combine(per_block, weights), sizes)


def conditional_kendall_stat(blocks: Blocks, signed: bool = False) -> ScoreResult:
    """Inverse-variance weighted combination of per-block Kendall's tau.

    ``raw = sum(w_i tau_i) / sqrt(sum(w_i))`` with
    ``w_i = 9 n_i (n_i - 1) / (2 (2 n_i + 5))``.
    """
    return _score_blocks(blocks, TestKind.KENDALL, signed)


def conditional_spearman_stat(blocks: Blocks, signed: bool = False) -> ScoreResult:
    """Per-block Spearman's rho combined with weights ``w_i = n_i - 1``."""
    return _score_blocks(blocks, TestKind.SPEARMAN, signed)


def evaluate_test(
    rows: np.ndarray,
    cards: Sequence[int],
    i: int,
    j: int,
    S: Sequence[int],
    kind: TestKind = TestKind.KENDALL,
    min_block_size: int = 5,
    signed: bool = False,
) -> ScoreResult | None:
    """Score ``i _||_ j | S`` on raw code rows; ``None`` when every block was dropped."""
    tables = conditional_tables(rows, cards, i, j, S, min_block_size)
    if tables.shape[0] == 0:
        return None
    return score_from_tables(tables, kind, signed)


# --------------------------------------------------------------------------
# Sensitivity bounds
# --------------------------------------------------------------------------


def _check_conditional_args(n: int, k: int, c1: int) -> None:
    if k < 1:
        raise ValueError(f"block count k must be >= 1, got {k}")
    if n <= k:
        raise ValueError(f"need n > k, got n={n}, k={k}")
    if c1 < 2:
        raise ValueError(f"min block size c1 must be >= 2, got {c1}")


def conditional_kendall_sensitivity(n: int, k: int, c1: int) -> SensitivityBound:
    """``27/(4 sqrt(c2 (n-k))) + 9/(2 c1 sqrt(c2 (n-k)))`` with ``c2 = 9 c1 / (2 (2 c1 + 5))``."""
    _check_conditional_args(n, k, c1)
    c2 = 9.0 * c1 / (2.0 * (2.0 * c1 + 5.0))
    root = math.sqrt(c2 * (n - k))
    value = 27.0 / (4.0 * root) + 9.0 / (2.0 * c1 * root)
    return SensitivityBound(value, int(n), TestKind.KENDALL, int(c1))


def kendall_sensitivity_unconditional(n: int) -> SensitivityBound:
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    return SensitivityBound(2.0 / (n - 1), int(n), TestKind.KENDALL, int(n))


def conditional_spearman_sensitivity(n: int, k: int, c1: int) -> SensitivityBound:
    """``31/sqrt(n-k) + 30/(c1 sqrt(n-k))``."""
    _check_conditional_args(n, k, c1)
    root = math.sqrt(n - k)
    value = 31.0 / root + 30.0 / (c1 * root)
    return SensitivityBound(value, int(n), TestKind.SPEARMAN, int(c1))


def spearman_sensitivity_unconditional(n: int) -> SensitivityBound:
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    return SensitivityBound(30.0 / n, int(n), TestKind.SPEARMAN, int(n))


def sensitivity(kind: TestKind, n: int, k: int, c1: int) -> SensitivityBound:
    if kind is TestKind.KENDALL:
        return conditional_kendall_sensitivity(n, k, c1)
    if kind is TestKind.SPEARMAN:
        return conditional_spearman_sensitivity(n, k, c1)
    raise ValueError(f"no sensitivity bound for {kind.value}")


# --------------------------------------------------------------------------
# Contingency statistics (unbounded sensitivity)
# --------------------------------------------------------------------------


def contingency_statistic(blocks: Blocks, kind: TestKind | str) -> float:
    """Chi-squared or G statistic summed over blocks.

    Expected counts come from each block's row and column marginals. Cells
    with expected count 0 contribute 0, as do G cells with observed count 0.
    """
    kind = TestKind.parse(kind)
    if kind not in (TestKind.CHI_SQUARED, TestKind.G_TEST):
        raise ValueError(f"contingency_statistic needs chi-squared or g-test, got {kind.value}")
    if blocks.empty:
        raise UndefinedStatisticError("no blocks survived the block-size floor")
    total = 0.0
    for table in blocks.tables():
        obs = table.astype(np.float64)
        n = obs.sum()
        if n == 0:
            continue
        exp = obs.sum(axis=1, keepdims=True) * obs.sum(axis=0, keepdims=True) / n
        live = exp > 0
        if kind is TestKind.CHI_SQUARED:
            total += float((((obs - exp) ** 2)[live] / exp[live]).sum())
        else:
            live &= obs > 0
            total += float(2.0 * (obs[live] * np.log(obs[live] / exp[live])).sum())
    return total
