"""Differential-privacy primitives.

Laplace noise, the sparse vector technique, the exponential mechanism,
one-off sieve-and-examine, its error bounds, and subsample-and-aggregate
with a smooth-sensitivity median for statistics whose global sensitivity
is unbounded.

Laplace sampling uses numpy's inverse-CDF sampler on doubles; it is not
hardened against floating-point side channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Iterator, Sequence

import numpy as np

from .data import Dataset, SubsampledDataset, subsample_indices
from .ledger import PrivacyLedger


class OutOfDomainError(ValueError):
    """Parameters outside the region where a bound is stated."""


class QuotaExhausted(RuntimeError):
    """The sparse vector has already emitted its quota of above-threshold answers."""


def sample_laplace(scale: float, rng: np.random.Generator) -> float:
    """One draw from the zero-mean Laplace density ``exp(-|x|/b) / (2b)``."""
    if not scale > 0 or not math.isfinite(scale):
        raise ValueError(f"Laplace scale must be positive and finite, got {scale}")
    return float(rng.laplace(0.0, scale))


def amplified_epsilon(n: int, m: int, eps: float) -> float:
    """Per-run epsilon that a sample of ``m`` of ``n`` rows may spend to cost ``eps/2`` overall.

    ``ln((n/m)(exp(eps/2) - 1) + 1)``, evaluated without overflowing for
    very large ``eps``.
    """
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    half = eps / 2.0
    if m == n:
        return half
    ratio = n / m
    if half < 30.0:
        return math.log1p(ratio * math.expm1(half))
    return half + math.log(ratio) + math.log1p((1.0 - ratio) / ratio * math.exp(-half))


# --------------------------------------------------------------------------
# Sparse vector technique
# --------------------------------------------------------------------------


def svt_noise_parameter(quota: int, eps: float, delta: float = 0.0) -> float:
    """``2c/eps`` for pure DP, ``sqrt(32 c ln(1/delta))/eps`` otherwise."""
    if quota < 1:
        raise ValueError("quota must be at least 1")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if delta == 0:
        return 2.0 * quota / eps
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in [0, 1)")
    return math.sqrt(32.0 * quota * math.log(1.0 / delta)) / eps


class SparseVector:
    """Online above-threshold answers with a quota of ``c`` positives.

    Threshold noise has scale ``sigma * sensitivity``; each query gets fresh
    noise of twice that scale. The noisy threshold is redrawn after every
    positive answer, and the instance halts after ``c`` of them.
    """

    def __init__(
        self,
        threshold: float,
        quota: int,
        epsilon: float,
        rng: np.random.Generator,
        delta: float = 0.0,
        sensitivity: float = 1.0,
    ):
        if not sensitivity > 0:
            raise ValueError("sensitivity must be positive")
        self.threshold = threshold
        self.quota = quota
        self.scale = svt_noise_parameter(quota, epsilon, delta) * sensitivity
        self.rng = rng
        self.count = 0
        self._noisy_threshold = threshold + sample_laplace(self.scale, rng)

    @property
    def halted(self) -> bool:
        return self.count >= self.quota

    def query(self, value: float) -> bool:
        if self.halted:
            raise QuotaExhausted(f"quota of {self.quota} above-threshold answers used")
        above = value + sample_laplace(2.0 * self.scale, self.rng) >= self._noisy_threshold
        if above:
            self.count += 1
            if not self.halted:
                self._noisy_threshold = self.threshold + sample_laplace(self.scale, self.rng)
        return above


def sparse_vector(
    queries: Iterable[tuple[Hashable, float]],
    threshold: float,
    quota: int,
    eps: float,
    rng: np.random.Generator,
    delta: float = 0.0,
    sensitivity: float = 1.0,
) -> Iterator[tuple[Hashable, bool]]:
    """Yield ``(id, above)`` per query; the stream closes once the quota is used.

    ``queries`` is consumed lazily, so a generator can adapt later queries to
    earlier answers.
    """
    sv = SparseVector(threshold, quota, eps, rng, delta=delta, sensitivity=sensitivity)
    for qid, value in queries:
        yield qid, sv.query(value)
        if sv.halted:
            return


def exponential_mechanism(
    candidates: Sequence, utilities: Sequence[float], eps: float, rng: np.random.Generator
):
    """Pick a candidate with probability proportional to ``exp(eps * u / 2)``."""
    if len(candidates) == 0:
        raise ValueError("candidate set is empty")
    if len(candidates) != len(utilities):
        raise ValueError("need one utility per candidate")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    u = np.asarray(utilities, dtype=np.float64)
    logits = eps * u / 2.0
    logits -= logits.max()
    weights = np.exp(logits)
    idx = rng.choice(len(candidates), p=weights / weights.sum())
    return candidates[int(idx)]


# --------------------------------------------------------------------------
# One-off sieve-and-examine
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SieveExamineConfig:
    """Parameters of one sieve-and-examine window.

    ``dataset_size`` is only needed where no dataset is at hand (the Monte
    Carlo simulator); it defaults to ``subsample_size``.
    """

    epsilon: float
    threshold: float
    tweak: float
    subsample_size: int
    full_sensitivity: float
    noise_seed: int | None = None
    dataset_size: int | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.tweak < 0:
            raise ValueError("tweak must be non-negative")
        if self.subsample_size < 1:
            raise ValueError("subsample_size must be at least 1")
        if not self.full_sensitivity > 0:
            raise ValueError("full_sensitivity must be positive")
        if self.dataset_size is not None and self.dataset_size < self.subsample_size:
            raise ValueError("dataset_size must be >= subsample_size")

    def eps_prime(self, n: int | None = None) -> float:
        n = n if n is not None else (self.dataset_size or self.subsample_size)
        return amplified_epsilon(n, self.subsample_size, self.epsilon)


Query = tuple[Hashable, Callable[[Dataset | SubsampledDataset], float]]


def one_off_sieve_and_examine(
    d: Dataset,
    queries: Iterable[Query],
    cfg: SieveExamineConfig,
    rng: np.random.Generator,
    ledger: PrivacyLedger | None = None,
) -> Hashable | None:
    """Return the id of the first query that passes both stages, else ``None``.

    The sieve runs an above-threshold test on a fresh subsample against the
    tweaked threshold ``T - t``; the first query through is re-evaluated on
    the full data with Laplace noise against ``T``. The window costs
    ``(eps, 0)``: ``eps/2`` for the amplified sieve plus ``eps/2`` for the
    examine. The charge is recorded even when nothing passes the sieve.
    """
    n, m = d.n, cfg.subsample_size
    if m > n:
        raise ValueError(f"subsample size {m} exceeds dataset size {n}")
    delta = cfg.full_sensitivity
    eps_prime = amplified_epsilon(n, m, cfg.epsilon)
    sub = SubsampledDataset(d, subsample_indices(n, m, rng))
    noisy_threshold = cfg.threshold - cfg.tweak + sample_laplace(2.0 * delta / eps_prime, rng)

    chosen = None
    for qid, fn in queries:
        if fn(sub) + sample_laplace(4.0 * delta / eps_prime, rng) >= noisy_threshold:
            chosen = (qid, fn)
            break

    result = None
    if chosen is not None:
        qid, fn = chosen
        # examine spends eps/2: Laplace scale delta / (eps/2)
        if fn(d) + sample_laplace(2.0 * delta / cfg.epsilon, rng) >= cfg.threshold:
            result = qid
    if ledger is not None:
        ledger.charge(cfg.epsilon, 0.0, "sieve-and-examine")
    return result


# --------------------------------------------------------------------------
# Error bounds for a single sieve-and-examine window
# --------------------------------------------------------------------------


def _sieve_miss_bound(gap: float, eps_prime: float, delta_sens: float) -> float:
    # tail bound for (query noise - threshold noise) exceeding ``gap``
    r = eps_prime * gap / delta_sens
    return math.exp(-r / 6.0) - 0.25 * math.exp(-r / 3.0)


def _check_bound_args(eps_prime: float, delta_sens: float) -> None:
    if not eps_prime > 0:
        raise ValueError("eps_prime must be positive")
    if not delta_sens > 0:
        raise ValueError("delta_sens must be positive")


def type1_bound(alpha: float, t: float, eps_prime: float, delta_sens: float) -> float:
    """Bound on the chance that the sieve filters out a query at ``T + alpha``.

    ``exp(-eps'(alpha+t)/(6 Delta)) - exp(-eps'(alpha+t)/(3 Delta)) / 4``,
    stated for ``alpha + t >= 0``.
    """
    _check_bound_args(eps_prime, delta_sens)
    if alpha + t < 0:
        raise OutOfDomainError(f"type-I bound needs alpha + t >= 0, got {alpha + t}")
    return _sieve_miss_bound(alpha + t, eps_prime, delta_sens)


def type2_bound(alpha: float, t: float, eps: float, eps_prime: float, delta_sens: float) -> float:
    """Bound on the chance that a query at ``T - alpha`` passes sieve and examine.

    ``exp(-(12 eps alpha + eps'(alpha-t))/(6 Delta))
    - exp(-(6 eps alpha + eps'(alpha-t))/(3 Delta)) / 4``, stated for
    ``alpha >= t``. This is the sieve factor times ``exp(-2 eps alpha / Delta)``
    for the examine.
    """
    _check_bound_args(eps_prime, delta_sens)
    if not eps > 0:
        raise ValueError("eps must be positive")
    if alpha < t:
        raise OutOfDomainError(f"type-II bound needs alpha >= t, got alpha={alpha}, t={t}")
    gap = eps_prime * (alpha - t)
    return math.exp(-(12.0 * eps * alpha + gap) / (6.0 * delta_sens)) - 0.25 * math.exp(
        -(6.0 * eps * alpha + gap) / (3.0 * delta_sens)
    )


def type2_bound_examine_tail(alpha: float, t: float, eps: float, eps_prime: float, delta_sens: float) -> float:
    """Type-II bound using the exact tail of the examine noise actually drawn.

    The examine adds Laplace noise of scale ``2 Delta / eps``, whose upper tail
    at ``alpha`` is ``exp(-eps alpha / (2 Delta)) / 2``; the sieve factor is
    the same as in ``type2_bound``.
    """
    _check_bound_args(eps_prime, delta_sens)
    if alpha < t:
        raise OutOfDomainError(f"type-II bound needs alpha >= t, got alpha={alpha}, t={t}")
    examine = 0.5 * math.exp(-eps * alpha / (2.0 * delta_sens))
    return _sieve_miss_bound(alpha - t, eps_prime, delta_sens) * examine


@dataclass(frozen=True)
class ErrorRates:
    type1: float
    type2: float
    trials: int

    def stderr(self, rate: float) -> float:
        return math.sqrt(max(rate * (1.0 - rate), 0.0) / self.trials)


def monte_carlo_error_rates(
    alpha: float, cfg: SieveExamineConfig, trials: int, rng: np.random.Generator
) -> ErrorRates:
    """Simulate one window whose subsample value equals its full-data value.

    Type I: a query at ``T + alpha`` is rejected by the sieve. Type II: a
    query at ``T - alpha`` passes the sieve and the examine. Noise scales are
    the ones ``one_off_sieve_and_examine`` draws.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    delta = cfg.full_sensitivity
    eps_prime = cfg.eps_prime()
    thr_noise = rng.laplace(0.0, 2.0 * delta / eps_prime, trials)
    query_noise = rng.laplace(0.0, 4.0 * delta / eps_prime, trials)
    examine_noise = rng.laplace(0.0, 2.0 * delta / cfg.epsilon, trials)
    noisy_threshold = cfg.threshold - cfg.tweak + thr_noise

    high = cfg.threshold + alpha
    type1 = float(np.mean(high + query_noise < noisy_threshold))
    low = cfg.threshold - alpha
    passed = (low + query_noise >= noisy_threshold) & (low + examine_noise >= cfg.threshold)
    type2 = float(np.mean(passed))
    return ErrorRates(type1, type2, trials)


# --------------------------------------------------------------------------
# Subsample-and-aggregate with a smooth-sensitivity median
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AdmissibleNoise:
    """Laplace noise admissible for smooth-sensitivity calibration.

    ``alpha`` divides the smooth sensitivity; ``beta`` is the smoothing
    parameter the pair is admissible for.
    """

    alpha: float
    beta: float


def laplace_admissible(eps: float, delta: float) -> AdmissibleNoise:
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    return AdmissibleNoise(alpha=eps / 2.0, beta=eps * math.log(1.0 / delta) / 2.0)


def smooth_sensitivity_median(values: Sequence[float], eps: float, lower: float, upper: float) -> float:
    """Smooth sensitivity of the median of sorted ``values`` in ``[lower, upper]``.

    ``max_k exp(-k eps) max_{0<=t<=k+1} (x[m+t] - x[m+t-k-1])`` with 1-based
    indices, ``m = ceil(n/2)``, and ``x[i]`` equal to ``lower`` below 1 and
    ``upper`` above ``n``.
    """
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n == 0:
        raise ValueError("need at least one value")
    if not lower <= upper:
        raise ValueError("lower must not exceed upper")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if np.any(np.diff(x) < 0):
        raise ValueError("values must be sorted ascending")
    if x[0] < lower or x[-1] > upper:
        raise ValueError("values must lie in [lower, upper]")

    # padded[i + n] holds 1-based x_i for i in [-n, 2n + 1]
    padded = np.concatenate([np.full(n + 1, float(lower)), x, np.full(n + 1, float(upper))])
    offset = n
    mid = (n + 1) // 2
    span = float(upper) - float(lower)
    best = 0.0
    for k in range(n + 1):
        weight = math.exp(-k * eps)
        if weight * span < best:
            break
        top = padded[offset + mid: offset + mid + k + 2]
        bottom = padded[offset + mid - k - 1: offset + mid + 1]
        local = float(np.max(top - bottom))
        best = max(best, weight * local)
    return best


def median_lower(sorted_values: np.ndarray) -> float:
    """The ``ceil(n/2)``-th order statistic, matching the smooth-sensitivity index."""
    return float(sorted_values[(sorted_values.size + 1) // 2 - 1])


@dataclass(frozen=True)
class ReconciledResult:
    value: float
    median: float
    smooth_sensitivity: float
    block_values: tuple[float, ...]
    noise: AdmissibleNoise


def reconciled_test(
    d: Dataset,
    statistic: Callable[[SubsampledDataset], float],
    m_blocks: int,
    eps: float,
    delta: float,
    lower: float,
    upper: float,
    rng: np.random.Generator,
    ledger: PrivacyLedger | None = None,
    smoothing: float | None = None,
) -> ReconciledResult:
    """Private release of a statistic through subsample-and-aggregate.

    Rows are shuffled into ``m_blocks`` equal blocks (the remainder is
    dropped), the statistic is clipped to ``[lower, upper]`` on each block,
    and the median is released with Laplace noise scaled by its smooth
    sensitivity over ``alpha = eps/2``. ``smoothing`` defaults to ``eps``.
    """
    if m_blocks < 3:
        raise ValueError("m_blocks must be at least 3")
    if m_blocks > d.n:
        raise ValueError(f"m_blocks={m_blocks} exceeds the {d.n} available rows")
    size = d.n // m_blocks
    if size < 1:
        raise ValueError(f"cannot split {d.n} rows into {m_blocks} non-empty blocks")
    noise = laplace_admissible(eps, delta)
    perm = rng.permutation(d.n)[: size * m_blocks].reshape(m_blocks, size)
    block_values = np.empty(m_blocks)
    for b in range(m_blocks):
        part = SubsampledDataset(d, np.sort(perm[b]))
        block_values[b] = float(statistic(part))
    clipped = np.sort(np.clip(block_values, lower, upper))
    med = median_lower(clipped)
    smooth = smooth_sensitivity_median(clipped, eps if smoothing is None else smoothing, lower, upper)
    value = med + smooth / noise.alpha * float(rng.laplace(0.0, 1.0))
    if ledger is not None:
        ledger.charge(eps, delta, "reconciled-test")
    return ReconciledResult(value, med, smooth, tuple(float(v) for v in clipped), noise)


def contingency_query(i: int, j: int, S: Sequence[int] = (), kind: str = "chi2", min_block_size: int = 2):
    """Per-block statistic for ``reconciled_test``: chi-squared or G of ``i`` vs ``j`` given ``S``.

    A block in which no stratum survives the size floor scores 0.
    """
    from .data import partition_blocks
    from .stats import TestKind, contingency_statistic

    test_kind = TestKind.parse(kind)

    def statistic(part) -> float:
        blocks = partition_blocks(part, i, j, tuple(S), min_block_size)
        if blocks.empty:
            return 0.0
        return contingency_statistic(blocks, test_kind)

    return statistic
