import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import kendall_oracle, spearman_oracle
from privpc.data import Blocks, Dataset, partition_blocks
from privpc.stats import (
    DEFAULT_THRESHOLD,
    TestKind,
    UndefinedStatisticError,
    conditional_kendall_sensitivity,
    conditional_kendall_stat,
    conditional_spearman_sensitivity,
    conditional_spearman_stat,
    contingency_statistic,
    evaluate_test,
    kendall_sensitivity_unconditional,
    kendall_tau,
    score_from_tables,
    spearman_rho,
    spearman_sensitivity_unconditional,
)

W6 = 9 * 6 * 5 / (2 * 17)


def test_default_threshold_is_normal_quantile():
    assert DEFAULT_THRESHOLD == pytest.approx(-1.959963985, abs=1e-8)


@pytest.mark.parametrize(
    "a,b,tau",
    [((1, 2, 3), (1, 2, 3), 1.0), ((1, 2, 3), (1, 3, 2), 1 / 3), ((1, 2, 3), (3, 2, 1), 1.0)],
)
def test_kendall_examples(a, b, tau):
    assert kendall_tau(a, b) == pytest.approx(tau, abs=1e-15)


def test_kendall_signed_flag():
    assert kendall_tau((1, 2, 3), (3, 2, 1), signed=True) == pytest.approx(-1.0)


def test_kendall_ties_are_neither():
    # pairs: (0,0)-(0,1) tie in a, (0,0)-(1,1) concordant, (0,1)-(1,1) tie in b
    assert kendall_tau((0, 0, 1), (0, 1, 1)) == pytest.approx(2 * 1 / 6)


@pytest.mark.parametrize(
    "a,b,rho",
    [((1, 2, 3), (1, 2, 3), 1.0), ((1, 2, 3), (3, 2, 1), 1.0), ((1, 2, 3), (1, 3, 2), 0.5)],
)
def test_spearman_examples(a, b, rho):
    assert spearman_rho(a, b) == pytest.approx(rho, abs=1e-15)


@pytest.mark.parametrize("fn", [kendall_tau, spearman_rho])
def test_short_sequences_undefined(fn):
    with pytest.raises(UndefinedStatisticError):
        fn((1,), (1,))


def test_conditional_kendall_single_block():
    r = conditional_kendall_stat(Blocks.single(range(6), range(6)))
    assert r.raw_statistic == pytest.approx(math.sqrt(W6))
    assert r.raw_statistic == pytest.approx(2.81801, abs=1e-5)
    assert r.score == -r.raw_statistic


def test_conditional_kendall_zero_blocks():
    # tau = 0 on a 2x2 with one concordant and one discordant pair cancelling
    a, b = (0, 0, 1, 1), (0, 1, 1, 0)
    assert kendall_tau(a, b) == 0
    r = conditional_kendall_stat(Blocks((np.array(a), np.array(a)), (np.array(b), np.array(b))))
    assert r.raw_statistic == 0 and r.score == 0


def test_conditional_kendall_two_blocks_absolute_and_signed():
    up = np.arange(6)
    blocks = Blocks((up, up), (up, up[::-1].copy()))
    assert conditional_kendall_stat(blocks).raw_statistic == pytest.approx(math.sqrt(2 * W6))
    assert conditional_kendall_stat(blocks).raw_statistic == pytest.approx(3.9852, abs=1e-4)
    assert conditional_kendall_stat(blocks, signed=True).raw_statistic == pytest.approx(0.0, abs=1e-12)


def test_conditional_spearman_examples():
    assert conditional_spearman_stat(Blocks.single(range(5), range(5))).raw_statistic == pytest.approx(2.0)
    # sum d^2 = 10 = n(n^2-1)/6 for n=4
    zero = Blocks.single((1, 2, 3, 4), (2, 4, 1, 3))
    assert conditional_spearman_stat(zero).raw_statistic == pytest.approx(0.0)
    two = Blocks((np.arange(5), np.array([1, 2, 3])), (np.arange(5), np.array([1, 3, 2])))
    assert conditional_spearman_stat(two).raw_statistic == pytest.approx(5 / math.sqrt(6))
    assert conditional_spearman_stat(two).raw_statistic == pytest.approx(2.0412, abs=1e-4)


def test_empty_blocks_undefined():
    with pytest.raises(UndefinedStatisticError):
        conditional_kendall_stat(Blocks((), ()))


def test_kendall_sensitivity_formula_and_limit():
    n, k, c1 = 1001, 1, 10
    c2 = 9 * c1 / (2 * (2 * c1 + 5))
    expected = 27 / (4 * math.sqrt(c2 * (n - k))) + 9 / (2 * c1 * math.sqrt(c2 * (n - k)))
    assert conditional_kendall_sensitivity(n, k, c1).value == pytest.approx(expected)
    big = conditional_kendall_sensitivity(10**6 + 1, 1, 10**9).value
    assert big * math.sqrt(10**6) == pytest.approx(4.5, rel=1e-6)


def test_kendall_sensitivity_monotone_in_c1():
    values = [conditional_kendall_sensitivity(1000, 3, c).value for c in (2, 5, 20, 100)]
    assert values == sorted(values, reverse=True)


def test_sensitivity_argument_errors():
    with pytest.raises(ValueError):
        conditional_kendall_sensitivity(3, 3, 5)
    with pytest.raises(ValueError):
        conditional_spearman_sensitivity(3, 4, 5)
    with pytest.raises(ValueError):
        kendall_sensitivity_unconditional(1)


def test_unconditional_sensitivity_examples():
    assert kendall_sensitivity_unconditional(3).value == 1
    assert kendall_sensitivity_unconditional(2).value == 2
    assert spearman_sensitivity_unconditional(10).value == 3


def test_spearman_sensitivity_example():
    assert conditional_spearman_sensitivity(100001, 1, 5).value == pytest.approx(37 / math.sqrt(100000))
    assert conditional_spearman_sensitivity(100001, 1, 5).value == pytest.approx(0.11700, abs=1e-5)


def test_contingency_examples():
    flat = Blocks.single((0, 0, 1, 1), (0, 1, 0, 1))
    assert contingency_statistic(flat, "chi2") == pytest.approx(0.0)
    a = [0] * 10 + [1] * 10
    diag = Blocks.single(a, a)
    assert contingency_statistic(diag, "chi2") == pytest.approx(20.0)
    assert contingency_statistic(diag, "g") == pytest.approx(40 * math.log(2))


def test_rank_kinds_rejected_for_contingency():
    with pytest.raises(ValueError):
        contingency_statistic(Blocks.single((0, 1), (0, 1)), TestKind.KENDALL)


def test_score_from_tables_matches_blocks():
    rng = np.random.default_rng(4)
    rows = rng.integers(0, 3, (400, 4))
    d = Dataset.from_array(rows, cardinalities=[3] * 4)
    for kind in (TestKind.KENDALL, TestKind.SPEARMAN):
        blocks = partition_blocks(d, 0, 1, (2, 3), 5)
        ref = (conditional_kendall_stat if kind is TestKind.KENDALL else conditional_spearman_stat)(blocks)
        fast = evaluate_test(d.rows, d.cardinalities, 0, 1, (2, 3), kind, 5)
        assert fast.raw_statistic == pytest.approx(ref.raw_statistic, rel=1e-12)
        assert fast.blocks_used == ref.blocks_used == blocks.k
        assert score_from_tables(np.stack(blocks.tables()), kind).score == pytest.approx(ref.score, rel=1e-12)


def test_evaluate_test_empty_is_none():
    rows = np.column_stack([np.zeros(4, int), np.zeros(4, int), np.arange(4)])
    assert evaluate_test(rows, (1, 1, 4), 0, 1, (2,), TestKind.KENDALL, 2) is None


def test_random_sequences_against_oracles():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 51))
        levels = int(rng.integers(1, 5))
        a = rng.integers(0, levels, n).tolist()
        b = rng.integers(0, int(rng.integers(1, 5)), n).tolist()
        assert kendall_tau(a, b) == pytest.approx(kendall_oracle(a, b), abs=1e-12)
        assert spearman_rho(a, b) == pytest.approx(spearman_oracle(a, b), abs=1e-12)


seqs = st.integers(2, 40).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 3), min_size=n, max_size=n), st.lists(st.integers(0, 3), min_size=n, max_size=n))
)


@settings(max_examples=200, deadline=None)
@given(seqs)
def test_rank_statistic_properties(pair):
    a, b = pair
    tau, rho = kendall_tau(a, b), spearman_rho(a, b)
    assert 0 <= tau <= 1 + 1e-12 and 0 <= rho <= 1 + 1e-12
    assert tau == pytest.approx(kendall_tau(b, a))
    assert rho == pytest.approx(spearman_rho(b, a))
    # invariant under a monotone relabel
    assert kendall_tau([2 * x + 7 for x in a], b) == pytest.approx(tau)
    # reversing one coordinate flips sign only
    assert kendall_tau([-x for x in a], b) == pytest.approx(tau)
