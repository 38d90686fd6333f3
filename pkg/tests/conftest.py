"""Shared fixtures and brute-force oracles."""

from __future__ import annotations

import math

import numpy as np
import pytest

from privpc.data import Dataset, builtin_network, forward_sample


def kendall_oracle(a, b) -> float:
    """O(n^2) pair count; tied pairs count as neither concordant nor discordant."""
    n = len(a)
    c = d = 0
    for i in range(n):
        for j in range(i + 1, n):
            s = (a[i] - a[j]) * (b[i] - b[j])
            if s > 0:
                c += 1
            elif s < 0:
                d += 1
    return 2 * abs(c - d) / (n * (n - 1))


def average_ranks(x) -> list[float]:
    order = sorted(range(len(x)), key=lambda i: x[i])
    ranks = [0.0] * len(x)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and x[order[j + 1]] == x[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman_oracle(a, b) -> float:
    n = len(a)
    ra, rb = average_ranks(a), average_ranks(b)
    s = sum((x - y) ** 2 for x, y in zip(ra, rb))
    return abs(1 - 6 * s / (n * (n * n - 1)))


def smooth_median_oracle(x, eps, lower, upper) -> float:
    n = len(x)
    m = (n + 1) // 2

    def at(i):
        if i < 1:
            return lower
        if i > n:
            return upper
        return x[i - 1]

    best = 0.0
    for k in range(n + 1):
        local = max(at(m + t) - at(m + t - k - 1) for t in range(k + 2))
        best = max(best, math.exp(-k * eps) * local)
    return best


def f1_of(skeleton, spec) -> float:
    from privpc.evaluation import f1_score

    return f1_score(skeleton, spec.edges)[2]


@pytest.fixture(scope="session")
def earthquake_100k():
    spec = builtin_network("earthquake")
    return spec, forward_sample(spec, 100000, 0)


@pytest.fixture
def tiny_dataset():
    rows = np.array([[0, 1, 0], [1, 0, 1], [1, 1, 1], [0, 0, 0], [1, 1, 0], [0, 1, 1]])
    return Dataset.from_array(rows, columns=["A", "B", "C"])
