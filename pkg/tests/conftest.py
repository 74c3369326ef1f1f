"""Shared fixtures: the six-tuple worked example and independent oracles.

The brute-force linkage oracle deliberately avoids the library's
combinatorics: it walks every bitmask of length N, filters by popcount,
accumulates products in plain Python, and renormalizes from scratch.
"""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path

import pytest

from fgaudit.dataset import DatasetConfig, load_anonymized, load_table

DATA = Path(__file__).parent / "data"


@pytest.fixture
def six_tuple_config() -> DatasetConfig:
    return DatasetConfig(
        qi_attributes=("A",),
        sensitive_attribute="X",
        sensitive_values=frozenset({"x"}),
    )


@pytest.fixture
def six_tuple_table(six_tuple_config):
    return load_table(str(DATA / "example41_raw.csv"), six_tuple_config)


@pytest.fixture
def six_tuple_dataset(six_tuple_config):
    return load_anonymized(
        str(DATA / "example41_qi.csv"),
        str(DATA / "example41_sensitive.csv"),
        six_tuple_config,
    )


def naive_linkage(factors, n_x):
    """Per-member target-linkage probabilities by exhaustive enumeration."""
    n = len(factors)
    weights = {}
    for mask in range(1 << n):
        if bin(mask).count("1") != n_x:
            continue
        w = 1.0
        for j in range(n):
            w *= factors[j] if (mask >> j) & 1 else 1.0 - factors[j]
        weights[mask] = w
    total = sum(weights.values())
    link = [0.0] * n
    for mask, w in weights.items():
        share = w / total if total > 0 else 1.0 / len(weights)
        for j in range(n):
            if (mask >> j) & 1:
                link[j] += share
    return link


def naive_linkage_exact(factors, n_x):
    """Same oracle over exact rationals, for hand-checkable expected values."""
    factors = [Fraction(f) for f in factors]
    n = len(factors)
    weights = {}
    for mask in range(1 << n):
        if bin(mask).count("1") != n_x:
            continue
        w = Fraction(1)
        for j in range(n):
            w *= factors[j] if (mask >> j) & 1 else 1 - factors[j]
        weights[mask] = w
    total = sum(weights.values())
    link = [Fraction(0)] * n
    for mask, w in weights.items():
        for j in range(n):
            if (mask >> j) & 1:
                link[j] += w / total
    return link
