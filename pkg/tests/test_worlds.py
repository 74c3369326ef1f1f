"""World enumeration, weighting, linkage, and expected counts."""

import math
import random
from fractions import Fraction

import numpy as np
import pytest

from conftest import naive_linkage, naive_linkage_exact
from fgaudit.dataset import AGroup, AnonymizedDataset, Schema, Signature
from fgaudit.errors import DataError, WorldExplosionError
from fgaudit.worlds import (
    GlobalDistribution,
    enumerate_worlds,
    expected_count,
    linkage_vector,
    member_factors,
    tuple_linkage,
    weigh_with_factors,
    weigh_worlds,
)

X = frozenset({"x"})


def group_of(values, gid=0, first_rid=0):
    rids = tuple(range(first_rid, first_rid + len(values)))
    return AGroup(gid=gid, member_row_ids=rids, sensitive_multiset=tuple(values))


def dataset_of(signature_labels, multisets):
    """One-QI-attribute dataset; each row's QI value is its signature label."""
    schema = Schema(("A", "X"), ("A",), "X")
    rows = []
    groups = []
    rid = 0
    for gid, (labels, values) in enumerate(zip(signature_labels, multisets)):
        assert len(labels) == len(values)
        members = []
        for lab in labels:
            rows.append((lab,))
            members.append(rid)
            rid += 1
        groups.append(
            AGroup(gid=gid, member_row_ids=tuple(members), sensitive_multiset=tuple(values))
        )
    return AnonymizedDataset(schema=schema, qi_rows=tuple(rows), groups=tuple(groups))


def dist_of(fmap, fallback=None):
    return GlobalDistribution(
        attribute_set=("A",),
        target=X,
        entries={Signature(("A",), (k,)): v for k, v in fmap.items()},
        fallback_rate=fallback,
    )


class TestEnumerate:
    def test_six_worlds_in_table_order(self):
        g = group_of(["x", "x", "n1", "n2"])
        ws = enumerate_worlds(g, X)
        assert ws.n_x == 2
        assert ws.bit_vectors() == [
            (1, 1, 0, 0),
            (1, 0, 1, 0),
            (1, 0, 0, 1),
            (0, 1, 1, 0),
            (0, 1, 0, 1),
            (0, 0, 1, 1),
        ]

    def test_all_target_single_world(self):
        g = group_of(["x", "x", "x"])
        ws = enumerate_worlds(g, X)
        assert len(ws) == 1
        assert ws.bit_vectors() == [(1, 1, 1)]

    def test_large_group_count(self):
        g = group_of(["x"] * 8 + ["n"] * 15)
        ws = enumerate_worlds(g, X, cap=500_000)
        assert len(ws) == 490_314

    def test_cap_exceeded_names_group(self):
        g = group_of(["x"] * 8 + ["n"] * 15, gid=77)
        with pytest.raises(WorldExplosionError, match="group 77"):
            enumerate_worlds(g, X, cap=100_000)


class TestWeigh:
    def test_worked_example_weights(self):
        g = group_of(["x", "x", "n1", "n2"])
        ws = enumerate_worlds(g, X)
        weigh_with_factors(ws, [0.5, 0.5, 0.2, 0.2])
        expected = [0.16, 0.04, 0.04, 0.04, 0.04, 0.01]
        assert np.allclose(ws.weights, expected, rtol=0, atol=1e-15)
        assert abs(ws.weights.sum() - 0.33) <= 1e-15
        assert abs(ws.conditionals[0] - 0.16 / 0.33) <= 1e-12
        assert not ws.degenerate

    def test_uniform_factors_give_uniform_conditionals(self):
        g = group_of(["x", "n1", "n2", "n3", "n4"])
        ws = enumerate_worlds(g, X)
        weigh_with_factors(ws, [0.37] * 5)
        assert np.allclose(ws.conditionals, 1.0 / len(ws), atol=1e-12)
        assert np.allclose(ws.weights, 0.37 * 0.63**4, atol=1e-15)

    def test_certain_factors(self):
        # f=1 for the first member, f=0 for the second: one world keeps all mass
        g = group_of(["x", "n1"])
        ws = enumerate_worlds(g, X)
        weigh_with_factors(ws, [1.0, 0.0])
        assert list(ws.conditionals) == [1.0, 0.0]
        assert not ws.degenerate

    def test_all_zero_weights_fall_back_uniform(self):
        g = group_of(["x", "n1"])
        ws = enumerate_worlds(g, X)
        weigh_with_factors(ws, [0.0, 0.0])
        assert ws.degenerate
        assert np.allclose(ws.conditionals, 0.5)

    def test_log_space_matches_direct(self):
        rng = random.Random(3)
        n = 33  # above the log-space threshold
        factors = [rng.uniform(0.05, 0.95) for _ in range(n)]
        values = ["x"] * 2 + [f"n{i}" for i in range(n - 2)]
        ws = weigh_with_factors(enumerate_worlds(group_of(values), X), factors)
        # plain-python products over the same worlds as reference
        ref = []
        for mask in ws.worlds:
            w = 1.0
            for j in range(n):
                w *= factors[j] if (int(mask) >> j) & 1 else 1.0 - factors[j]
            ref.append(w)
        total = sum(ref)
        assert np.allclose(ws.conditionals, [w / total for w in ref], rtol=0, atol=1e-12)
        assert abs(ws.conditionals.sum() - 1.0) <= 1e-9

    def test_resolves_factors_from_distribution(self):
        ds = dataset_of([("s1", "s1", "s2", "s2")], [("x", "x", "n1", "n2")])
        dist = dist_of({"s1": 0.5, "s2": 0.2})
        ws = enumerate_worlds(ds.groups[0], X)
        weigh_worlds(ws, dist, ds)
        assert abs(ws.weights.sum() - 0.33) <= 1e-15

    def test_unmatched_member_uses_fallback(self):
        ds = dataset_of([("s1", "s9")], [("x", "n1")])
        dist = dist_of({"s1": 0.5}, fallback=0.5)
        assert member_factors(ds, ds.groups[0], dist) == [0.5, 0.5]
        with pytest.raises(DataError, match="no retained signature"):
            member_factors(ds, ds.groups[0], dist_of({"s1": 0.5}))


class TestLinkage:
    def test_worked_example_value(self):
        g = group_of(["x", "x", "n1", "n2"])
        ws = weigh_with_factors(enumerate_worlds(g, X), [0.5, 0.5, 0.2, 0.2])
        # paper rounding: 0.48 + 0.12 + 0.12 = 0.72; exact value 24/33
        assert abs(tuple_linkage(ws, 0) - 24 / 33) <= 1e-9
        assert round(0.48 + 0.12 + 0.12, 2) == 0.72

    def test_exact_rational_cross_check(self):
        exact = naive_linkage_exact([Fraction(1, 2)] * 2 + [Fraction(1, 5)] * 2, 2)
        assert exact[0] == Fraction(24, 33)

    def test_uniform_gives_count_fraction(self):
        g = group_of(["x", "n1", "n2"])
        ws = weigh_with_factors(enumerate_worlds(g, X), [0.6, 0.6, 0.6])
        for rid in range(3):
            assert abs(tuple_linkage(ws, rid) - 1 / 3) <= 1e-9

    def test_row_not_in_group(self):
        g = group_of(["x", "n1"])
        ws = weigh_with_factors(enumerate_worlds(g, X), [0.5, 0.5])
        with pytest.raises(DataError):
            tuple_linkage(ws, 99)


class TestProperties:
    """Randomized invariants: normalization, complement, mass, symmetry, oracle."""

    def random_case(self, rng, max_n=8):
        n = rng.randrange(2, max_n + 1)
        n_x = rng.randrange(0, n + 1)
        values = ["x"] * n_x + [f"n{i}" for i in range(n - n_x)]
        rng.shuffle(values)
        factors = [rng.uniform(0.01, 0.99) for _ in range(n)]
        return values, factors

    def test_randomized_invariants(self):
        rng = random.Random(2024)
        for _ in range(300):
            values, factors = self.random_case(rng)
            g = group_of(values)
            ws = weigh_with_factors(enumerate_worlds(g, X), factors)
            link = linkage_vector(ws)
            assert abs(ws.conditionals.sum() - 1.0) <= 1e-9
            assert abs(link.sum() - ws.n_x) <= 1e-9
            # complement: mass of the worlds withholding the target from member j
            for j in range(len(g)):
                bit = (ws.worlds >> np.uint64(j)) & np.uint64(1)
                p_not = float(ws.conditionals[bit == 0].sum())
                assert abs(link[j] + p_not - 1.0) <= 1e-9

    def test_oracle_agreement(self):
        rng = random.Random(99)
        for _ in range(200):
            values, factors = self.random_case(rng)
            g = group_of(values)
            ws = weigh_with_factors(enumerate_worlds(g, X), factors)
            link = linkage_vector(ws)
            oracle = naive_linkage(factors, ws.n_x)
            assert np.allclose(link, oracle, rtol=0, atol=1e-9)

    def test_signature_symmetry(self):
        rng = random.Random(5)
        for _ in range(100):
            n = rng.randrange(2, 7)
            labels = [f"s{rng.randrange(3)}" for _ in range(n)]
            fmap = {f"s{i}": rng.uniform(0.05, 0.95) for i in range(3)}
            n_x = rng.randrange(0, n + 1)
            values = ["x"] * n_x + [f"n{i}" for i in range(n - n_x)]
            ds = dataset_of([labels], [values])
            ws = weigh_worlds(enumerate_worlds(ds.groups[0], X), dist_of(fmap), ds)
            link = linkage_vector(ws)
            by_label = {}
            for j, lab in enumerate(labels):
                by_label.setdefault(lab, []).append(link[j])
            for vals in by_label.values():
                assert max(vals) - min(vals) <= 1e-9


class TestExpectedCount:
    def test_two_matching_tuples_at_half(self):
        # a group of two same-signature members with one target value
        ds = dataset_of([("s1", "s1")], [("x", "n1")])
        dist = dist_of({"s1": 0.7})
        val = expected_count(ds, ds.groups[0], Signature(("A",), ("s1",)), dist, X)
        assert abs(val - 2 * 0.5) <= 1e-9

    def test_no_target_in_group(self):
        ds = dataset_of([("s1", "s2")], [("n1", "n2")])
        dist = dist_of({"s1": 0.4, "s2": 0.2})
        val = expected_count(ds, ds.groups[0], Signature(("A",), ("s1",)), dist, X)
        assert val == 0.0

    def test_worked_example_expected_count(self):
        ds = dataset_of([("s1", "s1", "s2", "s2")], [("x", "x", "n1", "n2")])
        dist = dist_of({"s1": 0.5, "s2": 0.2})
        val = expected_count(ds, ds.groups[0], Signature(("A",), ("s1",)), dist, X)
        assert abs(val - 48 / 33) <= 1e-9

    def test_no_matching_tuple_is_error(self):
        ds = dataset_of([("s1",)], [("x",)])
        dist = dist_of({"s1": 0.5, "s9": 0.5})
        with pytest.raises(DataError, match="no tuple"):
            expected_count(ds, ds.groups[0], Signature(("A",), ("s9",)), dist, X)
