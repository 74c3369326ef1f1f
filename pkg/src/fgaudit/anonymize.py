"""l-diverse bucketization of raw tables.

The default strategy buckets rows by sensitive value and repeatedly draws
one row from each of the l currently-largest buckets, giving groups of size
l or l+1 in which every sensitive value appears at most once.  A seeded
random partitioner is available as a grouping-insensitive baseline.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass

from .dataset import AGroup, AnonymizedDataset, Schema, Table
from .errors import DataError, NotLEligibleError

RANDOM_PARTITION_RETRIES = 50


@dataclass(frozen=True)
class AnonymizerConfig:
    l: int
    strategy: str = "anatomy"
    rng_seed: int = 0

    def __post_init__(self):
        if self.l < 2:
            raise DataError(f"l must be >= 2, got {self.l}")
        if self.strategy not in ("anatomy", "random_partition"):
            raise DataError(f"unknown strategy {self.strategy!r}")


def check_l_diversity(dataset: AnonymizedDataset, l: int) -> bool:
    """True iff no group's most frequent sensitive value exceeds 1/l of its size."""
    for g in dataset.groups:
        top = max(Counter(g.sensitive_multiset).values())
        if top * l > len(g):
            return False
    return True


def _check_eligibility(values: list[str], l: int):
    n = len(values)
    top_value, top = Counter(values).most_common(1)[0]
    if top * l > n:
        raise NotLEligibleError(
            f"not l-eligible: value {top_value!r} occurs {top} times in {n} rows "
            f"(limit {n // l} for l={l})"
        )


def _build_dataset(table: Table, groups_rows: list[list[int]]) -> AnonymizedDataset:
    schema = table.schema
    qi_rows = tuple(table.qi_values(rid) for rid in range(len(table)))
    groups = tuple(
        AGroup(
            gid=gid,
            member_row_ids=tuple(rows),
            sensitive_multiset=tuple(sorted(table.sensitive_value(r) for r in rows)),
        )
        for gid, rows in enumerate(groups_rows)
    )
    out_schema = Schema(
        attributes=(*schema.qi_attributes, schema.sensitive_attribute),
        qi_attributes=schema.qi_attributes,
        sensitive_attribute=schema.sensitive_attribute,
        sensitive_value_set=schema.sensitive_value_set,
    )
    return AnonymizedDataset(schema=out_schema, qi_rows=qi_rows, groups=groups)


def _anatomy(table: Table, config: AnonymizerConfig) -> list[list[int]]:
    values = table.column(table.schema.sensitive_attribute)
    buckets: dict[str, list[int]] = {}
    for rid, v in enumerate(values):
        buckets.setdefault(v, []).append(rid)
    rng = random.Random(config.rng_seed)
    order = sorted(buckets)
    for v in order:
        rng.shuffle(buckets[v])

    groups: list[list[int]] = []
    group_values: list[set[str]] = []
    while sum(1 for v in order if buckets[v]) >= config.l:
        largest = sorted(
            (v for v in order if buckets[v]), key=lambda v: (-len(buckets[v]), v)
        )[: config.l]
        groups.append([buckets[v].pop() for v in largest])
        group_values.append(set(largest))

    extended: set[int] = set()
    for v in order:
        for rid in buckets[v]:
            host = next(
                (
                    i
                    for i in range(len(groups))
                    if i not in extended and v not in group_values[i]
                ),
                None,
            )
            if host is None:
                raise NotLEligibleError(
                    f"not l-eligible: leftover row with value {v!r} fits no group"
                )
            groups[host].append(rid)
            group_values[host].add(v)
            extended.add(host)
    return groups


def _random_partition(table: Table, config: AnonymizerConfig) -> list[list[int]]:
    values = table.column(table.schema.sensitive_attribute)
    n = len(values)
    l = config.l
    rng = random.Random(config.rng_seed)
    order = list(range(n))
    for attempt in range(RANDOM_PARTITION_RETRIES):
        rng.shuffle(order)
        n_groups = n // l
        groups: list[list[int]] = [[] for _ in range(n_groups)]
        group_values: list[Counter] = [Counter() for _ in range(n_groups)]
        leftovers: list[int] = []
        for rid in order:
            v = values[rid]
            placed = False
            for i in range(n_groups):
                if len(groups[i]) < l and group_values[i][v] == 0:
                    groups[i].append(rid)
                    group_values[i][v] += 1
                    placed = True
                    break
            if not placed:
                leftovers.append(rid)
        ok = all(len(g) == l for g in groups)
        for rid in leftovers:
            if not ok:
                break
            v = values[rid]
            host = next(
                (
                    i
                    for i in range(n_groups)
                    if (group_values[i][v] + 1) * l <= len(groups[i]) + 1
                ),
                None,
            )
            if host is None:
                ok = False
                break
            groups[host].append(rid)
            group_values[host][v] += 1
        if ok:
            return groups
    raise NotLEligibleError(
        f"random partition failed after {RANDOM_PARTITION_RETRIES} shuffles"
    )


def anonymize(table: Table, config: AnonymizerConfig) -> AnonymizedDataset:
    """Partition a table into l-diverse groups and erase per-row linkage."""
    if len(table) < config.l:
        raise NotLEligibleError(f"table has fewer than l={config.l} rows")
    values = table.column(table.schema.sensitive_attribute)
    _check_eligibility(values, config.l)
    # eligible tables always carry >= l distinct values; guard kept for clarity
    if config.strategy == "anatomy" and len(set(values)) < config.l:
        raise NotLEligibleError(
            f"anatomy needs at least l={config.l} distinct sensitive values, "
            f"found {len(set(values))}"
        )
    if config.strategy == "anatomy":
        groups_rows = _anatomy(table, config)
    else:
        groups_rows = _random_partition(table, config)
    dataset = _build_dataset(table, groups_rows)
    if not check_l_diversity(dataset, config.l):
        raise NotLEligibleError("internal: produced grouping violates l-diversity")
    return dataset
