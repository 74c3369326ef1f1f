"""Candidate attribute sets and their signatures, gated by sample size.

Signatures whose support falls below the gate threshold cannot yield a
reliable probability estimate and are dropped before any equation solving.
Support is anti-monotone: a signature over a larger attribute set can never
be more frequent than its restriction to a subset, so whole branches of the
signature lattice are pruned without counting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

from .dataset import AnonymizedDataset, Signature
from .errors import DataError


def required_sample_size(epsilon: float, sigma: float) -> int:
    """Smallest support giving error <= epsilon with failure chance <= sigma."""
    if epsilon <= 0:
        raise DataError(f"epsilon must be positive, got {epsilon}")
    if not 0 < sigma <= 1:
        raise DataError(f"sigma out of range (0, 1]: {sigma}")
    return math.ceil(math.log(2.0 / sigma) / (2.0 * epsilon * epsilon))


@dataclass(frozen=True)
class SampleGate:
    """Support threshold derived from the (epsilon, sigma) error/confidence pair."""

    epsilon: float
    sigma: float
    min_support: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "min_support", required_sample_size(self.epsilon, self.sigma)
        )


@dataclass
class AdmittedSignatures:
    """Signatures with enough support, keyed by attribute set.

    Signature order within a set is first-seen row order; ``pruned_sets``
    lists visited attribute sets that retained no signature at all.
    """

    gate: SampleGate
    by_attribute_set: dict[tuple[str, ...], dict[Signature, int]]
    pruned_sets: list[tuple[str, ...]] = field(default_factory=list)

    def attribute_sets(self) -> list[tuple[str, ...]]:
        return [a for a, sigs in self.by_attribute_set.items() if sigs]

    def total_signatures(self) -> int:
        return sum(len(s) for s in self.by_attribute_set.values())


def _count_level(
    dataset: AnonymizedDataset,
    attribute_set: tuple[str, ...],
    parent_admitted: dict[tuple[str, ...], int] | None,
) -> dict[tuple[str, ...], int]:
    """Support of each observed signature over ``attribute_set``.

    When ``parent_admitted`` is given (keyed by value tuples over the set's
    prefix), rows whose prefix signature was not admitted are skipped: by
    anti-monotonicity their full signature cannot reach the threshold either.
    """
    idx = [dataset.schema.qi_index(a) for a in attribute_set]
    counts: dict[tuple[str, ...], int] = {}
    for row in dataset.qi_rows:
        key = tuple(row[i] for i in idx)
        if parent_admitted is not None and key[:-1] not in parent_admitted:
            continue
        counts[key] = counts.get(key, 0) + 1
    return counts


def enumerate_admitted(
    dataset: AnonymizedDataset, gate: SampleGate, max_set_size: int = 3
) -> AdmittedSignatures:
    """Breadth-first walk of attribute sets, keeping gate-passing signatures."""
    if max_set_size < 1:
        raise DataError("max_set_size must be >= 1")
    qi = dataset.schema.qi_attributes
    limit = min(max_set_size, len(qi))
    result = AdmittedSignatures(gate=gate, by_attribute_set={})
    admitted_values: dict[tuple[str, ...], dict[tuple[str, ...], int]] = {}

    for size in range(1, limit + 1):
        for aset in combinations(qi, size):
            parent = admitted_values.get(aset[:-1]) if size > 1 else None
            if size > 1 and not parent:
                result.by_attribute_set[aset] = {}
                result.pruned_sets.append(aset)
                continue
            counts = _count_level(dataset, aset, parent)
            kept = {k: c for k, c in counts.items() if c >= gate.min_support}
            admitted_values[aset] = kept
            result.by_attribute_set[aset] = {
                Signature(aset, values): support for values, support in kept.items()
            }
            if not kept:
                result.pruned_sets.append(aset)
    return result
