"""Possible-world enumeration and per-tuple linkage probabilities.

A group's sensitive multiset is collapsed to (n_x copies of the target,
N - n_x copies of its complement) before enumeration; distinct non-target
values are irrelevant here.  Each world is one assignment of the target to
exactly n_x members, stored as an integer bitmask with bit j set when member
j (position j in the group's member list) receives the target value.  The
enumeration order follows ascending lexicographic order of the assigned
position sets, i.e. all worlds giving the target to member 0 come first.

World weights are the product of the per-member probabilities under a
global distribution; conditionals renormalize the weights within the group.
For groups larger than 30 members the products are taken in log space and
exponentiated after max-subtraction to avoid underflow.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .dataset import AGroup, AnonymizedDataset, Signature
from .errors import DataError, WorldExplosionError

log = logging.getLogger(__name__)

DEFAULT_WORLD_CAP = 2_000_000
LOG_SPACE_THRESHOLD = 30


@dataclass(frozen=True)
class GlobalDistribution:
    """Per-signature probability of linking to a target sensitive value set.

    ``entries`` maps each retained signature to f = p(signature : target);
    the complement 1 - f is implicit.  ``fallback_rate`` is the dataset-wide
    base rate of the target, used for members whose signature was not
    retained; None means unmatched members are an error.
    """

    attribute_set: tuple[str, ...]
    target: frozenset[str]
    entries: Mapping[Signature, float]
    sample_counts: Mapping[Signature, int] = field(default_factory=dict)
    fallback_rate: float | None = None

    def __post_init__(self):
        for sig, f in self.entries.items():
            if not 0.0 <= f <= 1.0:
                raise DataError(f"probability for {sig} out of [0,1]: {f}")
        if self.fallback_rate is not None and not 0.0 <= self.fallback_rate <= 1.0:
            raise DataError(f"fallback rate out of [0,1]: {self.fallback_rate}")


@dataclass
class WorldSet:
    """All possible worlds of one group for one target.

    ``worlds`` holds one bitmask per world; ``weights`` and ``conditionals``
    are unset until :func:`weigh_worlds` runs.  ``degenerate`` marks the
    all-zero-weight fallback where conditionals were set uniform.
    """

    group: AGroup
    n_x: int
    worlds: np.ndarray
    weights: np.ndarray | None = None
    conditionals: np.ndarray | None = None
    degenerate: bool = False

    def __len__(self):
        return len(self.worlds)

    def bit_vectors(self) -> list[tuple[int, ...]]:
        """Expand masks to explicit 0/1 vectors over members (test/debug aid)."""
        n = len(self.group)
        return [tuple((int(m) >> j) & 1 for j in range(n)) for m in self.worlds]


def enumerate_masks(n_members: int, n_x: int) -> np.ndarray:
    """Masks of all ways to assign the target to exactly n_x of n_members."""
    n_worlds = math.comb(n_members, n_x)
    return np.fromiter(
        (sum(1 << j for j in pos) for pos in combinations(range(n_members), n_x)),
        dtype=np.uint64,
        count=n_worlds,
    )


def enumerate_worlds(
    group: AGroup, target: frozenset[str] | set[str], cap: int = DEFAULT_WORLD_CAP
) -> WorldSet:
    """Enumerate every assignment of the group's target count to its members."""
    if cap < 1:
        raise DataError("world cap must be >= 1")
    n = len(group)
    n_x = group.target_count(target)
    n_worlds = math.comb(n, n_x)
    if n_worlds > cap:
        raise WorldExplosionError(group.gid, n_worlds, cap)
    return WorldSet(group=group, n_x=n_x, worlds=enumerate_masks(n, n_x))


def member_factors(
    dataset: AnonymizedDataset, group: AGroup, dist: GlobalDistribution
) -> list[float]:
    """Per-member probability of linking to the target under ``dist``.

    Members whose signature over the distribution's attribute set is not
    retained fall back to the dataset-wide base rate.
    """
    factors = []
    for rid in group.member_row_ids:
        sig = dataset.signature_of(rid, dist.attribute_set)
        f = dist.entries.get(sig)
        if f is None:
            f = dist.fallback_rate
            if f is None:
                raise DataError(
                    f"row {rid} matches no retained signature over "
                    f"{dist.attribute_set} and no fallback rate is set"
                )
        factors.append(f)
    return factors


def world_weights(
    masks: np.ndarray, factors: Sequence[float]
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Weights and conditionals for world masks under per-member factors.

    Returns (weights, conditionals, degenerate).  When every weight is zero
    the conditionals fall back to uniform and ``degenerate`` is True.
    """
    f = np.asarray(factors, dtype=np.float64)
    n = len(f)
    if n > LOG_SPACE_THRESHOLD:
        with np.errstate(divide="ignore"):
            logf = np.log(f)
            log1mf = np.log(1.0 - f)
        logw = np.zeros(len(masks))
        for j in range(n):
            bit = (masks >> np.uint64(j)) & np.uint64(1)
            logw += np.where(bit == 1, logf[j], log1mf[j])
        finite = np.isfinite(logw)
        if not finite.any():
            return np.zeros(len(masks)), np.full(len(masks), 1.0 / len(masks)), True
        shifted = np.where(finite, np.exp(logw - logw[finite].max()), 0.0)
        with np.errstate(under="ignore"):
            weights = np.where(finite, np.exp(logw), 0.0)
        return weights, shifted / shifted.sum(), False
    weights = np.ones(len(masks))
    for j in range(n):
        bit = (masks >> np.uint64(j)) & np.uint64(1)
        weights *= np.where(bit == 1, f[j], 1.0 - f[j])
    total = weights.sum()
    if total <= 0.0:
        return weights, np.full(len(masks), 1.0 / len(masks)), True
    return weights, weights / total, False


def member_linkage(masks: np.ndarray, conditionals: np.ndarray, n_members: int) -> np.ndarray:
    """Per-member linkage probability: conditional mass of worlds assigning it the target."""
    out = np.empty(n_members)
    for j in range(n_members):
        bit = (masks >> np.uint64(j)) & np.uint64(1)
        out[j] = conditionals[bit == 1].sum()
    return out


def weigh_with_factors(ws: WorldSet, factors: Sequence[float]) -> WorldSet:
    """Set world weights and conditionals from explicit per-member factors."""
    n = len(ws.group)
    if len(factors) != n:
        raise DataError(f"expected {n} factors, got {len(factors)}")
    weights, conditionals, degenerate = world_weights(ws.worlds, factors)
    if degenerate:
        log.warning(
            "group %s: all %d world weights are zero; falling back to uniform conditionals",
            ws.group.gid,
            len(ws.worlds),
        )
    ws.weights = weights
    ws.conditionals = conditionals
    ws.degenerate = degenerate
    return ws


def weigh_worlds(
    ws: WorldSet, dist: GlobalDistribution, dataset: AnonymizedDataset
) -> WorldSet:
    """Weight a WorldSet under a global distribution (resolves member factors)."""
    return weigh_with_factors(ws, member_factors(dataset, ws.group, dist))


def linkage_vector(ws: WorldSet) -> np.ndarray:
    """p(member : target) for every member, one pass over the worlds."""
    if ws.conditionals is None:
        raise DataError("world set has not been weighted")
    return member_linkage(ws.worlds, ws.conditionals, len(ws.group))


def tuple_linkage(ws: WorldSet, row_id: int) -> float:
    """Probability that one member row links to the target."""
    try:
        pos = ws.group.member_row_ids.index(row_id)
    except ValueError:
        raise DataError(f"row {row_id} is not in group {ws.group.gid}") from None
    if ws.conditionals is None:
        raise DataError("world set has not been weighted")
    bit = (ws.worlds >> np.uint64(pos)) & np.uint64(1)
    return float(ws.conditionals[bit == 1].sum())


SYMMETRY_TOL = 1e-9


def expected_count(
    dataset: AnonymizedDataset,
    group: AGroup,
    signature: Signature,
    dist: GlobalDistribution,
    target: frozenset[str] | set[str],
    cap: int = DEFAULT_WORLD_CAP,
) -> float:
    """Expected number of group members matching ``signature`` that link to the target.

    All matching members provably share one linkage value; this is asserted
    at runtime before multiplying it by the match count.
    """
    matching = [
        j for j, rid in enumerate(group.member_row_ids)
        if dataset.matches(rid, signature)
    ]
    if not matching:
        raise DataError(f"no tuple in group {group.gid} matches {signature}")
    ws = weigh_worlds(enumerate_worlds(group, target, cap), dist, dataset)
    link = linkage_vector(ws)
    values = link[matching]
    if values.max() - values.min() > SYMMETRY_TOL:
        raise DataError(
            f"group {group.gid}: members matching {signature} disagree on linkage "
            f"({values.min()} vs {values.max()})"
        )
    return len(matching) * float(values[0])
