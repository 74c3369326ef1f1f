"""Per-tuple breach probabilities, robustness flags, and dataset metrics.

Every tuple's linkage probability is evaluated under each mined
distribution and each audited target; the greatest value is kept as the
worst-case breach probability and compared strictly against 1/r.  With the
original table available the report also carries recall over truly
sensitive rows, the wrong-flag rate over the rest, and the aggregate-query
utility error of the published grouping.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import AnonymizedDataset, Table
from .errors import DataError, WorldExplosionError
from .mining import MinedKnowledge
from .worlds import (
    DEFAULT_WORLD_CAP,
    enumerate_worlds,
    linkage_vector,
    member_factors,
    weigh_with_factors,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AuditConfig:
    r: float
    targets: tuple[frozenset[str], ...]
    allow_empty_knowledge: bool = False

    def __post_init__(self):
        if self.r < 1:
            raise DataError(f"r must be >= 1, got {self.r}")
        if not self.targets or any(not t for t in self.targets):
            raise DataError("at least one non-empty target value set is required")


@dataclass
class TupleFinding:
    row_id: int
    gid: int
    max_linkage: float | None
    attribute_set: tuple[str, ...] | None
    target: frozenset[str] | None
    flagged: bool | None


@dataclass
class BreachReport:
    r: float
    findings: list[TupleFinding]
    recall: float | None
    false_flag_rate: float | None
    avg_breach_prob: float | None
    avg_delta: float
    diagnostics: list[str] = field(default_factory=list)

    def flagged_rows(self) -> set[int]:
        return {f.row_id for f in self.findings if f.flagged}

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "tuples": [
                {
                    "row_id": f.row_id,
                    "gid": f.gid,
                    "max_linkage": f.max_linkage,
                    "attribute_set": list(f.attribute_set) if f.attribute_set else None,
                    "target": sorted(f.target) if f.target else None,
                    "flagged": f.flagged,
                }
                for f in self.findings
            ],
            "metrics": {
                "recall": self.recall,
                "false_flag_rate": self.false_flag_rate,
                "avg_breach_prob": self.avg_breach_prob,
                "avg_delta": self.avg_delta,
            },
            "diagnostics": list(self.diagnostics),
        }


def audit(
    dataset: AnonymizedDataset,
    knowledge: MinedKnowledge,
    config: AuditConfig,
    original: Table | None = None,
    world_cap: int = DEFAULT_WORLD_CAP,
) -> BreachReport:
    """Flag every tuple whose worst-case linkage probability exceeds 1/r."""
    diagnostics: list[str] = []
    per_target: dict[frozenset[str], list] = {}
    for target in config.targets:
        dists = knowledge.for_target(target)
        if not dists:
            if not config.allow_empty_knowledge:
                raise DataError(
                    f"no mined distribution for target {sorted(target)}; "
                    "pass allow_empty_knowledge to audit on the base rate alone"
                )
            diagnostics.append(
                f"target {sorted(target)}: no mined distribution, "
                "auditing on the dataset base rate alone"
            )
            dists = [None]
        per_target[target] = dists

    n = len(dataset)
    best = np.full(n, -1.0)
    best_source: list[tuple[tuple[str, ...] | None, frozenset[str]] | None] = [None] * n
    degenerate_events = 0

    for group in dataset.groups:
        positions = list(group.member_row_ids)
        for target, dists in per_target.items():
            try:
                ws = enumerate_worlds(group, target, world_cap)
            except WorldExplosionError as exc:
                diagnostics.append(str(exc))
                continue
            for dist in dists:
                if dist is None:
                    rate = dataset.target_base_rate(target)
                    weigh_with_factors(ws, [rate] * len(group))
                    source = None
                else:
                    weigh_with_factors(ws, member_factors(dataset, group, dist))
                    source = dist.attribute_set
                if ws.degenerate:
                    degenerate_events += 1
                link = linkage_vector(ws)
                for pos, rid in enumerate(positions):
                    if link[pos] > best[rid]:
                        best[rid] = link[pos]
                        best_source[rid] = (source, target)

    if degenerate_events:
        diagnostics.append(
            f"{degenerate_events} group/distribution pairs had all-zero world "
            "weights; uniform conditionals were substituted"
        )

    threshold = 1.0 / config.r
    findings = []
    for rid in range(n):
        gid = dataset.group_of(rid).gid
        if best[rid] < 0:
            findings.append(TupleFinding(rid, gid, None, None, None, None))
            continue
        source, target = best_source[rid]
        findings.append(
            TupleFinding(
                row_id=rid,
                gid=gid,
                max_linkage=float(best[rid]),
                attribute_set=source,
                target=target,
                flagged=bool(best[rid] > threshold),
            )
        )

    recall = false_rate = avg_breach = None
    if original is not None:
        if len(original) != n:
            raise DataError("original table and dataset differ in row count")
        union = frozenset().union(*config.targets)
        sensitive = [original.sensitive_value(rid) in union for rid in range(n)]
        scored = [f for f in findings if f.max_linkage is not None]
        sens = [f for f in scored if sensitive[f.row_id]]
        nonsens = [f for f in scored if not sensitive[f.row_id]]
        if sens:
            recall = sum(1 for f in sens if f.flagged) / len(sens)
            avg_breach = sum(f.max_linkage for f in sens) / len(sens)
        else:
            diagnostics.append("no row's true sensitive value is in the target set")
        if nonsens:
            false_rate = sum(1 for f in nonsens if f.flagged) / len(nonsens)
    else:
        diagnostics.append(
            "original table not supplied: recall and false-flag rate omitted"
        )

    return BreachReport(
        r=config.r,
        findings=findings,
        recall=recall,
        false_flag_rate=false_rate,
        avg_breach_prob=avg_breach,
        avg_delta=delta_metric(dataset, knowledge),
        diagnostics=diagnostics,
    )


def delta_metric(dataset: AnonymizedDataset, knowledge: MinedKnowledge) -> float:
    """Mean over groups and distributions of the spread max f - min f inside a group.

    Only signatures retained by a distribution count; a group none of whose
    members match a retained signature contributes nothing for that
    distribution.
    """
    deltas = []
    for dist in knowledge.distributions:
        for group in dataset.groups:
            present = []
            for rid in group.member_row_ids:
                sig = dataset.signature_of(rid, dist.attribute_set)
                f = dist.entries.get(sig)
                if f is not None:
                    present.append(f)
            if present:
                deltas.append(max(present) - min(present))
    return float(np.mean(deltas)) if deltas else 0.0


@dataclass(frozen=True)
class QuerySpec:
    """Random COUNT-query workload: dimensionality, selectivity, and size."""

    qd: int
    selectivity: float = 0.05
    count: int = 10_000
    rng_seed: int = 0

    def __post_init__(self):
        if self.qd < 1:
            raise DataError(f"qd must be >= 1, got {self.qd}")
        if not 0 < self.selectivity <= 1:
            raise DataError(f"selectivity out of (0, 1]: {self.selectivity}")
        if self.count < 1:
            raise DataError("query count must be >= 1")


def query_error(
    original: Table,
    dataset: AnonymizedDataset,
    spec: QuerySpec,
    target: frozenset[str] | None = None,
) -> float:
    """Mean relative error of group-level COUNT estimates against the original.

    Each query constrains ``qd`` random QI attributes to random value subsets
    sized for the requested selectivity, plus the sensitive attribute to the
    target.  The published data answers with sum over groups of (matching
    members) * (target fraction of the group).
    """
    if target is None:
        target = dataset.schema.sensitive_value_set
    if not target:
        raise DataError("query_error needs a target sensitive value set")
    if len(original) != len(dataset):
        raise DataError("original table and dataset differ in row count")
    qi = dataset.schema.qi_attributes
    if spec.qd > len(qi):
        raise DataError(f"qd={spec.qd} exceeds the {len(qi)} QI attributes")

    n = len(dataset)
    orig_cols = {a: np.array(original.column(a)) for a in qi}
    pub_cols = {
        a: np.array([row[i] for row in dataset.qi_rows])
        for i, a in enumerate(qi)
    }
    domains = {a: sorted(set(orig_cols[a]) | set(pub_cols[a])) for a in qi}
    sens_mask = np.array(
        [original.sensitive_value(rid) in target for rid in range(n)]
    )
    ratio_per_row = np.empty(n)
    for g in dataset.groups:
        frac = g.target_count(target) / len(g)
        for rid in g.member_row_ids:
            ratio_per_row[rid] = frac

    rng = random.Random(spec.rng_seed)
    per_attr_frac = spec.selectivity ** (1.0 / spec.qd)
    errors = []
    for _ in range(spec.count):
        attrs = rng.sample(list(qi), spec.qd)
        orig_mask = sens_mask.copy()
        pub_mask = np.ones(n, dtype=bool)
        for a in attrs:
            dom = domains[a]
            k = max(1, round(per_attr_frac * len(dom)))
            chosen = set(rng.sample(dom, min(k, len(dom))))
            orig_mask &= np.isin(orig_cols[a], list(chosen))
            pub_mask &= np.isin(pub_cols[a], list(chosen))
        actual = int(orig_mask.sum())
        estimate = float(pub_mask @ ratio_per_row)
        errors.append(abs(estimate - actual) / max(actual, 1))
    return float(np.mean(errors))
