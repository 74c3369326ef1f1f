"""Recover per-signature linkage probabilities from the published groups.

For one attribute set with retained signatures s_1..s_m, the unknown vector
f satisfies m simultaneous equations: f_i equals the expected number of
rows matching s_i that link to the target, summed over groups and divided
by the total occurrences of s_i.  The expectation on the right-hand side is
itself a function of f through the weighted possible worlds of each group,
making the system nonlinear.  It is solved with a damped Newton iteration
on a finite-difference Jacobian, falling back to fixed-point sweeps when
the Jacobian is singular or no damped step reduces the residual.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .dataset import AnonymizedDataset, Signature
from .errors import DataError, WorldExplosionError
from .lattice import AdmittedSignatures
from .worlds import (
    DEFAULT_WORLD_CAP,
    GlobalDistribution,
    enumerate_masks,
    member_linkage,
    world_weights,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    method: str = "newton"  # "newton" | "fixed_point"
    tol: float = 1e-8
    max_iter: int = 200
    jacobian_step: float = 1e-6
    damping: int = 20
    clamp: float = 1e-12

    def __post_init__(self):
        if self.method not in ("newton", "fixed_point"):
            raise DataError(f"unknown solver method {self.method!r}")
        if self.tol <= 0 or self.max_iter < 1:
            raise DataError("tol must be positive and max_iter >= 1")


@dataclass(frozen=True)
class _GroupPattern:
    """Structure shared by all groups with identical signature layout.

    ``sig_idx`` holds, per member position, the index of the matched
    retained signature (-1 when the member falls back to the base rate);
    ``count`` is how many groups share this layout.
    """

    sig_idx: tuple[int, ...]
    n_x: int
    count: int


@dataclass
class EquationSystem:
    """The m-variable system tying signature probabilities to group structure."""

    attribute_set: tuple[str, ...]
    target: frozenset[str]
    signatures: list[Signature]
    denominators: np.ndarray
    base_rate: float
    patterns: list[_GroupPattern]
    _masks: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.signatures)

    def masks_for(self, n_members: int, n_x: int) -> np.ndarray:
        key = (n_members, n_x)
        if key not in self._masks:
            self._masks[key] = enumerate_masks(n_members, n_x)
        return self._masks[key]

    def expected_counts(self, f: np.ndarray) -> np.ndarray:
        """Sum over groups of the expected target-linked matches per signature."""
        num = np.zeros(self.m)
        for pat in self.patterns:
            idx = np.asarray(pat.sig_idx)
            factors = np.where(idx >= 0, f[np.maximum(idx, 0)], self.base_rate)
            masks = self.masks_for(len(idx), pat.n_x)
            _, conditionals, _ = world_weights(masks, factors)
            link = member_linkage(masks, conditionals, len(idx))
            keep = idx >= 0
            np.add.at(num, idx[keep], pat.count * link[keep])
        return num

    def residual(self, f: np.ndarray) -> np.ndarray:
        return f - self.expected_counts(f) / self.denominators

    def initial_guess(self) -> np.ndarray:
        """Local-proportion estimate: each group contributes its naive target fraction."""
        num = np.zeros(self.m)
        for pat in self.patterns:
            frac = pat.n_x / len(pat.sig_idx)
            for i in pat.sig_idx:
                if i >= 0:
                    num[i] += pat.count * frac
        return num / self.denominators


def build_system(
    dataset: AnonymizedDataset,
    attribute_set: tuple[str, ...],
    admitted: AdmittedSignatures,
    target: frozenset[str] | set[str],
    world_cap: int = DEFAULT_WORLD_CAP,
) -> EquationSystem:
    """Assemble the equation system for one attribute set and one target."""
    sigs = admitted.by_attribute_set.get(tuple(attribute_set), {})
    if not sigs:
        raise DataError(f"no admitted signatures over {attribute_set}")
    signatures = list(sigs)
    index_of = {sig.values: i for i, sig in enumerate(signatures)}
    target = frozenset(target)
    qi_idx = [dataset.schema.qi_index(a) for a in attribute_set]

    pattern_counts: dict[tuple[tuple[int, ...], int], int] = {}
    support = np.zeros(len(signatures), dtype=np.int64)
    for group in dataset.groups:
        sig_idx = []
        for rid in group.member_row_ids:
            row = dataset.qi_rows[rid]
            i = index_of.get(tuple(row[c] for c in qi_idx), -1)
            if i >= 0:
                support[i] += 1
            sig_idx.append(i)
        if all(i < 0 for i in sig_idx):
            continue
        n_x = group.target_count(target)
        n_worlds = math.comb(len(sig_idx), n_x)
        if n_worlds > world_cap:
            raise WorldExplosionError(group.gid, n_worlds, world_cap)
        key = (tuple(sig_idx), n_x)
        pattern_counts[key] = pattern_counts.get(key, 0) + 1

    expected = np.array([sigs[sig] for sig in signatures], dtype=np.int64)
    if not np.array_equal(support, expected):
        raise DataError(
            f"admitted supports disagree with group scan over {attribute_set}"
        )
    return EquationSystem(
        attribute_set=tuple(attribute_set),
        target=target,
        signatures=signatures,
        denominators=support.astype(np.float64),
        base_rate=dataset.target_base_rate(target),
        patterns=[
            _GroupPattern(sig_idx=k[0], n_x=k[1], count=c)
            for k, c in pattern_counts.items()
        ],
    )


@dataclass
class SolveDiagnostics:
    method: str
    iterations: int
    residual_norm: float
    converged: bool
    fell_back: bool = False


def _clamp(f: np.ndarray, eps: float) -> np.ndarray:
    return np.clip(f, eps, 1.0 - eps)


def solve(
    system: EquationSystem, config: SolverConfig = SolverConfig()
) -> tuple[np.ndarray, SolveDiagnostics]:
    """Drive the iteration to a root of the residual, or report failure.

    Iterates stay clamped inside (0, 1): a coordinate pinned at exactly 0 or
    1 can zero out every world weight and leave the residual undefined.
    """
    m = system.m
    f = _clamp(system.initial_guess(), config.clamp)
    method = config.method
    fell_back = False
    iterations = 0
    r = system.residual(f)
    norm = float(np.abs(r).max())
    for _ in range(config.max_iter):
        if norm <= config.tol:
            break
        step = None
        if method == "newton":
            jac = np.empty((m, m))
            for i in range(m):
                h = config.jacobian_step
                if f[i] + h > 1.0 - config.clamp:
                    h = -h
                probe = f.copy()
                probe[i] += h
                jac[:, i] = (system.residual(probe) - r) / h
            try:
                dx = np.linalg.solve(jac, -r)
                if not np.all(np.isfinite(dx)):
                    raise np.linalg.LinAlgError("non-finite step")
            except np.linalg.LinAlgError:
                log.debug("singular Jacobian; switching to fixed-point iteration")
                method = "fixed_point"
                fell_back = True
            else:
                t = 1.0
                for _retry in range(config.damping + 1):
                    cand = _clamp(f + t * dx, config.clamp)
                    rc = system.residual(cand)
                    nc = float(np.abs(rc).max())
                    if nc < norm:
                        step = (cand, rc, nc)
                        break
                    t *= 0.5
                if step is None:
                    log.debug("damping exhausted; switching to fixed-point iteration")
                    method = "fixed_point"
                    fell_back = True
        if step is None:
            cand = _clamp(f - r, config.clamp)
            rc = system.residual(cand)
            step = (cand, rc, float(np.abs(rc).max()))
        f, r, norm = step
        iterations += 1
    return f, SolveDiagnostics(
        method=method,
        iterations=iterations,
        residual_norm=norm,
        converged=norm <= config.tol,
        fell_back=fell_back,
    )


@dataclass
class SystemReport:
    attribute_set: tuple[str, ...]
    target: frozenset[str]
    m: int
    method: str
    iterations: int
    residual_norm: float
    converged: bool
    error: str | None = None


@dataclass
class MinedKnowledge:
    """All mined distributions plus per-system solver diagnostics."""

    distributions: list[GlobalDistribution] = field(default_factory=list)
    reports: list[SystemReport] = field(default_factory=list)

    def __len__(self):
        return len(self.distributions)

    def for_target(self, target: frozenset[str]) -> list[GlobalDistribution]:
        return [d for d in self.distributions if d.target == target]

    def to_dict(self) -> dict:
        dists = []
        for d in self.distributions:
            dists.append(
                {
                    "attribute_set": list(d.attribute_set),
                    "target": sorted(d.target),
                    "entries": [
                        {
                            "attributes": list(sig.attribute_set),
                            "values": list(sig.values),
                            "f": f,
                            "support": d.sample_counts.get(sig),
                        }
                        for sig, f in d.entries.items()
                    ],
                    "fallback_rate": d.fallback_rate,
                }
            )
        reports = [
            {
                "attribute_set": list(rep.attribute_set),
                "target": sorted(rep.target),
                "m": rep.m,
                "method": rep.method,
                "iterations": rep.iterations,
                "residual": rep.residual_norm,
                "converged": rep.converged,
                "error": rep.error,
            }
            for rep in self.reports
        ]
        return {"distributions": dists, "systems": reports}


def _mine_one(
    dataset: AnonymizedDataset,
    attribute_set: tuple[str, ...],
    admitted: AdmittedSignatures,
    target: frozenset[str],
    config: SolverConfig,
    world_cap: int,
) -> tuple[GlobalDistribution | None, SystemReport]:
    try:
        system = build_system(dataset, attribute_set, admitted, target, world_cap)
    except WorldExplosionError as exc:
        return None, SystemReport(
            attribute_set=attribute_set,
            target=target,
            m=0,
            method=config.method,
            iterations=0,
            residual_norm=float("nan"),
            converged=False,
            error=str(exc),
        )
    f, diag = solve(system, config)
    report = SystemReport(
        attribute_set=attribute_set,
        target=target,
        m=system.m,
        method=diag.method,
        iterations=diag.iterations,
        residual_norm=diag.residual_norm,
        converged=diag.converged,
    )
    if not diag.converged:
        return None, report
    sigs = admitted.by_attribute_set[attribute_set]
    dist = GlobalDistribution(
        attribute_set=attribute_set,
        target=target,
        entries={sig: float(fi) for sig, fi in zip(system.signatures, f)},
        sample_counts=dict(sigs),
        fallback_rate=system.base_rate,
    )
    return dist, report


def _mine_task(args) -> tuple[GlobalDistribution | None, SystemReport]:
    return _mine_one(*args)


def mine_all(
    dataset: AnonymizedDataset,
    admitted: AdmittedSignatures,
    targets: Iterable[frozenset[str] | set[str]],
    config: SolverConfig = SolverConfig(),
    world_cap: int = DEFAULT_WORLD_CAP,
    workers: int = 1,
) -> MinedKnowledge:
    """Solve one system per (admitted attribute set, target) pair."""
    tasks = [
        (dataset, aset, admitted, frozenset(t), config, world_cap)
        for aset in admitted.attribute_sets()
        for t in targets
    ]
    knowledge = MinedKnowledge()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_mine_task, tasks))
    else:
        results = [_mine_one(*task) for task in tasks]
    for dist, report in results:
        knowledge.reports.append(report)
        if dist is not None:
            knowledge.distributions.append(dist)
    return knowledge
