"""Command-line front end: anonymize, mine, audit, query-error.

Every run is deterministic given its inputs, flags, and seed; reports embed
the parsed configuration so a run can be reproduced from its output alone.
Logging goes to stderr, data to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .anonymize import AnonymizerConfig, anonymize
from .audit import AuditConfig, QuerySpec, audit, query_error
from .dataset import (
    DatasetConfig,
    load_anonymized,
    load_table,
    save_anonymized,
)
from .errors import ToolError
from .lattice import SampleGate, enumerate_admitted
from .mining import MinedKnowledge, SolverConfig, mine_all
from .worlds import DEFAULT_WORLD_CAP

log = logging.getLogger("fgaudit")


def _add_schema_args(p: argparse.ArgumentParser, need_target: bool):
    p.add_argument("--config", help="JSON file with schema designation and load policy")
    p.add_argument("--qi", help="comma-separated QI attribute names")
    p.add_argument("--sensitive-attr", help="name of the sensitive attribute")
    p.add_argument(
        "--sensitive-values",
        help="comma-separated values jointly audited as the target set"
        + ("" if need_target else " (unused by this command)"),
    )
    p.add_argument("--missing-marker", help="rows containing this value are dropped at load")


def _dataset_config(args, need_target: bool) -> DatasetConfig:
    base = DatasetConfig.from_json(args.config) if args.config else None
    qi = tuple(args.qi.split(",")) if args.qi else (base.qi_attributes if base else None)
    sens = args.sensitive_attr or (base.sensitive_attribute if base else None)
    values = (
        frozenset(args.sensitive_values.split(","))
        if args.sensitive_values
        else (base.sensitive_values if base else None)
    )
    marker = args.missing_marker or (base.missing_marker if base else None)
    if not qi or not sens:
        raise ToolError("--qi and --sensitive-attr are required (flags or --config)")
    if need_target and not values:
        raise ToolError("--sensitive-values is required for this command")
    return DatasetConfig(
        qi_attributes=qi,
        sensitive_attribute=sens,
        sensitive_values=values,
        missing_marker=marker,
        bin_widths=dict(base.bin_widths) if base else {},
    )


def _add_mining_args(p: argparse.ArgumentParser):
    p.add_argument("--epsilon", type=float, default=0.01, help="gate error parameter")
    p.add_argument("--sigma", type=float, default=0.9, help="gate confidence parameter")
    p.add_argument("--max-set-size", type=int, default=3, help="largest attribute set mined")
    p.add_argument("--world-cap", type=int, default=DEFAULT_WORLD_CAP)
    p.add_argument("--method", choices=["newton", "fixed_point"], default="newton")
    p.add_argument("--tol", type=float, default=1e-8, help="residual tolerance")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--workers", type=int, default=1, help="parallel solver processes")


def _mine(dataset, args) -> tuple[MinedKnowledge, dict]:
    gate = SampleGate(epsilon=args.epsilon, sigma=args.sigma)
    admitted = enumerate_admitted(dataset, gate, args.max_set_size)
    solver = SolverConfig(method=args.method, tol=args.tol, max_iter=args.max_iter)
    knowledge = mine_all(
        dataset,
        admitted,
        [frozenset(args.sensitive_values.split(","))]
        if args.sensitive_values
        else [dataset.schema.sensitive_value_set],
        config=solver,
        world_cap=args.world_cap,
        workers=args.workers,
    )
    gate_info = {
        "epsilon": args.epsilon,
        "sigma": args.sigma,
        "min_support": gate.min_support,
        "admitted_signatures": admitted.total_signatures(),
        "pruned_attribute_sets": [list(a) for a in admitted.pruned_sets],
    }
    return knowledge, gate_info


def _write_report(report: dict, out: str | None):
    text = json.dumps(report, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        log.info("report written to %s", out)
    else:
        print(text)


def _echo_config(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def cmd_anonymize(args) -> int:
    config = _dataset_config(args, need_target=False)
    table = load_table(args.table, config)
    dataset = anonymize(
        table,
        AnonymizerConfig(l=args.l, strategy=args.strategy, rng_seed=args.seed),
    )
    save_anonymized(dataset, f"{args.out}.qi.csv", f"{args.out}.sensitive.csv")
    sizes = sorted({len(g) for g in dataset.groups})
    print(
        f"wrote {len(dataset.groups)} groups ({len(dataset)} rows, "
        f"group sizes {sizes}) to {args.out}.qi.csv / {args.out}.sensitive.csv"
    )
    return 0


def cmd_mine(args) -> int:
    config = _dataset_config(args, need_target=True)
    dataset = load_anonymized(args.qi_table, args.sensitive_table, config)
    knowledge, gate_info = _mine(dataset, args)
    report = {
        "config": _echo_config(args),
        "gate": gate_info,
        **knowledge.to_dict(),
    }
    _write_report(report, args.out)
    for rep in knowledge.reports:
        status = "converged" if rep.converged else "NOT converged"
        print(
            f"{'+'.join(rep.attribute_set) or '-'}: m={rep.m} "
            f"iterations={rep.iterations} residual={rep.residual_norm:.3g} {status}"
        )
    return 0


def cmd_audit(args) -> int:
    config = _dataset_config(args, need_target=True)
    dataset = load_anonymized(args.qi_table, args.sensitive_table, config)
    original = load_table(args.original, config) if args.original else None
    knowledge, gate_info = _mine(dataset, args)
    target = frozenset(args.sensitive_values.split(","))
    if not knowledge.for_target(target):
        log.warning("no converged distribution; auditing on the base rate alone")
    report = audit(
        dataset,
        knowledge,
        AuditConfig(r=args.r, targets=(target,), allow_empty_knowledge=True),
        original=original,
        world_cap=args.world_cap,
    )
    doc = {
        "config": _echo_config(args),
        "gate": gate_info,
        "distributions": knowledge.to_dict()["distributions"],
        **report.to_dict(),
    }
    _write_report(doc, args.out)

    def show(x):
        return "n/a" if x is None else f"{x:.4f}"

    flagged = len(report.flagged_rows())
    print(f"flagged {flagged} of {len(report.findings)} tuples at r={args.r}")
    print(
        f"recall={show(report.recall)} false_flag_rate={show(report.false_flag_rate)} "
        f"avg_breach_prob={show(report.avg_breach_prob)} avg_delta={report.avg_delta:.4f}"
    )
    return 0


def cmd_query_error(args) -> int:
    config = _dataset_config(args, need_target=True)
    original = load_table(args.table, config)
    dataset = load_anonymized(args.qi_table, args.sensitive_table, config)
    spec = QuerySpec(
        qd=args.qd if args.qd else len(config.qi_attributes),
        selectivity=args.selectivity,
        count=args.queries,
        rng_seed=args.seed,
    )
    err = query_error(original, dataset, spec, frozenset(args.sensitive_values.split(",")))
    print(f"{err:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fgaudit",
        description="Disclosure audit for group-anonymized (bucketized) datasets",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("anonymize", help="partition a raw table into l-diverse groups")
    p.add_argument("table", help="raw table CSV")
    _add_schema_args(p, need_target=False)
    p.add_argument("--l", type=int, required=True, help="diversity parameter")
    p.add_argument(
        "--strategy", choices=["anatomy", "random_partition"], default="anatomy"
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output prefix for the file pair")
    p.set_defaults(func=cmd_anonymize)

    p = sub.add_parser("mine", help="mine per-signature linkage probabilities")
    p.add_argument("qi_table", help="published QI table CSV")
    p.add_argument("sensitive_table", help="published sensitive table CSV")
    _add_schema_args(p, need_target=True)
    _add_mining_args(p)
    p.add_argument("--out", help="report file (JSON); stdout when omitted")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("audit", help="flag tuples breaching the 1/r bound")
    p.add_argument("qi_table", help="published QI table CSV")
    p.add_argument("sensitive_table", help="published sensitive table CSV")
    _add_schema_args(p, need_target=True)
    _add_mining_args(p)
    p.add_argument("--r", type=float, required=True, help="robustness parameter")
    p.add_argument("--original", help="raw table CSV enabling recall metrics")
    p.add_argument("--out", help="report file (JSON); stdout when omitted")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("query-error", help="aggregate COUNT utility error")
    p.add_argument("table", help="raw table CSV")
    p.add_argument("qi_table", help="published QI table CSV")
    p.add_argument("sensitive_table", help="published sensitive table CSV")
    _add_schema_args(p, need_target=True)
    p.add_argument("--qd", type=int, help="query dimensionality (default: QI size)")
    p.add_argument("--selectivity", type=float, default=0.05)
    p.add_argument("--queries", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_query_error)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ToolError as exc:
        log.error("%s", exc)
        return 1
    except OSError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
