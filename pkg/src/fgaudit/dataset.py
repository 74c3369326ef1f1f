"""In-memory model of raw tables and bucketized group datasets.

A raw ``Table`` holds one categorical row per individual.  An
``AnonymizedDataset`` is the published form: a QI table (quasi-identifier
values plus a group id) and, per group, a multiset of sensitive values whose
per-row linkage has been erased.  ``Signature`` is a concrete value
assignment over a set of QI attributes; rows *match* it when all values
agree.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import DataError

GID_COLUMN = "GID"


@dataclass(frozen=True)
class Schema:
    """Attribute layout of a relation: QI attributes plus one sensitive attribute.

    ``sensitive_value_set`` is the value set treated as the audit target; it
    is optional because anonymization is target-agnostic.  Operations that
    need a target (mining, auditing) require it or take explicit targets.
    """

    attributes: tuple[str, ...]
    qi_attributes: tuple[str, ...]
    sensitive_attribute: str
    sensitive_value_set: frozenset[str] | None = None

    def __post_init__(self):
        if len(set(self.attributes)) != len(self.attributes):
            raise DataError("duplicate attribute names")
        missing = [a for a in self.qi_attributes if a not in self.attributes]
        if missing:
            raise DataError(f"QI attributes not in schema: {missing}")
        if self.sensitive_attribute not in self.attributes:
            raise DataError(
                f"sensitive attribute {self.sensitive_attribute!r} not in schema"
            )
        if self.sensitive_attribute in self.qi_attributes:
            raise DataError("sensitive attribute cannot be a QI attribute")
        if self.sensitive_value_set is not None and not self.sensitive_value_set:
            raise DataError("sensitive value set must be non-empty when given")

    def qi_index(self, attribute: str) -> int:
        return self.qi_attributes.index(attribute)


@dataclass(frozen=True)
class Signature:
    """A value assignment over a non-empty set of QI attributes.

    Attributes are kept in schema order so equal signatures compare equal.
    """

    attribute_set: tuple[str, ...]
    values: tuple[str, ...]

    def __post_init__(self):
        if not self.attribute_set:
            raise DataError("signature attribute set must be non-empty")
        if len(set(self.attribute_set)) != len(self.attribute_set):
            raise DataError("signature attribute set has duplicates")
        if len(self.values) != len(self.attribute_set):
            raise DataError("signature values and attributes differ in length")

    def __str__(self):
        return ",".join(f"{a}={v}" for a, v in zip(self.attribute_set, self.values))


def make_signature(schema: Schema, pairs: Mapping[str, str]) -> Signature:
    """Build a canonical Signature, ordering attributes by schema order."""
    for a in pairs:
        if a not in schema.qi_attributes:
            raise DataError(f"{a!r} is not a QI attribute")
    attrs = tuple(a for a in schema.qi_attributes if a in pairs)
    return Signature(attrs, tuple(pairs[a] for a in attrs))


def match(row_values: Mapping[str, str], signature: Signature) -> bool:
    """True iff every attribute-value pair of the signature agrees with the row."""
    for a, v in zip(signature.attribute_set, signature.values):
        if a not in row_values:
            raise DataError(f"row has no attribute {a!r}")
        if row_values[a] != v:
            return False
    return True


@dataclass(frozen=True)
class Table:
    """A raw relation; row ids are dense 0..n-1 in file order."""

    schema: Schema
    rows: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        width = len(self.schema.attributes)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise DataError(f"row {i} has {len(row)} values, expected {width}")

    def __len__(self):
        return len(self.rows)

    def column(self, attribute: str) -> list[str]:
        idx = self.schema.attributes.index(attribute)
        return [row[idx] for row in self.rows]

    def sensitive_value(self, row_id: int) -> str:
        return self.rows[row_id][self.schema.attributes.index(self.schema.sensitive_attribute)]

    def qi_values(self, row_id: int) -> tuple[str, ...]:
        row = self.rows[row_id]
        return tuple(row[self.schema.attributes.index(a)] for a in self.schema.qi_attributes)


@dataclass(frozen=True)
class AGroup:
    """One published group: member rows plus the unlinked sensitive multiset."""

    gid: int
    member_row_ids: tuple[int, ...]
    sensitive_multiset: tuple[str, ...]

    def __post_init__(self):
        if not self.member_row_ids:
            raise DataError(f"group {self.gid} is empty")
        if len(self.member_row_ids) != len(self.sensitive_multiset):
            raise DataError(
                f"group {self.gid}: {len(self.member_row_ids)} members but "
                f"{len(self.sensitive_multiset)} sensitive values"
            )

    def __len__(self):
        return len(self.member_row_ids)

    def target_count(self, target: frozenset[str] | set[str]) -> int:
        """Number of sensitive values in this group that fall in the target set."""
        return sum(1 for v in self.sensitive_multiset if v in target)


@dataclass(frozen=True)
class AnonymizedDataset:
    """Bucketized output: QI rows (indexed by row id) and the group list."""

    schema: Schema
    qi_rows: tuple[tuple[str, ...], ...]
    groups: tuple[AGroup, ...]
    _group_of_row: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        seen = {}
        for gi, g in enumerate(self.groups):
            for rid in g.member_row_ids:
                if rid in seen:
                    other = self.groups[seen[rid]].gid
                    raise DataError(f"row {rid} appears in groups {other} and {g.gid}")
                if not 0 <= rid < len(self.qi_rows):
                    raise DataError(f"group {g.gid} references unknown row {rid}")
                seen[rid] = gi
        if len(seen) != len(self.qi_rows):
            raise DataError("some rows belong to no group")
        object.__setattr__(self, "_group_of_row", seen)

    def __len__(self):
        return len(self.qi_rows)

    def group_of(self, row_id: int) -> AGroup:
        return self.groups[self._group_of_row[row_id]]

    def qi_value(self, row_id: int, attribute: str) -> str:
        return self.qi_rows[row_id][self.schema.qi_index(attribute)]

    def row_mapping(self, row_id: int) -> dict[str, str]:
        return dict(zip(self.schema.qi_attributes, self.qi_rows[row_id]))

    def signature_of(self, row_id: int, attribute_set: Sequence[str]) -> Signature:
        """The one signature over ``attribute_set`` that this row matches."""
        row = self.qi_rows[row_id]
        return Signature(
            tuple(attribute_set),
            tuple(row[self.schema.qi_index(a)] for a in attribute_set),
        )

    def target_base_rate(self, target: frozenset[str] | set[str]) -> float:
        """Dataset-wide fraction of sensitive values falling in the target set."""
        total = sum(g.target_count(target) for g in self.groups)
        return total / len(self.qi_rows)

    def matches(self, row_id: int, signature: Signature) -> bool:
        row = self.qi_rows[row_id]
        return all(
            row[self.schema.qi_index(a)] == v
            for a, v in zip(signature.attribute_set, signature.values)
        )


def group_signature_members(
    dataset: AnonymizedDataset, group: AGroup, signature: Signature
) -> list[int]:
    """Row ids in the group whose QI values match the signature, in stored order."""
    return [rid for rid in group.member_row_ids if dataset.matches(rid, signature)]


@dataclass(frozen=True)
class DatasetConfig:
    """Schema designation plus loading policy (missing marker, numeric binning)."""

    qi_attributes: tuple[str, ...]
    sensitive_attribute: str
    sensitive_values: frozenset[str] | None = None
    missing_marker: str | None = None
    bin_widths: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def from_json(cls, path: str) -> "DatasetConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(
            qi_attributes=tuple(raw["qi_attributes"]),
            sensitive_attribute=raw["sensitive_attribute"],
            sensitive_values=(
                frozenset(raw["sensitive_values"]) if raw.get("sensitive_values") else None
            ),
            missing_marker=raw.get("missing_marker"),
            bin_widths=dict(raw.get("bin_widths", {})),
        )


def _bin_value(attribute: str, value: str, width: float) -> str:
    try:
        num = float(value)
    except ValueError:
        raise DataError(f"cannot bin non-numeric value {value!r} of {attribute!r}") from None
    lo = math.floor(num / width) * width
    hi = lo + width
    if float(width).is_integer():
        return f"[{int(lo)}-{int(hi)})"
    return f"[{lo:g}-{hi:g})"


def _read_csv(path: str) -> tuple[list[str], list[tuple[str, ...]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: ragged row at line {lineno}")
            rows.append(tuple(v.strip() for v in row))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, rows


def _apply_load_policy(
    header: list[str], rows: list[tuple[str, ...]], config: DatasetConfig
) -> list[tuple[str, ...]]:
    """Drop missing-marker rows and bin configured numeric attributes."""
    if config.missing_marker is not None:
        rows = [r for r in rows if config.missing_marker not in r]
        if not rows:
            raise DataError("all rows carry the missing-value marker")
    if config.bin_widths:
        cols = {a: header.index(a) for a in config.bin_widths if a in header}
        binned = []
        for row in rows:
            row = list(row)
            for a, idx in cols.items():
                row[idx] = _bin_value(a, row[idx], config.bin_widths[a])
            binned.append(tuple(row))
        rows = binned
    return rows


def _check_columns(path: str, header: list[str], needed: Iterable[str]):
    missing = [a for a in needed if a not in header]
    if missing:
        raise DataError(f"{path}: missing attribute(s) {missing}")


def _validate_target(schema: Schema, observed: set[str]):
    if schema.sensitive_value_set is None:
        return
    unknown = schema.sensitive_value_set - observed
    if unknown:
        raise DataError(
            f"sensitive values never observed in data: {sorted(unknown)}"
        )


def load_table(path: str, config: DatasetConfig) -> Table:
    """Load a raw table from a comma-delimited file with a header row."""
    header, rows = _read_csv(path)
    _check_columns(path, header, (*config.qi_attributes, config.sensitive_attribute))
    rows = _apply_load_policy(header, rows, config)
    schema = Schema(
        attributes=tuple(header),
        qi_attributes=config.qi_attributes,
        sensitive_attribute=config.sensitive_attribute,
        sensitive_value_set=config.sensitive_values,
    )
    table = Table(schema=schema, rows=tuple(rows))
    _validate_target(schema, set(table.column(config.sensitive_attribute)))
    return table


def load_anonymized(qi_path: str, sensitive_path: str, config: DatasetConfig) -> AnonymizedDataset:
    """Assemble an AnonymizedDataset from the published QI / sensitive file pair."""
    qi_header, qi_raw = _read_csv(qi_path)
    sens_header, sens_raw = _read_csv(sensitive_path)
    _check_columns(qi_path, qi_header, (*config.qi_attributes, GID_COLUMN))
    _check_columns(sensitive_path, sens_header, (GID_COLUMN, config.sensitive_attribute))
    qi_raw = _apply_load_policy(qi_header, qi_raw, config)

    gid_col = qi_header.index(GID_COLUMN)
    qi_cols = [qi_header.index(a) for a in config.qi_attributes]
    gid_of_label: dict[str, int] = {}
    members: dict[int, list[int]] = {}
    qi_rows = []
    for rid, row in enumerate(qi_raw):
        label = row[gid_col]
        gid = gid_of_label.setdefault(label, len(gid_of_label))
        members.setdefault(gid, []).append(rid)
        qi_rows.append(tuple(row[c] for c in qi_cols))

    sens_gid = sens_header.index(GID_COLUMN)
    sens_col = sens_header.index(config.sensitive_attribute)
    values: dict[int, list[str]] = {}
    for row in sens_raw:
        label = row[sens_gid]
        if label not in gid_of_label:
            raise DataError(f"GID {label!r} present only in the sensitive file")
        values.setdefault(gid_of_label[label], []).append(row[sens_col])

    groups = []
    for label, gid in gid_of_label.items():
        if gid not in values:
            raise DataError(f"GID {label!r} present only in the QI file")
        if len(values[gid]) != len(members[gid]):
            raise DataError(
                f"GID {label!r}: {len(members[gid])} QI rows but "
                f"{len(values[gid])} sensitive values"
            )
        groups.append(
            AGroup(
                gid=gid,
                member_row_ids=tuple(members[gid]),
                sensitive_multiset=tuple(sorted(values[gid])),
            )
        )

    schema = Schema(
        attributes=(*config.qi_attributes, config.sensitive_attribute),
        qi_attributes=config.qi_attributes,
        sensitive_attribute=config.sensitive_attribute,
        sensitive_value_set=config.sensitive_values,
    )
    dataset = AnonymizedDataset(schema=schema, qi_rows=tuple(qi_rows), groups=tuple(groups))
    observed = {v for g in groups for v in g.sensitive_multiset}
    _validate_target(schema, observed)
    return dataset


def save_anonymized(dataset: AnonymizedDataset, qi_path: str, sensitive_path: str):
    """Write the QI / sensitive file pair in the load format (GID column named GID)."""
    schema = dataset.schema
    with open(qi_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*schema.qi_attributes, GID_COLUMN])
        for g in dataset.groups:
            for rid in g.member_row_ids:
                writer.writerow([*dataset.qi_rows[rid], g.gid])
    with open(sensitive_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([GID_COLUMN, schema.sensitive_attribute])
        for g in dataset.groups:
            for v in g.sensitive_multiset:
                writer.writerow([g.gid, v])
