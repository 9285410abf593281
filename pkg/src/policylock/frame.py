"""Columnar data model with explicit missingness and deterministic partitioning.

A cell is *missing* when its validity bit is unset (NULL) or when its payload
is NaN.  The two encodings stay distinguishable at the data layer (checksums,
CSV round-trips) but route identically everywhere downstream.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError, SchemaError
from . import rng

_CANONICAL_NAN = np.float64(np.nan)

PRESENT, NULL, NAN = 0, 1, 2  # missing-kind tags, also the checksum tag bytes


def _as_float_column(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidArgumentError("feature columns must be 1-D")
    return arr


class ColumnFrame:
    """Immutable columnar dataset: row ids, ordered float features with
    validity bitmaps, a string treatment column, and a binary outcome column.
    """

    def __init__(self, row_ids, feature_names: Sequence[str], feature_values,
                 feature_valid=None, treatments=None, outcomes=None):
        self.row_ids = np.asarray(row_ids, dtype=np.int64)
        n = len(self.row_ids)
        self.feature_names: tuple[str, ...] = tuple(str(f) for f in feature_names)
        if len(set(self.feature_names)) != len(self.feature_names):
            raise SchemaError("duplicate feature names")
        vals = [_as_float_column(feature_values[i]) for i in range(len(self.feature_names))]
        if feature_valid is None:
            valid = [np.ones(n, dtype=bool) for _ in vals]
        else:
            valid = [np.asarray(feature_valid[i], dtype=bool) for i in range(len(vals))]
        self.feature_values: tuple[np.ndarray, ...] = tuple(vals)
        self.feature_valid: tuple[np.ndarray, ...] = tuple(valid)
        if treatments is None:
            treatments = np.array(["control"] * n, dtype=object)
        self.treatments = np.asarray(treatments, dtype=object)
        if outcomes is None:
            outcomes = np.zeros(n, dtype=np.int64)
        self.outcomes = np.asarray(outcomes, dtype=np.int64)

        for col, vld in zip(self.feature_values, self.feature_valid):
            if len(col) != n or len(vld) != n:
                raise SchemaError("all columns must share the frame length")
        if len(self.treatments) != n or len(self.outcomes) != n:
            raise SchemaError("all columns must share the frame length")
        if n and len(np.unique(self.row_ids)) != n:
            raise SchemaError("row_ids must be unique")
        if n and not np.isin(self.outcomes, (0, 1)).all():
            raise SchemaError("outcomes must be binary 0/1")
        for arr in (self.row_ids, *self.feature_values, *self.feature_valid,
                    self.treatments, self.outcomes):
            arr.setflags(write=False)
        self._index = {name: i for i, name in enumerate(self.feature_names)}

    @property
    def n_rows(self) -> int:
        return len(self.row_ids)

    def column_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"no feature column named {name!r}") from None

    def effective_values(self, name: str) -> np.ndarray:
        """Feature payloads with NULL cells folded to NaN (the routing view)."""
        i = self.column_index(name)
        vals = self.feature_values[i]
        valid = self.feature_valid[i]
        if valid.all():
            return vals
        out = vals.copy()
        out[~valid] = np.nan
        return out

    def missing_mask(self, name: str) -> np.ndarray:
        i = self.column_index(name)
        return ~self.feature_valid[i] | np.isnan(self.feature_values[i])

    def missing_kinds(self, name: str) -> np.ndarray:
        """Per-cell tag: PRESENT, NULL (validity unset) or NAN (NaN payload)."""
        i = self.column_index(name)
        tags = np.full(self.n_rows, PRESENT, dtype=np.uint8)
        tags[np.isnan(self.feature_values[i])] = NAN
        tags[~self.feature_valid[i]] = NULL
        return tags

    def take(self, indices) -> "ColumnFrame":
        idx = np.asarray(indices, dtype=np.int64)
        return ColumnFrame(
            self.row_ids[idx],
            self.feature_names,
            [col[idx] for col in self.feature_values],
            [vld[idx] for vld in self.feature_valid],
            self.treatments[idx],
            self.outcomes[idx],
        )

    def feature_matrix_effective(self, names: Sequence[str]) -> np.ndarray:
        """Columnar [F, n] float64 block with missing cells as NaN."""
        return np.stack([self.effective_values(n) for n in names]) if names else \
            np.empty((0, self.n_rows))


def concat_frames(frames: Sequence[ColumnFrame]) -> ColumnFrame:
    if not frames:
        raise InvalidArgumentError("cannot concatenate zero frames")
    first = frames[0]
    for f in frames[1:]:
        if f.feature_names != first.feature_names:
            raise SchemaError("frames disagree on feature columns")
    return ColumnFrame(
        np.concatenate([f.row_ids for f in frames]),
        first.feature_names,
        [np.concatenate([f.feature_values[i] for f in frames])
         for i in range(len(first.feature_names))],
        [np.concatenate([f.feature_valid[i] for f in frames])
         for i in range(len(first.feature_names))],
        np.concatenate([f.treatments for f in frames]),
        np.concatenate([f.outcomes for f in frames]),
    )


class AssignmentRule(str, Enum):
    BY_ROW_INDEX_BLOCK = "by_row_index_block"
    BY_ROW_ID_HASH = "by_row_id_hash"


@dataclass(frozen=True)
class PartitionedFrame:
    partitions: tuple[ColumnFrame, ...]
    assignment_rule: AssignmentRule = AssignmentRule.BY_ROW_INDEX_BLOCK

    @property
    def partition_count(self) -> int:
        return len(self.partitions)

    @property
    def n_rows(self) -> int:
        return sum(p.n_rows for p in self.partitions)

    def concat(self) -> ColumnFrame:
        return concat_frames(list(self.partitions))


def _block_bounds(n: int, p: int) -> list[tuple[int, int]]:
    # first n % p partitions receive one extra row (balanced block split)
    base, extra = divmod(n, p)
    bounds, start = [], 0
    for i in range(p):
        size = base + (1 if i < extra else 0)
        bounds.append((start, start + size))
        start += size
    return bounds


def partition(frame: ColumnFrame, p: int,
              rule: AssignmentRule = AssignmentRule.BY_ROW_INDEX_BLOCK) -> PartitionedFrame:
    if p < 1:
        raise InvalidArgumentError("partition count must be >= 1")
    rule = AssignmentRule(rule)
    if rule is AssignmentRule.BY_ROW_INDEX_BLOCK:
        parts = [frame.take(np.arange(lo, hi)) for lo, hi in _block_bounds(frame.n_rows, p)]
    else:
        with np.errstate(over="ignore"):
            keys = rng._splitmix64_array(frame.row_ids.astype(np.uint64))
        assign = (keys % np.uint64(p)).astype(np.int64)
        parts = [frame.take(np.flatnonzero(assign == i)) for i in range(p)]
    return PartitionedFrame(tuple(parts), rule)


class PerturbationKind(str, Enum):
    REPARTITION = "repartition"
    COALESCE = "coalesce"
    SHUFFLE_ROWS = "shuffle_rows"
    SORT_WITHIN_PARTITION = "sort_within_partition"


@dataclass(frozen=True)
class PerturbationSpec:
    kind: PerturbationKind
    target_partitions: Optional[int] = None   # repartition / coalesce
    seed: Optional[int] = None                # shuffle_rows
    key: str = "row_id"                       # sort_within_partition
    ascending: bool = True
    applied_before_lock: bool = False


def apply_perturbation(pf: PartitionedFrame, spec: PerturbationSpec) -> PartitionedFrame:
    kind = PerturbationKind(spec.kind)
    if kind is PerturbationKind.REPARTITION:
        if not spec.target_partitions or spec.target_partitions < 1:
            raise InvalidArgumentError("repartition needs a target partition count >= 1")
        whole = pf.concat()
        p = spec.target_partitions
        # round-robin over the concatenated order, like a shuffle repartition
        parts = [whole.take(np.arange(i, whole.n_rows, p)) for i in range(p)]
        return PartitionedFrame(tuple(parts), pf.assignment_rule)
    if kind is PerturbationKind.COALESCE:
        p = spec.target_partitions or 0
        if p < 1 or p > pf.partition_count:
            raise InvalidArgumentError("coalesce target must be in [1, current partition count]")
        groups = np.array_split(np.arange(pf.partition_count), p)
        parts = [concat_frames([pf.partitions[i] for i in g]) for g in groups]
        return PartitionedFrame(tuple(parts), pf.assignment_rule)
    if kind is PerturbationKind.SHUFFLE_ROWS:
        if spec.seed is None:
            raise InvalidArgumentError("shuffle_rows needs a seed")
        whole = pf.concat()
        perm = rng.permutation(spec.seed, "shuffle_rows", whole.n_rows)
        shuffled = whole.take(perm)
        p = max(pf.partition_count, 1)
        parts = [shuffled.take(np.arange(lo, hi)) for lo, hi in _block_bounds(shuffled.n_rows, p)]
        return PartitionedFrame(tuple(parts), pf.assignment_rule)
    if kind is PerturbationKind.SORT_WITHIN_PARTITION:
        parts = []
        for part in pf.partitions:
            if spec.key == "row_id":
                keys = part.row_ids
            else:
                keys = part.effective_values(spec.key)
            order = np.argsort(keys, kind="stable")
            if not spec.ascending:
                order = order[::-1]
            parts.append(part.take(order))
        return PartitionedFrame(tuple(parts), pf.assignment_rule)
    raise InvalidArgumentError(f"unknown perturbation kind {spec.kind!r}")


def _digest_update_frame(h, frame: ColumnFrame) -> None:
    h.update(b"CF1")
    h.update(np.int64(frame.n_rows).tobytes())
    h.update(np.int32(len(frame.feature_names)).tobytes())
    h.update(frame.row_ids.astype("<i8").tobytes())
    for i, name in enumerate(frame.feature_names):
        nb = name.encode("utf-8")
        h.update(np.int32(len(nb)).tobytes())
        h.update(nb)
        vals = frame.feature_values[i]
        valid = frame.feature_valid[i]
        tags = np.full(frame.n_rows, PRESENT, dtype=np.uint8)
        isnan = np.isnan(vals)
        tags[isnan] = NAN
        tags[~valid] = NULL
        canon = vals.copy()
        canon[isnan] = _CANONICAL_NAN   # collapse NaN payload bit patterns
        canon[~valid] = 0.0             # NULL payloads are not data
        h.update(tags.tobytes())
        h.update(canon.astype("<f8").tobytes())
    for label in frame.treatments:
        lb = str(label).encode("utf-8")
        h.update(np.int32(len(lb)).tobytes())
        h.update(lb)
    h.update(frame.outcomes.astype("<i1").tobytes())


def frame_checksum(frame: ColumnFrame) -> str:
    """Order-sensitive 128-bit digest over ids, column order, values and
    missing-kind tags.  Stable across runs and platforms."""
    h = hashlib.blake2b(digest_size=16)
    _digest_update_frame(h, frame)
    return h.hexdigest()


@dataclass(frozen=True)
class CsvRoles:
    features: tuple[str, ...]
    treatment: str
    outcome: str
    row_id: Optional[str] = None


def read_csv(path, roles: CsvRoles) -> ColumnFrame:
    """Generic ingestion: empty cells -> NULL, literal "NaN" -> NaN payload."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError("CSV file has no header row")
        missing_cols = [c for c in (*roles.features, roles.treatment, roles.outcome)
                        if c not in reader.fieldnames]
        if roles.row_id and roles.row_id not in reader.fieldnames:
            missing_cols.append(roles.row_id)
        if missing_cols:
            raise SchemaError(f"CSV is missing columns: {missing_cols}")
        rows = list(reader)

    n = len(rows)
    values = [np.zeros(n) for _ in roles.features]
    valid = [np.ones(n, dtype=bool) for _ in roles.features]
    treatments = np.empty(n, dtype=object)
    outcomes = np.zeros(n, dtype=np.int64)
    row_ids = np.arange(n, dtype=np.int64)
    for r, row in enumerate(rows):
        for i, feat in enumerate(roles.features):
            cell = row[feat]
            if cell == "":
                valid[i][r] = False
            elif cell == "NaN":
                values[i][r] = np.nan
            else:
                values[i][r] = float(cell)
        treatments[r] = row[roles.treatment]
        outcomes[r] = int(row[roles.outcome])
        if roles.row_id:
            row_ids[r] = int(row[roles.row_id])
    return ColumnFrame(row_ids, roles.features, values, valid, treatments, outcomes)


def write_csv(frame: ColumnFrame, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_id", *frame.feature_names, "treatment", "outcome"])
        kinds = np.stack([frame.missing_kinds(n) for n in frame.feature_names]) \
            if frame.feature_names else np.empty((0, frame.n_rows), dtype=np.uint8)
        for r in range(frame.n_rows):
            cells = [str(frame.row_ids[r])]
            for i in range(len(frame.feature_names)):
                kind = kinds[i, r]
                if kind == NULL:
                    cells.append("")
                elif kind == NAN:
                    cells.append("NaN")
                else:
                    cells.append(repr(float(frame.feature_values[i][r])))
            cells.append(str(frame.treatments[r]))
            cells.append(str(frame.outcomes[r]))
            writer.writerow(cells)
