"""Collect-less multi-treatment split search.

Stage S1 turns a frame into per-candidate-bin, per-treatment prefix sums with
an explicit missing bin; stage S2 expands every candidate into both missing
routes, applies the full validity checks, scores with the DDP max-envelope,
and selects the winner under a strict total order.  All execution paths share
one scoring routine, so cross-path score deltas are exactly zero.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ContractViolationError, InvalidArgumentError
from .frame import ColumnFrame, PartitionedFrame
from . import rng

NAN_LEFT = "left"
NAN_RIGHT = "right"

PATH_REFERENCE = "reference_driver_collect"
PATH_RELATIONAL = "relational_windowed"
PATH_PARTITIONED = "partitioned_executor_local"
EXECUTION_PATHS = (PATH_REFERENCE, PATH_RELATIONAL, PATH_PARTITIONED)

STATUS_OK = "ok"
STATUS_NO_VALID = "no_valid_candidate"
STATUS_SKIPPED_TOO_LARGE = "skipped_too_large"


@dataclass(frozen=True)
class Boundaries:
    """Explicit interior cut points; B regular bins plus missing bin index B."""
    feature_name: str
    cuts: tuple[float, ...]

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.cuts)
        object.__setattr__(self, "cuts", cuts)
        if len(cuts) < 1:
            raise InvalidArgumentError("boundaries need at least one interior cut (B >= 2)")
        if any(not (a < b) for a, b in zip(cuts, cuts[1:])):
            raise InvalidArgumentError("cuts must be strictly increasing")

    @property
    def n_bins(self) -> int:
        return len(self.cuts) + 1

    @property
    def missing_bin(self) -> int:
        return self.n_bins


def uniform_boundaries(feature_name: str, n_bins: int, lo: float = 0.0,
                       hi: float = 1.0) -> Boundaries:
    cuts = tuple(lo + (hi - lo) * i / n_bins for i in range(1, n_bins))
    return Boundaries(feature_name, cuts)


def bucketize(value, boundaries: Boundaries):
    """Bin index in [0, B]: missing -> B; a value equal to cuts[i] lands in
    bin i (left-inclusive, matching '<=' left routing)."""
    cuts = np.asarray(boundaries.cuts)
    arr = np.asarray(value, dtype=np.float64)
    bins = np.searchsorted(cuts, arr, side="left").astype(np.int64)
    bins = np.where(np.isnan(arr), boundaries.missing_bin, bins)
    if np.isscalar(value) or arr.ndim == 0:
        return int(bins)
    return bins


def candidate_row_count(n_features: int, n_bins: int, n_treatments: int) -> int:
    if n_features < 1 or n_bins < 1 or n_treatments < 1:
        raise InvalidArgumentError("F, B, T must all be >= 1")
    return n_features * (n_bins - 1) * n_treatments


def select_control(treatment_labels: Sequence[str], override: Optional[str] = None) -> str:
    """Deterministic control choice: override, case-insensitive "control",
    exact "0", then the lexicographically smallest label."""
    labels = list(treatment_labels)
    if not labels:
        raise InvalidArgumentError("treatment vocabulary is empty")
    if override is not None:
        if override not in labels:
            raise InvalidArgumentError(f"control override {override!r} not in vocabulary")
        return override
    for lab in labels:
        if lab.lower() == "control":
            return lab
    if "0" in labels:
        return "0"
    return min(labels)


def treatment_codes(frame: ColumnFrame, treatments: tuple[str, ...]) -> np.ndarray:
    """Vocabulary index per row; a label outside the fixed vocabulary is a
    contract violation (the vocabulary is never inferred from data)."""
    cached = getattr(frame, "_treatment_factorized", None)
    if cached is None:
        uniq, inv = np.unique(np.asarray(frame.treatments, dtype=str), return_inverse=True)
        cached = (tuple(uniq.tolist()), inv.astype(np.int64))
        frame._treatment_factorized = cached
    uniq, inv = cached
    lookup = {label: i for i, label in enumerate(treatments)}
    mapping = np.empty(len(uniq), dtype=np.int64)
    for i, label in enumerate(uniq):
        code = lookup.get(label)
        if code is None:
            raise ContractViolationError(
                f"treatment label {label!r} outside the fixed vocabulary {treatments}")
        mapping[i] = code
    return mapping[inv] if len(uniq) else inv


@dataclass
class PrefixTable:
    """Per-candidate-bin, per-treatment sufficient statistics.

    Right-branch statistics are always derived as totals minus prefixes;
    missing tallies stay separate until a candidate routes them.
    """
    feature_name: str
    treatments: tuple[str, ...]
    cuts: tuple[float, ...]
    opps: np.ndarray             # int64 [B, T], regular bins only
    accepts: np.ndarray          # int64 [B, T]
    missing_opps: np.ndarray     # int64 [T]
    missing_accepts: np.ndarray  # int64 [T]
    left_opps: np.ndarray        # int64 [B-1, T]
    left_accepts: np.ndarray     # int64 [B-1, T]
    totals_opps: np.ndarray      # int64 [T]
    totals_accepts: np.ndarray   # int64 [T]

    @property
    def n_bins(self) -> int:
        return len(self.cuts) + 1

    @property
    def n_candidates(self) -> int:
        return self.n_bins - 1

    @classmethod
    def from_counts(cls, feature_name, treatments, cuts, opps, accepts,
                    missing_opps, missing_accepts) -> "PrefixTable":
        return cls(feature_name, tuple(treatments), tuple(cuts),
                   opps, accepts, missing_opps, missing_accepts,
                   np.cumsum(opps, axis=0)[:-1], np.cumsum(accepts, axis=0)[:-1],
                   opps.sum(axis=0), accepts.sum(axis=0))

    def merge(self, other: "PrefixTable") -> "PrefixTable":
        if (other.feature_name != self.feature_name or other.treatments != self.treatments
                or other.cuts != self.cuts):
            raise InvalidArgumentError("cannot merge prefix tables with different shapes")
        return PrefixTable.from_counts(
            self.feature_name, self.treatments, self.cuts,
            self.opps + other.opps, self.accepts + other.accepts,
            self.missing_opps + other.missing_opps,
            self.missing_accepts + other.missing_accepts)

    def zero_support_cells(self) -> list[tuple[int, int]]:
        bins, ts = np.nonzero(self.opps == 0)
        return list(zip(bins.tolist(), ts.tolist()))

    def to_record(self) -> dict:
        return {
            "feature": self.feature_name,
            "treatments": list(self.treatments),
            "n_bins": self.n_bins,
            "cuts": list(self.cuts),
            "opps": self.opps.tolist(),
            "accepts": self.accepts.tolist(),
            "missing_opps": self.missing_opps.tolist(),
            "missing_accepts": self.missing_accepts.tolist(),
            "left_opps": self.left_opps.tolist(),
            "left_accepts": self.left_accepts.tolist(),
            "totals_opps": self.totals_opps.tolist(),
            "totals_accepts": self.totals_accepts.tolist(),
        }


def _single_frame_counts(frame: ColumnFrame, feature: str, boundaries: Boundaries,
                         treatments: tuple[str, ...]):
    T = len(treatments)
    B = boundaries.n_bins
    bins = bucketize(frame.effective_values(feature), boundaries)
    codes = treatment_codes(frame, treatments)
    combined = bins * T + codes
    size = (B + 1) * T
    opps = np.bincount(combined, minlength=size).reshape(B + 1, T).astype(np.int64)
    accepts = np.bincount(combined[frame.outcomes == 1],
                          minlength=size).reshape(B + 1, T).astype(np.int64)
    return opps[:B], accepts[:B], opps[B], accepts[B]


def build_prefix_sums(data: Union[ColumnFrame, PartitionedFrame], feature: str,
                      boundaries: Boundaries, treatments: Sequence[str]) -> PrefixTable:
    """S1: exact group-by counts with explicit zero-fill over the fixed
    treatment vocabulary; independent of row order and partitioning."""
    treatments = tuple(treatments)
    frames = data.partitions if isinstance(data, PartitionedFrame) else (data,)
    if not frames:
        raise InvalidArgumentError("partitioned frame has no partitions")
    T = len(treatments)
    B = boundaries.n_bins
    opps = np.zeros((B, T), dtype=np.int64)
    accepts = np.zeros((B, T), dtype=np.int64)
    missing_opps = np.zeros(T, dtype=np.int64)
    missing_accepts = np.zeros(T, dtype=np.int64)
    for part in frames:
        o, a, mo, ma = _single_frame_counts(part, feature, boundaries, treatments)
        opps += o
        accepts += a
        missing_opps += mo
        missing_accepts += ma
    return PrefixTable.from_counts(feature, treatments, boundaries.cuts,
                                   opps, accepts, missing_opps, missing_accepts)


def windowed_prefix_table(data: Union[ColumnFrame, PartitionedFrame], feature: str,
                          boundaries: Boundaries, treatments: Sequence[str]) -> PrefixTable:
    """Same counts via a grouped-then-cumulative plan: sparse (bin, treatment)
    groups merged across partitions, then per-treatment running window sums.
    Integer arithmetic makes it exactly equal to the dense path."""
    treatments = tuple(treatments)
    T = len(treatments)
    B = boundaries.n_bins
    frames = data.partitions if isinstance(data, PartitionedFrame) else (data,)
    groups: dict[tuple[int, int], list[int]] = {}
    for part in frames:
        bins = bucketize(part.effective_values(feature), boundaries)
        codes = treatment_codes(part, treatments)
        combined = bins * T + codes
        keys, counts = np.unique(combined, return_counts=True)
        pos_keys, pos_counts = np.unique(combined[part.outcomes == 1], return_counts=True)
        pos_map = dict(zip(pos_keys.tolist(), pos_counts.tolist()))
        for key, cnt in zip(keys.tolist(), counts.tolist()):
            cell = groups.setdefault((key // T, key % T), [0, 0])
            cell[0] += cnt
            cell[1] += pos_map.get(key, 0)
    opps = np.zeros((B, T), dtype=np.int64)
    accepts = np.zeros((B, T), dtype=np.int64)
    missing_opps = np.zeros(T, dtype=np.int64)
    missing_accepts = np.zeros(T, dtype=np.int64)
    left_opps = np.zeros((B - 1, T), dtype=np.int64)
    left_accepts = np.zeros((B - 1, T), dtype=np.int64)
    totals_opps = np.zeros(T, dtype=np.int64)
    totals_accepts = np.zeros(T, dtype=np.int64)
    for t in range(T):
        bins_for_t = sorted(bb for (bb, tt) in groups if tt == t)
        running_o = running_a = 0
        pos = 0
        for c in range(B - 1):
            while pos < len(bins_for_t) and bins_for_t[pos] <= c:
                b = bins_for_t[pos]
                if b < B:
                    running_o += groups[(b, t)][0]
                    running_a += groups[(b, t)][1]
                pos += 1
            left_opps[c, t] = running_o
            left_accepts[c, t] = running_a
        for b in bins_for_t:
            o, a = groups[(b, t)]
            if b == B:
                missing_opps[t], missing_accepts[t] = o, a
            else:
                opps[b, t] = o
                accepts[b, t] = a
                totals_opps[t] += o
                totals_accepts[t] += a
    return PrefixTable(feature, treatments, boundaries.cuts, opps, accepts,
                       missing_opps, missing_accepts, left_opps, left_accepts,
                       totals_opps, totals_accepts)


def ddp_max(uplifts_left: Sequence[float], uplifts_right: Sequence[float]) -> float:
    """Maximum separation between the best uplift on one side and the worst
    on the other: max(max(R) - min(L), max(L) - min(R))."""
    ul = list(uplifts_left)
    ur = list(uplifts_right)
    if not ul or not ur:
        raise InvalidArgumentError("ddp_max needs at least one uplift per side")
    return max(max(ur) - min(ul), max(ul) - min(ur))


@dataclass
class CandidateScore:
    feature_name: str
    candidate_bin: int
    threshold_boundary: float
    nan_direction: str
    score: float
    valid: bool
    invalid_reason: Optional[str] = None
    left_rates: Optional[np.ndarray] = None
    right_rates: Optional[np.ndarray] = None
    left_uplifts: Optional[np.ndarray] = None
    right_uplifts: Optional[np.ndarray] = None
    left_opps: Optional[np.ndarray] = None
    right_opps: Optional[np.ndarray] = None
    left_accepts: Optional[np.ndarray] = None
    right_accepts: Optional[np.ndarray] = None

    def identity(self) -> tuple:
        return (self.feature_name, self.candidate_bin, self.nan_direction)


def candidate_order_key(cand: CandidateScore) -> tuple:
    """Strict total order: score desc, threshold asc, bin asc, NaN-left
    preferred, feature name asc.  min() under this key is the winner."""
    return (-cand.score, cand.threshold_boundary, cand.candidate_bin,
            0 if cand.nan_direction == NAN_LEFT else 1, cand.feature_name)


def compare_candidates(a: CandidateScore, b: CandidateScore) -> int:
    if not a.valid or not b.valid:
        raise InvalidArgumentError("compare_candidates is defined for valid candidates")
    ka, kb = candidate_order_key(a), candidate_order_key(b)
    return -1 if ka < kb else (1 if ka > kb else 0)


@dataclass(frozen=True)
class SplitConfig:
    min_leaf_size: int = 1
    control_label_override: Optional[str] = None
    safety_skip_threshold: int = 100000
    execution_path: str = PATH_REFERENCE
    pool_size: Optional[int] = None

    def __post_init__(self):
        if self.min_leaf_size < 1:
            raise InvalidArgumentError("min_leaf_size must be >= 1")
        if self.execution_path not in EXECUTION_PATHS:
            raise InvalidArgumentError(f"unknown execution path {self.execution_path!r}")

    def with_path(self, path: str) -> "SplitConfig":
        return SplitConfig(self.min_leaf_size, self.control_label_override,
                           self.safety_skip_threshold, path, self.pool_size)


def _score_candidate(table: PrefixTable, c: int, direction: str, control_idx: int,
                     min_leaf_size: int) -> CandidateScore:
    """The one scoring routine shared by every execution path."""
    left_o = table.left_opps[c].copy()
    left_a = table.left_accepts[c].copy()
    right_o = table.totals_opps - table.left_opps[c]
    right_a = table.totals_accepts - table.left_accepts[c]
    if direction == NAN_LEFT:
        left_o += table.missing_opps
        left_a += table.missing_accepts
    else:
        right_o = right_o + table.missing_opps
        right_a = right_a + table.missing_accepts
    cand = CandidateScore(table.feature_name, c, table.cuts[c], direction,
                          math.nan, False, left_opps=left_o, right_opps=right_o,
                          left_accepts=left_a, right_accepts=right_a)
    T = len(table.treatments)
    if T < 2:
        cand.invalid_reason = "needs a control and at least one non-control treatment"
        return cand
    if (left_o == 0).any() or (right_o == 0).any():
        cand.invalid_reason = "zero support: every treatment must have opps > 0 on both sides"
        return cand
    if left_o.sum() < min_leaf_size or right_o.sum() < min_leaf_size:
        cand.invalid_reason = f"branch total below min_leaf_size={min_leaf_size}"
        return cand
    left_rates = left_a / left_o
    right_rates = right_a / right_o
    noncontrol = [t for t in range(T) if t != control_idx]
    ul = left_rates[noncontrol] - left_rates[control_idx]
    ur = right_rates[noncontrol] - right_rates[control_idx]
    score = max(ur.max() - ul.min(), ul.max() - ur.min())
    cand.left_rates, cand.right_rates = left_rates, right_rates
    cand.left_uplifts, cand.right_uplifts = ul, ur
    cand.score = float(score)
    if not math.isfinite(cand.score):
        cand.invalid_reason = "score is not finite"
        return cand
    cand.valid = True
    return cand


def expand_and_score(table: PrefixTable, config: SplitConfig,
                     control_label: Optional[str] = None) -> list[CandidateScore]:
    """S2: exactly 2*(B-1) candidates per feature, both NaN routes, missing
    tallies added to the routed branch before rate computation."""
    control = control_label if control_label is not None else \
        select_control(table.treatments, config.control_label_override)
    control_idx = table.treatments.index(control)
    out = []
    for c in range(table.n_candidates):
        for direction in (NAN_LEFT, NAN_RIGHT):
            out.append(_score_candidate(table, c, direction, control_idx,
                                        config.min_leaf_size))
    return out


@dataclass
class BestSplit:
    feature_name: str
    candidate_bin: int
    threshold_boundary: float
    nan_direction: str
    score: float
    control_label: str
    diagnostics: dict = field(default_factory=dict)

    def as_tuple(self) -> tuple:
        return (self.feature_name, self.candidate_bin, self.threshold_boundary,
                self.nan_direction, self.score)

    def to_record(self) -> dict:
        return {"feature": self.feature_name, "candidate_bin": self.candidate_bin,
                "threshold_boundary": self.threshold_boundary,
                "nan_direction": self.nan_direction, "score": self.score,
                "control_label": self.control_label, "diagnostics": self.diagnostics}


@dataclass
class SplitSearchResult:
    status: str
    best: Optional[BestSplit]
    candidate_rows: int
    control_label: Optional[str] = None
    reason: Optional[str] = None

    def to_record(self) -> dict:
        rec = {"status": self.status, "candidate_rows": self.candidate_rows}
        if self.reason:
            rec["reason"] = self.reason
        if self.control_label is not None:
            rec["control_label"] = self.control_label
        rec["best"] = self.best.to_record() if self.best else None
        return rec


def _make_best(cand: CandidateScore, control: str) -> BestSplit:
    return BestSplit(cand.feature_name, cand.candidate_bin, cand.threshold_boundary,
                     cand.nan_direction, cand.score, control,
                     diagnostics={
                         "left_opps": cand.left_opps.tolist(),
                         "right_opps": cand.right_opps.tolist(),
                         "left_accepts": cand.left_accepts.tolist(),
                         "right_accepts": cand.right_accepts.tolist(),
                     })


def _total_candidate_rows(features: Sequence[str], boundaries: Mapping[str, Boundaries],
                          n_treatments: int) -> int:
    return sum(candidate_row_count(1, boundaries[f].n_bins, n_treatments) for f in features)


def _no_valid_summary(cands: Sequence[CandidateScore]) -> str:
    reasons: dict[str, int] = {}
    for c in cands:
        if not c.valid and c.invalid_reason:
            reasons[c.invalid_reason] = reasons.get(c.invalid_reason, 0) + 1
    parts = [f"{count}x {reason}" for reason, count in sorted(reasons.items())]
    return "no valid candidate: " + ("; ".join(parts) if parts else "no candidates")


def best_split(data: Union[ColumnFrame, PartitionedFrame], features: Sequence[str],
               boundaries: Mapping[str, Boundaries], treatments: Sequence[str],
               config: SplitConfig) -> SplitSearchResult:
    """Deterministic best split; all three execution paths return identical
    results on identical inputs (contract scope: fixed shared boundaries)."""
    treatments = tuple(treatments)
    features = list(features)
    control = select_control(treatments, config.control_label_override)
    cand_rows = _total_candidate_rows(features, boundaries, len(treatments))

    if config.execution_path == PATH_REFERENCE:
        if cand_rows > config.safety_skip_threshold:
            return SplitSearchResult(
                STATUS_SKIPPED_TOO_LARGE, None, cand_rows, control,
                reason=f"candidate rows {cand_rows} exceed safety threshold "
                       f"{config.safety_skip_threshold}")
        collected: list[CandidateScore] = []
        for feat in features:
            table = build_prefix_sums(data, feat, boundaries[feat], treatments)
            collected.extend(expand_and_score(table, config, control))
        valid = [c for c in collected if c.valid]
        if not valid:
            return SplitSearchResult(STATUS_NO_VALID, None, cand_rows, control,
                                     reason=_no_valid_summary(collected))
        return SplitSearchResult(STATUS_OK, _make_best(min(valid, key=candidate_order_key),
                                                       control), cand_rows, control)

    if config.execution_path == PATH_RELATIONAL:
        winners: list[CandidateScore] = []
        rejected: list[CandidateScore] = []
        for feat in features:
            table = windowed_prefix_table(data, feat, boundaries[feat], treatments)
            cands = expand_and_score(table, config, control)
            valid = [c for c in cands if c.valid]
            if valid:
                winners.append(min(valid, key=candidate_order_key))
            else:
                rejected.extend(cands)
        if not winners:
            return SplitSearchResult(STATUS_NO_VALID, None, cand_rows, control,
                                     reason=_no_valid_summary(rejected))
        return SplitSearchResult(STATUS_OK, _make_best(min(winners, key=candidate_order_key),
                                                       control), cand_rows, control)

    # partitioned_executor_local: feature-sharded workers, winner-only reduce
    pool_size = config.pool_size or min(8, max(len(features), 1))

    def feature_winner(feat: str):
        table = build_prefix_sums(data, feat, boundaries[feat], treatments)
        cands = expand_and_score(table, config, control)
        valid = [c for c in cands if c.valid]
        return min(valid, key=candidate_order_key) if valid else None

    with ThreadPoolExecutor(max_workers=pool_size) as pool:
        results = list(pool.map(feature_winner, features))
    winners = [w for w in results if w is not None]
    if not winners:
        return SplitSearchResult(STATUS_NO_VALID, None, cand_rows, control,
                                 reason="no valid candidate on any feature shard")
    return SplitSearchResult(STATUS_OK, _make_best(min(winners, key=candidate_order_key),
                                                   control), cand_rows, control)


# ---------------------------------------------------------------------------
# intentionally naive variants (the adversarial failure catalog)
# ---------------------------------------------------------------------------

NAIVE_VARIANTS = ("no_total_order", "first_seen_control", "sparse_omit",
                  "implicit_missing", "recomputed_quantiles")


def _row_order_digest(data: Union[ColumnFrame, PartitionedFrame]) -> int:
    frames = data.partitions if isinstance(data, PartitionedFrame) else (data,)
    h = hashlib.blake2b(digest_size=8)
    for f in frames:
        h.update(np.int64(f.n_rows).tobytes())
        h.update(f.row_ids.astype("<i8").tobytes())
    return int.from_bytes(h.digest(), "little")


def _naive_score_sparse(table: PrefixTable, c: int, direction: str, control_idx: int,
                        min_leaf_size: int) -> CandidateScore:
    """sparse_omit: drop zero-support cells, skip the positive-support check."""
    left_o = table.left_opps[c].copy()
    left_a = table.left_accepts[c].copy()
    right_o = table.totals_opps - table.left_opps[c]
    right_a = table.totals_accepts - table.left_accepts[c]
    if direction == NAN_LEFT:
        left_o += table.missing_opps
        left_a += table.missing_accepts
    else:
        right_o = right_o + table.missing_opps
        right_a = right_a + table.missing_accepts
    cand = CandidateScore(table.feature_name, c, table.cuts[c], direction,
                          math.nan, False, left_opps=left_o, right_opps=right_o,
                          left_accepts=left_a, right_accepts=right_a)
    if left_o.sum() < min_leaf_size or right_o.sum() < min_leaf_size:
        cand.invalid_reason = f"branch total below min_leaf_size={min_leaf_size}"
        return cand

    def branch_uplifts(opps, accepts):
        ctrl = accepts[control_idx] / opps[control_idx] if opps[control_idx] > 0 else 0.0
        return [accepts[t] / opps[t] - ctrl
                for t in range(len(table.treatments))
                if t != control_idx and opps[t] > 0]

    ul = branch_uplifts(left_o, left_a)
    ur = branch_uplifts(right_o, right_a)
    if not ul or not ur:
        cand.invalid_reason = "no supported non-control treatment on a branch"
        return cand
    cand.score = float(max(max(ur) - min(ul), max(ul) - min(ur)))
    if math.isfinite(cand.score):
        cand.valid = True
    else:
        cand.invalid_reason = "score is not finite"
    return cand


def approx_quantile_boundaries(data: Union[ColumnFrame, PartitionedFrame], feature: str,
                               n_bins: int, eps: float = 0.01) -> Optional[Boundaries]:
    """Epsilon-approximate rank-based boundaries from per-partition summaries.
    Deliberately depends on partition layout; only its instability relative to
    shared fixed boundaries matters."""
    frames = data.partitions if isinstance(data, PartitionedFrame) else (data,)
    points: list[tuple[float, int]] = []
    total = 0
    for part in frames:
        vals = part.effective_values(feature)
        vals = np.sort(vals[~np.isnan(vals)])
        if vals.size == 0:
            continue
        step = max(1, int(math.floor(eps * vals.size)))
        idx = np.arange(step - 1, vals.size, step)
        if idx.size == 0 or idx[-1] != vals.size - 1:
            idx = np.append(idx, vals.size - 1)
        prev = -1
        for i in idx:
            points.append((float(vals[i]), int(i - prev)))
            prev = int(i)
        total += vals.size
    if total == 0:
        return None
    points.sort()
    values = [p[0] for p in points]
    weights = np.cumsum([p[1] for p in points])
    cuts: list[float] = []
    for j in range(1, n_bins):
        target = j * total / n_bins
        k = min(int(np.searchsorted(weights, target, side="left")), len(values) - 1)
        if not cuts or values[k] > cuts[-1]:
            cuts.append(values[k])
    if not cuts:
        return None
    return Boundaries(feature, tuple(cuts))


def naive_variant_best_split(variant: str, data: Union[ColumnFrame, PartitionedFrame],
                             features: Sequence[str], boundaries: Mapping[str, Boundaries],
                             treatments: Sequence[str], config: SplitConfig) -> SplitSearchResult:
    """Intentionally broken semantics used by the failure catalog."""
    if variant not in NAIVE_VARIANTS:
        raise InvalidArgumentError(f"unknown naive variant {variant!r}")
    treatments = tuple(treatments)
    features = list(features)
    cand_rows = _total_candidate_rows(features, boundaries, len(treatments))

    if variant == "recomputed_quantiles":
        recomputed = {}
        for feat in features:
            b = approx_quantile_boundaries(data, feat, boundaries[feat].n_bins)
            recomputed[feat] = b if b is not None else boundaries[feat]
        contract_cfg = SplitConfig(config.min_leaf_size, config.control_label_override,
                                   max(config.safety_skip_threshold, cand_rows + 1),
                                   PATH_REFERENCE)
        return best_split(data, features, recomputed, treatments, contract_cfg)

    control = select_control(treatments, config.control_label_override)
    if variant == "first_seen_control":
        frames = data.partitions if isinstance(data, PartitionedFrame) else (data,)
        first = None
        for f in frames:
            if f.n_rows:
                first = str(f.treatments[0])
                break
        if first is None:
            raise InvalidArgumentError("cannot infer first-seen control from an empty frame")
        control = first
    control_idx = treatments.index(control) if control in treatments else 0

    collected: list[CandidateScore] = []
    for feat in features:
        table = build_prefix_sums(data, feat, boundaries[feat], treatments)
        directions = (NAN_LEFT,) if variant == "implicit_missing" else (NAN_LEFT, NAN_RIGHT)
        for c in range(table.n_candidates):
            for direction in directions:
                if variant == "sparse_omit":
                    collected.append(_naive_score_sparse(table, c, direction, control_idx,
                                                         config.min_leaf_size))
                else:
                    collected.append(_score_candidate(table, c, direction, control_idx,
                                                      config.min_leaf_size))
    valid = [c for c in collected if c.valid]
    if not valid:
        return SplitSearchResult(STATUS_NO_VALID, None, cand_rows, control,
                                 reason=_no_valid_summary(collected))
    if variant == "no_total_order":
        # stable but input-order-dependent tie resolution: scan an order keyed
        # off the concatenated row-id sequence, keep strictly-greater scores
        perm = rng.permutation(_row_order_digest(data), "naive-tie-order", len(valid))
        best = None
        for i in perm:
            if best is None or valid[int(i)].score > best.score:
                best = valid[int(i)]
        return SplitSearchResult(STATUS_OK, _make_best(best, control), cand_rows, control)
    return SplitSearchResult(STATUS_OK, _make_best(min(valid, key=candidate_order_key),
                                                   control), cand_rows, control)
