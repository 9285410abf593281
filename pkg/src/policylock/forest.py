"""Array-native policy forest: parallel node arrays plus a leaf payload matrix.

Traversal semantics are part of the execution contract: continuous nodes route
left on ``<=``, categorical nodes route left on exact equality, missing values
follow the per-node ``nan_goes_left`` flag (uniformly for both node kinds), and
forest output is the arithmetic mean of per-tree score vectors accumulated in
tree order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError, MalformedTreeError, SchemaError
from . import rng

INTERNAL_CONTINUOUS = 0
INTERNAL_CATEGORICAL = 1
LEAF = 2

_NODE_TYPE_NAMES = {INTERNAL_CONTINUOUS: "internal_continuous",
                    INTERNAL_CATEGORICAL: "internal_categorical",
                    LEAF: "leaf"}
_NODE_TYPE_CODES = {v: k for k, v in _NODE_TYPE_NAMES.items()}


@dataclass
class TreeArrays:
    node_type: np.ndarray      # int8 [n_nodes]
    feature_index: np.ndarray  # int32 [n_nodes], -1 on leaves
    split_value: np.ndarray    # float64 [n_nodes]
    left_child: np.ndarray     # int32 [n_nodes], -1 on leaves
    right_child: np.ndarray    # int32 [n_nodes], -1 on leaves
    nan_goes_left: np.ndarray  # bool [n_nodes]
    leaf_payload: np.ndarray   # float64 [n_nodes, T]

    def __post_init__(self):
        self.node_type = np.asarray(self.node_type, dtype=np.int8)
        self.feature_index = np.asarray(self.feature_index, dtype=np.int32)
        self.split_value = np.asarray(self.split_value, dtype=np.float64)
        self.left_child = np.asarray(self.left_child, dtype=np.int32)
        self.right_child = np.asarray(self.right_child, dtype=np.int32)
        self.nan_goes_left = np.asarray(self.nan_goes_left, dtype=bool)
        self.leaf_payload = np.asarray(self.leaf_payload, dtype=np.float64)

    @property
    def n_nodes(self) -> int:
        return len(self.node_type)


@dataclass
class ForestArrays:
    trees: list[TreeArrays]
    feature_names: tuple[str, ...]
    treatment_labels: tuple[str, ...]

    def __post_init__(self):
        self.feature_names = tuple(self.feature_names)
        self.treatment_labels = tuple(self.treatment_labels)

    @property
    def n_treatments(self) -> int:
        return len(self.treatment_labels)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


def default_step_budget(n_nodes: int) -> int:
    # any acyclic traversal is bounded by depth <= n_nodes; factor 4 is slack
    return 4 * max(n_nodes, 1)


@dataclass
class Violation:
    tree_index: int
    node_index: Optional[int]
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def validate_forest(forest: ForestArrays, step_budget: Optional[int] = None) -> ValidationReport:
    """Structural validation; violations are report entries, never exceptions."""
    report = ValidationReport()
    T = forest.n_treatments
    F = forest.n_features
    for ti, tree in enumerate(forest.trees):
        n = tree.n_nodes
        budget = step_budget if step_budget is not None else default_step_budget(n)
        lengths = {"node_type": len(tree.node_type), "feature_index": len(tree.feature_index),
                   "split_value": len(tree.split_value), "left_child": len(tree.left_child),
                   "right_child": len(tree.right_child), "nan_goes_left": len(tree.nan_goes_left),
                   "leaf_payload": len(tree.leaf_payload)}
        bad = {k: v for k, v in lengths.items() if v != n}
        if bad:
            report.violations.append(Violation(ti, None, f"array length mismatch: {bad}"))
            continue
        if n == 0:
            report.violations.append(Violation(ti, None, "tree has no nodes"))
            continue
        if tree.leaf_payload.ndim != 2 or tree.leaf_payload.shape[1] != T:
            report.violations.append(Violation(
                ti, None, f"leaf_payload must have {T} columns, "
                          f"got shape {tree.leaf_payload.shape}"))
            continue
        if not np.isin(tree.node_type, (INTERNAL_CONTINUOUS, INTERNAL_CATEGORICAL, LEAF)).all():
            report.violations.append(Violation(ti, None, "unknown node_type code"))
            continue
        internal = tree.node_type != LEAF
        idx = np.flatnonzero(internal)
        for ni in idx:
            for side, child in (("left", tree.left_child[ni]), ("right", tree.right_child[ni])):
                if not (0 <= child < n):
                    report.violations.append(Violation(ti, int(ni), f"{side} child {child} out of range"))
                elif child == ni:
                    report.violations.append(Violation(ti, int(ni), f"{side} child points to itself"))
            f = tree.feature_index[ni]
            if not (0 <= f < F):
                report.violations.append(Violation(ti, int(ni), f"feature index {f} out of range [0, {F})"))
        if any(v.tree_index == ti for v in report.violations):
            continue
        # worst-case steps to a leaf from every node; cycles never resolve
        steps = np.where(internal, np.inf, 0.0)
        for _ in range(n + 1):
            nxt = np.where(internal,
                           1.0 + np.maximum(steps[tree.left_child], steps[tree.right_child]),
                           0.0)
            if np.array_equal(nxt, steps, equal_nan=True):
                break
            steps = nxt
        over = ~(steps <= budget)
        if over.any():
            first = int(np.flatnonzero(over)[0])
            report.violations.append(Violation(
                ti, first, f"step budget exceeded: node cannot reach a leaf "
                           f"within {budget} steps (cycle or malformed tree)"))
    return report


def _leaf_indices(tree: TreeArrays, columns: np.ndarray, row_major: bool,
                  step_budget: Optional[int] = None) -> np.ndarray:
    """Vectorized frontier traversal; returns the leaf node index per row.

    ``columns`` is [F, n] when ``row_major`` is False, else [n, F]; missing
    cells must already be NaN.
    """
    n = columns.shape[1] if not row_major else columns.shape[0]
    budget = step_budget if step_budget is not None else default_step_budget(tree.n_nodes)
    node = np.zeros(n, dtype=np.int32)
    if n == 0:
        return node
    active = np.flatnonzero(tree.node_type[node] != LEAF)
    steps = 0
    while active.size:
        if steps >= budget:
            raise MalformedTreeError(f"traversal exceeded step budget {budget}")
        nd = node[active]
        f = tree.feature_index[nd]
        vals = columns[active, f] if row_major else columns[f, active]
        miss = np.isnan(vals)
        thr = tree.split_value[nd]
        is_cat = tree.node_type[nd] == INTERNAL_CATEGORICAL
        go_left = np.where(is_cat, vals == thr, vals <= thr)
        go_left = np.where(miss, tree.nan_goes_left[nd], go_left)
        node[active] = np.where(go_left, tree.left_child[nd], tree.right_child[nd])
        active = active[tree.node_type[node[active]] != LEAF]
        steps += 1
    return node


def traverse_batch(tree: TreeArrays, columns: np.ndarray, row_major: bool = False,
                   step_budget: Optional[int] = None) -> np.ndarray:
    """Leaf payload [n, T] for a float64 batch whose missing cells are NaN."""
    leaves = _leaf_indices(tree, columns, row_major, step_budget)
    return tree.leaf_payload[leaves]


def score_forest(forest: ForestArrays, columns: np.ndarray, row_major: bool = False) -> np.ndarray:
    """Elementwise mean of per-tree payloads, accumulated in tree order so the
    float operation sequence matches the scalar reference walk exactly."""
    if not forest.trees:
        raise InvalidArgumentError("cannot score an empty forest")
    n = columns.shape[0] if row_major else columns.shape[1]
    acc = np.zeros((n, forest.n_treatments), dtype=np.float64)
    for tree in forest.trees:
        acc += traverse_batch(tree, columns, row_major)
    acc /= float(len(forest.trees))
    return acc


FOREST_FORMAT_VERSION = "1"


def forest_to_text(forest: ForestArrays) -> str:
    """Canonical structured text: documented field order, full-precision
    (shortest round-trip) decimal floats, bit-exact on read-back."""
    lines = [f"forestarrays v{FOREST_FORMAT_VERSION}"]
    lines.append(f"treatments {forest.n_treatments}")
    lines.extend(forest.treatment_labels)
    lines.append(f"features {forest.n_features}")
    lines.extend(forest.feature_names)
    lines.append(f"trees {len(forest.trees)}")
    for tree in forest.trees:
        lines.append(f"tree {tree.n_nodes}")
        for i in range(tree.n_nodes):
            fields = [
                _NODE_TYPE_NAMES[int(tree.node_type[i])],
                str(int(tree.feature_index[i])),
                repr(float(tree.split_value[i])),
                str(int(tree.left_child[i])),
                str(int(tree.right_child[i])),
                "1" if tree.nan_goes_left[i] else "0",
            ]
            fields.extend(repr(float(v)) for v in tree.leaf_payload[i])
            lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def forest_from_text(text: str) -> ForestArrays:
    lines = text.splitlines()
    pos = 0

    def next_line() -> str:
        nonlocal pos
        if pos >= len(lines):
            raise SchemaError("forest text truncated")
        line = lines[pos]
        pos += 1
        return line

    header = next_line().split()
    if len(header) != 2 or header[0] != "forestarrays":
        raise SchemaError("not a forest file")
    if header[1] != f"v{FOREST_FORMAT_VERSION}":
        raise SchemaError(f"unsupported forest format version {header[1]!r}")
    t_count = int(next_line().split()[1])
    labels = [next_line() for _ in range(t_count)]
    f_count = int(next_line().split()[1])
    names = [next_line() for _ in range(f_count)]
    n_trees = int(next_line().split()[1])
    trees = []
    for _ in range(n_trees):
        n_nodes = int(next_line().split()[1])
        node_type = np.empty(n_nodes, dtype=np.int8)
        feature_index = np.empty(n_nodes, dtype=np.int32)
        split_value = np.empty(n_nodes, dtype=np.float64)
        left = np.empty(n_nodes, dtype=np.int32)
        right = np.empty(n_nodes, dtype=np.int32)
        nan_left = np.empty(n_nodes, dtype=bool)
        payload = np.empty((n_nodes, t_count), dtype=np.float64)
        for i in range(n_nodes):
            parts = next_line().split()
            node_type[i] = _NODE_TYPE_CODES[parts[0]]
            feature_index[i] = int(parts[1])
            split_value[i] = float(parts[2])
            left[i] = int(parts[3])
            right[i] = int(parts[4])
            nan_left[i] = parts[5] == "1"
            for t in range(t_count):
                payload[i, t] = float(parts[6 + t])
        trees.append(TreeArrays(node_type, feature_index, split_value,
                                left, right, nan_left, payload))
    return ForestArrays(trees, tuple(names), tuple(labels))


def random_forest(n_trees: int, max_depth: int, feature_names: Sequence[str],
                  treatment_labels: Sequence[str], seed: int,
                  categorical_features: Sequence[int] = (),
                  categorical_cardinality: int = 4,
                  full: bool = True) -> ForestArrays:
    """Seeded random valid forest, used as a deterministic parity fixture.

    With ``full`` every path reaches ``max_depth``; otherwise nodes become
    leaves early with probability 0.25 per level.
    """
    feature_names = tuple(feature_names)
    treatment_labels = tuple(treatment_labels)
    F, T = len(feature_names), len(treatment_labels)
    cat_set = set(int(c) for c in categorical_features)
    trees = []
    for k in range(n_trees):
        tag = f"tree:{k}"
        draws = iter(rng.uniform_stream(seed, tag, 16 * (2 ** (max_depth + 2))))
        node_type, feature_index, split_value = [], [], []
        left_child, right_child, nan_left, payload = [], [], [], []

        def new_node():
            node_type.append(LEAF)
            feature_index.append(-1)
            split_value.append(float("nan"))
            left_child.append(-1)
            right_child.append(-1)
            nan_left.append(False)
            payload.append([0.0] * T)
            return len(node_type) - 1

        def build(depth: int) -> int:
            me = new_node()
            stop = depth >= max_depth or (not full and next(draws) < 0.25 and depth > 0)
            if stop:
                payload[me] = [float(next(draws)) for _ in range(T)]
                return me
            f = int(next(draws) * F) % F
            node_type[me] = INTERNAL_CATEGORICAL if f in cat_set else INTERNAL_CONTINUOUS
            feature_index[me] = f
            if f in cat_set:
                split_value[me] = float(int(next(draws) * categorical_cardinality))
            else:
                split_value[me] = float(next(draws))
            nan_left[me] = next(draws) < 0.5
            lo = build(depth + 1)
            hi = build(depth + 1)
            left_child[me] = lo
            right_child[me] = hi
            return me

        build(0)
        trees.append(TreeArrays(np.array(node_type), np.array(feature_index),
                                np.array(split_value), np.array(left_child),
                                np.array(right_child), np.array(nan_left),
                                np.array(payload)))
    return ForestArrays(trees, feature_names, treatment_labels)
