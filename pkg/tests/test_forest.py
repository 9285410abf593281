import numpy as np
import pytest

import policylock as pl
from policylock.forest import (INTERNAL_CATEGORICAL, INTERNAL_CONTINUOUS, LEAF,
                               TreeArrays)
from policylock import rng

from _oracles import scalar_leaf, scalar_scores


def single_leaf_tree(payload):
    return TreeArrays([LEAF], [-1], [float("nan")], [-1], [-1], [False], [payload])


def depth1_tree(threshold=0.5, nan_left=True, left=(1.0, 0.0), right=(0.0, 1.0),
                categorical=False):
    kind = INTERNAL_CATEGORICAL if categorical else INTERNAL_CONTINUOUS
    return TreeArrays([kind, LEAF, LEAF], [0, -1, -1],
                      [threshold, float("nan"), float("nan")],
                      [1, -1, -1], [2, -1, -1], [nan_left, False, False],
                      [[0.0, 0.0], list(left), list(right)])


class TestValidation:
    def test_single_leaf_passes(self):
        forest = pl.ForestArrays([single_leaf_tree([0.5, 0.5])], ("f0",), ("a", "b"))
        assert pl.validate_forest(forest).passed

    def test_planted_cycle_fails_step_budget(self):
        tree = TreeArrays([INTERNAL_CONTINUOUS, INTERNAL_CONTINUOUS, LEAF],
                          [0, 0, -1], [0.5, 0.5, float("nan")],
                          [1, 0, -1], [1, 0, -1], [False] * 3,
                          [[0.0], [0.0], [1.0]])
        forest = pl.ForestArrays([tree], ("f0",), ("a",))
        report = pl.validate_forest(forest)
        assert not report.passed
        assert any("step budget" in v.message for v in report.violations)

    def test_payload_column_mismatch(self):
        forest = pl.ForestArrays([single_leaf_tree([0.5])], ("f0",), ("a", "b"))
        report = pl.validate_forest(forest)
        assert not report.passed
        assert any("columns" in v.message for v in report.violations)

    def test_child_out_of_range(self):
        tree = TreeArrays([INTERNAL_CONTINUOUS, LEAF], [0, -1], [0.5, 0.0],
                          [1, -1], [9, -1], [False, False], [[0.0], [1.0]])
        report = pl.validate_forest(pl.ForestArrays([tree], ("f0",), ("a",)))
        assert any("out of range" in v.message for v in report.violations)

    def test_self_loop_child(self):
        tree = TreeArrays([INTERNAL_CONTINUOUS, LEAF], [0, -1], [0.5, 0.0],
                          [0, -1], [1, -1], [False, False], [[0.0], [1.0]])
        report = pl.validate_forest(pl.ForestArrays([tree], ("f0",), ("a",)))
        assert any("itself" in v.message for v in report.violations)


class TestTraversal:
    def test_single_leaf_any_row(self):
        tree = single_leaf_tree([0.3, 0.7])
        cols = np.array([[0.1, 5.0, float("nan")]])
        out = pl.traverse_batch(tree, cols)
        assert np.array_equal(out, np.tile([0.3, 0.7], (3, 1)))

    def test_boundary_value_routes_left(self):
        # continuous nodes route left on <=
        tree = depth1_tree(threshold=0.5)
        out = pl.traverse_batch(tree, np.array([[0.5, 0.5000001]]))
        assert out[0].tolist() == [1.0, 0.0]
        assert out[1].tolist() == [0.0, 1.0]

    def test_nan_follows_flag(self):
        cols = np.array([[float("nan")]])
        left = pl.traverse_batch(depth1_tree(nan_left=True), cols)
        right = pl.traverse_batch(depth1_tree(nan_left=False), cols)
        assert left[0].tolist() == [1.0, 0.0]
        assert right[0].tolist() == [0.0, 1.0]

    def test_categorical_routes_on_exact_equality(self):
        tree = depth1_tree(threshold=2.0, categorical=True)
        out = pl.traverse_batch(tree, np.array([[2.0, 2.5, 1.0]]))
        assert out[:, 0].tolist() == [1.0, 0.0, 0.0]

    def test_row_major_kernel_matches_columnar(self):
        forest = pl.random_forest(4, 5, [f"f{i}" for i in range(6)], ("a", "b"),
                                  seed=3, categorical_features=(1,))
        cols = np.vstack([rng.uniform_stream(5, f"c{i}", 200) for i in range(6)])
        cols[2, :10] = np.nan
        a = pl.score_forest(forest, cols, row_major=False)
        b = pl.score_forest(forest, np.ascontiguousarray(cols.T), row_major=True)
        assert np.array_equal(a, b)

    def test_matches_scalar_walk_oracle(self):
        # 100 random rows on a random valid depth-4 tree
        names = [f"f{i}" for i in range(5)]
        forest = pl.random_forest(1, 4, names, ("a", "b", "c"), seed=17)
        tree = forest.trees[0]
        cols = np.vstack([rng.uniform_stream(29, f"col{i}", 100) for i in range(5)])
        cols[0, ::7] = np.nan
        got = pl.traverse_batch(tree, cols)
        rows = cols.T.tolist()
        for r in range(100):
            leaf = scalar_leaf(tree, rows[r])
            assert np.array_equal(got[r], tree.leaf_payload[leaf])

    def test_malformed_tree_raises_at_scoring(self):
        tree = TreeArrays([INTERNAL_CONTINUOUS, INTERNAL_CONTINUOUS, LEAF],
                          [0, 0, -1], [0.5, 0.5, 0.0], [1, 0, -1], [1, 0, -1],
                          [False] * 3, [[0.0], [0.0], [1.0]])
        with pytest.raises(pl.MalformedTreeError):
            pl.traverse_batch(tree, np.array([[0.1]]))


class TestScoreForest:
    def test_one_tree_equals_traverse(self):
        forest = pl.random_forest(1, 3, ["f0", "f1"], ("a", "b"), seed=9)
        cols = np.vstack([rng.uniform_stream(1, "a", 50),
                          rng.uniform_stream(1, "b", 50)])
        assert np.array_equal(pl.score_forest(forest, cols),
                              pl.traverse_batch(forest.trees[0], cols))

    def test_two_constant_trees_average(self):
        t1 = single_leaf_tree([1.0, 0.0])
        t2 = single_leaf_tree([0.0, 1.0])
        forest = pl.ForestArrays([t1, t2], ("f0",), ("a", "b"))
        out = pl.score_forest(forest, np.array([[0.2, 0.9]]))
        assert np.array_equal(out, np.tile([0.5, 0.5], (2, 1)))

    def test_fifty_tree_forest_matches_brute_force_mean(self):
        names = [f"f{i}" for i in range(4)]
        forest = pl.random_forest(50, 4, names, ("a", "b"), seed=23)
        cols = np.vstack([rng.uniform_stream(31, f"c{i}", 40) for i in range(4)])
        got = pl.score_forest(forest, cols)
        expected = scalar_scores(forest, cols.T.tolist())
        assert np.array_equal(got, np.array(expected))

    def test_empty_forest_rejected(self):
        with pytest.raises(pl.InvalidArgumentError):
            pl.score_forest(pl.ForestArrays([], ("f0",), ("a",)), np.zeros((1, 0)))


class TestSerialization:
    def test_round_trip_bit_exact(self):
        forest = pl.random_forest(5, 6, [f"f{i}" for i in range(8)],
                                  ("control", "t1", "t2"), seed=41,
                                  categorical_features=(0, 3))
        text = pl.forest_to_text(forest)
        back = pl.forest_from_text(text)
        assert back.feature_names == forest.feature_names
        assert back.treatment_labels == forest.treatment_labels
        for a, b in zip(forest.trees, back.trees):
            for field in ("node_type", "feature_index", "split_value", "left_child",
                          "right_child", "nan_goes_left", "leaf_payload"):
                assert np.array_equal(getattr(a, field), getattr(b, field),
                                      equal_nan=True)
        assert pl.forest_to_text(back) == text

    def test_unknown_version_rejected(self):
        forest = pl.ForestArrays([single_leaf_tree([0.5])], ("f0",), ("a",))
        text = pl.forest_to_text(forest).replace("v1", "v999")
        with pytest.raises(pl.SchemaError):
            pl.forest_from_text(text)
