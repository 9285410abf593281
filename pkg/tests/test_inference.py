import numpy as np
import pytest

import policylock as pl
from policylock.harness import inference_fixture
from policylock.inference import parity_from_columns

from conftest import build_frame


@pytest.fixture(scope="module")
def fixture():
    frame, forest = inference_fixture(n_rows=3000, n_features=8, n_treatments=3,
                                      n_trees=12, depth=5, seed=7, p_miss=0.1)
    return frame, forest


class TestScore:
    def test_empty_frame_empty_scores(self):
        frame = build_frame({"f00": []}, treatments=[], outcomes=[])
        forest = pl.random_forest(3, 2, ("f00",), ("a", "b"), seed=1)
        col = pl.score(pl.partition(frame, 3), forest,
                       pl.InferenceBackend("vectorized_columnar"))
        assert col.n_rows == 0
        assert col.vectors.shape == (0, 2)

    def test_all_backends_pairwise_exact(self, fixture):
        frame, forest = fixture
        pf = pl.partition(frame, 4)
        cols = {kind: pl.score(pf, forest, pl.InferenceBackend(kind, batch_size=500))
                for kind in pl.BACKEND_KINDS}
        kinds = list(cols)
        for i, a in enumerate(kinds):
            for b in kinds[i + 1:]:
                rep = parity_from_columns(cols[a], cols[b], a, b)
                assert rep.mismatch_rows == 0
                assert rep.max_abs_delta == 0.0
                assert rep.checksum_equal

    def test_partition_count_invariance(self, fixture):
        frame, forest = fixture
        backend = pl.InferenceBackend("vectorized_columnar", 512)
        base = pl.score(pl.partition(frame, 1), forest, backend)
        for p in (2, 7, 16):
            other = pl.score(pl.partition(frame, p), forest, backend)
            rep = parity_from_columns(base, other, "p1", f"p{p}")
            assert rep.mismatch_rows == 0 and rep.max_abs_delta == 0.0

    def test_batch_size_invariance(self, fixture):
        frame, forest = fixture
        pf = pl.partition(frame, 3)
        base = pl.score(pf, forest, pl.InferenceBackend("vectorized_rowmajor", 1))
        for batch in (17, 1000, 10**6):
            other = pl.score(pf, forest,
                             pl.InferenceBackend("vectorized_rowmajor", batch))
            assert np.array_equal(base.vectors, other.vectors)

    def test_missing_feature_is_schema_error(self, fixture):
        _, forest = fixture
        frame = build_frame({"zzz": [0.1]})
        with pytest.raises(pl.SchemaError):
            pl.score(pl.partition(frame, 1), forest,
                     pl.InferenceBackend("vectorized_columnar"))

    def test_malformed_forest_rejected(self):
        from policylock.forest import TreeArrays, INTERNAL_CONTINUOUS, LEAF
        tree = TreeArrays([INTERNAL_CONTINUOUS, LEAF], [0, -1], [0.5, 0.0],
                          [0, -1], [1, -1], [False, False], [[0.0], [1.0]])
        forest = pl.ForestArrays([tree], ("f00",), ("a",))
        frame = build_frame({"f00": [0.5]})
        with pytest.raises(pl.InvalidArgumentError):
            pl.score(pl.partition(frame, 1), forest,
                     pl.InferenceBackend("broadcast_rowwise"))


class TestLazyInit:
    @pytest.mark.parametrize("kind,expected", [
        ("broadcast_rowwise", 5), ("vectorized_columnar", 5),
        ("vectorized_rowmajor", 5)])
    def test_once_per_partition(self, fixture, kind, expected):
        frame, forest = fixture
        pf = pl.partition(frame.take(np.arange(500)), 5)
        stats = pl.InitStats()
        pl.score(pf, forest, pl.InferenceBackend(kind, batch_size=50), stats=stats)
        assert stats.model_inits == expected

    def test_anti_pattern_inits_per_row(self, fixture):
        frame, forest = fixture
        pf = pl.partition(frame.take(np.arange(40)), 4)
        stats = pl.InitStats()
        pl.score(pf, forest, pl.InferenceBackend("anti_pattern"), stats=stats)
        assert stats.model_inits == 40


class TestParity:
    def test_backend_vs_itself(self, fixture):
        frame, forest = fixture
        pf = pl.partition(frame.take(np.arange(300)), 2)
        backend = pl.InferenceBackend("vectorized_columnar")
        rep = pl.check_parity(pf, forest, backend, backend)
        assert rep.mismatch_rows == 0
        assert rep.max_abs_delta == 0.0
        assert rep.checksum_equal

    def test_planted_payload_fault_detected(self, fixture):
        frame, forest = fixture
        pf = pl.partition(frame.take(np.arange(500)), 2)
        backend = pl.InferenceBackend("vectorized_columnar")
        ref = pl.score(pf, forest, backend)
        import copy
        broken = copy.deepcopy(forest)
        leaf = np.flatnonzero(broken.trees[0].node_type == 2)[0]
        broken.trees[0].leaf_payload[leaf, 0] += 1e-6
        cand = pl.score(pf, broken, backend)
        rep = parity_from_columns(ref, cand, "ok", "broken")
        assert rep.mismatch_rows >= 1
        assert not rep.checksum_equal

    def test_row_set_mismatch_is_alignment_error(self, fixture):
        frame, forest = fixture
        backend = pl.InferenceBackend("vectorized_columnar")
        a = pl.score(pl.partition(frame.take(np.arange(10)), 1), forest, backend)
        b = pl.score(pl.partition(frame.take(np.arange(5, 15)), 1), forest, backend)
        with pytest.raises(pl.AlignmentError):
            parity_from_columns(a, b, "a", "b")


class TestThroughput:
    def test_rows_per_second_definitional(self, fixture):
        frame, forest = fixture
        pf = pl.partition(frame.take(np.arange(1000)), 2)
        rep = pl.measure_throughput(pf, forest,
                                    pl.InferenceBackend("vectorized_columnar"),
                                    repeats=3)
        assert rep.rows_per_second == pytest.approx(rep.n_rows / rep.wall_seconds)
        assert len(rep.samples) == 3

    def test_max_rows_cap_recorded(self, fixture):
        frame, forest = fixture
        pf = pl.partition(frame, 4)
        rep = pl.measure_throughput(pf, forest,
                                    pl.InferenceBackend("vectorized_columnar"),
                                    repeats=1, max_rows=100)
        assert rep.capped and rep.n_rows == 100

    def test_repeats_must_be_positive(self, fixture):
        frame, forest = fixture
        with pytest.raises(pl.InvalidArgumentError):
            pl.measure_throughput(pl.partition(frame, 1), forest,
                                  pl.InferenceBackend("vectorized_columnar"),
                                  repeats=0)
