import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slateopt.data import DistributionalCriteria, Slate
from slateopt.metrics import score_slate
from slateopt.mmr import (MmrConfig, default_grid, lambda_sweep, minmax_normalize, mmr_rerank,
                          score_order_slate)

from conftest import binary_query, random_query
from oracles import mmr_oracle


class TestMinmax:
    def test_affine(self):
        np.testing.assert_allclose(minmax_normalize([2, 4, 6]), [0, 0.5, 1])

    def test_constant(self):
        np.testing.assert_array_equal(minmax_normalize([3, 3, 3]), [0, 0, 0])

    def test_unit_unchanged(self):
        np.testing.assert_array_equal(minmax_normalize([0, 1, 1, 0]), [0, 1, 1, 0])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
    def test_range(self, s):
        out = minmax_normalize(s)
        assert np.all(out >= 0) and np.all(out <= 1)


class TestConfig:
    def test_grid(self):
        g = default_grid()
        assert len(g) == 21 and g[0] == 0.0 and g[-1] == 1.0

    @pytest.mark.parametrize("grid", [(), (0.5, 0.2), (0.0, 1.5)])
    def test_bad_grid(self, grid):
        with pytest.raises(ValueError):
            MmrConfig(grid=grid)


class TestRerank:
    def test_hand_example(self):
        # A(cat 0, s'=1), B(cat 0, s'=0.9), C(cat 1, s'=0.1)
        q, s = binary_query([0, 0, 1], scores=[1.0, 0.9, 0.1], criteria=[[0.5, 0.5]])
        slate = mmr_rerank(q, s, q.criteria, 0.0, 2)
        assert slate.indices == (0, 2)
        assert score_slate(q, slate, s, 0.5, 2).gap == 0

    def test_score_order_at_one(self, rng):
        for _ in range(20):
            q, s = random_query(rng, 9)
            expected = tuple(np.argsort(-q.base_scores, kind="stable")[:4])
            assert mmr_rerank(q, s, q.criteria, 1.0, 4).indices == expected

    def test_single_category_falls_back_to_score(self):
        q, s = binary_query([1, 1, 1, 1], scores=[0.2, 0.9, 0.5, 0.1], criteria=[[0.3, 0.7]])
        assert mmr_rerank(q, s, q.criteria, 0.0, 3).indices == (1, 2, 0)

    def test_too_few_items(self):
        q, s = binary_query([0, 1], n_pad=2, criteria=[[0.5, 0.5]])
        with pytest.raises(ValueError):
            mmr_rerank(q, s, q.criteria, 0.5, 3)

    def test_ignores_padding(self):
        q, s = binary_query([0, 1, 1], scores=[0.1, 0.2, 0.3], n_pad=2, criteria=[[0.5, 0.5]])
        assert set(mmr_rerank(q, s, q.criteria, 0.5, 3).indices) == {0, 1, 2}

    def test_lower_index_breaks_full_ties(self):
        q, s = binary_query([0, 0, 0], scores=[1.0, 1.0, 1.0], criteria=[[1.0, 0.0]])
        assert mmr_rerank(q, s, q.criteria, 0.3, 3).indices == (0, 1, 2)

    def test_score_order_slate(self):
        q, _ = binary_query([0, 1, 0], scores=[0.1, 0.5, 0.5])
        assert score_order_slate(q, 2).indices == (1, 2)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.integers(1, 7), st.data())
    def test_matches_oracle(self, seed, n, data):
        rng = np.random.default_rng(seed)
        k = data.draw(st.integers(1, min(n, 3)))
        lam = data.draw(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]))
        q, s = random_query(rng, n)
        # coarse scores force ties
        q = type(q)(q.query_id, q.features, q.labels, np.round(q.base_scores, 0), q.criteria)
        got = mmr_rerank(q, s, q.criteria, lam, k).indices
        want = mmr_oracle(q.features.tolist(), q.base_scores.tolist(), s.variables,
                          [d.tolist() for d in q.criteria.targets], lam, k)
        assert list(got) == want


class TestSweep:
    def test_single_lambda(self, rng):
        qs = [random_query(rng, 8, qid=str(i))[0] for i in range(10)]
        _, s = random_query(rng, 8)
        res = lambda_sweep(qs, s, MmrConfig(k=3, grid=(1.0,)))
        assert len(res.rows) == 1
        so = np.mean([score_slate(q, score_order_slate(q, 3), s, 0.5, 3).gap for q in qs])
        assert res.rows[0]["gap"] == pytest.approx(so)

    def test_best_row(self, rng):
        qs = [random_query(rng, 8, qid=str(i))[0] for i in range(10)]
        _, s = random_query(rng, 8)
        res = lambda_sweep(qs, s, MmrConfig(k=3))
        assert all(res.best["goodness"] >= r["goodness"] for r in res.rows)
        assert list(res.rows[0]) == ["lambda", "ndcg", "gap_var0", "gap_var1", "gap", "goodness", "reward"]

    def test_rows_coincide_when_score_order_conforms(self):
        qs = []
        for i in range(5):
            # score order alternates categories, matching d = [0.5, 0.5] at every even prefix
            q, s = binary_query([0, 1, 0, 1, 0, 1], labels=[1, 0, 1, 0, 0, 1],
                                scores=[6, 5, 4, 3, 2, 1], criteria=[[0.5, 0.5]], qid=str(i))
            qs.append(q)
        res = lambda_sweep(qs, s, MmrConfig(k=4))
        for r in res.rows:
            assert r["ndcg"] == res.rows[0]["ndcg"] and r["gap"] == 0

    def test_gap_lower_at_zero(self, rng):
        qs, s = [], None
        for i in range(200):
            q, s = random_query(rng, 10, qid=str(i))
            qs.append(q)
        res = lambda_sweep(qs, s, MmrConfig(k=4, grid=(0.0, 1.0)))
        assert res.rows[0]["gap"] <= res.rows[1]["gap"]

    def test_empty(self):
        with pytest.raises(ValueError):
            lambda_sweep([], None, MmrConfig())


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0, 1))
def test_slate_valid(seed, lam):
    rng = np.random.default_rng(seed)
    q, s = random_query(rng, 9, n_pad=3)
    slate = mmr_rerank(q, s, q.criteria, lam, 5)
    assert len(set(slate.indices)) == 5
    assert all(not q.padding[i] for i in slate.indices)
    assert isinstance(slate, Slate)
    assert isinstance(q.criteria, DistributionalCriteria)
