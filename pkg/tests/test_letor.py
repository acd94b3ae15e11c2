import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slateopt.data import CandidateSet, CategoricalSchema, DistributionalCriteria
from slateopt.letor import (LetorParseError, attach_criteria, load_split, parse_letor, read_sidecar,
                            write_letor, write_sidecar)
from slateopt.ranker import builtin_base_ranker
from slateopt.simulate import SimConfig, augment_dataset
from slateopt.synthetic import SyntheticSpec, make_synthetic, split_queries


def write(tmp_path, text, name="data.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestParse:
    def test_basic_line(self, tmp_path):
        (q,) = parse_letor(write(tmp_path, "2 qid:1 1:0.5 3:1\n"), num_features=4)
        assert q.query_id == "1" and q.labels[0] == 2
        np.testing.assert_array_equal(q.features[0], [0.5, 0, 1, 0])

    def test_comment_ignored(self, tmp_path):
        (q,) = parse_letor(write(tmp_path, "1 qid:9 2:3.5 # doc7\n0 qid:9 1:1\n"))
        np.testing.assert_array_equal(q.features, [[0, 3.5], [1, 0]])
        assert not q.padding.any()

    def test_bad_label(self, tmp_path):
        with pytest.raises(LetorParseError, match=":2:"):
            parse_letor(write(tmp_path, "1 qid:1 1:1\nx qid:1 1:0.5\n"))

    @pytest.mark.parametrize("line", ["1 1:0.5", "1 qid: 1:0.5", "1 qid:1 0:2", "1 qid:1 a:2", "1 qid:1 3"])
    def test_malformed(self, tmp_path, line):
        with pytest.raises(LetorParseError):
            parse_letor(write(tmp_path, line + "\n"))

    def test_groups_in_file_order(self, tmp_path, caplog):
        text = "0 qid:b 1:1\n1 qid:a 1:2\n2 qid:b 1:3\n"
        with caplog.at_level(logging.WARNING):
            qs = parse_letor(write(tmp_path, text))
        assert [q.query_id for q in qs] == ["b", "a"]
        np.testing.assert_array_equal(qs[0].labels, [0, 2])
        assert "reappears" in caplog.text

    def test_score_column(self, tmp_path):
        (q,) = parse_letor(write(tmp_path, "0 qid:1 1:1 2:0.25\n1 qid:1 1:2 2:0.75\n"), score_column=1)
        np.testing.assert_array_equal(q.base_scores, [0.25, 0.75])

    def test_declared_dimension_too_small(self, tmp_path):
        with pytest.raises(ValueError):
            parse_letor(write(tmp_path, "0 qid:1 5:1\n"), num_features=3)


class TestSidecar:
    schema = CategoricalSchema(((0, 1), (2, 3)), 4, ("colour", "size"))

    def test_missing_variable(self, tmp_path):
        p = write(tmp_path, "q1\tcolour\t0.5,0.5\n", "c.tsv")
        with pytest.raises(ValueError, match="size"):
            read_sidecar(p, self.schema)

    def test_duplicate(self, tmp_path):
        p = write(tmp_path, "q1\tcolour\t0.5,0.5\nq1\tcolour\t0.2,0.8\n", "c.tsv")
        with pytest.raises(LetorParseError):
            read_sidecar(p, self.schema)

    def test_unknown_variable(self, tmp_path):
        p = write(tmp_path, "q1\tweight\t0.5,0.5\n", "c.tsv")
        with pytest.raises(LetorParseError):
            read_sidecar(p, self.schema)

    def test_missing_query_is_error(self):
        q = CandidateSet("q2", np.eye(4)[:2], np.zeros(2), np.zeros(2))
        with pytest.raises(KeyError):
            attach_criteria([q], {})

    def test_round_trip(self, tmp_path):
        d = DistributionalCriteria((np.array([0.1, 0.9]), np.array([1 / 3, 2 / 3])))
        q = CandidateSet("q1", np.eye(4)[:2], np.zeros(2), np.zeros(2), d)
        write_sidecar(tmp_path / "c.tsv", [q], self.schema)
        assert read_sidecar(tmp_path / "c.tsv", self.schema)["q1"] == d


class TestRoundTrip:
    def test_simulated_dataset(self, tmp_path):
        qs, schema = make_synthetic(SyntheticSpec(n_queries=6, n_items=10, seed=3))
        ranker = builtin_base_ranker(qs)
        aug = augment_dataset(qs, [ranker.score(q) for q in qs], SimConfig(nu=3, max_len=8), schema)
        write_letor(tmp_path / "d.txt", aug)
        write_sidecar(tmp_path / "c.tsv", aug, schema)
        m = aug[0].features.shape[1]
        back = load_split(tmp_path / "d.txt", tmp_path / "c.tsv", schema, m, m - 1)
        assert back == aug

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6, allow_subnormal=False), min_size=3, max_size=3))
    def test_float_exact(self, vals):
        import tempfile
        from pathlib import Path
        q = CandidateSet("7", np.array([vals]), np.array([3.0]), np.zeros(1))
        with tempfile.TemporaryDirectory() as d:
            path = Path(d) / "x.txt"
            write_letor(path, [q])
            (back,) = parse_letor(path, num_features=3)
        np.testing.assert_array_equal(back.features, q.features)


class TestBaseRanker:
    def test_linear_ordering(self, rng):
        x = rng.normal(size=(30, 3))
        y = 2.0 * x[:, 1] + 5.0
        q = CandidateSet("q", x, y - y.min(), np.zeros(30))
        s = builtin_base_ranker([q]).score(q)
        np.testing.assert_array_equal(np.argsort(s), np.argsort(x[:, 1]))

    def test_constant_labels(self, rng):
        q = CandidateSet("q", rng.normal(size=(10, 3)), np.full(10, 2.0), np.zeros(10))
        s = builtin_base_ranker([q]).score(q)
        np.testing.assert_allclose(s, 2.0, atol=1e-12)

    def test_duplicate_column(self, rng):
        # ridge shrinkage shifts predictions by O(ridge / rows); 1000 rows keeps that below 1e-6
        x = rng.normal(size=(1000, 3))
        y = rng.integers(0, 5, size=1000).astype(float)
        q = CandidateSet("q", x, y, np.zeros(1000))
        q2 = CandidateSet("q", np.hstack([x, x[:, :1]]), y, np.zeros(1000))
        a = builtin_base_ranker([q]).score(q)
        b = builtin_base_ranker([q2]).score(q2)
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_split_sizes(self):
        qs, _ = make_synthetic(SyntheticSpec(n_queries=10, n_items=5))
        tr, va, te = split_queries(qs)
        assert (len(tr), len(va), len(te)) == (6, 2, 2)
