import json

import numpy as np
import pytest

from slateopt.cli import main
from slateopt.config import load_config
from slateopt.data import CategoricalSchema, DistributionalCriteria
from slateopt.letor import parse_letor, write_letor, write_sidecar
from slateopt.report import read_csv
from slateopt.synthetic import SyntheticSpec, make_synthetic, split_queries

from conftest import binary_query

K = 3
TINY = {
    "seed": 0,
    "simulation": {"nu": 3, "max_len": 8},
    "model": {"embed_dim": 4, "hidden_dim": 5, "head_dim": 4},
    "training": {"k": K, "batch_size": 16, "lr": 0.001, "max_epochs": 2, "patience": 5},
    "mmr": {"k": K, "grid": [0.0, 0.5, 1.0]},
}


def write_raw(root):
    queries, schema = make_synthetic(SyntheticSpec(n_queries=10, n_items=8, n_continuous=3, seed=1))
    root.mkdir(parents=True, exist_ok=True)
    for name, split in zip(("train", "valid", "test"), split_queries(queries)):
        write_letor(root / f"{name}.txt", split)
    cfg = dict(TINY, paths={"train": "train.txt", "valid": "valid.txt", "test": "test.txt"},
               schema={"variables": [list(v) for v in schema.variables], "names": list(schema.names),
                       "num_features": schema.m})
    (root / "config.json").write_text(json.dumps(cfg))
    return root / "config.json"


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write_raw(root / "raw")
    assert main(["simulate", "--config", str(cfg), "--out", str(root / "sim")]) == 0
    return root / "sim"


def run(*argv):
    return main([str(a) for a in argv])


class TestSimulate:
    def test_outputs(self, sim):
        for name in ("train.txt", "valid.txt", "test.txt", "criteria.tsv", "dataset.json"):
            assert (sim / name).exists()
        cfg = load_config(sim / "dataset.json")
        assert cfg.schema.score_column == cfg.schema.num_features - 1
        (q, *_) = parse_letor(sim / "test.txt", cfg.schema.num_features, cfg.schema.score_column)
        real = ~q.padding
        assert np.all(np.diff(q.base_scores[real]) <= 0)  # observed in base-score order


class TestTrain:
    def test_deterministic(self, sim, tmp_path):
        for name in ("a", "b"):
            assert run("train", "--data", sim, "--seed", 7, "--out", tmp_path / name) == 0
        for f in ("model.ckpt", "train_log.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_seed_changes_model(self, sim, tmp_path):
        run("train", "--data", sim, "--seed", 1, "--out", tmp_path / "a")
        run("train", "--data", sim, "--seed", 2, "--out", tmp_path / "b")
        assert (tmp_path / "a/model.ckpt").read_bytes() != (tmp_path / "b/model.ckpt").read_bytes()

    def test_ablation_flag_recorded(self, sim, tmp_path):
        assert run("train", "--data", sim, "--no-condition-info", "--mode", "sl", "--out", tmp_path) == 0
        head = (tmp_path / "model.ckpt").read_bytes().split(b"\n")[1].decode()
        meta = json.loads(head[len("config "):])
        assert meta["model"]["use_condition_info"] is False
        assert meta["training"]["mode"] == "sl"


class TestEvaluate:
    def test_score_order_matches_sweep(self, sim, tmp_path):
        # score-sorted slates built here, independently of the re-rankers
        cfg = load_config(sim / "dataset.json")
        rows = []
        for q in parse_letor(sim / "test.txt", cfg.schema.num_features, cfg.schema.score_column):
            real = np.flatnonzero(~q.padding)
            if len(real) < K:
                continue
            top = real[np.argsort(-q.base_scores[real], kind="stable")[:K]]
            rows.append(f"{q.query_id},{' '.join(map(str, top))}")
        (tmp_path / "s.csv").write_text("qid,slate\n" + "\n".join(rows) + "\n")
        assert run("evaluate", "--data", sim, "--slates", tmp_path / "s.csv", "--out", tmp_path / "e.csv") == 0
        assert run("sweep-mmr", "--data", sim, "--lambda", 1, "--out", tmp_path / "w.csv") == 0
        mean = read_csv(tmp_path / "e.csv")[-1]
        (sweep,) = read_csv(tmp_path / "w.csv")
        assert mean["qid"] == "mean"
        for col in ("ndcg", "gap_cat0", "gap_cat1", "gap", "goodness"):
            assert float(mean[col]) == pytest.approx(float(sweep[col]), abs=1e-12)
        assert (tmp_path / "w.png").exists()

    def test_rerank_lambda_one_is_score_order(self, sim, tmp_path):
        run("rerank", "--data", sim, "--lambda", 1, "--out", tmp_path / "r.csv")
        cfg = load_config(sim / "dataset.json")
        qs = {q.query_id: q for q in parse_letor(sim / "test.txt", cfg.schema.num_features,
                                                 cfg.schema.score_column)}
        for row in read_csv(tmp_path / "r.csv"):
            idx = [int(i) for i in row["slate"].split()]
            s = qs[row["qid"]].base_scores
            assert list(s[idx]) == sorted(s[idx], reverse=True)

    def test_checkpoint_rerank_and_evaluate(self, sim, tmp_path):
        run("train", "--data", sim, "--out", tmp_path)
        ck = tmp_path / "model.ckpt"
        assert run("rerank", "--data", sim, "--checkpoint", ck, "--out", tmp_path / "r.csv") == 0
        for row in read_csv(tmp_path / "r.csv"):
            idx = row["slate"].split()
            assert len(idx) == K == len(set(idx))
        assert run("evaluate", "--data", sim, "--checkpoint", ck, "--out", tmp_path / "e.csv") == 0
        rows = read_csv(tmp_path / "e.csv")
        assert len(rows) == sum(1 for _ in read_csv(tmp_path / "r.csv")) + 1

    def test_ideal_slates_give_ndcg_one(self, tmp_path):
        # equal positive labels on every real item make any slate label-ideal
        schema = CategoricalSchema(((1, 2),), 3, ("cat0",))
        rng = np.random.default_rng(3)
        qs = []
        for i in range(6):
            s = rng.normal(size=5)
            q, _ = binary_query(rng.integers(0, 2, size=5), np.ones(5), s, extra=s, qid=str(i))
            qs.append(q.with_criteria(DistributionalCriteria((np.array([0.5, 0.5]),))))
        for name in ("train", "valid", "test"):
            write_letor(tmp_path / f"{name}.txt", qs)
        write_sidecar(tmp_path / "criteria.tsv", qs, schema)
        cfg = dict(TINY, paths={"train": "train.txt", "valid": "valid.txt", "test": "test.txt",
                                "criteria": "criteria.tsv"},
                   schema={"variables": [[1, 2]], "names": ["cat0"], "num_features": 3,
                           "score_column": 0})
        (tmp_path / "dataset.json").write_text(json.dumps(cfg))
        assert run("train", "--data", tmp_path, "--out", tmp_path / "run") == 0
        assert run("evaluate", "--data", tmp_path, "--checkpoint", tmp_path / "run/model.ckpt",
                   "--out", tmp_path / "e.csv") == 0
        assert float(read_csv(tmp_path / "e.csv")[-1]["ndcg"]) == 1.0


class TestExitCodes:
    def test_unknown_subcommand(self, capsys):
        assert run("fly") == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag(self, sim, capsys):
        assert run("train", "--data", sim, "--speed", 3) == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert run("train", "--config", tmp_path / "none.json") == 2

    def test_config_field_path(self, tmp_path, capsys):
        (tmp_path / "c.json").write_text('{"training": {"lr": "fast"}}')
        assert run("train", "--config", tmp_path / "c.json") == 2
        assert "training.lr" in capsys.readouterr().err

    def test_malformed_letor(self, sim, tmp_path):
        cfg = json.loads((sim / "dataset.json").read_text())
        (tmp_path / "test.txt").write_text("x qid:1 1:0.5\n")
        cfg["paths"] = {**cfg["paths"], "test": str(tmp_path / "test.txt"),
                        "criteria": str(sim / "criteria.tsv")}
        (tmp_path / "dataset.json").write_text(json.dumps(cfg))
        assert run("sweep-mmr", "--data", tmp_path) == 2

    def test_missing_criteria(self, sim, tmp_path):
        cfg = json.loads((sim / "dataset.json").read_text())
        (tmp_path / "criteria.tsv").write_text("")
        cfg["paths"] = {k: str(sim / v) if k in ("train", "valid", "test") else v
                        for k, v in cfg["paths"].items()}
        cfg["paths"]["criteria"] = str(tmp_path / "criteria.tsv")
        (tmp_path / "dataset.json").write_text(json.dumps(cfg))
        assert run("sweep-mmr", "--data", tmp_path) == 2

    def test_evaluate_needs_source(self, sim):
        assert run("evaluate", "--data", sim) == 1

    def test_help(self):
        assert run("--help") == 0
