"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or configuration error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import benchmark as bench
from .config import ConfigError, ExperimentConfig, Paths, SchemaConfig, load_config
from .data import CandidateSet, CategoricalSchema, Slate
from .letor import LetorParseError, load_split, parse_letor, write_letor, write_sidecar
from .metrics import mean_scores, score_slate
from .mmr import MmrConfig, lambda_sweep, mmr_rerank
from .model import ModelConfig
from .nn import DecodeStateError, TrainingError, load_checkpoint, save_checkpoint
from .ranker import builtin_base_ranker
from .report import plot_tradeoff, sweep_columns, write_log, write_sweep
from .simulate import augment_dataset
from .synthetic import make_synthetic, split_queries
from .training import LOG_COLUMNS, config_dict, train, trainable
from .verify import TOLERANCE, run_suite

log = logging.getLogger("slateopt")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SPLITS = ("train", "valid", "test")
DATASET_FILE = "dataset.json"
CHECKPOINT_FILE = "model.ckpt"


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# config and data plumbing


def _resolve(base: Path, p: Optional[str]) -> Optional[Path]:
    if p is None:
        return None
    path = Path(p)
    return path if path.is_absolute() else base / path


def load_experiment(args) -> tuple[ExperimentConfig, Path]:
    """Config from --config or --data DIR, with command-line overrides applied."""
    if args.config and args.data:
        raise UsageError("give either --config or --data, not both")
    if args.config:
        path = Path(args.config)
    elif args.data:
        path = Path(args.data) / DATASET_FILE
    else:
        raise UsageError("--config or --data is required")
    cfg = load_config(path)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    training = cfg.training
    if getattr(args, "alpha", None) is not None:
        training = dataclasses.replace(training, alpha=args.alpha)
    if getattr(args, "mode", None) is not None:
        training = dataclasses.replace(training, mode=args.mode)
    mmr = cfg.mmr
    if getattr(args, "k", None) is not None:
        training = dataclasses.replace(training, k=args.k)
        mmr = dataclasses.replace(mmr, k=args.k)
    model = cfg.model
    if getattr(args, "no_condition_info", False):
        model = dataclasses.replace(model, use_condition_info=False)
    return dataclasses.replace(cfg, training=training, mmr=mmr, model=model), path.parent


def load_splits(cfg: ExperimentConfig, base: Path, names: Sequence[str]
                ) -> tuple[dict[str, list[CandidateSet]], CategoricalSchema]:
    schema = cfg.schema.build()
    sidecar = _resolve(base, cfg.paths.criteria)
    if sidecar is None:
        raise ConfigError("paths.criteria", "required")
    out = {}
    for name in names:
        p = _resolve(base, getattr(cfg.paths, name))
        if p is None:
            raise ConfigError(f"paths.{name}", "required")
        out[name] = load_split(p, sidecar, schema, schema.m, cfg.schema.score_column)
    return out, schema


def write_csv(path, columns: Sequence[str], rows: Sequence[dict]) -> Path:
    return write_log(path, rows, columns)


def _out_path(args, default: str) -> Path:
    return Path(args.out) if args.out else Path(default)


def _model_from_checkpoint(path) -> tuple:
    store, meta = load_checkpoint(path)
    try:
        mcfg = ModelConfig(**meta["model"])
    except (KeyError, TypeError) as exc:
        raise ConfigError("checkpoint.model", f"missing or invalid model config ({exc})") from None
    return store, mcfg


def _model_slates(args, queries, schema) -> list[Slate]:
    store, mcfg = _model_from_checkpoint(args.checkpoint)
    return bench.model_slates(store, mcfg, queries, schema)


def read_slates(path) -> dict[str, Slate]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["qid"]] = Slate(tuple(int(i) for i in row["slate"].split()))
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_make_synthetic(args) -> int:
    cfg = bench.desk_config(args.seed if args.seed is not None else 0)
    queries, schema = make_synthetic(cfg.synthetic)
    out = Path(args.out or "synthetic")
    out.mkdir(parents=True, exist_ok=True)
    for name, split in zip(SPLITS, split_queries(queries)):
        write_letor(out / f"{name}.txt", split)
    cfg = dataclasses.replace(
        cfg, paths=Paths(train="train.txt", valid="valid.txt", test="test.txt"),
        schema=SchemaConfig(schema.variables, schema.names, schema.m, None))
    (out / "config.json").write_text(cfg.dumps() + "\n", encoding="utf-8")
    print(f"wrote {len(queries)} queries to {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg, base = load_experiment(args)
    schema = cfg.schema.build()
    raw = {}
    for name in SPLITS:
        p = _resolve(base, getattr(cfg.paths, name))
        if p is None:
            raise ConfigError(f"paths.{name}", "required")
        raw[name] = parse_letor(p, num_features=schema.m)
    ranker = builtin_base_ranker(raw["train"])
    out = Path(args.out or "simulated")
    out.mkdir(parents=True, exist_ok=True)
    augmented = []
    for name in SPLITS:
        aug = augment_dataset(raw[name], [ranker.score(q) for q in raw[name]], cfg.simulation, schema)
        write_letor(out / f"{name}.txt", aug)
        augmented.extend(aug)
    write_sidecar(out / "criteria.tsv", augmented, schema)
    m = schema.m + (1 if cfg.simulation.append_score_column else 0)
    score_col = schema.m if cfg.simulation.append_score_column else None
    cfg = dataclasses.replace(
        cfg,
        paths=dataclasses.replace(cfg.paths, train="train.txt", valid="valid.txt", test="test.txt",
                                  criteria="criteria.tsv"),
        schema=SchemaConfig(schema.variables, schema.names, m, score_col))
    (out / DATASET_FILE).write_text(cfg.dumps() + "\n", encoding="utf-8")
    print(f"wrote {len(augmented)} sub-queries to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg, base = load_experiment(args)
    splits, schema = load_splits(cfg, base, ("train", "valid"))
    mcfg = cfg.model_config(schema)
    res = train(splits["train"], splits["valid"], schema, mcfg, cfg.training)
    out = Path(args.out or "run")
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / CHECKPOINT_FILE, res.store,
                    {"model": mcfg.to_dict(), "training": config_dict(cfg.training),
                     "best_epoch": res.best_epoch})
    write_log(out / "train_log.csv", res.log, LOG_COLUMNS)
    print(f"best epoch {res.best_epoch} valid R_s {res.best_goodness:.4f}; wrote {out}")
    return EXIT_OK


def _query_row(qid: str, s, schema: CategoricalSchema) -> dict:
    row = {"qid": qid, "ndcg": s.ndcg, "gap": s.gap, "goodness": s.goodness, "reward": s.reward}
    for j, name in enumerate(schema.names):
        row[f"gap_{name}"] = s.per_variable_gaps[j]
    return row


def cmd_evaluate(args) -> int:
    cfg, base = load_experiment(args)
    splits, schema = load_splits(cfg, base, (args.split,))
    k, alpha = cfg.training.k, cfg.training.alpha
    queries = trainable(splits[args.split], k, require_clicks=False)
    if not queries:
        raise ValueError(f"split {args.split!r} has no query with {k} real items")
    if args.slates:
        given = read_slates(args.slates)
        missing = [q.query_id for q in queries if q.query_id not in given]
        if missing:
            raise KeyError(f"no slate for queries {missing[:5]}")
        slates = [given[q.query_id] for q in queries]
    elif args.checkpoint:
        slates = _model_slates(args, queries, schema)
    else:
        raise UsageError("evaluate needs --checkpoint or --slates")
    scores = [score_slate(q, s, schema, alpha, k) for q, s in zip(queries, slates)]
    rows = [_query_row(q.query_id, s, schema) for q, s in zip(queries, scores)]
    means = mean_scores(scores)
    mean_row = {"qid": "mean", **{key: means[key] for key in ("ndcg", "gap", "goodness", "reward")}}
    for j, name in enumerate(schema.names):
        mean_row[f"gap_{name}"] = means[f"gap_{j}"]
    columns = ["qid", "ndcg", *(f"gap_{n}" for n in schema.names), "gap", "goodness", "reward"]
    out = write_csv(_out_path(args, "evaluation.csv"), columns, rows + [mean_row])
    print(f"ndcg {means['ndcg']:.4f} gap {means['gap']:.4f} R_s {means['goodness']:.4f}; wrote {out}")
    return EXIT_OK


def cmd_rerank(args) -> int:
    cfg, base = load_experiment(args)
    splits, schema = load_splits(cfg, base, (args.split,))
    k = cfg.training.k
    queries = trainable(splits[args.split], k, require_clicks=False)
    if args.checkpoint:
        slates = _model_slates(args, queries, schema)
    elif args.lam is not None:
        slates = [mmr_rerank(q, schema, q.criteria, args.lam, k) for q in queries]
    else:
        raise UsageError("rerank needs --checkpoint or --lambda")
    rows = [{"qid": q.query_id, "slate": " ".join(str(i) for i in s.indices)}
            for q, s in zip(queries, slates)]
    out = write_csv(_out_path(args, "slates.csv"), ["qid", "slate"], rows)
    print(f"wrote {len(rows)} slates to {out}")
    return EXIT_OK


def cmd_sweep_mmr(args) -> int:
    cfg, base = load_experiment(args)
    splits, schema = load_splits(cfg, base, (args.split,))
    k = cfg.training.k
    grid = (args.lam,) if args.lam is not None else cfg.mmr.grid
    mcfg = MmrConfig(lam=grid[0], k=k, grid=grid)
    queries = trainable(splits[args.split], k, require_clicks=False)
    sweep = lambda_sweep(queries, schema, mcfg, cfg.training.alpha)
    out = write_sweep(_out_path(args, "mmr_sweep.csv"), sweep.rows, schema)
    plot_tradeoff(out.with_suffix(".png"), sweep.rows, title=f"MMR sweep, {args.split} split")
    b = sweep.best
    print(f"best lambda {b['lambda']:g}: ndcg {b['ndcg']:.4f} gap {b['gap']:.4f} "
          f"R_s {b['goodness']:.4f}; wrote {out}")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    errors = run_suite(args.seed if args.seed is not None else 0)
    worst = 0.0
    for name, err in errors.items():
        print(f"{name}: max relative error {err:.3e}")
        worst = max(worst, err)
    if not worst < TOLERANCE:
        print(f"FAILED: tolerance {TOLERANCE:g}", file=sys.stderr)
        return EXIT_NUMERIC
    print("OK")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = bench.desk_config(args.seed if args.seed is not None else 0)
    methods = tuple(m for m in args.methods.split(",") if m)
    for m in methods:
        if m not in bench.METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(bench.METHODS)}")
    out = Path(args.out or "benchmark")
    result = bench.run_benchmark(cfg, methods, out_dir=out)
    print(bench.summary_table(result))
    for name, ok in bench.criteria_checks(result).items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> Parser:
    p = Parser(prog="slateopt", description="Slate optimisation under distributional criteria.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=Parser, metavar="command")
    sub.required = True

    def add(name, func, help_text, data=True):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=func)
        if data:
            sp.add_argument("--config", help="experiment JSON")
            sp.add_argument("--data", help=f"directory holding {DATASET_FILE}")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output file or directory")
        return sp

    def add_common(sp):
        sp.add_argument("--k", type=int)
        sp.add_argument("--alpha", type=float)

    add(
        "make-synthetic", cmd_make_synthetic,
        "write the raw synthetic benchmark and its config", data=False)
    add("simulate", cmd_simulate, "augment raw LETOR splits with simulated clicks")

    sp = add("train", cmd_train, "train a slate model")
    add_common(sp)
    sp.add_argument("--mode", choices=("rl", "sl"))
    sp.add_argument("--no-condition-info", action="store_true",
                    help="ablation: zero the condition information input")

    for name, func, text in (("evaluate", cmd_evaluate, "per-query and mean nDCG, GAP, R_s"),
                             ("rerank", cmd_rerank, "write slates (qid, item indices)")):
        sp = add(name, func, text)
        add_common(sp)
        sp.add_argument("--checkpoint")
        sp.add_argument("--split", choices=SPLITS, default="test")
        if name == "evaluate":
            sp.add_argument("--slates", help="slates CSV from rerank")
        else:
            sp.add_argument("--lambda", dest="lam", type=float, help="MMR trade-off instead of a model")

    sp = add("sweep-mmr", cmd_sweep_mmr, "MMR lambda table and trade-off figure")
    add_common(sp)
    sp.add_argument("--lambda", dest="lam", type=float, help="single lambda instead of the grid")
    sp.add_argument("--split", choices=SPLITS, default="test")

    add("grad-check", cmd_grad_check, "finite-difference check of the training gradients", data=False)

    sp = add("benchmark", cmd_benchmark, "desk benchmark: baselines and trained models", data=False)
    sp.add_argument("--methods", default=",".join(bench.METHODS),
                    help=f"comma-separated subset of {','.join(bench.METHODS)}")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"slateopt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, DecodeStateError, FloatingPointError) as exc:
        print(f"slateopt: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, LetorParseError, KeyError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"slateopt: error: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
