"""LETOR / SVMLight text files and the per-query criteria sidecar.

Data lines look like ``<label> qid:<id> <idx>:<val> ... [# comment]`` with
1-based sparse feature indices.  A line whose comment is exactly ``pad``
is a padding item.

Sidecar lines are ``<qid>\\t<variable name>\\t<v1>,<v2>,...``, one per
(query, variable).
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .data import CandidateSet, CategoricalSchema, DistributionalCriteria

log = logging.getLogger(__name__)

PAD_COMMENT = "pad"


class LetorParseError(ValueError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path, self.lineno = path, lineno


def _fmt(v: float) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def parse_letor(path, num_features: Optional[int] = None,
                score_column: Optional[int] = None) -> list[CandidateSet]:
    """Read a LETOR file into candidate sets grouped by qid in first-seen order.

    ``score_column`` (0-based) names the feature that holds base-ranker
    scores; otherwise base scores are zero.
    """
    rows: "OrderedDict[str, list]" = OrderedDict()
    last_qid = None
    max_idx = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            data, hash_, comment = line.rstrip("\n").partition("#")
            toks = data.split()
            if not toks:
                if hash_:
                    continue
                if line.strip():
                    raise LetorParseError(path, lineno, "empty record")
                continue
            try:
                label = float(toks[0])
            except ValueError:
                raise LetorParseError(path, lineno, f"bad label {toks[0]!r}") from None
            if len(toks) < 2 or not toks[1].startswith("qid:") or len(toks[1]) == 4:
                raise LetorParseError(path, lineno, "missing qid:<id> field")
            qid = toks[1][4:]
            feats = {}
            for tok in toks[2:]:
                idx, colon, val = tok.partition(":")
                try:
                    i = int(idx)
                    feats[i - 1] = float(val)
                except ValueError:
                    raise LetorParseError(path, lineno, f"bad feature token {tok!r}") from None
                if not colon or i < 1:
                    raise LetorParseError(path, lineno, f"bad feature token {tok!r}")
                max_idx = max(max_idx, i)
            if qid in rows and qid != last_qid:
                log.warning("%s:%d: qid %s reappears after another query; grouping anyway",
                            path, lineno, qid)
            rows.setdefault(qid, []).append((label, feats, comment.strip() == PAD_COMMENT))
            last_qid = qid

    m = num_features if num_features is not None else max_idx
    if max_idx > m:
        raise ValueError(f"{path}: feature index {max_idx} exceeds declared dimension {m}")
    out = []
    for qid, items in rows.items():
        x = np.zeros((len(items), m))
        for r, (_, feats, _) in enumerate(items):
            for i, v in feats.items():
                x[r, i] = v
        labels = np.array([it[0] for it in items])
        pad = np.array([it[2] for it in items], dtype=bool)
        scores = x[:, score_column].copy() if score_column is not None else np.zeros(len(items))
        out.append(CandidateSet(qid, x, labels, scores, None, pad))
    return out


def write_letor(path, dataset: Iterable[CandidateSet]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in dataset:
            for i in range(q.n):
                if q.padding[i]:
                    fh.write(f"0 qid:{q.query_id} # {PAD_COMMENT}\n")
                    continue
                feats = " ".join(f"{j + 1}:{_fmt(v)}" for j, v in enumerate(q.features[i]) if v != 0)
                fh.write(f"{_fmt(q.labels[i])} qid:{q.query_id} {feats}".rstrip() + "\n")


def write_sidecar(path, dataset: Iterable[CandidateSet], schema: CategoricalSchema) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in dataset:
            if q.criteria is None:
                raise ValueError(f"query {q.query_id!r} has no criteria to write")
            for name, d in zip(schema.names, q.criteria.targets):
                fh.write(f"{q.query_id}\t{name}\t{','.join(repr(float(v)) for v in d)}\n")


def read_sidecar(path, schema: CategoricalSchema) -> dict[str, DistributionalCriteria]:
    per_qid: "OrderedDict[str, dict]" = OrderedDict()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise LetorParseError(path, lineno, "expected qid<TAB>name<TAB>vector")
            qid, name, vec = parts
            if name not in schema.names:
                raise LetorParseError(path, lineno, f"unknown variable {name!r}")
            rec = per_qid.setdefault(qid, {})
            if name in rec:
                raise LetorParseError(path, lineno, f"duplicate record for {qid}/{name}")
            try:
                rec[name] = [float(v) for v in vec.split(",")]
            except ValueError:
                raise LetorParseError(path, lineno, f"bad vector {vec!r}") from None
    out = {}
    for qid, rec in per_qid.items():
        missing = [n for n in schema.names if n not in rec]
        if missing:
            raise ValueError(f"{path}: query {qid} lacks criteria for {missing}")
        crit = DistributionalCriteria(tuple(np.array(rec[n]) for n in schema.names))
        crit.check(schema)
        out[qid] = crit
    return out


def attach_criteria(dataset: Sequence[CandidateSet],
                    criteria: dict[str, DistributionalCriteria]) -> list[CandidateSet]:
    """Join sidecar criteria onto queries; a query without criteria is an error."""
    missing = [q.query_id for q in dataset if q.query_id not in criteria]
    if missing:
        raise KeyError(f"no criteria for queries {missing[:5]} ({len(missing)} total)")
    return [q.with_criteria(criteria[q.query_id]) for q in dataset]


def load_split(path, sidecar, schema: CategoricalSchema, num_features: int,
               score_column: Optional[int]) -> list[CandidateSet]:
    data = parse_letor(Path(path), num_features=num_features, score_column=score_column)
    return attach_criteria(data, read_sidecar(sidecar, schema))
