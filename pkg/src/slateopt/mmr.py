"""Greedy distribution-budget re-ranker and its lambda sweep.

At every step the unselected item maximising

    lam * s'[i] + (1 - lam) * mean_j budget_j[category_j(i)]

is appended, where s' are min-max normalised base scores and the budgets
start at the target distributions and lose 1/k for each picked item's
categories.  Ties go to the larger s', then to the lower index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import CandidateSet, CategoricalSchema, DistributionalCriteria, Slate
from .metrics import mean_scores, score_slate


def default_grid() -> tuple[float, ...]:
    return tuple(round(0.05 * i, 2) for i in range(21))


@dataclass(frozen=True)
class MmrConfig:
    lam: float = 0.5
    k: int = 10
    grid: tuple[float, ...] = field(default_factory=default_grid)

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        g = tuple(float(x) for x in self.grid)
        if not g:
            raise ValueError("lambda grid is empty")
        if any(x < 0 or x > 1 for x in g) or any(b <= a for a, b in zip(g, g[1:])):
            raise ValueError("lambda grid must be strictly increasing within [0, 1]")
        object.__setattr__(self, "grid", g)


def minmax_normalize(scores) -> np.ndarray:
    """Scale to [0, 1]; a constant vector maps to all zeros."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("cannot normalise an empty score vector")
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.zeros_like(s)
    return (s - lo) / (hi - lo)


def categories(cands: CandidateSet, schema: CategoricalSchema) -> np.ndarray:
    """(n, c) index of the active category of each variable (argmax of the slice)."""
    return np.stack([np.argmax(cands.features[:, list(v)], axis=1) for v in schema.variables], axis=1)


def mmr_rerank(cands: CandidateSet, schema: CategoricalSchema, criteria: DistributionalCriteria,
               lam: float, k: int) -> Slate:
    real = np.flatnonzero(~cands.padding)
    if len(real) < k:
        raise ValueError(f"query {cands.query_id!r} has {len(real)} real items, needs {k}")
    s = minmax_normalize(cands.base_scores[real])
    cats = categories(cands, schema)[real]
    budgets = [d.copy() for d in criteria.targets]
    c = schema.c
    chosen: list[int] = []
    free = np.ones(len(real), dtype=bool)
    for _ in range(k):
        budget_term = sum(budgets[j][cats[:, j]] for j in range(c)) / c
        value = lam * s + (1.0 - lam) * budget_term
        cand = np.flatnonzero(free)
        # lexsort: last key is primary; lower index wins remaining ties via stable order
        order = np.lexsort((cand, -s[cand], -value[cand]))
        pick = cand[order[0]]
        chosen.append(pick)
        free[pick] = False
        for j in range(c):
            budgets[j][cats[pick, j]] -= 1.0 / k
    return Slate(tuple(int(real[i]) for i in chosen))


def score_order_slate(cands: CandidateSet, k: int) -> Slate:
    """Top-k real items by base score (stable: earlier position wins ties)."""
    real = np.flatnonzero(~cands.padding)
    order = np.argsort(-cands.base_scores[real], kind="stable")
    return Slate(tuple(int(real[i]) for i in order[:k]))


@dataclass
class SweepResult:
    rows: list[dict]
    best: dict


def lambda_sweep(dataset: Sequence[CandidateSet], schema: CategoricalSchema, cfg: MmrConfig,
                 alpha: float = 0.5) -> SweepResult:
    """Mean nDCG, GAP (overall and per variable), reward and goodness for each lambda."""
    if not dataset:
        raise ValueError("empty dataset")
    rows = []
    for lam in cfg.grid:
        scores = [score_slate(q, mmr_rerank(q, schema, q.criteria, lam, cfg.k), schema, alpha, cfg.k)
                  for q in dataset]
        means = mean_scores(scores)
        row = {"lambda": lam, "ndcg": means["ndcg"]}
        for j in range(schema.c):
            row[f"gap_{schema.names[j]}"] = means[f"gap_{j}"]
        row.update(gap=means["gap"], goodness=means["goodness"], reward=means["reward"])
        rows.append(row)
    best = max(rows, key=lambda r: r["goodness"])
    return SweepResult(rows, best)
