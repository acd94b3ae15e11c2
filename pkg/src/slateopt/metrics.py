"""Slate quality scalars: nDCG@k, distribution gap, reward and goodness."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import (CandidateSet, CategoricalSchema, DimensionError,
                   DistributionalCriteria, Slate, slate_distribution)


def _discounts(k: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, k + 2))


def ndcg_at_k(labels: Sequence[float], slate: Sequence[int] | Slate, k: int) -> float:
    """nDCG@k with raw-label gain and log2 discount.

    The ideal DCG uses the k largest labels of the whole candidate list, so a
    slate that leaves out clicked items is penalised.  Returns 0 when the
    ideal DCG is 0.
    """
    y = np.asarray(labels, dtype=np.float64)
    if np.any(y < 0):
        raise ValueError("labels must be non-negative")
    idx = list(slate.indices if isinstance(slate, Slate) else slate)
    if k > len(idx):
        raise ValueError(f"k={k} exceeds slate length {len(idx)}")
    disc = _discounts(k)
    ideal = np.sort(y)[::-1][:k]
    idcg = float(ideal @ disc[: len(ideal)])
    if idcg == 0.0:
        return 0.0
    dcg = float(y[idx[:k]] @ disc)
    return dcg / idcg


def categorical_gap(d: np.ndarray, r: np.ndarray) -> float:
    d = np.asarray(d, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if d.shape != r.shape:
        raise DimensionError(f"length mismatch: {d.shape} vs {r.shape}")
    return float(np.max(np.abs(d - r)))


def per_variable_gaps(criteria: DistributionalCriteria,
                      slate_dists: Sequence[np.ndarray]) -> list[float]:
    if len(criteria.targets) != len(slate_dists):
        raise DimensionError("criteria and slate distributions disagree on c")
    return [categorical_gap(d, r) for d, r in zip(criteria.targets, slate_dists)]


def gap(criteria: DistributionalCriteria, slate_dists: Sequence[np.ndarray]) -> float:
    """Mean L-infinity distance between targets and realised distributions."""
    if len(criteria.targets) == 0:
        raise ValueError("GAP needs at least one categorical variable")
    return float(np.mean(per_variable_gaps(criteria, slate_dists)))


def slate_reward(ndcg: float, gap_value: float, alpha: float) -> float:
    return alpha * ndcg - (1.0 - alpha) * gap_value


def slate_goodness(ndcg: float, gap_value: float) -> float:
    return 0.5 * ndcg - 0.5 * gap_value + 0.5


@dataclass(frozen=True)
class SlateScore:
    ndcg: float
    gap: float
    per_variable_gaps: tuple[float, ...]
    reward: float
    goodness: float


def score_slate(cands: CandidateSet, slate: Slate, schema: CategoricalSchema,
                alpha: float, k: int) -> SlateScore:
    if cands.criteria is None:
        raise ValueError(f"query {cands.query_id!r} has no distributional criteria")
    slate.validate(cands)
    nd = ndcg_at_k(cands.labels, slate, k)
    gaps = per_variable_gaps(cands.criteria, slate_distribution(slate, cands, schema))
    g = float(np.mean(gaps))
    return SlateScore(nd, g, tuple(gaps), slate_reward(nd, g, alpha), slate_goodness(nd, g))


def mean_scores(scores: Sequence[SlateScore]) -> dict[str, float]:
    if not scores:
        raise ValueError("no scores to average")
    out = {
        "ndcg": float(np.mean([s.ndcg for s in scores])),
        "gap": float(np.mean([s.gap for s in scores])),
        "reward": float(np.mean([s.reward for s in scores])),
        "goodness": float(np.mean([s.goodness for s in scores])),
    }
    c = len(scores[0].per_variable_gaps)
    for j in range(c):
        out[f"gap_{j}"] = float(np.mean([s.per_variable_gaps[j] for s in scores]))
    return out
