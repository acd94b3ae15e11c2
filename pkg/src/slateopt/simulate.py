"""Click-log augmentation of graded-relevance LTR data.

Each query is re-ordered by its base-ranker scores, then ``nu`` user
sessions are sampled under a cascade observation model.  Observed items with
a clickable grade become clicks unless they are within the query's median
pairwise distance of an item already clicked in the same session.  Every
session becomes a fixed-length sub-query that shares the criteria inferred
from the full original query.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import CandidateSet, CategoricalSchema, infer_criteria

ETA_PRESETS = {"yahoo": 0.1, "web30k": 0.3}


@dataclass(frozen=True)
class SimConfig:
    eta: float = 0.1
    nu: int = 25
    max_len: int = 30
    pad_value: float = 0.0
    click_threshold: float = 2.0
    rng_seed: int = 0
    append_score_column: bool = True

    def __post_init__(self):
        if self.nu < 1:
            raise ValueError("nu must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")

    @classmethod
    def preset(cls, family: str, **overrides) -> "SimConfig":
        return cls(eta=ETA_PRESETS[family.lower()], **overrides)


@dataclass(frozen=True)
class Interaction:
    """One simulated session: positions observed (ascending) and their click labels."""

    observed: np.ndarray
    clicks: np.ndarray


def observation_prob(rank: int, eta: float) -> float:
    if rank < 1:
        raise ValueError("rank is 1-based")
    return float(rank ** (-eta))


def query_rng(seed: int, query_id: str) -> np.random.Generator:
    # Keyed on the query id so a query's stream is the same however queries are scheduled.
    return np.random.default_rng([int(seed), zlib.crc32(str(query_id).encode("utf-8"))])


def _binary_columns(features: np.ndarray) -> np.ndarray:
    return np.flatnonzero(np.all((features == 0) | (features == 1), axis=0))


def within_query_variance(dataset: Sequence[CandidateSet]) -> np.ndarray:
    """Mean over queries of each column's within-query population variance."""
    m = dataset[0].features.shape[1]
    total = np.zeros(m)
    for q in dataset:
        x = q.features[~q.padding]
        total += x.var(axis=0) if len(x) else 0.0
    return total / len(dataset)


def select_variance_columns(dataset: Sequence[CandidateSet], num_cols: int) -> list[int]:
    """Binary columns ranked by mean within-query variance, best first."""
    if not dataset:
        raise ValueError("empty dataset")
    stacked = np.vstack([q.features[~q.padding] for q in dataset])
    binary = _binary_columns(stacked)
    if binary.size == 0:
        raise ValueError("dataset has no binary feature columns")
    var = within_query_variance(dataset)[binary]
    order = np.argsort(-var, kind="stable")
    return [int(binary[i]) for i in order[:num_cols]]


def onehot_expand(dataset: Sequence[CandidateSet], columns: Sequence[int],
                  names: Optional[Sequence[str]] = None) -> tuple[list[CandidateSet], CategoricalSchema]:
    """Append a [1-x, x] pair for each binary column and return the matching schema."""
    m = dataset[0].features.shape[1]
    variables = tuple((m + 2 * j, m + 2 * j + 1) for j in range(len(columns)))
    out = []
    for q in dataset:
        b = q.features[:, list(columns)]
        pairs = np.stack([1.0 - b, b], axis=2).reshape(q.n, -1)
        pairs[q.padding] = 0.0
        out.append(CandidateSet(q.query_id, np.hstack([q.features, pairs]), q.labels,
                                q.base_scores, q.criteria, q.padding))
    if names is None:
        names = [f"col{c + 1}" for c in columns]
    return out, CategoricalSchema(variables, m + 2 * len(columns), tuple(names))


def diverse_threshold(cands: CandidateSet) -> float:
    x = cands.features[~cands.padding]
    if len(x) < 2:
        raise ValueError("need at least two items for a pairwise distance")
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    iu = np.triu_indices(len(x), k=1)
    return float(np.median(dist[iu]))


def sample_interactions(cands: CandidateSet, cfg: SimConfig, rng: np.random.Generator,
                        threshold: Optional[float] = None) -> Interaction:
    """Sample one cascade session over ``cands`` (already in base-ranker order)."""
    n = cands.n_real
    if n == 0:
        raise ValueError(f"query {cands.query_id!r} is empty")
    if threshold is None:
        threshold = diverse_threshold(cands) if n >= 2 else 0.0
    ranks = np.arange(1, n + 1, dtype=np.float64)
    observed = np.flatnonzero(rng.random(n) < ranks ** (-cfg.eta))
    clicks = np.zeros(len(observed))
    clicked: list[np.ndarray] = []
    for pos, i in enumerate(observed):
        if cands.labels[i] < cfg.click_threshold:
            continue
        x = cands.features[i]
        if any(np.sqrt(((x - c) ** 2).sum()) <= threshold for c in clicked):
            continue
        clicks[pos] = 1.0
        clicked.append(x)
    return Interaction(observed, clicks)


def truncate_pad(sequence: CandidateSet, cfg: SimConfig) -> CandidateSet:
    """Cut to the first ``max_len`` items or extend with trailing padding."""
    n = min(sequence.n_real, cfg.max_len)
    keep = slice(0, n)
    pad = cfg.max_len - n
    m = sequence.features.shape[1]
    features = np.vstack([sequence.features[keep], np.full((pad, m), cfg.pad_value)])
    return CandidateSet(
        sequence.query_id,
        features,
        np.concatenate([sequence.labels[keep], np.zeros(pad)]),
        np.concatenate([sequence.base_scores[keep], np.zeros(pad)]),
        sequence.criteria,
        np.concatenate([np.zeros(n, dtype=bool), np.ones(pad, dtype=bool)]),
    )


def simulate_query(query: CandidateSet, scores: np.ndarray, cfg: SimConfig,
                   schema: CategoricalSchema) -> list[CandidateSet]:
    real = ~query.padding
    features = query.features[real]
    labels = query.labels[real]
    scores = np.asarray(scores, dtype=np.float64)[: len(labels)]
    criteria = infer_criteria(query, schema)
    order = np.argsort(-scores, kind="stable")
    ranked = CandidateSet(query.query_id, features[order], labels[order], scores[order], criteria)
    threshold = diverse_threshold(ranked) if ranked.n >= 2 else 0.0
    rng = query_rng(cfg.rng_seed, query.query_id)
    out_features = ranked.features
    if cfg.append_score_column:
        out_features = np.hstack([out_features, ranked.base_scores[:, None]])

    subs = []
    for s in range(cfg.nu):
        inter = sample_interactions(ranked, cfg, rng, threshold)
        obs = inter.observed
        sub = CandidateSet(f"{query.query_id}_{s}", out_features[obs], inter.clicks,
                           ranked.base_scores[obs], criteria)
        subs.append(truncate_pad(sub, cfg))
    return subs


def augment_dataset(dataset: Sequence[CandidateSet], base_scores: Sequence[np.ndarray],
                    cfg: SimConfig, schema: CategoricalSchema) -> list[CandidateSet]:
    """Expand every query into ``nu`` click-labelled sub-queries.

    Criteria come from the original candidate set of each query and are shared
    by all of its sub-queries.  With ``append_score_column`` the base score is
    carried as the last feature column.
    """
    if len(dataset) != len(base_scores):
        raise ValueError("one score vector per query is required")
    out: list[CandidateSet] = []
    for q, s in zip(dataset, base_scores):
        out.extend(simulate_query(q, s, cfg, schema))
    return out
