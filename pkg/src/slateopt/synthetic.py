"""Synthetic graded-relevance queries with one-hot categorical variables.

Each query draws, per binary variable, how many of its items fall in the
second category from ``share_grid`` (a fraction of ``n_items``), then places
them at random.  Relevance comes from the continuous features plus an
optional per-category shift, so the score-order slate conforms to the
query's category mix only by chance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CandidateSet, CategoricalSchema


@dataclass(frozen=True)
class SyntheticSpec:
    n_queries: int = 200
    n_items: int = 20
    n_continuous: int = 8
    n_categorical: int = 2
    category_effect: tuple[float, ...] = (0.0, 0.0)
    share_grid: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8)
    noise: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_items < 2 or self.n_queries < 1:
            raise ValueError("need at least one query and two items per query")
        if not self.share_grid or any(not 0.0 <= g <= 1.0 for g in self.share_grid):
            raise ValueError("share_grid entries must lie in [0, 1]")

    @property
    def feature_dim(self) -> int:
        return self.n_continuous + 2 * self.n_categorical


# Label thresholds as quantiles of the latent relevance: grades 0..4.
GRADE_QUANTILES = (0.40, 0.65, 0.82, 0.93)


def synthetic_schema(spec: SyntheticSpec) -> CategoricalSchema:
    base = spec.n_continuous
    variables = tuple((base + 2 * j, base + 2 * j + 1) for j in range(spec.n_categorical))
    return CategoricalSchema(variables, spec.feature_dim, tuple(f"cat{j}" for j in range(spec.n_categorical)))


def make_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> tuple[list[CandidateSet], CategoricalSchema]:
    rng = np.random.default_rng(spec.seed)
    effects = np.resize(np.asarray(spec.category_effect, dtype=np.float64), spec.n_categorical)
    w = rng.normal(size=spec.n_continuous)
    w /= np.linalg.norm(w)
    latent, feats = [], []
    for _ in range(spec.n_queries):
        mu = rng.normal(0.0, 0.5, size=spec.n_continuous)
        x = rng.normal(mu, 1.0, size=(spec.n_items, spec.n_continuous))
        counts = np.rint(rng.choice(spec.share_grid, size=spec.n_categorical) * spec.n_items).astype(int)
        b = np.zeros((spec.n_items, spec.n_categorical))
        for j, cnt in enumerate(counts):
            b[rng.permutation(spec.n_items)[:cnt], j] = 1.0
        z = x @ w + b @ effects + rng.normal(0.0, spec.noise, size=spec.n_items)
        onehot = np.stack([1.0 - b, b], axis=2).reshape(spec.n_items, -1)
        feats.append(np.hstack([x, onehot]))
        latent.append(z)
    cuts = np.quantile(np.concatenate(latent), GRADE_QUANTILES)
    queries = []
    for qi, (x, z) in enumerate(zip(feats, latent)):
        labels = np.digitize(z, cuts).astype(np.float64)
        queries.append(CandidateSet(str(qi + 1), x, labels, np.zeros(len(z))))
    return queries, synthetic_schema(spec)


def split_queries(queries, fractions=(0.6, 0.2, 0.2)):
    """Contiguous train/valid/test split by query order."""
    n = len(queries)
    a = int(round(fractions[0] * n))
    b = a + int(round(fractions[1] * n))
    return queries[:a], queries[a:b], queries[b:]
