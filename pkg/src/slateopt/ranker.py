"""Stand-in base ranker: ridge regression of graded label on features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import CandidateSet


@dataclass(frozen=True)
class LinearRanker:
    weights: np.ndarray
    intercept: float
    columns: Optional[np.ndarray] = None

    def score(self, cands: CandidateSet) -> np.ndarray:
        x = cands.features if self.columns is None else cands.features[:, self.columns]
        return x @ self.weights + self.intercept


def builtin_base_ranker(train: Sequence[CandidateSet], ridge: float = 1e-3,
                        columns: Optional[Sequence[int]] = None) -> LinearRanker:
    """Least squares with an unpenalised intercept; ``ridge`` keeps the system non-singular."""
    if not train:
        raise ValueError("no training queries")
    cols = None if columns is None else np.asarray(columns, dtype=np.int64)
    xs, ys = [], []
    for q in train:
        real = ~q.padding
        x = q.features[real]
        xs.append(x if cols is None else x[:, cols])
        ys.append(q.labels[real])
    x = np.vstack(xs)
    y = np.concatenate(ys)
    x_mean, y_mean = x.mean(axis=0), y.mean()
    xc, yc = x - x_mean, y - y_mean
    gram = xc.T @ xc + ridge * np.eye(x.shape[1])
    w = np.linalg.solve(gram, xc.T @ yc)
    return LinearRanker(w, float(y_mean - x_mean @ w), cols)
