"""Core value types: schemas, criteria, candidate sets and slates.

Indices are 0-based throughout.  A candidate set stores its items as
parallel arrays (features, labels, base scores, padding flags) so that the
numeric code can work on whole queries at once; :meth:`CandidateSet.item`
gives a per-item view when one is wanted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

CRITERIA_SUM_TOL = 1e-6


class DimensionError(ValueError):
    """Raised when array shapes do not agree with a schema."""


@dataclass(frozen=True)
class CategoricalSchema:
    """Index sets locating one-hot categorical variables inside feature vectors."""

    variables: tuple[tuple[int, ...], ...]
    m: int
    names: tuple[str, ...] = ()

    def __post_init__(self):
        variables = tuple(tuple(sorted(int(i) for i in v)) for v in self.variables)
        object.__setattr__(self, "variables", variables)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"var{j}" for j in range(len(variables))))
        if len(self.names) != len(variables):
            raise ValueError("one name per categorical variable is required")
        seen: set[int] = set()
        for v in variables:
            if len(v) < 2:
                raise ValueError(f"categorical variable {v} needs at least 2 categories")
            for i in v:
                if i < 0 or i >= self.m:
                    raise DimensionError(f"index {i} outside feature dimension {self.m}")
                if i in seen:
                    raise ValueError(f"index {i} appears in more than one variable")
                seen.add(i)

    @property
    def c(self) -> int:
        return len(self.variables)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self.variables)

    @property
    def flat_index(self) -> np.ndarray:
        """All categorical columns, variable by variable."""
        return np.array([i for v in self.variables for i in v], dtype=np.int64)

    def split(self, flat: np.ndarray) -> list[np.ndarray]:
        """Cut a concatenated per-variable vector back into its c pieces."""
        out, start = [], 0
        for size in self.sizes:
            out.append(flat[..., start:start + size])
            start += size
        return out

    def check_features(self, width: int) -> None:
        if width < self.m:
            raise DimensionError(f"feature vectors have {width} entries, schema expects {self.m}")


@dataclass(frozen=True)
class DistributionalCriteria:
    """Per-query target distributions, one probability vector per variable."""

    targets: tuple[np.ndarray, ...]

    def __post_init__(self):
        fixed = []
        for j, d in enumerate(self.targets):
            d = np.asarray(d, dtype=np.float64).copy()
            if d.ndim != 1 or d.size < 1:
                raise DimensionError(f"target {j} must be a non-empty vector")
            if np.any(d < 0) or np.any(d > 1) or not np.all(np.isfinite(d)):
                raise ValueError(f"target {j} has entries outside [0, 1]: {d.tolist()}")
            total = d.sum()
            if abs(total - 1.0) > CRITERIA_SUM_TOL:
                raise ValueError(f"target {j} sums to {total!r}, not 1")
            if total != 1.0:
                d = d / total
            d.setflags(write=False)
            fixed.append(d)
        object.__setattr__(self, "targets", tuple(fixed))

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(self.targets)

    def check(self, schema: CategoricalSchema) -> None:
        if tuple(len(d) for d in self.targets) != schema.sizes:
            raise DimensionError(
                f"criteria sizes {[len(d) for d in self.targets]} do not match schema {list(schema.sizes)}"
            )

    def __eq__(self, other):
        if not isinstance(other, DistributionalCriteria):
            return NotImplemented
        return len(self.targets) == len(other.targets) and all(
            np.array_equal(a, b) for a, b in zip(self.targets, other.targets)
        )

    __hash__ = None


@dataclass(frozen=True)
class Item:
    features: np.ndarray
    label: float
    base_score: float
    is_padding: bool = False


@dataclass(frozen=True)
class CandidateSet:
    """Items for one (sub-)query in base-ranker order.

    ``features`` is (n, m); ``labels``, ``base_scores`` and ``padding`` are
    length n.  Padding items sit only at the tail.
    """

    query_id: str
    features: np.ndarray
    labels: np.ndarray
    base_scores: np.ndarray
    criteria: Optional[DistributionalCriteria] = None
    padding: np.ndarray = field(default=None)

    def __post_init__(self):
        features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        n = features.shape[0]
        labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        scores = np.asarray(self.base_scores, dtype=np.float64).reshape(-1)
        padding = (np.zeros(n, dtype=bool) if self.padding is None
                   else np.asarray(self.padding, dtype=bool).reshape(-1))
        if not (len(labels) == len(scores) == len(padding) == n):
            raise DimensionError("features, labels, base_scores and padding disagree on n")
        if np.any(labels < 0):
            raise ValueError("labels must be non-negative")
        real = np.flatnonzero(~padding)
        if real.size and padding[: real[-1] + 1].any():
            raise ValueError("padding items must be trailing")
        for name, arr in (("features", features), ("labels", labels),
                          ("base_scores", scores), ("padding", padding)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_real(self) -> int:
        return int((~self.padding).sum())

    def item(self, i: int) -> Item:
        return Item(self.features[i], float(self.labels[i]), float(self.base_scores[i]),
                    bool(self.padding[i]))

    def with_labels(self, labels: np.ndarray) -> "CandidateSet":
        return CandidateSet(self.query_id, self.features, labels, self.base_scores,
                            self.criteria, self.padding)

    def with_criteria(self, criteria: DistributionalCriteria) -> "CandidateSet":
        return CandidateSet(self.query_id, self.features, self.labels, self.base_scores,
                            criteria, self.padding)

    def slices(self, schema: CategoricalSchema) -> np.ndarray:
        """(n, sum |F_j|) matrix of concatenated one-hot slices; zero rows for padding."""
        schema.check_features(self.features.shape[1])
        out = self.features[:, schema.flat_index].copy()
        out[self.padding] = 0.0
        return out

    def __eq__(self, other):
        if not isinstance(other, CandidateSet):
            return NotImplemented
        return (self.query_id == other.query_id
                and self.criteria == other.criteria
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.base_scores, other.base_scores)
                and np.array_equal(self.padding, other.padding))

    __hash__ = None


@dataclass(frozen=True)
class Slate:
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise ValueError(f"slate has duplicate indices: {idx}")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)

    def validate(self, cands: CandidateSet) -> None:
        for i in self.indices:
            if i < 0 or i >= cands.n:
                raise ValueError(f"slate index {i} outside candidate set of size {cands.n}")
            if cands.padding[i]:
                raise ValueError(f"slate selects padding item {i}")


@dataclass(frozen=True)
class ConditionInfo:
    """Remaining deficits d_j - r_j^(t), one vector per variable."""

    deltas: tuple[np.ndarray, ...]

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(self.deltas)


def categorical_slice(item: Item, j: int, schema: CategoricalSchema) -> np.ndarray:
    if j < 0 or j >= schema.c:
        raise IndexError(f"variable {j} out of range for c={schema.c}")
    if item.is_padding:
        raise ValueError("padding items have no categorical value")
    schema.check_features(len(item.features))
    return np.asarray(item.features)[list(schema.variables[j])].astype(np.float64)


def partial_slate_distribution(prefix: Sequence[int], cands: CandidateSet,
                               schema: CategoricalSchema) -> list[np.ndarray]:
    """Category shares over the first t selected items; zero vectors when t = 0."""
    prefix = list(prefix)
    if not prefix:
        return [np.zeros(s) for s in schema.sizes]
    Slate(tuple(prefix)).validate(cands)
    flat = cands.slices(schema)[prefix].mean(axis=0)
    return schema.split(flat)


def slate_distribution(slate: Slate, cands: CandidateSet,
                       schema: CategoricalSchema) -> list[np.ndarray]:
    if len(slate) == 0:
        raise ValueError("slate distribution of an empty slate is undefined")
    return partial_slate_distribution(slate.indices, cands, schema)


def condition_info(criteria: DistributionalCriteria, prefix: Sequence[int],
                   cands: CandidateSet, schema: CategoricalSchema) -> ConditionInfo:
    criteria.check(schema)
    r = partial_slate_distribution(prefix, cands, schema)
    return ConditionInfo(tuple(d - rj for d, rj in zip(criteria.targets, r)))


def infer_criteria(cands: CandidateSet, schema: CategoricalSchema) -> DistributionalCriteria:
    """Category shares over all non-padding items of a query."""
    if cands.n_real == 0:
        raise ValueError(f"query {cands.query_id!r} has no real items")
    flat = cands.slices(schema)[~cands.padding].mean(axis=0)
    return DistributionalCriteria(tuple(schema.split(flat)))
