"""Finite-difference verification of the training objectives on a toy instance."""

from __future__ import annotations

from typing import Callable

import numpy as np
import torch

from .data import CandidateSet, CategoricalSchema, DistributionalCriteria
from .model import Batch, ModelConfig, init_params, make_batch, rollout
from .nn import ParamStore, grad_errors
from .training import batch_supervised_loss, slate_metrics

TOLERANCE = 1e-4


def toy_instance(seed: int = 0, n: int = 5, k: int = 3, hidden: int = 8
                 ) -> tuple[Batch, CategoricalSchema, ModelConfig, ParamStore, np.ndarray]:
    """Two queries with two binary variables, a small model and fixed sampled actions."""
    rng = np.random.default_rng(seed)
    schema = CategoricalSchema(((2, 3), (4, 5)), 6, ("a", "b"))
    queries = []
    for i in range(2):
        cats = rng.integers(0, 2, size=(n, 2))
        x = np.hstack([rng.normal(size=(n, 2)), np.eye(2)[cats[:, 0]], np.eye(2)[cats[:, 1]]])
        p = rng.uniform(0.2, 0.8, size=2)
        crit = DistributionalCriteria((np.array([1 - p[0], p[0]]), np.array([1 - p[1], p[1]])))
        queries.append(CandidateSet(f"t{i}", x, rng.integers(0, 3, size=n).astype(float),
                                    rng.normal(size=n), crit))
    cfg = ModelConfig(feature_dim=6, ci_dim=4, slate_size=k, embed_dim=hidden, hidden_dim=hidden,
                      head_dim=hidden)
    store = init_params(cfg, rng)
    batch = make_batch(queries, schema)
    with torch.no_grad():
        actions = rollout(store, cfg, batch, "sample", rng).actions
    return batch, schema, cfg, store, actions


def supervised_program(seed: int = 0, alpha: float = 0.5, beta: float = 0.1
                       ) -> tuple[Callable[[], torch.Tensor], ParamStore]:
    batch, schema, cfg, store, actions = toy_instance(seed)

    def program():
        out = rollout(store, cfg, batch, actions=actions)
        return batch_supervised_loss(out, batch, schema.sizes, alpha, beta, cfg.slate_size).mean()

    return program, store


def reinforce_program(seed: int = 0, alpha: float = 0.5
                      ) -> tuple[Callable[[], torch.Tensor], ParamStore]:
    """Score-function surrogate -(R - b) ln pi along fixed actions."""
    batch, schema, cfg, store, actions = toy_instance(seed)
    rewards = slate_metrics(batch, actions, schema.sizes).reward(alpha)
    adv = torch.as_tensor(rewards - 0.1)  # any constant baseline

    def program():
        return -(adv * rollout(store, cfg, batch, actions=actions).log_prob).mean()

    return program, store


def run_suite(seed: int = 0) -> dict[str, float]:
    """Max relative error of reverse-mode against central differences per objective."""
    results = {}
    for name, build in (("supervised_loss", supervised_program), ("reinforce_surrogate", reinforce_program)):
        program, store = build(seed)
        results[name] = float(max(grad_errors(program, store).values()))
    return results
