"""Policy-gradient and supervised training of the slate decoder.

RL: one sampled slate per query, return R = alpha*nDCG - (1-alpha)*GAP
shared by every step, advantage R - b, ascent on (R - b) * sum_t ln pi.

SL: masked per-step label distributions give a cross-entropy ranking loss
weighted by 1/log2(t+1); the expected slate distribution under the step
probabilities gives a differentiable GAP.  The update combines a
score-function term on the (constant) loss with its pathwise gradient.

In both regimes b is an exponential moving average (decay 0.99) by default;
``baseline="batch_mean"`` uses the current batch mean instead.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from .data import CandidateSet, CategoricalSchema, DistributionalCriteria
from .model import Batch, ModelConfig, Rollout, decode_dataset, init_params, make_batch, rollout
from .nn import AdaBelief, ParamStore, TrainingError, as_tensor, gradients

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "rl"
    alpha: float = 0.5
    beta: float = 0.1
    lr: float = 1e-4
    batch_size: int = 1024
    baseline_decay: float = 0.99
    baseline: str = "ema"
    k: int = 10
    patience: int = 5
    max_epochs: int = 100
    rng_seed: int = 0
    eval_batch_size: int = 512
    max_seconds: Optional[float] = None  # wall-clock budget checked after each epoch
    warmup_epochs: int = 0  # leading epochs trained on the GAP term alone (alpha = 0)

    def __post_init__(self):
        if self.mode not in ("rl", "sl"):
            raise ValueError(f"mode must be 'rl' or 'sl', got {self.mode!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ValueError("baseline_decay must be in [0, 1)")
        if self.baseline not in ("ema", "batch_mean"):
            raise ValueError("baseline must be 'ema' or 'batch_mean'")
        if self.batch_size < 1 or self.k < 1 or self.patience < 0 or self.max_epochs < 1:
            raise ValueError("batch_size, k, max_epochs must be >= 1 and patience >= 0")
        if self.max_seconds is not None and self.max_seconds <= 0:
            raise ValueError("max_seconds must be positive")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")


# ---------------------------------------------------------------------------
# losses


def masked_labels(labels, actions: Sequence[int]) -> np.ndarray:
    """Y (k, n): step t keeps the labels of items not picked before t."""
    y = np.asarray(labels, dtype=np.float64)
    out = np.repeat(y[None, :], len(actions), axis=0)
    for t in range(1, len(actions)):
        out[t:, actions[t - 1]] = 0.0
    return out


def step_rank_loss(p, y) -> torch.Tensor:
    """Cross-entropy of p against the label distribution y / sum(y); 0 if sum(y) = 0."""
    p, y = as_tensor(p), as_tensor(y)
    total = y.sum(dim=-1, keepdim=True)
    safe_total = torch.where(total > 0, total, torch.ones_like(total))
    pos = y > 0
    logp = torch.log(torch.where(pos, p, torch.ones_like(p)))
    return -((y / safe_total) * logp).sum(dim=-1)


def step_weights(k: int) -> torch.Tensor:
    return 1.0 / torch.log2(torch.arange(2, k + 2, dtype=torch.float64))


def slate_rank_loss(P, Y, k: int) -> torch.Tensor:
    P, Y = as_tensor(P), as_tensor(Y)
    if P.shape[-2] != k or Y.shape[-2] != k:
        raise ValueError(f"expected {k} steps, got P{tuple(P.shape)} Y{tuple(Y.shape)}")
    return (step_rank_loss(P, Y) * step_weights(k)).sum(dim=-1)


def soft_slate_distribution(P, slices, k: int) -> torch.Tensor:
    """r' = (1/k) sum_t sum_i p_t[i] * slice_i, concatenated over variables."""
    P, slices = as_tensor(P), as_tensor(slices)
    if P.shape[-2] != k:
        raise ValueError(f"expected {k} steps, got {P.shape[-2]}")
    if P.shape[-1] != slices.shape[-2]:
        raise ValueError("probability vectors and slices disagree on n")
    return (P @ slices).sum(dim=-2) / k


def soft_gap(criteria, r_soft, sizes: Sequence[int]) -> torch.Tensor:
    """Mean over variables of max |d_j - r'_j|; ties take the first maximal entry."""
    diff = torch.abs(as_tensor(criteria) - as_tensor(r_soft))
    gaps = []
    start = 0
    for size in sizes:
        block = diff[..., start:start + size]
        first = torch.argmax(block.detach(), dim=-1, keepdim=True)
        gaps.append(block.gather(-1, first).squeeze(-1))
        start += size
    return torch.stack(gaps, dim=-1).mean(dim=-1)


def supervised_loss(P, Y, criteria, slices, sizes: Sequence[int], alpha: float, beta: float,
                    k: int) -> torch.Tensor:
    """alpha * beta * L_rank + (1 - alpha) * soft GAP."""
    rank = slate_rank_loss(P, Y, k)
    g = soft_gap(criteria, soft_slate_distribution(P, slices, k), sizes)
    return alpha * beta * rank + (1.0 - alpha) * g


def criteria_tensor(criteria: DistributionalCriteria) -> torch.Tensor:
    return as_tensor(criteria.flat)


# ---------------------------------------------------------------------------
# batched slate metrics


def batch_ndcg(labels: np.ndarray, actions: np.ndarray) -> np.ndarray:
    k = actions.shape[1]
    disc = 1.0 / np.log2(np.arange(2, k + 2))
    gains = np.take_along_axis(labels, actions, axis=1)
    dcg = gains @ disc
    ideal = -np.sort(-labels, axis=1)[:, :k]
    idcg = ideal @ disc[: ideal.shape[1]]
    out = np.zeros(len(labels))
    ok = idcg > 0
    out[ok] = dcg[ok] / idcg[ok]
    return out


def batch_gaps(slices: np.ndarray, criteria: np.ndarray, actions: np.ndarray,
               sizes: Sequence[int]) -> np.ndarray:
    """Per-variable gaps (B, c) of discrete slates."""
    picked = np.take_along_axis(slices, actions[:, :, None], axis=1)
    r = picked.mean(axis=1)
    diff = np.abs(criteria - r)
    out, start = [], 0
    for size in sizes:
        out.append(diff[:, start:start + size].max(axis=1))
        start += size
    return np.stack(out, axis=1)


@dataclass
class BatchMetrics:
    ndcg: np.ndarray
    gaps: np.ndarray  # (B, c)

    @property
    def gap(self) -> np.ndarray:
        return self.gaps.mean(axis=1)

    def reward(self, alpha: float) -> np.ndarray:
        return alpha * self.ndcg - (1.0 - alpha) * self.gap

    @property
    def goodness(self) -> np.ndarray:
        return 0.5 * self.ndcg - 0.5 * self.gap + 0.5


def slate_metrics(batch: Batch, actions: np.ndarray, sizes: Sequence[int]) -> BatchMetrics:
    return BatchMetrics(batch_ndcg(batch.labels.numpy(), actions),
                        batch_gaps(batch.slices.numpy(), batch.criteria.numpy(), actions, sizes))


def batch_masked_labels(labels: torch.Tensor, actions: np.ndarray) -> torch.Tensor:
    """(B, k, n) labels with earlier picks zeroed at each step."""
    rows = torch.arange(actions.shape[0])
    steps = []
    y = labels
    for t in range(actions.shape[1]):
        steps.append(y)
        y = y.clone()
        y[rows, torch.as_tensor(actions[:, t])] = 0.0
    return torch.stack(steps, dim=1)


def batch_supervised_loss(out: Rollout, batch: Batch, sizes: Sequence[int], alpha: float,
                          beta: float, k: int) -> torch.Tensor:
    """Per-query supervised loss (B,) along the decoded trajectory."""
    Y = batch_masked_labels(batch.labels, out.actions)
    return supervised_loss(out.probs, Y, batch.criteria, batch.slices, sizes, alpha, beta, k)


# ---------------------------------------------------------------------------
# updates


@dataclass
class StepResult:
    loss: float
    metrics: BatchMetrics
    grads: dict[str, torch.Tensor] = field(repr=False)


class Trainer:
    """Owns the parameters, optimiser, baseline and RNG of one training run."""

    def __init__(self, model_cfg: ModelConfig, train_cfg: TrainConfig, schema: CategoricalSchema,
                 store: Optional[ParamStore] = None):
        if model_cfg.slate_size != train_cfg.k:
            raise ValueError("model slate_size and training k differ")
        self.model_cfg = model_cfg
        self.cfg = train_cfg
        self.schema = schema
        self.sizes = schema.sizes
        self.rng = np.random.default_rng(train_cfg.rng_seed)
        self.store = store if store is not None else init_params(model_cfg, self.rng)
        self.optimizer = AdaBelief(self.store, lr=train_cfg.lr)
        self.baseline = 0.0
        self.alpha = train_cfg.alpha  # lowered to 0 during warm-up

    def _advantage_baseline(self, values: np.ndarray) -> float:
        if self.cfg.baseline == "batch_mean":
            return float(values.mean())
        return self.baseline

    def _update_baseline(self, values: np.ndarray) -> None:
        d = self.cfg.baseline_decay
        self.baseline = d * self.baseline + (1.0 - d) * float(values.mean())

    def reinforce_gradient(self, batch: Batch, train: bool = True) -> StepResult:
        """Descent-direction gradient of -(1/N) sum (R_i - b) ln pi(slate_i).

        Does not touch the baseline or parameters.
        """
        holder = {}

        def program():
            out = rollout(self.store, self.model_cfg, batch, "sample", self.rng, train)
            met = slate_metrics(batch, out.actions, self.sizes)
            rewards = met.reward(self.alpha)
            adv = torch.as_tensor(rewards - self._advantage_baseline(rewards))
            holder["metrics"], holder["rewards"] = met, rewards
            return -(adv * out.log_prob).mean()

        _, grads = gradients(program, self.store)
        rewards = holder["rewards"]
        if not np.all(np.isfinite(rewards)):
            raise TrainingError(f"non-finite reward in batch {batch.query_ids[:3]}")
        return StepResult(-float(rewards.mean()), holder["metrics"], grads)

    def reinforce_update(self, batch: Batch) -> StepResult:
        res = self.reinforce_gradient(batch)
        self.optimizer.step(res.grads)
        self._update_baseline(res.metrics.reward(self.alpha))
        return res

    def supervised_gradient(self, batch: Batch, train: bool = True) -> tuple[StepResult, np.ndarray]:
        """Gradient of (1/N) sum [(L_i - b) ln pi(slate_i) + L_i] with L_i held constant in the first term."""
        holder = {}

        def program():
            out = rollout(self.store, self.model_cfg, batch, "sample", self.rng, train)
            losses = batch_supervised_loss(out, batch, self.sizes, self.alpha, self.cfg.beta,
                                           self.cfg.k)
            lv = losses.detach().numpy()
            if not np.all(np.isfinite(lv)):
                raise TrainingError(f"non-finite supervised loss in batch {batch.query_ids[:3]}")
            adv = torch.as_tensor(lv - self._advantage_baseline(lv))
            holder["losses"] = lv
            holder["metrics"] = slate_metrics(batch, out.actions, self.sizes)
            return ((adv * out.log_prob) + losses).mean()

        _, grads = gradients(program, self.store)
        lv = holder["losses"]
        return StepResult(float(lv.mean()), holder["metrics"], grads), lv

    def supervised_update(self, batch: Batch) -> StepResult:
        res, losses = self.supervised_gradient(batch)
        self.optimizer.step(res.grads)
        self._update_baseline(losses)
        return res

    def update(self, batch: Batch) -> StepResult:
        if self.cfg.mode == "rl":
            return self.reinforce_update(batch)
        return self.supervised_update(batch)

    def evaluate(self, batch: Batch, store: Optional[ParamStore] = None) -> BatchMetrics:
        actions = decode_dataset(store or self.store, self.model_cfg, batch, "greedy",
                                 chunk=self.cfg.eval_batch_size)
        return slate_metrics(batch, actions, self.sizes)


def trainable(dataset: Sequence[CandidateSet], k: int, require_clicks: bool) -> list[CandidateSet]:
    """Drop queries that cannot form a k-slate and, for training, those with no positive label."""
    out = []
    for q in dataset:
        if q.n_real < k:
            continue
        if require_clicks and not np.any(q.labels[~q.padding] > 0):
            continue
        out.append(q)
    return out


def fit_input_scaling(store: ParamStore, batch: Batch) -> None:
    real = ~batch.padding
    x = batch.features[real]
    mean = x.mean(dim=0)
    std = x.std(dim=0, unbiased=False)
    std = torch.where(std > 1e-12, std, torch.ones_like(std))
    store.load_values({"input.mean": mean.numpy(), "input.std": std.numpy()})


# Wall-clock time is kept out of the log so fixed-seed runs give identical files.
LOG_COLUMNS = ("epoch", "split", "ndcg", "gap", "goodness", "loss", "best_goodness")


@dataclass
class TrainResult:
    store: ParamStore
    best_epoch: int
    best_goodness: float
    log: list[dict]
    trainer: Trainer = field(repr=False)
    seconds: float = 0.0


def train(train_set: Sequence[CandidateSet], valid_set: Sequence[CandidateSet], schema: CategoricalSchema,
          model_cfg: ModelConfig, cfg: TrainConfig, store: Optional[ParamStore] = None) -> TrainResult:
    """Epoch loop with validation-goodness model selection and early stopping.

    The first ``warmup_epochs`` epochs train on the GAP term alone; without
    it, the relevance term quickly makes the policy near-deterministic around
    score order and the conformance behaviour is never explored.  Stops once
    ``patience`` epochs have passed since the best epoch or the end of
    warm-up (so ``patience=0`` without warm-up runs exactly one epoch), at
    ``max_epochs``, or when ``max_seconds`` has elapsed.
    """
    train_q = trainable(train_set, cfg.k, require_clicks=True)
    valid_q = trainable(valid_set, cfg.k, require_clicks=False)
    if not train_q:
        raise ValueError("training split is empty after filtering")
    if not valid_q:
        raise ValueError("validation split is empty after filtering")
    trainer = Trainer(model_cfg, cfg, schema, store)
    train_b = make_batch(train_q, schema)
    valid_b = make_batch(valid_q, schema)
    if store is None:
        fit_input_scaling(trainer.store, train_b)

    start_time = time.perf_counter()
    best_store, best_epoch, best = trainer.store.copy(), -1, -np.inf
    rows: list[dict] = []
    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        trainer.alpha = 0.0 if epoch < cfg.warmup_epochs else cfg.alpha
        order = trainer.rng.permutation(train_b.size)
        losses, nd, gp = [], [], []
        for start in range(0, len(order), cfg.batch_size):
            res = trainer.update(train_b.subset(order[start:start + cfg.batch_size]))
            losses.append(res.loss)
            nd.append(res.metrics.ndcg)
            gp.append(res.metrics.gap)
        nd_all, gp_all = np.concatenate(nd), np.concatenate(gp)
        train_row = {"epoch": epoch, "split": "train", "ndcg": float(nd_all.mean()),
                     "gap": float(gp_all.mean()),
                     "goodness": float((0.5 * nd_all - 0.5 * gp_all + 0.5).mean()),
                     "loss": float(np.mean(losses))}
        met = trainer.evaluate(valid_b)
        goodness = float(met.goodness.mean())
        if goodness > best:
            best, best_epoch, best_store = goodness, epoch, trainer.store.copy()
        seconds = time.perf_counter() - t0
        valid_row = {"epoch": epoch, "split": "valid", "ndcg": float(met.ndcg.mean()),
                     "gap": float(met.gap.mean()), "goodness": goodness,
                     "loss": float(-met.reward(cfg.alpha).mean())}
        for row in (train_row, valid_row):
            row["best_goodness"] = best
            rows.append(row)
        log.info("epoch %d train loss %.5f valid ndcg %.4f gap %.4f R_s %.4f (%.1fs)", epoch,
                 train_row["loss"], valid_row["ndcg"], valid_row["gap"], goodness, seconds)
        # patience counts from the end of warm-up
        since = epoch - max(best_epoch, cfg.warmup_epochs - 1)
        if epoch >= cfg.warmup_epochs and since >= cfg.patience:
            break
        if cfg.max_seconds is not None and time.perf_counter() - start_time >= cfg.max_seconds:
            log.info("time budget of %.0fs reached after epoch %d", cfg.max_seconds, epoch)
            break
    return TrainResult(best_store, best_epoch, best, rows, trainer, time.perf_counter() - start_time)


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
