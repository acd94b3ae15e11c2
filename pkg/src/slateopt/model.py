"""Pointer-network re-ranker conditioned on the remaining distribution deficit.

Pipeline per batch of queries:

    features -> embed (dense, ReLU, dropout) -> LSTM encoder -> H_en
    decoder LSTM input = [embedding of previous pick (start token at t=1), CI]
    decoder state -> head (dense, ReLU, dropout, batchnorm, dense) -> attention query
    additive attention over H_en -> scores u_t -> masked softmax -> pick a_t

CI is the concatenation over variables of d_j - r_j^(t-1), where r^(0) = 0.
With ``use_condition_info`` off the CI slot is fed zeros.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from .data import CandidateSet, CategoricalSchema, Slate
from .nn import (DTYPE, DecodeStateError, ParamStore, additive_attention, batchnorm, dense,
                 dropout, lstm_cell, masked_log_softmax, uniform_init)


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int
    ci_dim: int
    slate_size: int = 10
    embed_dim: int = 256
    hidden_dim: int = 256
    head_dim: int = 256
    dropout_rate: float = 0.1
    use_condition_info: bool = True
    batch_norm: bool = True

    def __post_init__(self):
        if self.slate_size < 1:
            raise ValueError("slate_size must be >= 1")
        for name in ("feature_dim", "ci_dim", "embed_dim", "hidden_dim", "head_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> ParamStore:
    m, d, e, h, f = cfg.feature_dim, cfg.ci_dim, cfg.embed_dim, cfg.hidden_dim, cfg.head_dim
    store = ParamStore()
    u = lambda shape, fan_in: uniform_init(rng, shape, fan_in)  # noqa: E731
    store.add("input.mean", np.zeros(m), trainable=False)
    store.add("input.std", np.ones(m), trainable=False)
    store.add("embed.W", u((e, m), m))
    store.add("embed.b", u((e,), m))
    store.add("enc.W_ih", u((4 * h, e), h))
    store.add("enc.W_hh", u((4 * h, h), h))
    store.add("enc.b", u((4 * h,), h))
    store.add("dec.start", rng.normal(0.0, 0.1, size=e))
    store.add("dec.W_ih", u((4 * h, e + d), h))
    store.add("dec.W_hh", u((4 * h, h), h))
    store.add("dec.b", u((4 * h,), h))
    store.add("head1.W", u((f, h), h))
    store.add("head1.b", u((f,), h))
    if cfg.batch_norm:
        store.add("bn.gamma", np.ones(f))
        store.add("bn.beta", np.zeros(f))
        store.add("bn.mean", np.zeros(f), trainable=False)
        store.add("bn.var", np.ones(f), trainable=False)
    store.add("head2.W", u((h, f), f))
    store.add("head2.b", u((h,), f))
    store.add("att.W_enc", u((h, h), h))
    store.add("att.W_q", u((h, h), h))
    store.add("att.v", u((h,), h))
    return store


@dataclass
class Batch:
    """Tensors for B queries padded to a common length n."""

    query_ids: list[str]
    features: torch.Tensor  # (B, n, m)
    slices: torch.Tensor  # (B, n, D) one-hot slices, zero on padding
    criteria: torch.Tensor  # (B, D)
    padding: torch.Tensor  # (B, n) bool
    labels: torch.Tensor  # (B, n)
    base_scores: torch.Tensor  # (B, n)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: Sequence[int]) -> "Batch":
        idx_t = torch.as_tensor(np.asarray(idx, dtype=np.int64))
        return Batch([self.query_ids[i] for i in idx], self.features[idx_t], self.slices[idx_t],
                     self.criteria[idx_t], self.padding[idx_t], self.labels[idx_t],
                     self.base_scores[idx_t])


def make_batch(cands: Sequence[CandidateSet], schema: CategoricalSchema) -> Batch:
    if not cands:
        raise ValueError("empty batch")
    n = max(c.n for c in cands)
    m = cands[0].features.shape[1]
    b = len(cands)
    d = sum(schema.sizes)
    feats = np.zeros((b, n, m))
    slices = np.zeros((b, n, d))
    crit = np.zeros((b, d))
    pad = np.ones((b, n), dtype=bool)
    labels = np.zeros((b, n))
    scores = np.zeros((b, n))
    for i, c in enumerate(cands):
        if c.features.shape[1] != m:
            raise ValueError("feature dimension differs across queries")
        if c.criteria is None:
            raise ValueError(f"query {c.query_id!r} has no distributional criteria")
        c.criteria.check(schema)
        feats[i, : c.n] = c.features
        slices[i, : c.n] = c.slices(schema)
        crit[i] = c.criteria.flat
        pad[i, : c.n] = c.padding
        labels[i, : c.n] = c.labels
        scores[i, : c.n] = c.base_scores
    t = lambda a: torch.as_tensor(a, dtype=DTYPE)  # noqa: E731
    return Batch([c.query_id for c in cands], t(feats), t(slices), t(crit),
                 torch.as_tensor(pad), t(labels), t(scores))


# ---------------------------------------------------------------------------
# network pieces


def embed(store: ParamStore, cfg: ModelConfig, features: torch.Tensor, train: bool,
          rng: Optional[np.random.Generator]) -> torch.Tensor:
    if features.shape[-1] != cfg.feature_dim:
        raise ValueError(f"expected {cfg.feature_dim} features, got {features.shape[-1]}")
    x = (features - store["input.mean"]) / store["input.std"]
    e = torch.relu(dense(x, store["embed.W"], store["embed.b"]))
    return dropout(e, cfg.dropout_rate, train, rng)


def encode(store: ParamStore, embedded: torch.Tensor) -> tuple[torch.Tensor, tuple[torch.Tensor, torch.Tensor]]:
    """Run the encoder LSTM over (B, n, E); returns H_en (B, n, H) and the final (h, c)."""
    b, n, _ = embedded.shape
    if n == 0:
        raise ValueError("cannot encode an empty sequence")
    hidden = store["enc.W_hh"].shape[1]
    h = embedded.new_zeros(b, hidden)
    c = embedded.new_zeros(b, hidden)
    outs = []
    for i in range(n):
        h, c = lstm_cell(embedded[:, i], h, c, store["enc.W_ih"], store["enc.W_hh"], store["enc.b"])
        outs.append(h)
    return torch.stack(outs, dim=1), (h, c)


def head(store: ParamStore, cfg: ModelConfig, h: torch.Tensor, train: bool,
         rng: Optional[np.random.Generator]) -> torch.Tensor:
    z = torch.relu(dense(h, store["head1.W"], store["head1.b"]))
    z = dropout(z, cfg.dropout_rate, train, rng)
    if cfg.batch_norm:
        z = batchnorm(z, store["bn.gamma"], store["bn.beta"], store["bn.mean"], store["bn.var"], train)
    return dense(z, store["head2.W"], store["head2.b"])


@dataclass
class DecodeState:
    """Per-batch decoder state between steps."""

    h: torch.Tensor
    c: torch.Tensor
    forbidden: torch.Tensor  # (B, n) bool: padding plus picks so far
    picked_slices: torch.Tensor  # (B, D) running sum of chosen items' slices
    criteria: torch.Tensor  # (B, D)
    t: int = 0
    actions: list[np.ndarray] = field(default_factory=list)
    probs: list[torch.Tensor] = field(default_factory=list)
    logps: list[torch.Tensor] = field(default_factory=list)

    @property
    def condition_info(self) -> torch.Tensor:
        if self.t == 0:
            return self.criteria
        return self.criteria - self.picked_slices / self.t


def decode_step(store: ParamStore, cfg: ModelConfig, state: DecodeState, prev_embedding: torch.Tensor,
                enc: torch.Tensor, train: bool = False,
                rng: Optional[np.random.Generator] = None) -> tuple[DecodeState, torch.Tensor]:
    """Advance the decoder one step and return raw (unmasked) scores u_t of shape (B, n)."""
    if state.forbidden.all(dim=-1).any():
        raise DecodeStateError("a query has no selectable item left")
    ci = state.condition_info
    if not cfg.use_condition_info:
        ci = torch.zeros_like(ci)
    x = torch.cat([prev_embedding, ci], dim=-1)
    h, c = lstm_cell(x, state.h, state.c, store["dec.W_ih"], store["dec.W_hh"], store["dec.b"])
    q = head(store, cfg, h, train, rng)
    u = additive_attention(enc, q, store["att.W_enc"], store["att.W_q"], store["att.v"])
    state.h, state.c = h, c
    return state, u


def select(u: torch.Tensor, forbidden: torch.Tensor, mode: str,
           rng: Optional[np.random.Generator] = None) -> tuple[np.ndarray, torch.Tensor, torch.Tensor]:
    """Pick one index per row from masked_softmax(u).

    Greedy takes the first maximal probability (lowest index on exact ties).
    Returns (indices, probabilities, log-probabilities); the last two keep
    their autograd history.
    """
    logp = masked_log_softmax(u, forbidden)
    p = torch.exp(logp) * ~forbidden
    pn = p.detach().numpy()
    if mode == "greedy":
        a = np.argmax(pn, axis=-1)
    elif mode == "sample":
        draw = 1.0 - rng.random(pn.shape[0])  # in (0, 1]
        cdf = np.cumsum(pn, axis=-1)
        a = (cdf < draw[:, None] * cdf[:, -1:]).sum(axis=-1)
        last_allowed = pn.shape[1] - 1 - np.argmax((pn > 0)[:, ::-1], axis=-1)
        a = np.minimum(a, last_allowed)
    else:
        raise ValueError(f"unknown decode mode {mode!r}")
    return a.astype(np.int64), p, logp


@dataclass
class Rollout:
    actions: np.ndarray  # (B, k)
    probs: torch.Tensor  # (B, k, n)
    logp_actions: torch.Tensor  # (B, k)

    @property
    def log_prob(self) -> torch.Tensor:
        """ln pi(slate) per query."""
        return self.logp_actions.sum(dim=-1)


def rollout(store: ParamStore, cfg: ModelConfig, batch: Batch, mode: str = "greedy",
            rng: Optional[np.random.Generator] = None, train: bool = False,
            actions: Optional[np.ndarray] = None) -> Rollout:
    """Decode k items for every query in ``batch``.

    With ``actions`` given the decoder is teacher-forced along those picks and
    ``mode`` is ignored.
    """
    k = cfg.slate_size
    real = (~batch.padding).sum(dim=-1)
    if (real < k).any():
        short = [batch.query_ids[i] for i in torch.nonzero(real < k).flatten().tolist()]
        raise ValueError(f"queries with fewer than k={k} real items: {short[:5]}")
    bsz = batch.size
    emb = embed(store, cfg, batch.features, train, rng)
    enc, (h, c) = encode(store, emb)
    state = DecodeState(h, c, batch.padding.clone(), batch.slices.new_zeros(bsz, batch.slices.shape[-1]),
                        batch.criteria)
    prev = store["dec.start"].expand(bsz, -1)
    rows = torch.arange(bsz)
    for t in range(k):
        state, u = decode_step(store, cfg, state, prev, enc, train, rng)
        a, p, logp = select(u, state.forbidden, mode, rng)
        if actions is not None:
            a = np.asarray(actions[:, t], dtype=np.int64)
            if state.forbidden[rows, torch.as_tensor(a)].any():
                raise DecodeStateError(f"teacher-forced action at step {t} is forbidden")
        a_t = torch.as_tensor(a)
        state.actions.append(a)
        state.probs.append(p)
        state.logps.append(logp[rows, a_t])
        forbidden = state.forbidden.clone()
        forbidden[rows, a_t] = True
        state.forbidden = forbidden
        state.picked_slices = state.picked_slices + batch.slices[rows, a_t]
        state.t = t + 1
        prev = emb[rows, a_t]
    return Rollout(np.stack(state.actions, axis=1), torch.stack(state.probs, dim=1),
                   torch.stack(state.logps, dim=1))


def generate_slate(cands: CandidateSet, store: ParamStore, cfg: ModelConfig, schema: CategoricalSchema,
                   mode: str = "greedy", rng: Optional[np.random.Generator] = None,
                   train: bool = False) -> tuple[Slate, np.ndarray]:
    """Slate and per-step probability vectors (k, n) for a single query."""
    if cands.n_real < cfg.slate_size:
        raise ValueError(f"query {cands.query_id!r} has {cands.n_real} real items, "
                         f"needs {cfg.slate_size}")
    with torch.no_grad():
        out = rollout(store, cfg, make_batch([cands], schema), mode, rng, train)
    return Slate(tuple(int(a) for a in out.actions[0])), out.probs[0].numpy()


def decode_dataset(store: ParamStore, cfg: ModelConfig, batch: Batch, mode: str = "greedy",
                   rng: Optional[np.random.Generator] = None, chunk: int = 512) -> np.ndarray:
    """Actions (N, k) for a large batch, decoded in chunks without gradients."""
    out = []
    with torch.no_grad():
        for start in range(0, batch.size, chunk):
            idx = list(range(start, min(start + chunk, batch.size)))
            out.append(rollout(store, cfg, batch.subset(idx), mode, rng, train=False).actions)
    return np.concatenate(out, axis=0)
