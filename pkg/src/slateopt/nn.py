"""Small differentiable building blocks on top of torch autograd.

Parameters live in a :class:`ParamStore` as named float64 tensors.  Layers
are plain functions taking the tensors they need, batched along the leading
axis.  Randomness (dropout masks, initialisation) always comes from a numpy
``Generator`` passed in by the caller so runs are reproducible.
"""

from __future__ import annotations

import json
import math
from collections import OrderedDict
from typing import Callable, Iterable, Mapping, Optional

import numpy as np
import torch

DTYPE = torch.float64
CHECKPOINT_MAGIC = "slateopt-checkpoint 1"


class TrainingError(RuntimeError):
    """Non-finite loss or gradient encountered during optimisation."""


class DecodeStateError(RuntimeError):
    """No selectable item is left."""


def as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=DTYPE)


class ParamStore:
    """Named parameter tensors plus non-trainable buffers (e.g. running statistics)."""

    def __init__(self):
        self._params: "OrderedDict[str, torch.Tensor]" = OrderedDict()
        self._buffers: "OrderedDict[str, torch.Tensor]" = OrderedDict()

    def add(self, name: str, value, trainable: bool = True) -> torch.Tensor:
        if name in self._params or name in self._buffers:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = torch.tensor(np.asarray(value, dtype=np.float64), dtype=DTYPE)
        if not torch.isfinite(t).all():
            raise ValueError(f"parameter {name!r} has non-finite entries")
        if trainable:
            t.requires_grad_(True)
            self._params[name] = t
        else:
            self._buffers[name] = t
        return t

    def __getitem__(self, name: str) -> torch.Tensor:
        if name in self._params:
            return self._params[name]
        return self._buffers[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params or name in self._buffers

    @property
    def names(self) -> list[str]:
        return list(self._params)

    @property
    def buffer_names(self) -> list[str]:
        return list(self._buffers)

    def params(self) -> "OrderedDict[str, torch.Tensor]":
        return self._params

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self._params.values())

    def to_numpy(self) -> dict[str, np.ndarray]:
        out = {k: v.detach().numpy().copy() for k, v in self._params.items()}
        out.update({k: v.detach().numpy().copy() for k, v in self._buffers.items()})
        return out

    def copy(self) -> "ParamStore":
        other = ParamStore()
        for k, v in self._params.items():
            other.add(k, v.detach().numpy(), trainable=True)
        for k, v in self._buffers.items():
            other.add(k, v.detach().numpy(), trainable=False)
        return other

    def load_values(self, values: Mapping[str, np.ndarray]) -> None:
        with torch.no_grad():
            for k, v in values.items():
                t = self[k]
                if tuple(t.shape) != tuple(np.shape(v)):
                    raise ValueError(f"shape mismatch for {k!r}: {tuple(t.shape)} vs {np.shape(v)}")
                t.copy_(torch.as_tensor(np.asarray(v, dtype=np.float64)))


# ---------------------------------------------------------------------------
# layers


def dense(x, weight, bias) -> torch.Tensor:
    """Affine map ``x @ weight.T + bias`` (weight is (out, in))."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.shape[-1] != weight.shape[1] or weight.shape[0] != bias.shape[-1]:
        raise ValueError(f"dense shape mismatch: x{tuple(x.shape)} W{tuple(weight.shape)} "
                         f"b{tuple(bias.shape)}")
    return x @ weight.T + bias


def _as_mask(forbidden) -> torch.Tensor:
    if isinstance(forbidden, torch.Tensor):
        return forbidden.to(torch.bool)
    return torch.as_tensor(np.asarray(forbidden, dtype=bool))


def masked_log_softmax(u, forbidden) -> torch.Tensor:
    """Log-probabilities over allowed entries; forbidden entries hold 0 and carry no gradient.

    Forbidden logits are dropped from the normaliser instead of being set to
    -inf, which keeps every gradient finite.
    """
    u = as_tensor(u)
    forbidden = _as_mask(forbidden)
    allowed = ~forbidden
    if not allowed.any(dim=-1).all():
        raise DecodeStateError("every index is forbidden")
    zeros = torch.zeros_like(u)
    shift = u.detach().masked_fill(forbidden, -math.inf).amax(dim=-1, keepdim=True)
    z = torch.where(allowed, u - shift, zeros)
    logp = z - torch.log((torch.exp(z) * allowed).sum(dim=-1, keepdim=True))
    return torch.where(allowed, logp, zeros)


def masked_softmax(u, forbidden) -> torch.Tensor:
    """Softmax over non-forbidden scores with exact zeros at forbidden indices."""
    forbidden = _as_mask(forbidden)
    return torch.exp(masked_log_softmax(u, forbidden)) * ~forbidden


def forbidden_from_indices(n: int, indices: Iterable[int]) -> torch.Tensor:
    mask = torch.zeros(n, dtype=torch.bool)
    for i in indices:
        mask[i] = True
    return mask


def lstm_cell(x, h_prev, c_prev, w_ih, w_hh, bias) -> tuple[torch.Tensor, torch.Tensor]:
    """Single LSTM step; gate blocks ordered input, forget, candidate, output."""
    x, h_prev, c_prev = as_tensor(x), as_tensor(h_prev), as_tensor(c_prev)
    hidden = h_prev.shape[-1]
    if w_ih.shape != (4 * hidden, x.shape[-1]) or w_hh.shape != (4 * hidden, hidden):
        raise ValueError(f"lstm shape mismatch: x{tuple(x.shape)} h{tuple(h_prev.shape)} "
                         f"W_ih{tuple(w_ih.shape)} W_hh{tuple(w_hh.shape)}")
    z = x @ w_ih.T + h_prev @ w_hh.T + bias
    i, f, g, o = z.split(hidden, dim=-1)
    i, f, o = torch.sigmoid(i), torch.sigmoid(f), torch.sigmoid(o)
    c = f * c_prev + i * torch.tanh(g)
    h = o * torch.tanh(c)
    return h, c


def additive_attention(enc, query, w_enc, w_query, v) -> torch.Tensor:
    """Scores ``v . tanh(W_e enc_i + W_q query)`` for every encoder position.

    ``enc`` is (..., n, H) and ``query`` is (..., Q); returns (..., n).
    """
    enc, query = as_tensor(enc), as_tensor(query)
    if enc.shape[-2] == 0:
        raise ValueError("attention over an empty sequence")
    if enc.shape[-1] != w_enc.shape[1] or query.shape[-1] != w_query.shape[1]:
        raise ValueError("attention shape mismatch")
    keys = enc @ w_enc.T
    q = (query @ w_query.T).unsqueeze(-2)
    return torch.tanh(keys + q) @ v


def dropout(x, rate: float, train: bool, rng: Optional[np.random.Generator]) -> torch.Tensor:
    """Inverted dropout; identity in eval mode or when ``rate`` is 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    x = as_tensor(x)
    if not train or rate == 0.0:
        return x
    keep = rng.random(tuple(x.shape)) >= rate
    return x * torch.as_tensor(keep / (1.0 - rate), dtype=x.dtype)


def batchnorm(x, gamma, beta, running_mean, running_var, train: bool,
              momentum: float = 0.1, eps: float = 1e-5) -> torch.Tensor:
    """Batch normalisation over the leading axis of a (B, F) input.

    In train mode batch statistics are used and the running buffers updated;
    a batch of one falls back to the running statistics.
    """
    x = as_tensor(x)
    if train and x.shape[0] > 1:
        mean = x.mean(dim=0)
        var = x.var(dim=0, unbiased=False)
        with torch.no_grad():
            running_mean.mul_(1 - momentum).add_(momentum * mean.detach())
            running_var.mul_(1 - momentum).add_(momentum * var.detach())
    else:
        mean, var = running_mean, running_var
    return (x - mean) / torch.sqrt(var + eps) * gamma + beta


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# gradients and optimisation


def gradients(program: Callable[[], torch.Tensor], store: ParamStore,
              names: Optional[Iterable[str]] = None) -> tuple[float, dict[str, torch.Tensor]]:
    """Value of a scalar program and its reverse-mode gradient for every parameter.

    Parameters the program never touches get an all-zero gradient.
    """
    names = list(store.names if names is None else names)
    tensors = [store[k] for k in names]
    value = program()
    if value.dim() != 0:
        raise ValueError("program must return a scalar")
    grads = torch.autograd.grad(value, tensors, allow_unused=True)
    out = {k: (g.detach() if g is not None else torch.zeros_like(t))
           for k, g, t in zip(names, grads, tensors)}
    return float(value.detach()), out


class AdaBelief:
    """AdaBelief with bias correction; state is kept per parameter name."""

    def __init__(self, store: ParamStore, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state: dict[str, dict] = {}

    def step(self, grads: Mapping[str, torch.Tensor]) -> None:
        for name in grads:
            if not torch.isfinite(grads[name]).all():
                raise TrainingError(f"non-finite gradient for parameter {name!r}")
        with torch.no_grad():
            for name in sorted(grads):
                g = grads[name]
                p = self.store[name]
                st = self.state.setdefault(name, {"step": 0, "m": torch.zeros_like(p),
                                                  "s": torch.zeros_like(p)})
                st["step"] += 1
                t = st["step"]
                m, s = st["m"], st["s"]
                m.mul_(self.beta1).add_((1 - self.beta1) * g)
                s.mul_(self.beta2).add_((1 - self.beta2) * (g - m) ** 2).add_(self.eps)
                m_hat = m / (1 - self.beta1 ** t)
                s_hat = s / (1 - self.beta2 ** t)
                p.sub_(self.lr * m_hat / (torch.sqrt(s_hat) + self.eps))


def grad_errors(program: Callable[[], torch.Tensor], store: ParamStore,
                names: Optional[Iterable[str]] = None, step: float = 1e-5,
                floor: float = 1e-6) -> dict[str, float]:
    """Per-parameter max relative error of reverse-mode vs central differences.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; the floor keeps
    entries whose true gradient is ~0 from dominating through round-off.
    """
    names = list(store.names if names is None else names)
    _, analytic = gradients(program, store, names)
    errors = {}
    with torch.no_grad():
        for name in names:
            p = store[name]
            flat = p.view(-1)
            a = analytic[name].reshape(-1).numpy()
            worst = 0.0
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + step
                plus = float(program())
                flat[i] = orig - step
                minus = float(program())
                flat[i] = orig
                num = (plus - minus) / (2 * step)
                rel = abs(a[i] - num) / max(abs(a[i]), abs(num), floor)
                worst = max(worst, rel)
            errors[name] = worst
    return errors


def grad_check(program: Callable[[], torch.Tensor], store: ParamStore,
               names: Optional[Iterable[str]] = None, step: float = 1e-5) -> float:
    """Max relative error over all checked parameter entries."""
    errs = grad_errors(program, store, names, step)
    return max(errs.values()) if errs else 0.0


# ---------------------------------------------------------------------------
# checkpoint container
#
# Text header, one line per array, then little-endian float32 payload:
#   slateopt-checkpoint 1
#   config <json>
#   array <name> <param|buffer> <d0xd1x...> <byte offset>
#   end


def save_checkpoint(path, store: ParamStore, config: Optional[dict] = None) -> None:
    entries = [(k, "param") for k in store.names] + [(k, "buffer") for k in store.buffer_names]
    lines = [CHECKPOINT_MAGIC, "config " + json.dumps(config or {}, sort_keys=True)]
    payload = []
    offset = 0
    for name, kind in entries:
        if any(ch.isspace() for ch in name):
            raise ValueError(f"array name {name!r} contains whitespace")
        arr = store[name].detach().numpy().astype("<f4")
        shape = "x".join(str(d) for d in arr.shape) or "scalar"
        lines.append(f"array {name} {kind} {shape} {offset}")
        payload.append(arr.tobytes(order="C"))
        offset += arr.nbytes
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for chunk in payload:
            fh.write(chunk)


def load_checkpoint(path) -> tuple[ParamStore, dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    lines = []
    pos = 0
    while True:
        nl = blob.index(b"\n", pos)
        line = blob[pos:nl].decode("utf-8")
        pos = nl + 1
        if line == "end":
            break
        lines.append(line)
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    config = json.loads(lines[1][len("config "):])
    store = ParamStore()
    for line in lines[2:]:
        _, name, kind, shape, offset = line.split(" ")
        dims = () if shape == "scalar" else tuple(int(d) for d in shape.split("x"))
        count = int(np.prod(dims)) if dims else 1
        start = pos + int(offset)
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=start).reshape(dims)
        store.add(name, arr.astype(np.float64), trainable=(kind == "param"))
    return store, config
