"""Windowed context-mixing encoder with tied-embedding MLM and a hand-written backward pass.

Each layer computes ``h_i = tanh(W_self h_i + W_ctx mean(h_j : |j - i| <= w) + b)``.
Everything is float64 so finite-difference checks can resolve 1e-4 relative error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

MAX_LEN = 512


@dataclass
class Layer:
    w_self: np.ndarray
    w_ctx: np.ndarray
    b: np.ndarray


@dataclass
class EncoderParams:
    embed: np.ndarray  # V x D, shared by the input lookup and the MLM output projection
    layers: list[Layer]
    out_bias: np.ndarray
    window: int
    seed: int = 0

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0]

    @property
    def dim(self) -> int:
        return self.embed.shape[1]

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        yield "embed", self.embed
        for i, layer in enumerate(self.layers):
            yield f"layers.{i}.w_self", layer.w_self
            yield f"layers.{i}.w_ctx", layer.w_ctx
            yield f"layers.{i}.b", layer.b
        yield "out_bias", self.out_bias

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            self.embed.copy(),
            [Layer(l.w_self.copy(), l.w_ctx.copy(), l.b.copy()) for l in self.layers],
            self.out_bias.copy(), self.window, self.seed,
        )

    def zeros_like(self) -> "EncoderParams":
        z = self.copy()
        for _, a in z.named_arrays():
            a[...] = 0.0
        return z

    def add_(self, other: "EncoderParams", scale: float = 1.0) -> "EncoderParams":
        for (_, a), (_, g) in zip(self.named_arrays(), other.named_arrays()):
            a += scale * g
        return self


def init_params(vocab_size: int, dim: int, layers: int, window: int, seed: int) -> EncoderParams:
    if vocab_size < 1 or dim < 2 or layers < 0 or window < 0:
        raise ValueError(f"invalid encoder dims V={vocab_size} D={dim} L={layers} w={window}")
    rng = np.random.default_rng(seed)
    std = 1.0 / math.sqrt(dim)
    embed = rng.normal(0.0, std, (vocab_size, dim))
    stack = [
        Layer(rng.normal(0.0, std, (dim, dim)), rng.normal(0.0, std, (dim, dim)),
              rng.normal(0.0, std, dim))
        for _ in range(layers)
    ]
    out_bias = rng.normal(0.0, std, vocab_size)
    return EncoderParams(embed, stack, out_bias, window, seed)


def window_matrix(n: int, window: int) -> np.ndarray:
    """Row i averages positions j with |i - j| <= window (clipped at the edges)."""
    idx = np.arange(n)
    m = (np.abs(idx[:, None] - idx[None, :]) <= window).astype(float)
    return m / m.sum(axis=1, keepdims=True)


def mix_forward(layer: Layer, x: np.ndarray, mix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ctx = mix @ x
    return np.tanh(x @ layer.w_self.T + ctx @ layer.w_ctx.T + layer.b), ctx


def mix_backward(layer: Layer, x: np.ndarray, ctx: np.ndarray, out: np.ndarray,
                 mix: np.ndarray, d_out: np.ndarray, grad: Layer) -> np.ndarray:
    """Accumulates parameter gradients into ``grad`` and returns dL/dx."""
    dz = d_out * (1.0 - out * out)
    grad.w_self += dz.T @ x
    grad.w_ctx += dz.T @ ctx
    grad.b += dz.sum(axis=0)
    return dz @ layer.w_self + mix.T @ (dz @ layer.w_ctx)


@dataclass
class EncodeCache:
    ids: np.ndarray
    mix: np.ndarray
    inputs: list[np.ndarray] = field(default_factory=list)
    contexts: list[np.ndarray] = field(default_factory=list)
    outputs: list[np.ndarray] = field(default_factory=list)


def _check_ids(params: EncoderParams, token_ids: Sequence[int]) -> np.ndarray:
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1 or not 1 <= len(ids) <= MAX_LEN:
        raise ValueError(f"sentence length must lie in [1, {MAX_LEN}], got {ids.shape}")
    bad = (ids < 0) | (ids >= params.vocab_size)
    if bad.any():
        raise ValueError(f"token id {int(ids[bad][0])} out of range for vocabulary of {params.vocab_size}")
    return ids


def encode_with_cache(params: EncoderParams, token_ids: Sequence[int]) -> tuple[np.ndarray, EncodeCache]:
    ids = _check_ids(params, token_ids)
    cache = EncodeCache(ids, window_matrix(len(ids), params.window))
    h = params.embed[ids]
    for layer in params.layers:
        out, ctx = mix_forward(layer, h, cache.mix)
        cache.inputs.append(h)
        cache.contexts.append(ctx)
        cache.outputs.append(out)
        h = out
    return h, cache


def encode(params: EncoderParams, token_ids: Sequence[int]) -> np.ndarray:
    return encode_with_cache(params, token_ids)[0]


def backward(params: EncoderParams, token_ids: Sequence[int] | EncodeCache, d_h: np.ndarray,
             grads: EncoderParams | None = None) -> tuple[EncoderParams, np.ndarray]:
    """Reverse-mode gradients of ``encode``.

    Returns the parameter gradients (accumulated into ``grads`` when given) and
    dL/d(input embedding rows), one row per token.
    """
    cache = token_ids if isinstance(token_ids, EncodeCache) else encode_with_cache(params, token_ids)[1]
    n = len(cache.ids)
    if d_h.shape != (n, params.dim):
        raise ValueError(f"dL/dH has shape {d_h.shape}, expected {(n, params.dim)}")
    if grads is None:
        grads = params.zeros_like()
    d = d_h
    for i in range(len(params.layers) - 1, -1, -1):
        d = mix_backward(params.layers[i], cache.inputs[i], cache.contexts[i], cache.outputs[i],
                         cache.mix, d, grads.layers[i])
    np.add.at(grads.embed, cache.ids, d)
    return grads, d


# --- masked language modelling ---------------------------------------------

@dataclass
class MaskedBatch:
    inputs: list[np.ndarray]      # token ids after masking
    positions: list[np.ndarray]   # masked positions per sentence
    labels: list[np.ndarray]      # original ids at those positions
    outcomes: list[np.ndarray]    # 0 = mask id, 1 = random id, 2 = kept

    @property
    def n_masked(self) -> int:
        return int(sum(len(p) for p in self.positions))


def mask_count(n: int, rate: float = 0.15) -> int:
    return max(1, math.ceil(rate * n - 1e-9))


def make_masked_batch(sentences: Sequence[Sequence[int]], mask_id: int, n_real: int,
                      rng: np.random.Generator, rate: float = 0.15) -> MaskedBatch:
    """Masks ceil(rate * n) positions per sentence with the 80/10/10 policy.

    Random replacements are drawn from the real vocabulary ``[0, n_real)``.
    """
    inputs, positions, labels, outcomes = [], [], [], []
    for sent in sentences:
        ids = np.asarray(sent, dtype=np.int64)
        k = mask_count(len(ids), rate)
        pos = np.sort(rng.choice(len(ids), size=k, replace=False))
        u = rng.random(k)
        outcome = np.where(u < 0.8, 0, np.where(u < 0.9, 1, 2))
        masked = ids.copy()
        for p, o in zip(pos, outcome):
            if o == 0:
                masked[p] = mask_id
            elif o == 1:
                masked[p] = rng.integers(n_real)
        inputs.append(masked)
        positions.append(pos)
        labels.append(ids[pos])
        outcomes.append(outcome)
    return MaskedBatch(inputs, positions, labels, outcomes)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def mlm_loss_and_grads(params: EncoderParams, batch: MaskedBatch) -> tuple[float, EncoderParams]:
    total = batch.n_masked
    if total == 0:
        raise ValueError("batch has no masked positions")
    grads = params.zeros_like()
    loss = 0.0
    for ids, pos, lab in zip(batch.inputs, batch.positions, batch.labels):
        h, cache = encode_with_cache(params, ids)
        hm = h[pos]
        logp = log_softmax(hm @ params.embed.T + params.out_bias)
        loss -= logp[np.arange(len(pos)), lab].sum()
        d_logits = np.exp(logp)
        d_logits[np.arange(len(pos)), lab] -= 1.0
        d_logits /= total
        grads.embed += d_logits.T @ hm          # output side of the tied embedding
        grads.out_bias += d_logits.sum(axis=0)
        d_h = np.zeros_like(h)
        d_h[pos] = d_logits @ params.embed
        backward(params, cache, d_h, grads)     # lookup side lands in grads.embed too
    return loss / total, grads


def mlm_step(params: EncoderParams, batch: MaskedBatch, lr: float) -> tuple[float, EncoderParams]:
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    loss, grads = mlm_loss_and_grads(params, batch)
    return loss, params.copy().add_(grads, -lr)


def warmup_lr(lr: float, step: int, warmup: int) -> float:
    """Linear warm-up over the first ``warmup`` steps, constant afterwards."""
    return lr if warmup <= 0 else lr * min(1.0, (step + 1) / warmup)


def pretrain_mlm(params: EncoderParams, sentences: Sequence[Sequence[int]], *, mask_id: int,
                 n_real: int, steps: int, batch_size: int, lr: float, seed: int,
                 rate: float = 0.15, warmup: int = 0, log: list | None = None) -> EncoderParams:
    if not sentences:
        raise ValueError("pretraining needs at least one sentence")
    rng = np.random.default_rng(seed)
    for step in range(steps):
        pick = rng.choice(len(sentences), size=min(batch_size, len(sentences)), replace=False)
        batch = make_masked_batch([sentences[i] for i in pick], mask_id, n_real, rng, rate)
        loss, params = mlm_step(params, batch, warmup_lr(lr, step, warmup))
        if log is not None:
            log.append((step, loss))
    return params
