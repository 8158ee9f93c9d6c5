"""Contrastive refinement over positive/negative alignment matrices.

Several bilingual pairs are concatenated into one training example; the
positive matrix stays block-diagonal, so every word of another pair becomes a
candidate negative.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .align import build_negatives, extract_alignment
from .encoder import MAX_LEN, EncoderParams, backward, encode, encode_with_cache, warmup_lr

log = logging.getLogger(__name__)


def _weighted_logsumexp(s: np.ndarray, w: np.ndarray) -> tuple[float, np.ndarray]:
    """log sum_ij w_ij exp(s_ij) and the normalised weights w e^s / sum(w e^s)."""
    mask = w > 0
    top = s[mask].max()
    e = np.where(mask, w * np.exp(np.where(mask, s - top, 0.0)), 0.0)
    total = e.sum()
    return top + float(np.log(total)), e / total


def contrastive_loss(hs: np.ndarray, ht: np.ndarray, p: np.ndarray,
                     n: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """-log sum P e^{s} + log sum (P + N) e^{s} with s = hs @ ht.T, plus dL/dhs and dL/dht."""
    p = np.asarray(p, dtype=float)
    n = np.asarray(n, dtype=float)
    if p.shape != (hs.shape[0], ht.shape[0]) or n.shape != p.shape:
        raise ValueError(f"P/N shapes {p.shape}/{n.shape} do not match {(hs.shape[0], ht.shape[0])}")
    if not (p > 0).any():
        raise ValueError("positive matrix is all zero; the loss is undefined")
    s = hs @ ht.T
    pos, w_pos = _weighted_logsumexp(s, p)
    both, w_all = _weighted_logsumexp(s, p + n)
    d_s = w_all - w_pos
    return both - pos, d_s @ ht, d_s.T @ hs


@dataclass
class InterBatch:
    src_ids: np.ndarray
    tgt_ids: np.ndarray
    p: np.ndarray
    n: np.ndarray
    src_bounds: list[tuple[int, int]]
    tgt_bounds: list[tuple[int, int]]


def build_inter_batch(items: Sequence[tuple[Sequence[int], Sequence[int], np.ndarray, np.ndarray]]) -> InterBatch:
    """Concatenates (src_ids, tgt_ids, P, N) items into one block-diagonal example."""
    if not 1 <= len(items) <= 8:
        raise ValueError(f"inter-sentence batches take 1..8 pairs, got {len(items)}")
    src_bounds, tgt_bounds = [], []
    i = j = 0
    for s, t, p, _ in items:
        if np.shape(p) != (len(s), len(t)):
            raise ValueError("per-pair P does not match its token counts")
        src_bounds.append((i, i + len(s)))
        tgt_bounds.append((j, j + len(t)))
        i += len(s)
        j += len(t)
    if i > MAX_LEN or j > MAX_LEN:
        raise ValueError(f"concatenated pair is {i}x{j} tokens, over the {MAX_LEN}-token limit")
    src = np.concatenate([np.asarray(s, dtype=np.int64) for s, _, _, _ in items])
    tgt = np.concatenate([np.asarray(t, dtype=np.int64) for _, t, _, _ in items])
    p_inter = np.zeros((i, j), dtype=bool)
    candidates = np.ones((i, j), dtype=bool)  # every cross-block cell starts as a negative
    for (a0, a1), (b0, b1), (_, _, p, n) in zip(src_bounds, tgt_bounds, items):
        p_inter[a0:a1, b0:b1] = p
        candidates[a0:a1, b0:b1] = n
    # Same duplicate rule as single pairs, now across the concatenated sequences.
    dedup = build_negatives(p_inter, src.tolist(), tgt.tolist())
    return InterBatch(src, tgt, p_inter, candidates & dedup, src_bounds, tgt_bounds)


def pair_supervision(params: EncoderParams, src_ids: Sequence[int], tgt_ids: Sequence[int],
                     c: float) -> tuple[np.ndarray, np.ndarray]:
    p = extract_alignment(encode(params, src_ids), encode(params, tgt_ids), c)
    return p, build_negatives(p, list(src_ids), list(tgt_ids))


@dataclass(frozen=True)
class ContrastiveConfig:
    pairs: int = 4
    steps: int = 500
    lr: float = 0.05
    threshold: float = 0.1
    freeze_supervision: bool = False
    warmup: int = 0


def contrastive_step(params: EncoderParams, batch: InterBatch) -> tuple[float, EncoderParams]:
    """Loss and encoder gradients for one inter-sentence batch.

    Each segment is encoded on its own so context windows never cross pair
    boundaries; the similarity matrix then spans all segments.
    """
    src_parts = [encode_with_cache(params, batch.src_ids[a:b]) for a, b in batch.src_bounds]
    tgt_parts = [encode_with_cache(params, batch.tgt_ids[a:b]) for a, b in batch.tgt_bounds]
    hs = np.vstack([h for h, _ in src_parts])
    ht = np.vstack([h for h, _ in tgt_parts])
    loss, d_hs, d_ht = contrastive_loss(hs, ht, batch.p, batch.n)
    grads = params.zeros_like()
    for (a, b), (_, cache) in zip(batch.src_bounds, src_parts):
        backward(params, cache, d_hs[a:b], grads)
    for (a, b), (_, cache) in zip(batch.tgt_bounds, tgt_parts):
        backward(params, cache, d_ht[a:b], grads)
    return loss, grads


def train_contrastive(params: EncoderParams, corpus: Sequence[tuple[Sequence[int], Sequence[int]]],
                      cfg: ContrastiveConfig, seed: int,
                      log_rows: list | None = None) -> EncoderParams:
    """Refines the encoder; returns new parameters (the input is left untouched).

    ``corpus`` holds (src_ids, tgt_ids) pairs. Supervision is recomputed from the
    current encoder for every batch unless ``cfg.freeze_supervision`` is set.
    """
    if not corpus:
        raise ValueError("contrastive training needs a non-empty corpus")
    if cfg.pairs < 1:
        raise ValueError("pairs per batch must be >= 1")
    rng = np.random.default_rng(seed)
    params = params.copy()
    frozen = None
    if cfg.freeze_supervision:
        frozen = [pair_supervision(params, s, t, cfg.threshold) for s, t in corpus]
    skipped = 0
    m = min(cfg.pairs, len(corpus))
    for step in range(cfg.steps):
        pick = rng.choice(len(corpus), size=m, replace=False)
        items = []
        for k in pick:
            s, t = corpus[int(k)]
            p, n = frozen[int(k)] if frozen is not None else pair_supervision(params, s, t, cfg.threshold)
            items.append((s, t, p, n))
        batch = build_inter_batch(items)
        if not batch.p.any():
            skipped += 1
            if log_rows is not None:
                log_rows.append((step, float("nan"), 0, int(batch.n.sum()), skipped))
            continue
        loss, grads = contrastive_step(params, batch)
        params.add_(grads, -warmup_lr(cfg.lr, step, cfg.warmup))
        if log_rows is not None:
            log_rows.append((step, loss, int(batch.p.sum()), int(batch.n.sum()), skipped))
    if skipped:
        log.info("skipped %d batches with no positive links", skipped)
    return params
