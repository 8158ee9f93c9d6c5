"""Universal vocabulary: vector quantisation with EMA codebook updates and the
cross-lingual push that evicts redundant symbols.

Natural sentence -> encoder -> nearest codeword per token gives the MUL
sentence; codeword rows -> decoder -> natural tokens goes back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

import numpy as np

from .encoder import (
    EncoderParams,
    Layer,
    backward,
    encode,
    encode_with_cache,
    log_softmax,
    mix_backward,
    mix_forward,
    warmup_lr,
    window_matrix,
)

EPS = 1e-5


@dataclass
class Codebook:
    e: np.ndarray          # K x D symbol embeddings
    ema_count: np.ndarray  # K
    ema_sum: np.ndarray    # K x D
    usage: np.ndarray      # K, distinct (language, token) types seen this epoch
    eps: float = EPS

    @property
    def size(self) -> int:
        return self.e.shape[0]

    def copy(self) -> "Codebook":
        return Codebook(self.e.copy(), self.ema_count.copy(), self.ema_sum.copy(),
                        self.usage.copy(), self.eps)

    def refresh(self, rows: np.ndarray | None = None) -> None:
        rows = slice(None) if rows is None else rows
        self.e[rows] = self.ema_sum[rows] / np.maximum(self.ema_count[rows], self.eps)[..., None]


def init_codebook(size: int, dim: int, seed: int, samples: np.ndarray | None = None) -> Codebook:
    """Codewords drawn from ``samples`` rows when given, else from N(0, 1)."""
    if size < 2:
        raise ValueError("codebook needs at least two symbols")
    rng = np.random.default_rng(seed)
    if samples is None:
        e = rng.normal(0.0, 1.0, (size, dim))
    else:
        pick = rng.choice(len(samples), size=size, replace=len(samples) < size)
        e = samples[pick] + rng.normal(0.0, 1e-3, (size, dim))
    count = np.ones(size)
    return Codebook(e, count, e * count[:, None], np.zeros(size, dtype=np.int64))


def quantize(codebook: Codebook, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest codeword per row; ties go to the lowest index (argmin keeps the first)."""
    if not np.isfinite(h).all():
        raise ValueError("embeddings contain non-finite values")
    d = ((h[:, None, :] - codebook.e[None, :, :]) ** 2).sum(axis=-1)
    idx = d.argmin(axis=1)
    return idx, codebook.e[idx]


def commitment_grad(h: np.ndarray, e: np.ndarray, beta: float = 0.25) -> np.ndarray:
    """d/dH of beta * ||sg(E) - H||^2; the codebook gets nothing from this term."""
    if h.shape != e.shape:
        raise ValueError(f"shape mismatch {h.shape} vs {e.shape}")
    return 2.0 * beta * (h - e)


def ema_update(codebook: Codebook, h: np.ndarray, indices: np.ndarray, gamma: float,
               weights: np.ndarray | None = None) -> Codebook:
    """One EMA step on cluster sizes and sums; ``weights`` (0/1) can drop rows."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"decay must lie in (0, 1], got {gamma}")
    cb = codebook.copy()
    if gamma == 1.0:
        return cb
    w = np.ones(len(indices)) if weights is None else np.asarray(weights, dtype=float)
    counts = np.bincount(indices, weights=w, minlength=cb.size)
    sums = np.zeros_like(cb.ema_sum)
    np.add.at(sums, indices, h * w[:, None])
    cb.ema_count = gamma * cb.ema_count + (1.0 - gamma) * counts
    cb.ema_sum = gamma * cb.ema_sum + (1.0 - gamma) * sums
    cb.refresh()
    return cb


def pushed_side(usage: np.ndarray, a: int, b: int) -> int:
    """The symbol to evict: fewer natural words mapped to it; ties evict the higher index."""
    if usage[a] != usage[b]:
        return a if usage[a] < usage[b] else b
    return max(a, b)


def virtual_point(e: np.ndarray, h: np.ndarray, push: float) -> np.ndarray:
    """Reflection of h through codeword e, scaled by ``push``."""
    return e + push * (e - h)


def ca_update(codebook: Codebook, violations: Sequence[tuple[np.ndarray, int, np.ndarray, int]],
              push: float = 1.0, gamma: float = 0.99) -> Codebook:
    """Adds one virtual point per violation to the accumulators of the evicted symbol.

    Each violation is (h_a, a, h_b, b): aligned words quantised to different
    symbols. The evicted symbol moves away from its own word's embedding.
    """
    cb = codebook.copy()
    if gamma == 1.0 or not violations:
        return cb
    touched = set()
    for h_a, a, h_b, b in violations:
        if a == b:
            raise ValueError("violation joins a symbol with itself")
        k = pushed_side(cb.usage, a, b)
        h = h_a if k == a else h_b
        cb.ema_count[k] += 1.0 - gamma
        cb.ema_sum[k] += (1.0 - gamma) * virtual_point(codebook.e[k], h, push)
        touched.add(k)
    cb.refresh(np.array(sorted(touched)))
    return cb


# --- decoder ----------------------------------------------------------------

@dataclass
class DecoderParams:
    layer: Layer
    w_out: np.ndarray          # V x D
    out_bias: np.ndarray       # V
    lang_embed: np.ndarray | None  # n_languages x D, added to the codeword rows
    window: int
    languages: list[str] = field(default_factory=list)

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        yield "layer.w_self", self.layer.w_self
        yield "layer.w_ctx", self.layer.w_ctx
        yield "layer.b", self.layer.b
        yield "w_out", self.w_out
        yield "out_bias", self.out_bias
        if self.lang_embed is not None:
            yield "lang_embed", self.lang_embed

    def copy(self) -> "DecoderParams":
        le = None if self.lang_embed is None else self.lang_embed.copy()
        return DecoderParams(Layer(self.layer.w_self.copy(), self.layer.w_ctx.copy(), self.layer.b.copy()),
                             self.w_out.copy(), self.out_bias.copy(), le, self.window, list(self.languages))

    def zeros_like(self) -> "DecoderParams":
        z = self.copy()
        for _, a in z.named_arrays():
            a[...] = 0.0
        return z

    def add_(self, other: "DecoderParams", scale: float = 1.0) -> "DecoderParams":
        for (_, a), (_, g) in zip(self.named_arrays(), other.named_arrays()):
            a += scale * g
        return self

    def lang_index(self, lang: str | int | None) -> int | None:
        if self.lang_embed is None or lang is None:
            return None
        if isinstance(lang, (int, np.integer)):
            return int(lang)
        try:
            return self.languages.index(lang)
        except ValueError:
            raise ValueError(f"decoder has no language {lang!r}") from None


def init_decoder(encoder: EncoderParams, languages: Sequence[str], seed: int,
                 language_tags: bool = True) -> DecoderParams:
    """Mixing layer copied from the encoder's last layer, output tied to its embeddings."""
    d = encoder.dim
    if encoder.layers:
        last = encoder.layers[-1]
        layer = Layer(last.w_self.copy(), last.w_ctx.copy(), last.b.copy())
    else:
        rng = np.random.default_rng(seed)
        std = 1.0 / math.sqrt(d)
        layer = Layer(rng.normal(0, std, (d, d)), rng.normal(0, std, (d, d)), rng.normal(0, std, d))
    lang_embed = np.zeros((len(languages), d)) if language_tags else None
    return DecoderParams(layer, encoder.embed.copy(), encoder.out_bias.copy(), lang_embed,
                         encoder.window, list(languages))


def decode_logits(decoder: DecoderParams, e: np.ndarray, lang: str | int | None = None):
    li = decoder.lang_index(lang)
    x = e if li is None else e + decoder.lang_embed[li]
    mix = window_matrix(len(e), decoder.window)
    out, ctx = mix_forward(decoder.layer, x, mix)
    logits = out @ decoder.w_out.T + decoder.out_bias
    return logits, (x, ctx, out, mix, li)


def decode_nll(decoder: DecoderParams, e: np.ndarray, token_ids: Sequence[int],
               lang: str | int | None = None) -> tuple[float, DecoderParams, np.ndarray]:
    """Mean token NLL of reconstructing ``token_ids`` from codeword rows ``e``.

    Returns the loss, decoder gradients and dL/dE.
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    if e.ndim != 2 or len(ids) != e.shape[0]:
        raise ValueError(f"codeword rows {e.shape} do not match {len(ids)} tokens")
    logits, (x, ctx, out, mix, li) = decode_logits(decoder, e, lang)
    n = len(ids)
    logp = log_softmax(logits)
    nll = -float(logp[np.arange(n), ids].mean())
    d_logits = np.exp(logp)
    d_logits[np.arange(n), ids] -= 1.0
    d_logits /= n
    grads = decoder.zeros_like()
    grads.w_out += d_logits.T @ out
    grads.out_bias += d_logits.sum(axis=0)
    d_x = mix_backward(decoder.layer, x, ctx, out, mix, d_logits @ decoder.w_out, grads.layer)
    if li is not None:
        grads.lang_embed[li] += d_x.sum(axis=0)
    return nll, grads, d_x


# --- training ---------------------------------------------------------------

@dataclass
class VQItem:
    src_ids: np.ndarray
    tgt_ids: np.ndarray
    src_lang: str
    tgt_lang: str
    links: np.ndarray  # k x 2 array of aligned (i, j) from the cached supervision


@dataclass(frozen=True)
class VQCAConfig:
    beta: float = 0.25
    push: float = 1.0
    gamma: float = 0.99
    lr: float = 0.05
    steps: int = 1000
    batch_pairs: int = 8
    cross_lingual: bool = True
    ca_warmup: int = 0  # plain EMA steps before the push is switched on
    lr_warmup: int = 0


class UsageTracker:
    """Distinct (language, token id) types per symbol within the current epoch."""

    def __init__(self, size: int):
        self.types: list[set] = [set() for _ in range(size)]

    def reset(self) -> None:
        for s in self.types:
            s.clear()

    def add(self, lang: str, token_ids: np.ndarray, indices: np.ndarray) -> None:
        for t, k in zip(token_ids, indices):
            self.types[int(k)].add((lang, int(t)))

    def counts(self) -> np.ndarray:
        return np.array([len(s) for s in self.types], dtype=np.int64)


def vqca_step(encoder: EncoderParams, decoder: DecoderParams, codebook: Codebook,
              batch: Sequence[VQItem], cfg: VQCAConfig, usage: UsageTracker):
    """One batch: reconstruction + commitment descent, EMA, then the push update.

    Returns updated (encoder, decoder, codebook) and a stats dict.
    """
    g_enc = encoder.zeros_like()
    g_dec = decoder.zeros_like()
    n_sent = 2 * len(batch)
    rows, idxs = [], []
    nll_total = commit_total = 0.0
    quantized = []
    for item in batch:
        sides = []
        for ids, lang in ((item.src_ids, item.src_lang), (item.tgt_ids, item.tgt_lang)):
            h, cache = encode_with_cache(encoder, ids)
            idx, e = quantize(codebook, h)
            nll, gd, d_e = decode_nll(decoder, e, ids, lang)
            g_dec.add_(gd, 1.0 / n_sent)
            n = len(ids)
            # straight-through: the reconstruction gradient w.r.t. E is copied onto H
            d_h = d_e + commitment_grad(h, e, cfg.beta) / n
            backward(encoder, cache, d_h / n_sent, g_enc)
            nll_total += nll
            commit_total += cfg.beta * float(((h - e) ** 2).sum()) / n
            usage.add(lang, ids, idx)
            rows.append(h)
            idxs.append(idx)
            sides.append((h, idx))
        quantized.append(sides)

    codebook = codebook.copy()
    codebook.usage = usage.counts()
    h_all = np.vstack(rows)
    idx_all = np.concatenate(idxs)
    weights = np.ones(len(idx_all))
    violations = []
    if cfg.cross_lingual:
        offset = 0
        for item, ((hs, ks), (ht, kt)) in zip(batch, quantized):
            for i, j in item.links:
                a, b = int(ks[i]), int(kt[j])
                if a == b:
                    continue
                violations.append((hs[i], a, ht[j], b))
                # the evicted symbol is pushed instead of pulled by its own word
                if pushed_side(codebook.usage, a, b) == a:
                    weights[offset + i] = 0.0
                else:
                    weights[offset + len(ks) + j] = 0.0
            offset += len(ks) + len(kt)
    new_cb = ema_update(codebook, h_all, idx_all, cfg.gamma, weights)
    if violations:
        new_cb = ca_update(new_cb, violations, cfg.push, cfg.gamma)

    encoder = encoder.copy().add_(g_enc, -cfg.lr)
    decoder = decoder.copy().add_(g_dec, -cfg.lr)
    stats = {"nll": nll_total / n_sent, "commit": commit_total / n_sent,
             "violations": len(violations), "active": int((np.bincount(idx_all, minlength=codebook.size) > 0).sum())}
    return encoder, decoder, new_cb, stats


def vqca_train(encoder: EncoderParams, decoder: DecoderParams, codebook: Codebook,
               data: Sequence[VQItem], cfg: VQCAConfig, seed: int,
               log_rows: list | None = None) -> tuple[EncoderParams, DecoderParams, Codebook]:
    if not data:
        raise ValueError("VQ-CA training needs a non-empty alignment cache")
    rng = np.random.default_rng(seed)
    usage = UsageTracker(codebook.size)
    per_epoch = max(1, math.ceil(len(data) / cfg.batch_pairs))
    encoder, decoder, codebook = encoder.copy(), decoder.copy(), codebook.copy()
    for step in range(cfg.steps):
        if step % per_epoch == 0:
            usage.reset()
        pick = rng.choice(len(data), size=min(cfg.batch_pairs, len(data)), replace=False)
        step_cfg = replace(cfg, lr=warmup_lr(cfg.lr, step, cfg.lr_warmup),
                           cross_lingual=cfg.cross_lingual and step >= cfg.ca_warmup)
        encoder, decoder, codebook, stats = vqca_step(
            encoder, decoder, codebook, [data[int(k)] for k in pick], step_cfg, usage)
        if log_rows is not None:
            log_rows.append((step, stats["nll"], stats["commit"], stats["violations"], stats["active"]))
    return encoder, decoder, codebook


def alignment_cache(encoder: EncoderParams, pairs: Sequence[tuple[Sequence[int], Sequence[int], str, str]],
                    c: float) -> list[VQItem]:
    from .align import extract_alignment

    items = []
    for s, t, ls, lt in pairs:
        p = extract_alignment(encode(encoder, s), encode(encoder, t), c)
        items.append(VQItem(np.asarray(s), np.asarray(t), ls, lt, np.argwhere(p)))
    return items


# --- translators --------------------------------------------------------------

@dataclass
class MULSentence:
    indices: np.ndarray
    lang: str


def nl_to_mul(encoder: EncoderParams, codebook: Codebook, token_ids: Sequence[int], lang: str) -> MULSentence:
    idx, _ = quantize(codebook, encode(encoder, token_ids))
    return MULSentence(idx, lang)


def mul_to_nl(decoder: DecoderParams, codebook: Codebook, mul: MULSentence) -> tuple[np.ndarray, np.ndarray]:
    """Argmax natural tokens and per-position distributions for a MUL sentence."""
    idx = np.asarray(mul.indices, dtype=np.int64)
    if len(idx) == 0 or (idx < 0).any() or (idx >= codebook.size).any():
        raise ValueError(f"symbol index out of range for a codebook of {codebook.size}")
    logits, _ = decode_logits(decoder, codebook.e[idx], mul.lang)
    probs = np.exp(log_softmax(logits))
    return probs.argmax(axis=1), probs


def format_mul(lang: str, tokens: Sequence[str], symbols: Sequence[int]) -> str:
    """``lang<TAB>tok/sym tok/sym ...``"""
    if len(tokens) != len(symbols):
        raise ValueError("one symbol per token is required")
    return lang + "\t" + " ".join(f"{t}/{int(k)}" for t, k in zip(tokens, symbols))


def parse_mul(line: str, lineno: int = 1) -> tuple[str, list[str], list[int]]:
    lang, sep, body = line.rstrip("\n").partition("\t")
    if not sep or not lang:
        raise ValueError(f"line {lineno}: expected 'lang<TAB>tok/sym ...'")
    tokens, symbols = [], []
    for item in body.split():
        tok, slash, sym = item.rpartition("/")
        if not slash or not tok or not sym.isdigit():
            raise ValueError(f"line {lineno}: malformed item {item!r}")
        tokens.append(tok)
        symbols.append(int(sym))
    return lang, tokens, symbols


def write_mul(path, rows: Iterable[tuple[str, Sequence[str], Sequence[int]]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for lang, tokens, symbols in rows:
            f.write(format_mul(lang, tokens, symbols) + "\n")


def read_mul(path) -> list[tuple[str, list[str], list[int]]]:
    with open(path, encoding="utf-8") as f:
        return [parse_mul(line, k) for k, line in enumerate(f, 1) if line.strip()]
