"""Word alignment from contextual embeddings and its evaluation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np


def softmax(z: np.ndarray, axis: int) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def alignment_probs(hs: np.ndarray, ht: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalised and column-normalised softmax of the similarity matrix ``hs @ ht.T``.

    The row softmax (over target positions j) is returned first.
    """
    if not (np.isfinite(hs).all() and np.isfinite(ht).all()):
        raise ValueError("embeddings contain non-finite values")
    a = hs @ ht.T
    return softmax(a, axis=1), softmax(a, axis=0)


def extract_alignment(hs: np.ndarray, ht: np.ndarray, c: float) -> np.ndarray:
    """Boolean n x m matrix of mutual links: both softmax directions must exceed ``c``."""
    if not 0.0 < c < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {c}")
    rows, cols = alignment_probs(hs, ht)
    return (rows > c) & (cols > c)


def build_negatives(p: np.ndarray, src_tokens: Sequence[Hashable],
                    tgt_tokens: Sequence[Hashable]) -> np.ndarray:
    """Complement of ``p`` minus cells that repeat the surface pair of some positive.

    A cell (i, j) is dropped when a positive (k, l) has src[i] == src[k] and
    tgt[j] == tgt[l]: repeated words should keep sharing a representation.
    """
    p = np.asarray(p, dtype=bool)
    if p.shape != (len(src_tokens), len(tgt_tokens)):
        raise ValueError(f"P has shape {p.shape}, tokens give {(len(src_tokens), len(tgt_tokens))}")
    positive_pairs = {(src_tokens[k], tgt_tokens[l]) for k, l in zip(*np.nonzero(p))}
    n = ~p
    for i, s in enumerate(src_tokens):
        for j, t in enumerate(tgt_tokens):
            if n[i, j] and (s, t) in positive_pairs:
                n[i, j] = False
    return n


def links_of(p: np.ndarray) -> set[tuple[int, int]]:
    return {(int(i), int(j)) for i, j in zip(*np.nonzero(p))}


@dataclass(frozen=True)
class AlignmentScore:
    precision: float
    recall: float
    aer: float
    n_pred: int
    n_gold: int
    n_hit: int

    @property
    def f1(self) -> float:
        if self.precision + self.recall == 0:
            return 0.0
        return 2 * self.precision * self.recall / (self.precision + self.recall)

    def rows(self) -> list[tuple[str, float]]:
        return [("precision", self.precision), ("recall", self.recall), ("aer", self.aer),
                ("f1", self.f1), ("predicted", self.n_pred), ("gold", self.n_gold),
                ("correct", self.n_hit)]


def alignment_metrics(pred: Iterable[Hashable], gold: Iterable[Hashable]) -> AlignmentScore:
    """Precision, recall and AER against sure-only gold links.

    Links may be (i, j) pairs or (sentence, i, j) triples for corpus-level scores.
    """
    a, s = set(pred), set(gold)
    hit = len(a & s)
    if a:
        precision = hit / len(a)
    else:
        precision = 1.0 if not s else 0.0
    recall = hit / len(s) if s else 1.0
    aer = 1.0 - 2.0 * hit / (len(a) + len(s)) if (a or s) else 0.0
    return AlignmentScore(precision, recall, aer, len(a), len(s), hit)


def corpus_links(per_sentence: Iterable[Iterable[tuple[int, int]]]) -> set[tuple[int, int, int]]:
    return {(k, i, j) for k, links in enumerate(per_sentence) for i, j in links}


def metrics_csv(score: AlignmentScore) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "value"])
    for name, value in score.rows():
        writer.writerow([name, repr(float(value)) if isinstance(value, float) else value])
    return buf.getvalue()


def write_pharaoh(path, link_sets: Iterable[Iterable[tuple[int, int]]]) -> None:
    """One line of ``i-j`` links per sentence pair."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for links in link_sets:
            f.write(" ".join(f"{i}-{j}" for i, j in sorted(links)) + "\n")


def read_pharaoh(path) -> list[set[tuple[int, int]]]:
    from .corpus import parse_links

    with open(path, encoding="utf-8") as f:
        text = f.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [parse_links(line, where=f"line {k}: ") for k, line in enumerate(lines, 1)]
