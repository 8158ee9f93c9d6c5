"""Statistics over MUL-translated corpora: symbol lexicons, purity, homograph
contingency tables, vocabulary sizes and same-symbol word alignment."""

from __future__ import annotations

import csv
import io
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .align import AlignmentScore, alignment_metrics, corpus_links
from .corpus import FUNCTION, GoldLexicon


@dataclass
class TranslatedSentence:
    lang: str
    tokens: list[str]
    symbols: list[int]
    concepts: list[int] | None = None

    def __post_init__(self):
        if len(self.tokens) != len(self.symbols):
            raise ValueError("a MUL sentence must have one symbol per natural token")
        if self.concepts is not None and len(self.concepts) != len(self.tokens):
            raise ValueError("concept labels do not match the token count")


# --- symbol lexicon ----------------------------------------------------------

@dataclass
class SymbolLexicon:
    # symbol -> language -> [(token, relative frequency)], count desc then token asc
    entries: dict[int, dict[str, list[tuple[str, float]]]]
    counts: dict[int, dict[str, Counter]]


def symbol_lexicon(corpus: Iterable[TranslatedSentence], top_k: int = 2) -> SymbolLexicon:
    counts: dict[int, dict[str, Counter]] = defaultdict(lambda: defaultdict(Counter))
    for sent in corpus:
        for tok, sym in zip(sent.tokens, sent.symbols):
            counts[int(sym)][sent.lang][tok] += 1
    entries = {}
    for sym in sorted(counts):
        entries[sym] = {}
        for lang in sorted(counts[sym]):
            c = counts[sym][lang]
            total = sum(c.values())
            ranked = sorted(c.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]
            entries[sym][lang] = [(tok, n / total) for tok, n in ranked]
    return SymbolLexicon(entries, {k: dict(v) for k, v in counts.items()})


def lexicon_rows(lex: SymbolLexicon) -> list[tuple[int, str, int, str, float]]:
    return [(sym, lang, rank, tok, freq)
            for sym, per_lang in lex.entries.items()
            for lang, ranked in per_lang.items()
            for rank, (tok, freq) in enumerate(ranked, 1)]


def render_lexicon(lex: SymbolLexicon, languages: Sequence[str]) -> str:
    lines = ["symbol  " + "  ".join(f"{lang:<28}" for lang in languages)]
    for sym, per_lang in lex.entries.items():
        cells = []
        for lang in languages:
            ranked = per_lang.get(lang, [])
            cells.append(f"{', '.join(f'{t} {100 * f:.0f}%' for t, f in ranked) or '-':<28}")
        lines.append(f"{sym:<6}  " + "  ".join(cells))
    return "\n".join(lines) + "\n"


# --- purity -----------------------------------------------------------------

@dataclass(frozen=True)
class PurityStats:
    purity: float
    distinct_symbols_per_concept: float
    distinct_concepts_per_symbol: float


def codebook_purity(corpus: Iterable[TranslatedSentence]) -> PurityStats:
    """Share of content tokens that sit on their concept's majority symbol.

    Function words (no concept) are ignored; both languages pool into one
    count per concept, so language-split symbols lower the purity.
    """
    by_concept: dict[int, Counter] = defaultdict(Counter)
    by_symbol: dict[int, set] = defaultdict(set)
    for sent in corpus:
        if sent.concepts is None:
            raise ValueError("purity needs gold concept labels on every sentence")
        for sym, cid in zip(sent.symbols, sent.concepts):
            if cid == FUNCTION:
                continue
            by_concept[cid][int(sym)] += 1
            by_symbol[int(sym)].add(cid)
    total = sum(sum(c.values()) for c in by_concept.values())
    if total == 0:
        return PurityStats(1.0, 0.0, 0.0)
    hit = sum(max(c.values()) for c in by_concept.values())
    return PurityStats(
        hit / total,
        float(np.mean([len(c) for c in by_concept.values()])),
        float(np.mean([len(s) for s in by_symbol.values()])),
    )


# --- homograph disambiguation -------------------------------------------------

@dataclass
class DisambiguationTable:
    lang: str
    token: str
    concepts: list[int]        # columns
    symbols: list[int]         # rows, by total count desc then index
    counts: np.ndarray         # len(symbols) x len(concepts)

    def column_majority(self) -> list[tuple[int, float]]:
        """(majority symbol, its share of the column) per concept column."""
        out = []
        for j in range(len(self.concepts)):
            col = self.counts[:, j]
            if col.sum() == 0:
                out.append((-1, 0.0))
                continue
            i = int(col.argmax())
            out.append((self.symbols[i], float(col[i] / col.sum())))
        return out

    def render(self) -> str:
        head = f"{self.lang}:{self.token}  " + "  ".join(f"c{c:>5}" for c in self.concepts)
        rows = [f"{s:>{len(self.lang) + len(self.token) + 1}}  " + "  ".join(f"{int(n):>6}" for n in r)
                for s, r in zip(self.symbols, self.counts)]
        return "\n".join([head, *rows]) + "\n"


def disambiguation_table(corpus: Iterable[TranslatedSentence], lang: str, token: str,
                         lexicon: GoldLexicon) -> DisambiguationTable:
    key = (lang, token)
    if key not in lexicon.homographs:
        raise ValueError(f"{lang}:{token} is not a declared homograph")
    concepts = sorted(lexicon.homographs[key])
    cells: Counter = Counter()
    for sent in corpus:
        if sent.lang != lang:
            continue
        if sent.concepts is None:
            raise ValueError("disambiguation needs gold concept labels")
        for tok, sym, cid in zip(sent.tokens, sent.symbols, sent.concepts):
            if tok == token:
                cells[(int(sym), cid)] += 1
    totals = Counter()
    for (sym, _), n in cells.items():
        totals[sym] += n
    symbols = sorted(totals, key=lambda s: (-totals[s], s))
    counts = np.zeros((len(symbols), len(concepts)), dtype=np.int64)
    for (sym, cid), n in cells.items():
        if cid in concepts:
            counts[symbols.index(sym), concepts.index(cid)] = n
    return DisambiguationTable(lang, token, concepts, symbols, counts)


# --- vocabulary statistics ----------------------------------------------------

@dataclass(frozen=True)
class VocabStats:
    universal_per_natural: float
    natural_per_universal: float
    universal_words: int
    natural_words: int


def _stats(pairs: set[tuple[object, int]]) -> VocabStats:
    nat = defaultdict(set)
    uni = defaultdict(set)
    for word, sym in pairs:
        nat[word].add(sym)
        uni[sym].add(word)
    if not pairs:
        return VocabStats(0.0, 0.0, 0, 0)
    return VocabStats(float(np.mean([len(v) for v in nat.values()])),
                      float(np.mean([len(v) for v in uni.values()])), len(uni), len(nat))


def vocab_stats(corpus: Iterable[TranslatedSentence]) -> dict[str, VocabStats]:
    """Per-language rows plus a pooled ``"all"`` row; natural words are (lang, token) types."""
    per_lang: dict[str, set] = defaultdict(set)
    for sent in corpus:
        for tok, sym in zip(sent.tokens, sent.symbols):
            per_lang[sent.lang].add((tok, int(sym)))
    if not per_lang:
        raise ValueError("vocabulary statistics need a non-empty corpus")
    out = {lang: _stats(pairs) for lang, pairs in sorted(per_lang.items())}
    out["all"] = _stats({((lang, tok), sym) for lang, pairs in per_lang.items() for tok, sym in pairs})
    return out


# --- same-symbol alignment ----------------------------------------------------

def same_symbol_links(src_symbols: Sequence[int], tgt_symbols: Sequence[int]) -> set[tuple[int, int]]:
    """Links between positions carrying the same symbol; repeats pair up in position order."""
    src_pos: dict[int, list[int]] = defaultdict(list)
    tgt_pos: dict[int, list[int]] = defaultdict(list)
    for i, s in enumerate(src_symbols):
        src_pos[int(s)].append(i)
    for j, t in enumerate(tgt_symbols):
        tgt_pos[int(t)].append(j)
    return {(i, j) for sym in src_pos.keys() & tgt_pos.keys()
            for i, j in zip(src_pos[sym], tgt_pos[sym])}


def same_symbol_alignment_eval(pairs: Sequence[tuple[Sequence[int], Sequence[int]]],
                               gold: Sequence[Iterable[tuple[int, int]]]) -> AlignmentScore:
    """Scores symbol-sequence pairs against gold links at corpus level."""
    if len(pairs) != len(gold):
        raise ValueError("one gold link set per sentence pair is required")
    pred = [same_symbol_links(s, t) for s, t in pairs]
    return alignment_metrics(corpus_links(pred), corpus_links(gold))


# --- rendering ----------------------------------------------------------------

def to_csv(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def vocab_stats_csv(stats: dict[str, VocabStats]) -> str:
    return to_csv(["language", "universal_per_natural", "natural_per_universal",
                   "universal_words", "natural_words"],
                  [(k, v.universal_per_natural, v.natural_per_universal, v.universal_words, v.natural_words)
                   for k, v in stats.items()])


def render_vocab_stats(stats: dict[str, VocabStats]) -> str:
    lines = [f"{'language':<10}{'U/N':>8}{'N/U':>8}{'#U':>8}{'#N':>8}"]
    for k, v in stats.items():
        lines.append(f"{k:<10}{v.universal_per_natural:>8.2f}{v.natural_per_universal:>8.2f}"
                     f"{v.universal_words:>8}{v.natural_words:>8}")
    return "\n".join(lines) + "\n"


def projection_2d(h: np.ndarray) -> np.ndarray:
    """Top-two principal-component coordinates (sign fixed so each axis' largest loading is positive)."""
    x = h - h.mean(axis=0)
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    comps = vt[:2]
    signs = np.sign(comps[np.arange(len(comps)), np.abs(comps).argmax(axis=1)])
    signs[signs == 0] = 1.0
    out = x @ (comps * signs[:, None]).T
    if out.shape[1] < 2:
        out = np.hstack([out, np.zeros((len(out), 2 - out.shape[1]))])
    return out
