"""Synthetic bilingual corpora with known concepts and gold word alignments.

Concepts are grouped into topics (a sentence draws all its content words from
one topic) and roles (content words appear in canonical role order before the
per-language permutation). Topics make homographs resolvable from context;
roles give words of "the same type" that plain alignment tends to confuse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FUNCTION = -1  # concept id carried by function words

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


class CorpusError(ValueError):
    """Raised for invalid lexicon specs and malformed corpus files."""


@dataclass
class Concept:
    id: int
    topic: int
    role: int
    weight: float
    surfaces: dict[str, list[str]]
    surface_weights: dict[str, list[float]]


@dataclass
class GoldLexicon:
    languages: list[str]
    concepts: list[Concept]
    homographs: dict[tuple[str, str], list[int]]
    function_words: dict[str, list[str]]
    seed: int
    skewed: set[tuple[str, str]] = field(default_factory=set)

    def concepts_for(self, lang: str, token: str) -> list[int]:
        return [c.id for c in self.concepts if token in c.surfaces[lang]]

    def content_tokens(self, lang: str) -> set[str]:
        return {t for c in self.concepts for t in c.surfaces[lang]}


@dataclass
class BilingualPair:
    src_tokens: list[str]
    tgt_tokens: list[str]
    gold_links: set[tuple[int, int]]
    src_lang: str = "l0"
    tgt_lang: str = "l1"
    src_concepts: list[int] | None = None
    tgt_concepts: list[int] | None = None


@dataclass(frozen=True)
class LexiconSpec:
    concepts: int = 50
    languages: int = 2
    synonym_rate: float = 0.0
    homograph_rate: float = 0.0
    function_words_per_lang: int = 1
    topics: int = 5
    roles: int = 5
    shared_rate: float = 0.0
    skewed_homographs: int = 0
    skew: float = 0.95


@dataclass(frozen=True)
class FunctionRule:
    """Where a language inserts its function words, and how often."""

    position: str = "end"  # start | end | random
    prob: float = 0.0


@dataclass(frozen=True)
class Grammar:
    length_range: tuple[int, int] = (3, 6)
    orders: tuple[str, ...] = ("identity", "reversal")
    function_rules: tuple[FunctionRule, ...] = ()


class Vocabulary:
    """Dense token <-> id bijection; ids follow lexicographic token order."""

    def __init__(self, tokens: Iterable[str]):
        self.itos: list[str] = sorted(set(tokens))
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def encode(self, tokens: Sequence[str]) -> list[int]:
        try:
            return [self.stoi[t] for t in tokens]
        except KeyError as exc:
            raise CorpusError(f"unknown token {exc.args[0]!r}") from None

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.itos[i] for i in ids]


def language_names(n: int) -> list[str]:
    return [f"l{i}" for i in range(n)]


def _pseudo_word(rng: np.random.Generator, syllables: int) -> str:
    return "".join(
        _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
        for _ in range(syllables)
    )


def _fresh_word(rng: np.random.Generator, taken: set[str], syllables: int) -> str:
    while True:
        word = _pseudo_word(rng, syllables)
        if word not in taken:
            taken.add(word)
            return word


def build_lexicon(spec: LexiconSpec, seed: int) -> GoldLexicon:
    if spec.concepts <= 0 or spec.languages <= 0 or spec.function_words_per_lang < 0:
        raise CorpusError("concepts and languages must be positive, function_words_per_lang >= 0")
    if spec.topics <= 0 or spec.roles <= 0:
        raise CorpusError("topics and roles must be positive")
    for name in ("synonym_rate", "homograph_rate", "shared_rate"):
        rate = getattr(spec, name)
        if not 0.0 <= rate <= 1.0:
            raise CorpusError(f"{name} must lie in [0, 1], got {rate}")
    if not 0.5 <= spec.skew < 1.0:
        raise CorpusError(f"skew must lie in [0.5, 1), got {spec.skew}")

    rng = np.random.default_rng(seed)
    langs = language_names(spec.languages)
    topics = min(spec.topics, spec.concepts)
    taken: set[str] = set()

    concepts = []
    for cid in range(spec.concepts):
        surfaces: dict[str, list[str]] = {}
        weights: dict[str, list[float]] = {}
        for lang in langs:
            words = [_fresh_word(rng, taken, 2 + int(rng.integers(2)))]
            if rng.random() < spec.synonym_rate:
                words.append(_fresh_word(rng, taken, 3))
            w = rng.uniform(1.0, 2.0, size=len(words))
            w = np.sort(w)[::-1] / w.sum()
            surfaces[lang] = words
            weights[lang] = [float(x) for x in w]
        concepts.append(
            Concept(cid, topic=cid % topics, role=(cid // topics) % spec.roles,
                    weight=1.0, surfaces=surfaces, surface_weights=weights)
        )

    n_homographs = int(round(spec.homograph_rate * spec.concepts))
    if spec.skewed_homographs > n_homographs:
        raise CorpusError(
            f"skewed_homographs={spec.skewed_homographs} exceeds the {n_homographs} homographs placed"
        )
    if 2 * n_homographs > spec.concepts:
        raise CorpusError(
            f"homograph_rate={spec.homograph_rate} needs {2 * n_homographs} distinct concepts "
            f"but only {spec.concepts} exist (each homograph consumes two concepts)"
        )
    if n_homographs and topics < 2:
        raise CorpusError("homographs need concepts from at least two topics")

    # Homograph partners share a role but come from different topics, so the
    # sentence context (topic) is what tells the two readings apart.
    order = [int(i) for i in rng.permutation(spec.concepts)]
    used: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for a in order:
        if len(pairs) == n_homographs:
            break
        if a in used:
            continue
        ca = concepts[a]
        partner = next(
            (b for b in order
             if b != a and b not in used
             and concepts[b].role == ca.role and concepts[b].topic != ca.topic),
            None,
        )
        if partner is None:
            continue
        used.update((a, partner))
        pairs.append((a, partner))
    if len(pairs) < n_homographs:
        raise CorpusError(
            f"could only place {len(pairs)} of {n_homographs} homographs: not enough "
            "same-role concepts in distinct topics (raise topics or lower homograph_rate)"
        )

    homographs: dict[tuple[str, str], list[int]] = {}
    skewed: set[tuple[str, str]] = set()
    for h, (a, b) in enumerate(pairs):
        lang = langs[h % len(langs)]
        token = concepts[a].surfaces[lang][0]
        concepts[b].surfaces[lang][0] = token
        homographs[(lang, token)] = [a, b]
        if h < spec.skewed_homographs:
            concepts[b].weight = (1.0 - spec.skew) / spec.skew
            skewed.add((lang, token))

    # Shared surfaces (names, numbers) act as cross-lingual anchors.
    n_shared = int(round(spec.shared_rate * spec.concepts))
    if n_shared and spec.languages > 1:
        free = [i for i in order if i not in used][:n_shared]
        for cid in free:
            c = concepts[cid]
            token = c.surfaces[langs[0]][0]
            for lang in langs[1:]:
                c.surfaces[lang] = [token]
                c.surface_weights[lang] = [1.0]

    function_words = {
        lang: [_fresh_word(rng, taken, 1) for _ in range(spec.function_words_per_lang)]
        for lang in langs
    }
    return GoldLexicon(langs, concepts, homographs, function_words, seed, skewed)


def permutation(order: str, n: int) -> list[int]:
    """Position map: content word k (canonical order) lands at index perm[k]."""
    if order == "identity":
        return list(range(n))
    if order == "reversal":
        return list(range(n - 1, -1, -1))
    if order == "rotation":
        return [(k + 1) % n for k in range(n)]
    raise CorpusError(f"unknown word order {order!r}")


def _realize(lexicon: GoldLexicon, lang: str, concept_seq: Sequence[int], order: str,
             rule: FunctionRule, rng: np.random.Generator) -> tuple[list[str], list[int], list[int]]:
    """Returns tokens, per-token concept ids, and the content position of each canonical slot."""
    n = len(concept_seq)
    perm = permutation(order, n)
    slots: list[int] = [0] * n
    for k, p in enumerate(perm):
        slots[p] = concept_seq[k]
    tokens = []
    for cid in slots:
        c = lexicon.concepts[cid]
        words, weights = c.surfaces[lang], c.surface_weights[lang]
        tokens.append(words[int(rng.choice(len(words), p=weights))] if len(words) > 1 else words[0])
    concepts = list(slots)

    fw = lexicon.function_words.get(lang, [])
    if fw and rule.prob > 0 and rng.random() < rule.prob:
        word = fw[int(rng.integers(len(fw)))]
        if rule.position == "start":
            at = 0
        elif rule.position == "end":
            at = len(tokens)
        elif rule.position == "random":
            at = int(rng.integers(len(tokens) + 1))
        else:
            raise CorpusError(f"unknown function-word position {rule.position!r}")
        tokens.insert(at, word)
        concepts.insert(at, FUNCTION)
    position = [0] * n
    content_index = [i for i, c in enumerate(concepts) if c != FUNCTION]
    for k, p in enumerate(perm):
        position[k] = content_index[p]
    return tokens, concepts, position


def sample_concepts(lexicon: GoldLexicon, n: int, rng: np.random.Generator) -> list[int]:
    """Draws n distinct concepts from one topic, returned in canonical role order."""
    topics = sorted({c.topic for c in lexicon.concepts})
    topic = topics[int(rng.integers(len(topics)))]
    pool = [c for c in lexicon.concepts if c.topic == topic]
    n = min(n, len(pool))
    w = np.array([c.weight for c in pool], dtype=float)
    picked = rng.choice(len(pool), size=n, replace=False, p=w / w.sum())
    chosen = [pool[int(i)] for i in picked]
    chosen.sort(key=lambda c: (c.role, c.id))
    return [c.id for c in chosen]


def realize_pair(lexicon: GoldLexicon, concept_seq: Sequence[int], grammar: Grammar,
                 rng: np.random.Generator, src: int = 0, tgt: int = 1) -> BilingualPair:
    langs = lexicon.languages
    rules = grammar.function_rules or (FunctionRule(),) * len(langs)
    src_tok, src_con, src_pos = _realize(lexicon, langs[src], concept_seq,
                                         grammar.orders[src], rules[src], rng)
    tgt_tok, tgt_con, tgt_pos = _realize(lexicon, langs[tgt], concept_seq,
                                         grammar.orders[tgt], rules[tgt], rng)
    links = {(src_pos[k], tgt_pos[k]) for k in range(len(concept_seq))}
    return BilingualPair(src_tok, tgt_tok, links, langs[src], langs[tgt], src_con, tgt_con)


def sample_pair(lexicon: GoldLexicon, grammar: Grammar, seed: int | np.random.Generator,
                src: int = 0, tgt: int = 1) -> BilingualPair:
    lo, hi = grammar.length_range
    if not 1 <= lo <= hi <= 64:
        raise CorpusError(f"length range {grammar.length_range} must lie within [1, 64]")
    if len(grammar.orders) < len(lexicon.languages):
        raise CorpusError("grammar needs one word order per language")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = int(rng.integers(lo, hi + 1))
    return realize_pair(lexicon, sample_concepts(lexicon, n, rng), grammar, rng, src, tgt)


def generate_corpus(lexicon: GoldLexicon, grammar: Grammar, size: int, seed: int) -> list[BilingualPair]:
    """Pairs cycle over (l0, lk) for every other language k."""
    rng = np.random.default_rng(seed)
    n_lang = len(lexicon.languages)
    targets = list(range(1, n_lang)) or [0]
    return [
        sample_pair(lexicon, grammar, rng, 0, targets[i % len(targets)])
        for i in range(size)
    ]


def generate_monolingual(lexicon: GoldLexicon, grammar: Grammar, size: int, seed: int,
                         code_switch_rate: float = 0.0) -> list[tuple[str, list[str]]]:
    """(language, tokens) sentences for MLM pretraining.

    With ``code_switch_rate`` > 0 each content word is independently borrowed
    from a random other language, the way real text mixes in foreign words.
    """
    if not 0.0 <= code_switch_rate <= 1.0:
        raise CorpusError(f"code_switch_rate must lie in [0, 1], got {code_switch_rate}")
    rng = np.random.default_rng(seed)
    langs = lexicon.languages
    rules = grammar.function_rules or (FunctionRule(),) * len(langs)
    lo, hi = grammar.length_range
    out = []
    for k in range(size):
        li = k % len(langs)
        seq = sample_concepts(lexicon, int(rng.integers(lo, hi + 1)), rng)
        tokens, concepts, _ = _realize(lexicon, langs[li], seq, grammar.orders[li], rules[li], rng)
        if code_switch_rate > 0 and len(langs) > 1:
            for i, cid in enumerate(concepts):
                if cid != FUNCTION and rng.random() < code_switch_rate:
                    other = langs[(li + 1 + int(rng.integers(len(langs) - 1))) % len(langs)]
                    tokens[i] = lexicon.concepts[cid].surfaces[other][0]
        out.append((langs[li], tokens))
    return out


def write_monolingual(path: str | Path, sentences: Iterable[tuple[str, list[str]]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for lang, tokens in sentences:
            f.write(f"{lang}\t{' '.join(tokens)}\n")


def read_monolingual(path: str | Path) -> list[tuple[str, list[str]]]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), start=1):
        if not line.strip():
            continue
        lang, _, text = line.partition("\t")
        if not text.split():
            raise CorpusError(f"{path} line {lineno}: expected 'lang<TAB>tokens'")
        out.append((lang, text.split()))
    return out


def links_from_concepts(pair: BilingualPair) -> set[tuple[int, int]]:
    """Recomputes gold links from the stored concept sequences."""
    assert pair.src_concepts is not None and pair.tgt_concepts is not None
    return {
        (i, j)
        for i, a in enumerate(pair.src_concepts) if a != FUNCTION
        for j, b in enumerate(pair.tgt_concepts) if b == a
    }


# --- file formats -----------------------------------------------------------

def format_links(links: Iterable[tuple[int, int]]) -> str:
    return " ".join(f"{i}-{j}" for i, j in sorted(links))


def parse_links(field_text: str, n: int | None = None, m: int | None = None,
                where: str = "") -> set[tuple[int, int]]:
    links = set()
    for item in field_text.split():
        parts = item.split("-")
        if len(parts) != 2 or not parts[0].isdigit() or not parts[1].isdigit():
            raise CorpusError(f"{where}links field: malformed link {item!r}")
        i, j = int(parts[0]), int(parts[1])
        if (n is not None and i >= n) or (m is not None and j >= m):
            raise CorpusError(f"{where}links field: link index out of range in {item!r}")
        links.add((i, j))
    return links


def format_record(pair: BilingualPair) -> str:
    return f"{' '.join(pair.src_tokens)} ||| {' '.join(pair.tgt_tokens)} ||| {format_links(pair.gold_links)}"


def parse_record(line: str, lineno: int = 1) -> BilingualPair:
    fields = line.rstrip("\n").split("|||")
    if len(fields) != 3:
        raise CorpusError(f"line {lineno}: expected 3 fields separated by '|||', found {len(fields)}")
    src, tgt = fields[0].split(), fields[1].split()
    if not src:
        raise CorpusError(f"line {lineno}: source field is empty")
    if not tgt:
        raise CorpusError(f"line {lineno}: target field is empty")
    links = parse_links(fields[2], len(src), len(tgt), where=f"line {lineno}: ")
    return BilingualPair(src, tgt, links)


def write_corpus(path: str | Path, records: Iterable[BilingualPair]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for pair in records:
            f.write(format_record(pair) + "\n")


def read_corpus(path: str | Path) -> list[BilingualPair]:
    data = Path(path).read_bytes()
    records = []
    for lineno, raw in enumerate(data.split(b"\n"), start=1):
        if not raw.strip():
            continue
        try:
            line = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusError(f"line {lineno}: invalid UTF-8 ({exc.reason})") from None
        records.append(parse_record(line, lineno))
    return records


def write_concepts(path: str | Path, records: Iterable[BilingualPair]) -> None:
    """Sidecar file with per-token gold concept ids (-1 for function words)."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for p in records:
            f.write(f"{p.src_lang} {p.tgt_lang} ||| {' '.join(map(str, p.src_concepts or []))}"
                    f" ||| {' '.join(map(str, p.tgt_concepts or []))}\n")


def read_concepts(path: str | Path, records: list[BilingualPair]) -> list[BilingualPair]:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").split("\n") if ln.strip()]
    if len(lines) != len(records):
        raise CorpusError(f"{path}: {len(lines)} concept lines for {len(records)} records")
    for lineno, (line, pair) in enumerate(zip(lines, records), start=1):
        fields = line.split("|||")
        if len(fields) != 3:
            raise CorpusError(f"{path} line {lineno}: expected 3 fields")
        langs = fields[0].split()
        pair.src_lang, pair.tgt_lang = langs[0], langs[1]
        pair.src_concepts = [int(x) for x in fields[1].split()]
        pair.tgt_concepts = [int(x) for x in fields[2].split()]
        if len(pair.src_concepts) != len(pair.src_tokens) or len(pair.tgt_concepts) != len(pair.tgt_tokens):
            raise CorpusError(f"{path} line {lineno}: concept count does not match token count")
    return records


def write_lexicon(path: str | Path, lexicon: GoldLexicon) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"#seed\t{lexicon.seed}\n")
        for c in lexicon.concepts:
            f.write(f"#concept\t{c.id}\t{c.topic}\t{c.role}\t{c.weight!r}\n")
            for lang in lexicon.languages:
                for token, w in zip(c.surfaces[lang], c.surface_weights[lang]):
                    f.write(f"{c.id}\t{lang}\t{token}\t{w!r}\n")
        for lang in lexicon.languages:
            for token in lexicon.function_words[lang]:
                f.write(f"#function\t{lang}\t{token}\n")
        for (lang, token) in sorted(lexicon.homographs):
            flag = "skewed" if (lang, token) in lexicon.skewed else "balanced"
            ids = " ".join(map(str, lexicon.homographs[(lang, token)]))
            f.write(f"#homograph\t{lang}\t{token}\t{ids}\t{flag}\n")


def read_lexicon(path: str | Path) -> GoldLexicon:
    seed = 0
    meta: dict[int, tuple[int, int, float]] = {}
    surf: dict[int, dict[str, list[tuple[str, float]]]] = {}
    function_words: dict[str, list[str]] = {}
    homographs: dict[tuple[str, str], list[int]] = {}
    skewed: set[tuple[str, str]] = set()
    langs: list[str] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line:
            continue
        parts = line.split("\t")
        try:
            if parts[0] == "#seed":
                seed = int(parts[1])
            elif parts[0] == "#concept":
                meta[int(parts[1])] = (int(parts[2]), int(parts[3]), float(parts[4]))
            elif parts[0] == "#function":
                function_words.setdefault(parts[1], []).append(parts[2])
                if parts[1] not in langs:
                    langs.append(parts[1])
            elif parts[0] == "#homograph":
                key = (parts[1], parts[2])
                homographs[key] = [int(x) for x in parts[3].split()]
                if parts[4] == "skewed":
                    skewed.add(key)
            else:
                cid, lang, token, w = int(parts[0]), parts[1], parts[2], float(parts[3])
                surf.setdefault(cid, {}).setdefault(lang, []).append((token, w))
                if lang not in langs:
                    langs.append(lang)
        except (IndexError, ValueError):
            raise CorpusError(f"{path} line {lineno}: malformed lexicon entry") from None
    concepts = []
    for cid in sorted(surf):
        topic, role, weight = meta.get(cid, (0, 0, 1.0))
        concepts.append(Concept(
            cid, topic, role, weight,
            {lang: [t for t, _ in v] for lang, v in surf[cid].items()},
            {lang: [w for _, w in v] for lang, v in surf[cid].items()},
        ))
    return GoldLexicon(sorted(langs), concepts, homographs, function_words, seed, skewed)


def build_vocab(corpus: Iterable[BilingualPair] | Iterable[str]) -> Vocabulary:
    tokens: set[str] = set()
    empty = True
    for rec in corpus:
        empty = False
        if isinstance(rec, str):
            tokens.update(rec.split())
        else:
            tokens.update(rec.src_tokens)
            tokens.update(rec.tgt_tokens)
    if empty or not tokens:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    return Vocabulary(tokens)


def write_vocab(path: str | Path, vocab: Vocabulary) -> None:
    Path(path).write_text("".join(t + "\n" for t in vocab.itos), encoding="utf-8")


def read_vocab(path: str | Path) -> Vocabulary:
    tokens = [t for t in Path(path).read_text(encoding="utf-8").split("\n") if t]
    vocab = Vocabulary(tokens)
    if vocab.itos != tokens:
        raise CorpusError(f"{path}: vocabulary file is not sorted or has duplicates")
    return vocab
