from collections import Counter

import numpy as np
import pytest

from mulang.analysis import (
    TranslatedSentence,
    codebook_purity,
    disambiguation_table,
    projection_2d,
    render_lexicon,
    render_vocab_stats,
    same_symbol_alignment_eval,
    same_symbol_links,
    symbol_lexicon,
    vocab_stats,
    vocab_stats_csv,
)
from mulang.corpus import FUNCTION


def S(lang, toks, syms, cons=None):
    return TranslatedSentence(lang, toks.split(), list(syms), cons)


def test_lexicon_counts():
    corpus = [S("en", "cat cat", [5, 5]), S("en", "cat chat", [5, 5])]
    lex = symbol_lexicon(corpus, top_k=2)
    assert lex.entries[5]["en"] == [("cat", 0.75), ("chat", 0.25)]


def test_lexicon_top_k_larger_than_words():
    lex = symbol_lexicon([S("en", "a b", [1, 1])], top_k=10)
    assert [t for t, _ in lex.entries[1]["en"]] == ["a", "b"]


def test_lexicon_recount(small_corpus, rng):
    corpus = [S(p.src_lang, " ".join(p.src_tokens), rng.integers(0, 6, len(p.src_tokens))) for p in small_corpus]
    lex = symbol_lexicon(corpus, top_k=100)
    brute = Counter()
    for s in corpus:
        for t, k in zip(s.tokens, s.symbols):
            brute[(int(k), s.lang, t)] += 1
    for sym, per_lang in lex.entries.items():
        for lang, ranked in per_lang.items():
            total = sum(n for (k, l, _), n in brute.items() if k == sym and l == lang)
            for tok, freq in ranked:
                assert freq == pytest.approx(brute[(sym, lang, tok)] / total)
    assert "symbol" in render_lexicon(lex, ["l0", "l1"])


def test_mismatched_lengths():
    with pytest.raises(ValueError):
        TranslatedSentence("en", ["a"], [1, 2])


def test_purity_perfect():
    corpus = [S("l0", "a b", [3, 4], [0, 1]), S("l1", "x y", [4, 3], [1, 0])]
    p = codebook_purity(corpus)
    assert (p.purity, p.distinct_symbols_per_concept, p.distinct_concepts_per_symbol) == (1.0, 1.0, 1.0)


def test_purity_ignores_function_words():
    corpus = [S("l0", "a the", [3, 9], [0, FUNCTION]), S("l0", "a", [3], [0])]
    assert codebook_purity(corpus).purity == 1.0


def test_purity_random_matches_simulation(rng):
    # 10 concepts x 40 tokens, symbols uniform over K=4
    cons = np.repeat(np.arange(10), 40)
    syms = rng.integers(0, 4, len(cons))
    corpus = [TranslatedSentence("l0", ["w"] * len(cons), syms.tolist(), cons.tolist())]
    got = codebook_purity(corpus).purity
    sim = np.mean([np.bincount(rng.integers(0, 4, 40), minlength=4).max() / 40 for _ in range(20000)])
    assert got == pytest.approx(sim, abs=0.05)


def test_purity_needs_labels():
    with pytest.raises(ValueError):
        codebook_purity([S("l0", "a", [1])])


def test_disambiguation_conserves_counts(small_lexicon, small_corpus, rng):
    (lang, tok), concepts = next(iter(small_lexicon.homographs.items()))
    corpus = []
    for p in small_corpus:
        for toks, l, con in ((p.src_tokens, p.src_lang, p.src_concepts), (p.tgt_tokens, p.tgt_lang, p.tgt_concepts)):
            corpus.append(TranslatedSentence(l, toks, rng.integers(0, 5, len(toks)).tolist(), con))
    t = disambiguation_table(corpus, lang, tok, small_lexicon)
    occ = sum(s.tokens.count(tok) for s in corpus if s.lang == lang)
    assert t.counts.sum() == occ
    assert t.concepts == sorted(concepts)
    assert len(t.column_majority()) == 2
    assert tok in t.render()


def test_disambiguation_rejects_plain_word(small_lexicon):
    with pytest.raises(ValueError, match="homograph"):
        disambiguation_table([], "l0", "zzz", small_lexicon)


def test_vocab_bijection():
    st = vocab_stats([S("l0", "a b", [1, 2]), S("l1", "x", [3])])
    assert st["l0"].universal_per_natural == 1.0 and st["l0"].natural_per_universal == 1.0
    assert st["all"].universal_words == 3 and st["all"].natural_words == 3
    assert "all" in render_vocab_stats(st) and vocab_stats_csv(st).startswith("language,")


def test_vocab_union_bound(small_corpus, rng):
    corpus = [S(p.tgt_lang if k % 2 else p.src_lang, " ".join(p.tgt_tokens if k % 2 else p.src_tokens),
                rng.integers(0, 30, len(p.tgt_tokens if k % 2 else p.src_tokens))) for k, p in enumerate(small_corpus)]
    st = vocab_stats(corpus)
    assert st["all"].universal_words <= sum(v.universal_words for k, v in st.items() if k != "all")
    # brute-force pair scan
    pairs = {(s.lang, t, int(k)) for s in corpus for t, k in zip(s.tokens, s.symbols)}
    nat = Counter((l, t) for l, t, _ in pairs)
    uni = Counter(k for _, _, k in pairs)
    assert st["all"].universal_per_natural == pytest.approx(np.mean(list(nat.values())))
    assert st["all"].natural_per_universal == pytest.approx(np.mean(list(uni.values())))


def test_same_symbol_links_pair_repeats_in_order():
    assert same_symbol_links([1, 2, 1], [1, 1, 3]) == {(0, 0), (2, 1)}


def test_pure_codebook_zero_aer(small_corpus):
    pairs = [(p.src_concepts, p.tgt_concepts) for p in small_corpus]
    # concept ids as symbols; function words get language-specific symbols
    sym = lambda cons, off: [c if c != FUNCTION else 1000 + off for c in cons]
    score = same_symbol_alignment_eval([(sym(s, 0), sym(t, 1)) for s, t in pairs],
                                       [p.gold_links for p in small_corpus])
    assert score.aer == 0.0


def test_random_codebook_near_chance(small_corpus, rng):
    k = 8
    pairs = [(rng.integers(0, k, len(p.src_tokens)).tolist(), rng.integers(0, k, len(p.tgt_tokens)).tolist())
             for p in small_corpus]
    gold = [p.gold_links for p in small_corpus]
    got = same_symbol_alignment_eval(pairs, gold).precision
    # permutation baseline: shuffle which gold set each prediction is scored against
    base = []
    for _ in range(200):
        perm = rng.permutation(len(gold))
        base.append(same_symbol_alignment_eval([pairs[i] for i in perm], gold).precision)
    assert abs(got - np.mean(base)) < 3 * np.std(base) + 0.05


def test_projection_shape(rng):
    xy = projection_2d(rng.normal(size=(20, 5)))
    assert xy.shape == (20, 2)
    assert abs(xy[:, 0].mean()) < 1e-12
    assert xy[:, 0].var() >= xy[:, 1].var()
