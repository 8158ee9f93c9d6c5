import numpy as np
import pytest

from mulang.config import RunConfig
from mulang.corpus import FunctionRule, Grammar, LexiconSpec, build_lexicon, generate_corpus
from mulang.pipeline import run_all


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def small_lexicon():
    return build_lexicon(LexiconSpec(concepts=20, languages=2, homograph_rate=0.1,
                                     function_words_per_lang=1, topics=4, roles=5), seed=3)


@pytest.fixture(scope="session")
def small_grammar():
    return Grammar((3, 6), ("identity", "reversal"), (FunctionRule("start", 0.3), FunctionRule("end", 0.3)))


@pytest.fixture(scope="session")
def small_corpus(small_lexicon, small_grammar):
    return generate_corpus(small_lexicon, small_grammar, 60, seed=5)


@pytest.fixture(scope="session")
def standard_run(tmp_path_factory):
    """The default configuration run end to end once (ablation included)."""
    out = tmp_path_factory.mktemp("standard")
    cfg = RunConfig()
    results = {r.stage: r for r in run_all(cfg, out)}
    return out, cfg, results


@pytest.fixture(scope="session")
def small_system(small_lexicon, small_grammar):
    """Vocabulary, id pairs and an MLM-pretrained encoder for the small lexicon."""
    from mulang.corpus import build_vocab, generate_monolingual
    from mulang.encoder import init_params, pretrain_mlm

    train = generate_corpus(small_lexicon, small_grammar, 300, seed=11)
    held = generate_corpus(small_lexicon, small_grammar, 60, seed=12)
    mono = generate_monolingual(small_lexicon, small_grammar, 1500, 13, code_switch_rate=0.3)
    vocab = build_vocab([" ".join(s) for _, s in mono] + [" ".join(p.src_tokens + p.tgt_tokens) for p in train + held])
    v = len(vocab)
    enc = init_params(v + 1, 16, 2, 2, 0)
    enc = pretrain_mlm(enc, [vocab.encode(s) for _, s in mono], mask_id=v, n_real=v, steps=1500,
                       batch_size=32, lr=0.3, seed=1)
    ids = lambda pairs: [(vocab.encode(p.src_tokens), vocab.encode(p.tgt_tokens)) for p in pairs]
    return {"vocab": vocab, "encoder": enc, "train": train, "held": held,
            "train_ids": ids(train), "held_ids": ids(held)}


# criterion number -> (passed, detail); filled in by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    old = ACCEPTANCE.get(criterion)
    if old is not None:
        passed, detail = old[0] and passed, f"{old[1]}; {detail}"
    ACCEPTANCE[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
