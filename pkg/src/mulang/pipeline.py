"""Stage orchestration.

Everything under ``<out>/artifacts`` is a deterministic function of the config
and master seed; human-facing summaries go to a fresh
``<out>/reports/<timestamp>-<stage>`` directory on every run.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import analysis as an
from .align import (
    alignment_metrics,
    corpus_links,
    extract_alignment,
    links_of,
    metrics_csv,
    write_pharaoh,
)
from .config import RunConfig
from .contrastive import ContrastiveConfig, train_contrastive
from .corpus import (
    BilingualPair,
    FunctionRule,
    Grammar,
    GoldLexicon,
    LexiconSpec,
    Vocabulary,
    build_lexicon,
    build_vocab,
    generate_corpus,
    generate_monolingual,
    read_concepts,
    read_corpus,
    read_lexicon,
    read_monolingual,
    read_vocab,
    write_concepts,
    write_corpus,
    write_lexicon,
    write_monolingual,
    write_vocab,
)
from .encoder import EncoderParams, encode, init_params, pretrain_mlm
from .persist import load_model, save_model
from .vqca import (
    Codebook,
    DecoderParams,
    MULSentence,
    VQCAConfig,
    alignment_cache,
    init_codebook,
    init_decoder,
    mul_to_nl,
    nl_to_mul,
    read_mul,
    vqca_train,
    write_mul,
)

log = logging.getLogger(__name__)

STAGES = ("gen-corpus", "pretrain", "align-eval", "train-contrastive", "train-vqca",
          "translate", "report", "ablate")


class MissingInputError(FileNotFoundError):
    """A stage input is absent; the message names the path and the stage that makes it."""


@dataclass
class StageResult:
    stage: str
    summary: dict[str, object] = field(default_factory=dict)
    report_dir: Path | None = None


# --- shared helpers ------------------------------------------------------------

def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingInputError(f"missing input {path} (run stage '{producer}' first)")
    return path


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def lexicon_spec(cfg: RunConfig) -> LexiconSpec:
    return LexiconSpec(concepts=cfg.concepts, languages=cfg.languages, synonym_rate=cfg.synonym_rate,
                       homograph_rate=cfg.homograph_rate, function_words_per_lang=cfg.function_words,
                       topics=cfg.topics, roles=cfg.roles, shared_rate=cfg.shared_rate,
                       skewed_homographs=cfg.skewed_homographs, skew=cfg.skew)


def grammar(cfg: RunConfig) -> Grammar:
    rules = tuple(FunctionRule(pos, cfg.function_prob) for pos in cfg.function_positions.split(","))
    return Grammar((cfg.min_len, cfg.max_len), tuple(cfg.orders.split(",")), rules)


@dataclass
class CorpusBundle:
    lexicon: GoldLexicon
    vocab: Vocabulary
    train: list[BilingualPair]
    test: list[BilingualPair]
    mono: list[tuple[str, list[str]]]

    def ids(self, tokens: Sequence[str]) -> list[int]:
        return self.vocab.encode(tokens)

    def id_pairs(self, pairs: Sequence[BilingualPair]) -> list[tuple[list[int], list[int]]]:
        return [(self.ids(p.src_tokens), self.ids(p.tgt_tokens)) for p in pairs]

    @property
    def mask_id(self) -> int:
        return len(self.vocab)


def load_corpus(art: Path) -> CorpusBundle:
    d = art / "corpus"
    files = {n: _require(d / n, "gen-corpus") for n in
             ("lexicon.tsv", "vocab.txt", "train.txt", "train.concepts", "test.txt", "test.concepts", "mono.txt")}
    train = read_concepts(files["train.concepts"], read_corpus(files["train.txt"]))
    test = read_concepts(files["test.concepts"], read_corpus(files["test.txt"]))
    return CorpusBundle(read_lexicon(files["lexicon.tsv"]), read_vocab(files["vocab.txt"]),
                        train, test, read_monolingual(files["mono.txt"]))


def _load_encoder(path: Path, producer: str) -> EncoderParams:
    return load_model(_require(path, producer))["encoder"]


def _csv_rows(header: Sequence[str], rows) -> str:
    return an.to_csv(header, rows)


def alignment_eval(encoder: EncoderParams, bundle: CorpusBundle, pairs: Sequence[BilingualPair], c: float):
    pred = [links_of(extract_alignment(encode(encoder, s), encode(encoder, t), c))
            for s, t in bundle.id_pairs(pairs)]
    return alignment_metrics(corpus_links(pred), corpus_links([p.gold_links for p in pairs])), pred


def contrastive_config(cfg: RunConfig, pairs: int | None = None) -> ContrastiveConfig:
    return ContrastiveConfig(pairs=cfg.pairs if pairs is None else pairs, steps=cfg.contrastive_steps,
                             lr=cfg.contrastive_lr, threshold=cfg.threshold,
                             freeze_supervision=cfg.freeze_supervision, warmup=cfg.contrastive_warmup)


def vqca_config(cfg: RunConfig, cross_lingual: bool | None = None) -> VQCAConfig:
    return VQCAConfig(beta=cfg.beta, push=cfg.push, gamma=cfg.decay, lr=cfg.vq_lr, steps=cfg.vq_steps,
                      batch_pairs=cfg.vq_batch, ca_warmup=cfg.ca_warmup, lr_warmup=cfg.vq_warmup,
                      cross_lingual=cfg.cross_lingual if cross_lingual is None else cross_lingual)


@dataclass
class VQSystem:
    encoder: EncoderParams
    decoder: DecoderParams
    codebook: Codebook
    log: list
    cache: list


def build_vqca(cfg: RunConfig, encoder: EncoderParams, bundle: CorpusBundle,
               cross_lingual: bool | None = None) -> VQSystem:
    """Caches alignment supervision from ``encoder``, seeds the codebook from its outputs and trains."""
    seed = cfg.stage_seed("train-vqca")
    train = bundle.train
    cache = alignment_cache(encoder, [(s, t, p.src_lang, p.tgt_lang)
                                      for (s, t), p in zip(bundle.id_pairs(train), train)], cfg.threshold)
    head = bundle.id_pairs(train[:cfg.init_sentences])
    samples = np.vstack([encode(encoder, s) for s, _ in head] + [encode(encoder, t) for _, t in head])
    codebook = init_codebook(cfg.codebook_size, encoder.dim, seed, samples)
    decoder = init_decoder(encoder, bundle.lexicon.languages, seed, cfg.language_tags)
    rows: list = []
    enc, dec, cb = vqca_train(encoder, decoder, codebook, cache, vqca_config(cfg, cross_lingual),
                              seed + 1, rows)
    return VQSystem(enc, dec, cb, rows, cache)


def translate_pairs(system_encoder: EncoderParams, codebook: Codebook, bundle: CorpusBundle,
                    pairs: Sequence[BilingualPair]) -> list[an.TranslatedSentence]:
    """Two MUL sentences per pair, source first."""
    out = []
    for p in pairs:
        for toks, lang, con in ((p.src_tokens, p.src_lang, p.src_concepts), (p.tgt_tokens, p.tgt_lang, p.tgt_concepts)):
            mul = nl_to_mul(system_encoder, codebook, bundle.ids(toks), lang)
            out.append(an.TranslatedSentence(lang, list(toks), [int(k) for k in mul.indices],
                                             None if con is None else list(con)))
    return out


def same_symbol_score(translated: Sequence[an.TranslatedSentence], pairs: Sequence[BilingualPair]):
    sym_pairs = [(translated[2 * k].symbols, translated[2 * k + 1].symbols) for k in range(len(pairs))]
    return an.same_symbol_alignment_eval(sym_pairs, [p.gold_links for p in pairs])


def roundtrip_accuracy(decoder: DecoderParams, codebook: Codebook, bundle: CorpusBundle,
                       translated: Sequence[an.TranslatedSentence]) -> float:
    hit = total = 0
    for sent in translated:
        out, _ = mul_to_nl(decoder, codebook, MULSentence(np.array(sent.symbols), sent.lang))
        hit += int((out == np.array(bundle.ids(sent.tokens))).sum())
        total += len(sent.tokens)
    return hit / total if total else 1.0


# --- stages --------------------------------------------------------------------

def stage_gen_corpus(cfg: RunConfig, art: Path) -> dict:
    lexicon = build_lexicon(lexicon_spec(cfg), cfg.seed)
    g = grammar(cfg)
    train = generate_corpus(lexicon, g, cfg.train_pairs, cfg.stage_seed("gen-corpus/train"))
    test = generate_corpus(lexicon, g, cfg.test_pairs, cfg.stage_seed("gen-corpus/test"))
    mono = generate_monolingual(lexicon, g, cfg.mono_sentences, cfg.stage_seed("gen-corpus/mono"),
                                cfg.code_switch)
    vocab = build_vocab([" ".join(s) for _, s in mono] + [" ".join(p.src_tokens + p.tgt_tokens)
                                                          for p in train + test])
    d = art / "corpus"
    d.mkdir(parents=True, exist_ok=True)
    write_lexicon(d / "lexicon.tsv", lexicon)
    write_vocab(d / "vocab.txt", vocab)
    for name, pairs in (("train", train), ("test", test)):
        write_corpus(d / f"{name}.txt", pairs)
        write_concepts(d / f"{name}.concepts", pairs)
    write_monolingual(d / "mono.txt", mono)
    return {"train_pairs": len(train), "test_pairs": len(test), "mono_sentences": len(mono),
            "vocab_size": len(vocab), "homographs": len(lexicon.homographs)}


def stage_pretrain(cfg: RunConfig, art: Path) -> dict:
    bundle = load_corpus(art)
    params = init_params(len(bundle.vocab) + 1, cfg.dim, cfg.layers, cfg.window, cfg.stage_seed("pretrain/init"))
    rows: list = []
    params = pretrain_mlm(params, [bundle.ids(s) for _, s in bundle.mono], mask_id=bundle.mask_id,
                          n_real=len(bundle.vocab), steps=cfg.mlm_steps, batch_size=cfg.mlm_batch,
                          lr=cfg.mlm_lr, seed=cfg.stage_seed("pretrain"), rate=cfg.mask_rate,
                          warmup=cfg.mlm_warmup, log=rows)
    d = art / "pretrain"
    d.mkdir(parents=True, exist_ok=True)
    save_model(d / "encoder.json", encoder=params)
    _write(d / "mlm_log.csv", _csv_rows(["step", "loss"], rows))
    tail = [l for _, l in rows[-50:]]
    return {"final_loss": float(np.mean(tail)) if tail else float("nan")}


def stage_align_eval(cfg: RunConfig, art: Path) -> dict:
    bundle = load_corpus(art)
    encoders = [("pretrain", art / "pretrain" / "encoder.json")]
    if (art / "contrastive" / "encoder.json").exists():
        encoders.append(("contrastive", art / "contrastive" / "encoder.json"))
    _require(encoders[0][1], "pretrain")
    d = art / "align-eval"
    d.mkdir(parents=True, exist_ok=True)
    rows, summary = [], {}
    for name, path in encoders:
        score, pred = alignment_eval(load_model(path)["encoder"], bundle, bundle.test, cfg.threshold)
        write_pharaoh(d / f"{name}.pharaoh", pred)
        _write(d / f"{name}_metrics.csv", metrics_csv(score))
        rows.append((name, score.precision, score.recall, score.aer, score.f1))
        summary[f"{name}_aer"] = score.aer
    write_pharaoh(d / "gold.pharaoh", [p.gold_links for p in bundle.test])
    _write(d / "summary.csv", _csv_rows(["encoder", "precision", "recall", "aer", "f1"], rows))
    return summary


def stage_train_contrastive(cfg: RunConfig, art: Path) -> dict:
    bundle = load_corpus(art)
    encoder = _load_encoder(art / "pretrain" / "encoder.json", "pretrain")
    rows: list = []
    params = train_contrastive(encoder, bundle.id_pairs(bundle.train), contrastive_config(cfg),
                               cfg.stage_seed("train-contrastive"), rows)
    d = art / "contrastive"
    d.mkdir(parents=True, exist_ok=True)
    save_model(d / "encoder.json", encoder=params)
    _write(d / "log.csv", _csv_rows(["step", "loss", "positives", "negatives", "skipped"], rows))
    score, _ = alignment_eval(params, bundle, bundle.test, cfg.threshold)
    _write(d / "metrics.csv", metrics_csv(score))
    return {"aer": score.aer, "skipped": rows[-1][4] if rows else 0}


def stage_train_vqca(cfg: RunConfig, art: Path) -> dict:
    bundle = load_corpus(art)
    encoder = _load_encoder(art / "contrastive" / "encoder.json", "train-contrastive")
    system = build_vqca(cfg, encoder, bundle)
    d = art / "vqca"
    d.mkdir(parents=True, exist_ok=True)
    save_model(d / "model.json", encoder=system.encoder, decoder=system.decoder, codebook=system.codebook)
    write_pharaoh(d / "supervision.pharaoh", [links_of_array(item.links) for item in system.cache])
    _write(d / "log.csv", _csv_rows(["step", "nll", "commitment", "violations", "active_symbols"], system.log))
    tail = system.log[-50:]
    return {"final_nll": float(np.mean([r[1] for r in tail])) if tail else float("nan"),
            "batch_active_symbols": int(tail[-1][4]) if tail else 0}


def links_of_array(links: np.ndarray) -> set[tuple[int, int]]:
    return {(int(i), int(j)) for i, j in links}


def _load_system(art: Path) -> dict:
    return load_model(_require(art / "vqca" / "model.json", "train-vqca"))


def stage_translate(cfg: RunConfig, art: Path) -> dict:
    bundle = load_corpus(art)
    model = _load_system(art)
    d = art / "translate"
    d.mkdir(parents=True, exist_ok=True)
    counts = {}
    for name, pairs in (("train", bundle.train), ("test", bundle.test)):
        sents = translate_pairs(model["encoder"], model["codebook"], bundle, pairs)
        write_mul(d / f"{name}.mul", [(s.lang, s.tokens, s.symbols) for s in sents])
        counts[f"{name}_sentences"] = len(sents)
    return counts


def _read_translated(path: Path, pairs: Sequence[BilingualPair]) -> list[an.TranslatedSentence]:
    rows = read_mul(_require(path, "translate"))
    if len(rows) != 2 * len(pairs):
        raise MissingInputError(f"{path}: {len(rows)} MUL lines for {len(pairs)} pairs; rerun 'translate'")
    out = []
    for k, (lang, tokens, symbols) in enumerate(rows):
        p = pairs[k // 2]
        con = p.src_concepts if k % 2 == 0 else p.tgt_concepts
        out.append(an.TranslatedSentence(lang, tokens, symbols, con))
    return out


@dataclass
class SystemReport:
    score: object
    purity: an.PurityStats
    roundtrip: float
    vocab: dict
    tables: list
    lexicon: an.SymbolLexicon


def evaluate_system(cfg: RunConfig, bundle: CorpusBundle, encoder: EncoderParams, decoder: DecoderParams,
                    codebook: Codebook, train_mul=None, test_mul=None) -> SystemReport:
    train_mul = train_mul or translate_pairs(encoder, codebook, bundle, bundle.train)
    test_mul = test_mul or translate_pairs(encoder, codebook, bundle, bundle.test)
    tables = [an.disambiguation_table(train_mul, lang, tok, bundle.lexicon)
              for (lang, tok) in sorted(bundle.lexicon.homographs)]
    return SystemReport(same_symbol_score(test_mul, bundle.test), an.codebook_purity(train_mul),
                        roundtrip_accuracy(decoder, codebook, bundle, train_mul), an.vocab_stats(train_mul),
                        tables, an.symbol_lexicon(train_mul, cfg.top_k))


def stage_report(cfg: RunConfig, art: Path) -> dict:
    bundle = load_corpus(art)
    model = _load_system(art)
    train_mul = _read_translated(art / "translate" / "train.mul", bundle.train)
    test_mul = _read_translated(art / "translate" / "test.mul", bundle.test)
    rep = evaluate_system(cfg, bundle, model["encoder"], model["decoder"], model["codebook"], train_mul, test_mul)
    d = art / "report"
    d.mkdir(parents=True, exist_ok=True)
    _write(d / "same_symbol.csv", metrics_csv(rep.score))
    _write(d / "purity.csv", _csv_rows(["metric", "value"], [
        ("purity", rep.purity.purity), ("distinct_symbols_per_concept", rep.purity.distinct_symbols_per_concept),
        ("distinct_concepts_per_symbol", rep.purity.distinct_concepts_per_symbol)]))
    _write(d / "roundtrip.csv", _csv_rows(["metric", "value"], [("token_accuracy", rep.roundtrip)]))
    _write(d / "vocab_stats.csv", an.vocab_stats_csv(rep.vocab))
    _write(d / "vocab_stats.txt", an.render_vocab_stats(rep.vocab))
    _write(d / "lexicon.csv", _csv_rows(["symbol", "language", "rank", "token", "frequency"],
                                         an.lexicon_rows(rep.lexicon)))
    _write(d / "lexicon.txt", an.render_lexicon(rep.lexicon, bundle.lexicon.languages))
    dis_rows, dis_text = [], []
    for t in rep.tables:
        skew = "skewed" if (t.lang, t.token) in bundle.lexicon.skewed else "balanced"
        dis_text.append(f"[{skew}]\n" + t.render())
        for sym, row in zip(t.symbols, t.counts):
            for cid, n in zip(t.concepts, row):
                dis_rows.append((t.lang, t.token, skew, sym, cid, int(n)))
    _write(d / "disambiguation.csv", _csv_rows(["language", "token", "kind", "symbol", "concept", "count"], dis_rows))
    _write(d / "disambiguation.txt", "\n".join(dis_text))
    # raw 2-D projection of test-set contextual embeddings for external plotting
    proj_rows, hs = [], []
    for k, sent in enumerate(test_mul):
        hs.append(encode(model["encoder"], bundle.ids(sent.tokens)))
        for i, (tok, sym) in enumerate(zip(sent.tokens, sent.symbols)):
            proj_rows.append([k // 2, sent.lang, i, tok, sent.concepts[i], sym])
    xy = an.projection_2d(np.vstack(hs))
    _write(d / "projection.csv", _csv_rows(["pair", "language", "position", "token", "concept", "symbol", "x", "y"],
                                           [r + [float(a), float(b)] for r, (a, b) in zip(proj_rows, xy)]))
    return {"same_symbol_precision": rep.score.precision, "same_symbol_recall": rep.score.recall,
            "same_symbol_aer": rep.score.aer, "purity": rep.purity.purity,
            "symbols_per_concept": rep.purity.distinct_symbols_per_concept, "roundtrip": rep.roundtrip}


ABLATION_HEADER = ["setting", "pairs", "contrastive", "vq_ca", "precision", "recall", "aer", "f1",
                   "purity", "symbols_per_concept"]


def ablation_settings(cfg: RunConfig) -> list[tuple[str, int | None, bool]]:
    """(name, contrastive pairs or None for no contrastive stage, push enabled)."""
    m = cfg.pairs
    rows = [(f"MUL (pair={m})", m, True), ("w/o VQ-CA", m, False), ("w/o contrastive + VQ-CA", None, False)]
    rows += [(f"pair={k}", k, True) for k in (1, 2, 4) if k != m]
    return rows


def stage_ablate(cfg: RunConfig, art: Path) -> dict:
    bundle = load_corpus(art)
    base = _load_encoder(art / "pretrain" / "encoder.json", "pretrain")
    encoders: dict[int | None, EncoderParams] = {None: base}
    rows = []
    summary = {}
    for name, pairs, ca in ablation_settings(cfg):
        if pairs not in encoders:
            encoders[pairs] = train_contrastive(base, bundle.id_pairs(bundle.train),
                                                contrastive_config(cfg, pairs), cfg.stage_seed("train-contrastive"))
        system = build_vqca(cfg, encoders[pairs], bundle, cross_lingual=ca)
        test_mul = translate_pairs(system.encoder, system.codebook, bundle, bundle.test)
        train_mul = translate_pairs(system.encoder, system.codebook, bundle, bundle.train)
        score = same_symbol_score(test_mul, bundle.test)
        pur = an.codebook_purity(train_mul)
        rows.append((name, "-" if pairs is None else pairs, pairs is not None, ca, score.precision,
                     score.recall, score.aer, score.f1, pur.purity, pur.distinct_symbols_per_concept))
        summary[name] = score.recall
        log.info("ablation %s: recall %.3f", name, score.recall)
    d = art / "ablate"
    d.mkdir(parents=True, exist_ok=True)
    _write(d / "table.csv", _csv_rows(ABLATION_HEADER, rows))
    lines = [f"{'setting':<26}{'P':>8}{'R':>8}{'AER':>8}{'F1':>8}{'purity':>8}{'sym/c':>8}"]
    for r in rows:
        lines.append(f"{r[0]:<26}{100 * r[4]:>8.1f}{100 * r[5]:>8.1f}{100 * r[6]:>8.1f}{100 * r[7]:>8.1f}"
                     f"{r[8]:>8.3f}{r[9]:>8.2f}")
    _write(d / "table.txt", "\n".join(lines) + "\n")
    return summary


_RUNNERS: dict[str, Callable[[RunConfig, Path], dict]] = {
    "gen-corpus": stage_gen_corpus, "pretrain": stage_pretrain, "align-eval": stage_align_eval,
    "train-contrastive": stage_train_contrastive, "train-vqca": stage_train_vqca,
    "translate": stage_translate, "report": stage_report, "ablate": stage_ablate,
}


def _report_dir(out: Path, stage: str) -> Path:
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    d = out / "reports" / f"{stamp}-{stage}"
    k = 1
    while d.exists():
        d = out / "reports" / f"{stamp}-{stage}-{k}"
        k += 1
    d.mkdir(parents=True)
    return d


def run_stage(cfg: RunConfig, stage: str, out: str | Path) -> StageResult:
    if stage not in _RUNNERS:
        raise ValueError(f"stage: unknown stage {stage!r}; choose from {', '.join(STAGES)}")
    out = Path(out)
    art = out / "artifacts"
    art.mkdir(parents=True, exist_ok=True)
    _write(art / "config.txt", cfg.to_text())
    t0 = time.perf_counter()
    summary = _RUNNERS[stage](cfg, art)
    elapsed = time.perf_counter() - t0
    rdir = _report_dir(out, stage)
    lines = [f"stage = {stage}", f"seed = {cfg.seed}", f"seconds = {elapsed:.2f}"]
    lines += [f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in summary.items()]
    _write(rdir / "summary.txt", "\n".join(lines) + "\n")
    _write(rdir / "config.txt", cfg.to_text())
    src = art / {"gen-corpus": "corpus", "pretrain": "pretrain", "align-eval": "align-eval",
                 "train-contrastive": "contrastive", "train-vqca": "vqca", "translate": "translate",
                 "report": "report", "ablate": "ablate"}[stage]
    for f in sorted(src.glob("*.csv")) + sorted(src.glob("*.txt")):
        if f.stat().st_size < 1_000_000:
            (rdir / f.name).write_bytes(f.read_bytes())
    return StageResult(stage, summary, rdir)


PIPELINE = ("gen-corpus", "pretrain", "train-contrastive", "align-eval", "train-vqca", "translate", "report")


def run_all(cfg: RunConfig, out: str | Path, ablate: bool = True) -> list[StageResult]:
    stages = PIPELINE + (("ablate",) if ablate else ())
    return [run_stage(cfg, s, out) for s in stages]


def tree_hash(root: str | Path) -> str:
    """sha256 over every file's relative path and bytes, in sorted path order."""
    root = Path(root)
    h = hashlib.sha256()
    for p in sorted(x for x in root.rglob("*") if x.is_file()):
        h.update(p.relative_to(root).as_posix().encode("utf-8") + b"\0")
        h.update(hashlib.sha256(p.read_bytes()).digest())
    return h.hexdigest()
