import pytest

from mulang.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from mulang.config import parse_config
from mulang.pipeline import PIPELINE, run_stage, tree_hash
from mulang.vqca import format_mul, parse_mul

TINY = """
concepts = 20
topics = 4
train_pairs = 80
test_pairs = 1
mono_sentences = 300
dim = 8
mlm_steps = 60
contrastive_steps = 30
codebook_size = 32
vq_steps = 40
ca_warmup = 10
init_sentences = 20
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return path


def _run(cfg, out, stage, *extra):
    return main([stage, "--config", str(cfg), "--out", str(out), *extra])


def test_stages_in_order(tiny_cfg, tmp_path, capsys):
    out = tmp_path / "run"
    for stage in PIPELINE + ("ablate",):
        assert _run(tiny_cfg, out, stage) == EXIT_OK, stage
    art = out / "artifacts"
    for rel in ("corpus/train.txt", "pretrain/encoder.json", "contrastive/encoder.json", "align-eval/summary.csv",
                "vqca/model.json", "translate/test.mul", "report/purity.csv", "ablate/table.csv"):
        assert (art / rel).is_file(), rel
    header = (art / "ablate" / "table.csv").read_text().splitlines()[0]
    assert header == "setting,pairs,contrastive,vq_ca,precision,recall,aer,f1,purity,symbols_per_concept"
    assert len((art / "ablate" / "table.csv").read_text().splitlines()) == 1 + 5
    assert "report in" in capsys.readouterr().out


def test_translate_line_format(tiny_cfg, tmp_path):
    out = tmp_path / "run"
    assert _run(tiny_cfg, out, "all") == EXIT_OK
    art = out / "artifacts"
    lines = (art / "translate" / "test.mul").read_text().splitlines()
    assert len(lines) == 2  # one pair: source line then target line
    src = (art / "corpus" / "test.txt").read_text().split("|||")[0].split()
    lang, toks, syms = parse_mul(lines[0])
    assert (lang, toks) == ("l0", src)
    assert lines[0] == format_mul(lang, toks, syms)


def test_determinism_and_fresh_reports(tiny_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(tiny_cfg, a, "all") == EXIT_OK
    assert _run(tiny_cfg, b, "all") == EXIT_OK
    assert tree_hash(a / "artifacts") == tree_hash(b / "artifacts")
    before = tree_hash(a / "artifacts")
    n_reports = len(list((a / "reports").iterdir()))
    assert _run(tiny_cfg, a, "train-vqca") == EXIT_OK   # rerun is idempotent
    assert tree_hash(a / "artifacts") == before
    assert len(list((a / "reports").iterdir())) == n_reports + 1


def test_seed_flag_changes_artifacts(tiny_cfg, tmp_path):
    assert _run(tiny_cfg, tmp_path / "a", "gen-corpus") == EXIT_OK
    assert _run(tiny_cfg, tmp_path / "b", "gen-corpus", "--seed", "5") == EXIT_OK
    assert tree_hash(tmp_path / "a" / "artifacts") != tree_hash(tmp_path / "b" / "artifacts")


def test_env_seed(tiny_cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("MUL_SEED", "5")
    assert _run(tiny_cfg, tmp_path / "a", "gen-corpus") == EXIT_OK
    monkeypatch.delenv("MUL_SEED")
    assert _run(tiny_cfg, tmp_path / "b", "gen-corpus", "--seed", "5") == EXIT_OK
    assert tree_hash(tmp_path / "a" / "artifacts") == tree_hash(tmp_path / "b" / "artifacts")


def test_missing_input_exit_code(tiny_cfg, tmp_path, capsys):
    assert _run(tiny_cfg, tmp_path / "empty", "pretrain") == EXIT_RUNTIME
    err = capsys.readouterr().err
    assert "lexicon.tsv" in err and "gen-corpus" in err


def test_corrupt_model_exit_code(tiny_cfg, tmp_path, capsys):
    out = tmp_path / "run"
    for stage in ("gen-corpus", "pretrain"):
        assert _run(tiny_cfg, out, stage) == EXIT_OK
    path = out / "artifacts" / "pretrain" / "encoder.json"
    path.write_bytes(path.read_bytes()[:100])
    assert _run(tiny_cfg, out, "train-contrastive") == EXIT_RUNTIME
    assert "encoder.json" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("pairs = 99\n")
    assert _run(path, tmp_path / "x", "gen-corpus") == EXIT_VALIDATION
    assert "pairs" in capsys.readouterr().err


def test_unknown_stage_exit_code(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate", "--out", str(tmp_path)])
    assert exc.value.code == EXIT_VALIDATION


def test_run_stage_rejects_unknown(tmp_path):
    with pytest.raises(ValueError, match="unknown stage"):
        run_stage(parse_config(TINY), "nope", tmp_path)
