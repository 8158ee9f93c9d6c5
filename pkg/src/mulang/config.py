"""Run configuration: flat ``key = value`` text, strict keys, documented ranges."""

from __future__ import annotations

import hashlib
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

SEED_ENV = "MUL_SEED"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42

    # synthetic corpus
    concepts: int = 50
    languages: int = 2
    synonym_rate: float = 0.0
    homograph_rate: float = 0.1
    skewed_homographs: int = 1
    skew: float = 0.95
    function_words: int = 2
    topics: int = 5
    roles: int = 5
    shared_rate: float = 0.0
    orders: str = "identity,reversal"
    function_positions: str = "start,end"
    function_prob: float = 0.3
    min_len: int = 3
    max_len: int = 6
    train_pairs: int = 2000
    test_pairs: int = 200
    mono_sentences: int = 4000
    code_switch: float = 0.3

    # encoder and masked-LM pretraining
    dim: int = 32
    layers: int = 2
    window: int = 2
    mask_rate: float = 0.15
    mlm_steps: int = 3000
    mlm_batch: int = 32
    mlm_lr: float = 0.3
    mlm_warmup: int = 0

    # alignment
    threshold: float = 0.1

    # contrastive refinement
    pairs: int = 4
    contrastive_steps: int = 2000
    contrastive_lr: float = 0.1
    contrastive_warmup: int = 0
    freeze_supervision: bool = False

    # quantisation with cross-lingual push
    codebook_size: int = 128
    beta: float = 0.25
    push: float = 1.0
    decay: float = 0.99
    vq_lr: float = 0.05
    vq_steps: int = 1500
    vq_batch: int = 8
    vq_warmup: int = 0
    ca_warmup: int = 500
    cross_lingual: bool = True
    language_tags: bool = True
    init_sentences: int = 200

    # reporting
    top_k: int = 2

    def stage_seed(self, stage: str) -> int:
        return stage_seed(self.seed, stage)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {_format(v)}")
        return "\n".join(lines) + "\n"


# (min, max) inclusive unless noted; None means unbounded
_RANGES: dict[str, tuple[float | None, float | None]] = {
    "concepts": (1, None), "languages": (1, 26), "synonym_rate": (0, 1), "homograph_rate": (0, 1),
    "skewed_homographs": (0, None), "skew": (0.5, 0.999999), "function_words": (0, None),
    "topics": (1, None), "roles": (1, None), "shared_rate": (0, 1), "function_prob": (0, 1),
    "min_len": (1, 64), "max_len": (1, 64), "train_pairs": (1, None), "test_pairs": (1, None),
    "mono_sentences": (1, None), "code_switch": (0, 1),
    "dim": (2, None), "layers": (0, None), "window": (0, None), "mask_rate": (1e-9, 1),
    "mlm_steps": (0, None), "mlm_batch": (1, None), "mlm_lr": (0, None), "mlm_warmup": (0, None),
    "threshold": (1e-9, 1 - 1e-9),
    "pairs": (1, 8), "contrastive_steps": (0, None), "contrastive_lr": (0, None), "contrastive_warmup": (0, None),
    "codebook_size": (2, None), "beta": (0, None), "push": (0, None), "decay": (1e-9, 1),
    "vq_lr": (0, None), "vq_steps": (0, None), "vq_batch": (1, None), "vq_warmup": (0, None),
    "ca_warmup": (0, None), "init_sentences": (1, None), "top_k": (1, None),
}

_ORDERS = {"identity", "reversal", "rotation"}
_POSITIONS = {"start", "end", "random"}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(key: str, raw: str, kind):
    raw = raw.strip()
    if kind is bool or kind == "bool":
        if raw.lower() in ("true", "yes", "1"):
            return True
        if raw.lower() in ("false", "no", "0"):
            return False
        raise ConfigError(f"{key}: expected true/false, got {raw!r}")
    if kind is int or kind == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if kind is float or kind == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    return raw


def validate(cfg: RunConfig) -> RunConfig:
    for key, (lo, hi) in _RANGES.items():
        v = getattr(cfg, key)
        if lo is not None and v < lo or hi is not None and v > hi:
            raise ConfigError(f"{key}: {v} outside [{lo}, {'inf' if hi is None else hi}]")
    if cfg.min_len > cfg.max_len:
        raise ConfigError(f"min_len: {cfg.min_len} exceeds max_len {cfg.max_len}")
    orders = cfg.orders.split(",")
    if len(orders) != cfg.languages or not set(orders) <= _ORDERS:
        raise ConfigError(f"orders: need {cfg.languages} entries from {sorted(_ORDERS)}, got {cfg.orders!r}")
    positions = cfg.function_positions.split(",")
    if len(positions) != cfg.languages or not set(positions) <= _POSITIONS:
        raise ConfigError(
            f"function_positions: need {cfg.languages} entries from {sorted(_POSITIONS)}, got {cfg.function_positions!r}")
    return cfg


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    kinds = {f.name: f.type for f in fields(RunConfig)}
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.split("\n"), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source} line {lineno}: expected 'key = value'")
        if key not in kinds:
            raise ConfigError(f"{key}: unknown configuration key ({source} line {lineno})")
        if key in values:
            raise ConfigError(f"{key}: set twice ({source} line {lineno})")
        values[key] = _parse_value(key, val, kinds[key])
    return validate(RunConfig(**values))


def load_config(path: str | Path | None, seed: int | None = None) -> RunConfig:
    """Reads ``path`` (defaults when None); the env var, then ``seed``, override the master seed."""
    if path is None:
        cfg = RunConfig()
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config: file not found: {p}")
        cfg = parse_config(p.read_text(encoding="utf-8"), str(p))
    env = os.environ.get(SEED_ENV)
    if env is not None:
        cfg = replace(cfg, seed=_parse_value(SEED_ENV, env, int))
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return validate(cfg)


def stage_seed(master: int, stage: str) -> int:
    digest = hashlib.sha256(f"{master}:{stage}".encode()).hexdigest()
    return int(digest[:8], 16)


def config_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)
