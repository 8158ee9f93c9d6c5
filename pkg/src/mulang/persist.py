"""Versioned model files: JSON with one checksummed section per component.

Floats are written with ``repr`` precision, so a write-then-read round trip is
bit-exact. Files from the same major version load; fields a reader does not
know are ignored and fields a file lacks take their defaults.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .encoder import EncoderParams, Layer
from .vqca import EPS, Codebook, DecoderParams

FORMAT = "mulang-model"
VERSION = (1, 1)


class ModelFormatError(ValueError):
    pass


def _canonical(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _checksum(data) -> str:
    return hashlib.sha256(_canonical(data).encode("utf-8")).hexdigest()


def _arr(a: np.ndarray) -> list:
    if not np.isfinite(a).all():
        raise ModelFormatError("refusing to save non-finite parameters")
    return a.tolist()


def encoder_to_dict(p: EncoderParams) -> dict:
    return {
        "vocab_size": p.vocab_size, "dim": p.dim, "window": p.window, "seed": p.seed,
        "embed": _arr(p.embed), "out_bias": _arr(p.out_bias),
        "layers": [{"w_self": _arr(l.w_self), "w_ctx": _arr(l.w_ctx), "b": _arr(l.b)} for l in p.layers],
    }


def encoder_from_dict(d: dict) -> EncoderParams:
    layers = [Layer(np.array(l["w_self"], dtype=float), np.array(l["w_ctx"], dtype=float),
                    np.array(l["b"], dtype=float)) for l in d["layers"]]
    p = EncoderParams(np.array(d["embed"], dtype=float), layers, np.array(d["out_bias"], dtype=float),
                      int(d["window"]), int(d.get("seed", 0)))
    if p.embed.shape != (d["vocab_size"], d["dim"]):
        raise ModelFormatError("encoder: embed shape disagrees with declared dims")
    return p


def decoder_to_dict(p: DecoderParams) -> dict:
    return {
        "window": p.window, "languages": list(p.languages),
        "w_self": _arr(p.layer.w_self), "w_ctx": _arr(p.layer.w_ctx), "b": _arr(p.layer.b),
        "w_out": _arr(p.w_out), "out_bias": _arr(p.out_bias),
        "lang_embed": None if p.lang_embed is None else _arr(p.lang_embed),
    }


def decoder_from_dict(d: dict) -> DecoderParams:
    le = d.get("lang_embed")
    return DecoderParams(
        Layer(np.array(d["w_self"], dtype=float), np.array(d["w_ctx"], dtype=float), np.array(d["b"], dtype=float)),
        np.array(d["w_out"], dtype=float), np.array(d["out_bias"], dtype=float),
        None if le is None else np.array(le, dtype=float), int(d["window"]), list(d.get("languages", [])),
    )


def codebook_to_dict(cb: Codebook) -> dict:
    return {"e": _arr(cb.e), "ema_count": _arr(cb.ema_count), "ema_sum": _arr(cb.ema_sum),
            "usage": [int(x) for x in cb.usage], "eps": cb.eps}


def codebook_from_dict(d: dict) -> Codebook:
    e = np.array(d["e"], dtype=float)
    usage = np.array(d.get("usage", [0] * len(e)), dtype=np.int64)
    return Codebook(e, np.array(d["ema_count"], dtype=float), np.array(d["ema_sum"], dtype=float),
                    usage, float(d.get("eps", EPS)))


_SECTIONS = {
    "encoder": (EncoderParams, encoder_to_dict, encoder_from_dict),
    "decoder": (DecoderParams, decoder_to_dict, decoder_from_dict),
    "codebook": (Codebook, codebook_to_dict, codebook_from_dict),
}


def save_model(path: str | Path, **components) -> None:
    """``save_model(path, encoder=..., decoder=..., codebook=...)``; any subset."""
    sections = {}
    for name, obj in components.items():
        if name not in _SECTIONS:
            raise ModelFormatError(f"unknown model section {name!r}")
        data = _SECTIONS[name][1](obj)
        sections[name] = {"sha256": _checksum(data), "data": data}
    doc = {"format": FORMAT, "version": f"{VERSION[0]}.{VERSION[1]}", "sections": sections}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> dict:
    """Returns ``{section name: component}`` for every section in the file."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: truncated or malformed model file ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFormatError(f"{path}: not a {FORMAT} file")
    try:
        major, _minor = (int(x) for x in str(doc.get("version", "")).split("."))
    except ValueError:
        raise ModelFormatError(f"{path}: unreadable version tag {doc.get('version')!r}") from None
    if major != VERSION[0]:
        raise ModelFormatError(f"{path}: version mismatch, file is {doc['version']}, reader supports {VERSION[0]}.x")
    out = {}
    for name, sec in doc.get("sections", {}).items():
        if name not in _SECTIONS:
            continue  # written by a newer minor version
        if _checksum(sec.get("data")) != sec.get("sha256"):
            raise ModelFormatError(f"{path}: checksum failure in section {name!r}")
        try:
            out[name] = _SECTIONS[name][2](sec["data"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"{path}: section {name!r} is incomplete ({exc})") from None
    return out
