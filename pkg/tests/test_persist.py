import json

import numpy as np
import pytest

from mulang.encoder import init_params
from mulang.persist import ModelFormatError, load_model, save_model
from mulang.vqca import init_codebook, init_decoder


@pytest.fixture
def parts(rng):
    enc = init_params(9, 4, 2, 1, 0)
    dec = init_decoder(enc, ["l0", "l1"], 0)
    dec.lang_embed[:] = rng.normal(size=dec.lang_embed.shape)
    cb = init_codebook(6, 4, 0)
    cb.ema_count = rng.random(6) * 3
    cb.usage = np.arange(6)
    return enc, dec, cb


def _same(a, b):
    return all(np.array_equal(x, y) and x.dtype == y.dtype for (_, x), (_, y) in zip(a.named_arrays(), b.named_arrays()))


def test_roundtrip_bitwise(tmp_path, parts):
    enc, dec, cb = parts
    save_model(tmp_path / "m.json", encoder=enc, decoder=dec, codebook=cb)
    back = load_model(tmp_path / "m.json")
    assert _same(enc, back["encoder"]) and _same(dec, back["decoder"])
    for f in ("e", "ema_count", "ema_sum", "usage"):
        assert np.array_equal(getattr(cb, f), getattr(back["codebook"], f))
    assert back["decoder"].languages == ["l0", "l1"]


def test_corrupt_byte_names_section(tmp_path, parts):
    enc, dec, cb = parts
    path = tmp_path / "m.json"
    save_model(path, encoder=enc, decoder=dec, codebook=cb)
    doc = json.loads(path.read_text())
    doc["sections"]["decoder"]["data"]["out_bias"][0] += 1e-9
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match="decoder"):
        load_model(path)


def test_raw_byte_flip_detected(tmp_path, parts):
    path = tmp_path / "m.json"
    save_model(path, codebook=parts[2])
    raw = bytearray(path.read_bytes())
    k = raw.index(b'"e": [') + 12
    while not chr(raw[k]).isdigit():
        k += 1
    raw[k] = ord("7") if raw[k] != ord("7") else ord("3")
    path.write_bytes(bytes(raw))
    with pytest.raises(ModelFormatError, match="codebook"):
        load_model(path)


def test_truncated(tmp_path, parts):
    path = tmp_path / "m.json"
    save_model(path, encoder=parts[0])
    path.write_bytes(path.read_bytes()[:200])
    with pytest.raises(ModelFormatError, match="truncated"):
        load_model(path)


def test_major_version_mismatch(tmp_path, parts):
    path = tmp_path / "m.json"
    save_model(path, encoder=parts[0])
    doc = json.loads(path.read_text())
    doc["version"] = "2.0"
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match="version"):
        load_model(path)


def test_newer_minor_version_loads_with_defaults(tmp_path, parts):
    from mulang.persist import _checksum
    enc, dec, cb = parts
    path = tmp_path / "m.json"
    save_model(path, encoder=enc, decoder=dec, codebook=cb)
    doc = json.loads(path.read_text())
    doc["version"] = "1.9"
    # a newer writer adds a section and a field, and an older one lacked usage/lang_embed
    doc["sections"]["optimizer"] = {"sha256": "x", "data": {}}
    data = doc["sections"]["codebook"]["data"]
    del data["usage"]
    data["future_field"] = 1
    doc["sections"]["codebook"]["sha256"] = _checksum(data)
    ddata = doc["sections"]["decoder"]["data"]
    del ddata["lang_embed"]
    doc["sections"]["decoder"]["sha256"] = _checksum(ddata)
    path.write_text(json.dumps(doc))
    back = load_model(path)
    assert not back["codebook"].usage.any()
    assert back["decoder"].lang_embed is None
    assert np.array_equal(back["codebook"].e, cb.e)


def test_nonfinite_refused(tmp_path, parts):
    enc = parts[0]
    enc.embed[0, 0] = np.nan
    with pytest.raises(ModelFormatError):
        save_model(tmp_path / "m.json", encoder=enc)
