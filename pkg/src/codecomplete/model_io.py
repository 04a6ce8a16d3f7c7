"""Binary model container.

Layout: magic bytes, a little-endian u32 format version, a length-prefixed
UTF-8 JSON block describing the architecture and tokenizer artifacts, then a
tensor table.  Each table entry stores the parameter name, its shape and the
raw little-endian float32 payload, so a save → load round trip is bit-exact.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct

import numpy as np

from . import tensor as T
from .context_encoders import ContextEncoderModel
from .providers import VocabProvider
from .ranker import CompletionModel, RankerModel
from .token_encoders import TokenEncoderModel
from .tokenizers import BpeModel, CharAlphabet, HashingScheme, Vocabulary

MAGIC = b"CCRANK01"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """The file is not a readable model container."""


def _describe(model: CompletionModel) -> dict:
    te = model.token_encoder
    ce = model.context_encoder
    return {
        "train_config": model.config,
        "provider_kind": model.provider_kind,
        "annotated": model.annotated,
        "token_encoder": {
            "kind": te.kind,
            "dim": te.dim,
            "channels": te.channels,
            "vocab_units": te.vocab.units if te.vocab else None,
            "bpe": {
                "merges": [list(m) for m in te.bpe.merges],
                "alphabet": sorted(te.bpe.alphabet),
                "marker": te.bpe.marker,
            } if te.bpe else None,
            "unit_ids": te.unit_ids,
            "alphabet_chars": te.alphabet.chars if te.alphabet else None,
            "hash_modulus": te.hashing.modulus if te.hashing else None,
        },
        "context_encoder": {
            "kind": ce.kind,
            "hidden": ce.hidden,
            "input_dim": ce.input_dim,
            "layers": ce.layers,
            "heads": ce.heads,
        },
        "vocabulary": (model.vocab_provider.vocabulary
                       if model.vocab_provider else None),
    }


def _serialize(model: CompletionModel) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", FORMAT_VERSION))
    config = json.dumps(_describe(model), sort_keys=True).encode("utf-8")
    out.write(struct.pack("<Q", len(config)))
    out.write(config)
    params = model.parameters()
    out.write(struct.pack("<I", len(params)))
    for name, p in params:
        encoded = name.encode("utf-8")
        out.write(struct.pack("<H", len(encoded)))
        out.write(encoded)
        out.write(struct.pack("<B", p.data.ndim))
        for dim in p.data.shape:
            out.write(struct.pack("<I", dim))
        out.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    return out.getvalue()


def save_model(model: CompletionModel, path):
    """Serialize fully in memory, then write atomically."""
    payload = _serialize(model)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def _take(buf: memoryview, offset: int, size: int):
    if offset + size > len(buf):
        raise ModelFormatError(
            f"truncated container: needed {size} bytes at offset {offset}, "
            f"file holds {len(buf)}")
    return buf[offset:offset + size], offset + size


def _read_tensors(buf: memoryview, offset: int) -> dict:
    raw, offset = _take(buf, offset, 4)
    (count,) = struct.unpack("<I", raw)
    tensors = {}
    for _ in range(count):
        raw, offset = _take(buf, offset, 2)
        (name_len,) = struct.unpack("<H", raw)
        raw, offset = _take(buf, offset, name_len)
        name = bytes(raw).decode("utf-8")
        raw, offset = _take(buf, offset, 1)
        ndim = raw[0]
        shape = []
        for _ in range(ndim):
            raw, offset = _take(buf, offset, 4)
            shape.append(struct.unpack("<I", raw)[0])
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw, offset = _take(buf, offset, size * 4)
        arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
        tensors[name] = T.parameter(arr.astype(np.float32))
    return tensors


def load_model(path) -> CompletionModel:
    with open(path, "rb") as fh:
        buf = memoryview(fh.read())
    header, offset = _take(buf, 0, len(MAGIC))
    if bytes(header) != MAGIC:
        raise ModelFormatError(f"bad magic bytes {bytes(header)!r}; "
                               f"not a model container")
    raw, offset = _take(buf, offset, 4)
    (version,) = struct.unpack("<I", raw)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported container version {version}")
    raw, offset = _take(buf, offset, 8)
    (config_len,) = struct.unpack("<Q", raw)
    raw, offset = _take(buf, offset, config_len)
    try:
        desc = json.loads(bytes(raw).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable config block: {exc}") from exc
    tensors = _read_tensors(buf, offset)
    return _reassemble(desc, tensors)


def _reassemble(desc: dict, tensors: dict) -> CompletionModel:
    td = desc["token_encoder"]
    token_encoder = TokenEncoderModel(
        kind=td["kind"], dim=td["dim"], channels=td["channels"],
        vocab=Vocabulary(units=td["vocab_units"]) if td["vocab_units"]
        is not None else None,
        bpe=BpeModel(merges=[tuple(m) for m in td["bpe"]["merges"]],
                     alphabet=frozenset(td["bpe"]["alphabet"]),
                     marker=td["bpe"]["marker"]) if td["bpe"] else None,
        unit_ids=td["unit_ids"],
        alphabet=CharAlphabet(chars=td["alphabet_chars"])
        if td["alphabet_chars"] is not None else None,
        hashing=HashingScheme(modulus=td["hash_modulus"])
        if td["hash_modulus"] else None)
    cd = desc["context_encoder"]
    context_encoder = ContextEncoderModel(
        kind=cd["kind"], hidden=cd["hidden"], input_dim=cd["input_dim"],
        layers=cd["layers"], heads=cd["heads"])
    ranker = RankerModel(w=None)
    for name, tensor in tensors.items():
        prefix, _, field_name = name.partition(".")
        target = {"te": token_encoder, "ce": context_encoder,
                  "rk": ranker}.get(prefix)
        if target is None:
            raise ModelFormatError(f"unknown tensor group in {name!r}")
        setattr(target, field_name, tensor)
    if ranker.w is None:
        raise ModelFormatError("container is missing the ranker projection")
    vocab_provider = (VocabProvider(vocabulary=desc["vocabulary"])
                      if desc["vocabulary"] is not None else None)
    return CompletionModel(
        token_encoder=token_encoder, context_encoder=context_encoder,
        ranker=ranker, provider_kind=desc["provider_kind"],
        vocab_provider=vocab_provider, annotated=desc["annotated"],
        config=desc["train_config"])


def model_id(model: CompletionModel) -> str:
    """Short stable identifier: architecture plus a weight digest."""
    digest = hashlib.md5()
    for name, p in model.parameters():
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    cfg = model.config
    parts = [cfg.get("token_kind", model.token_encoder.kind),
             cfg.get("context_kind", model.context_encoder.kind),
             model.provider_kind]
    return "-".join(parts) + "-" + digest.hexdigest()[:8]
