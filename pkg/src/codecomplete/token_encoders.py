"""Token encoders: string → D-dimensional vector, in five flavors.

Lookup kinds (whole token, subtokens, BPE units, hashed subtokens) share one
mechanism — gather embedding rows for the token's units and take the
elementwise max — differing only in how a token becomes unit ids.  The char
kind runs a small convolution stack over the one-hot character matrix.
"""

from __future__ import annotations

from collections import Counter, OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tokenizers import (UNK, BpeModel, CharAlphabet, HashingScheme,
                         Vocabulary, bpe_apply, bpe_train, build_char_alphabet,
                         build_vocab, feature_hash, split_subtokens)

KINDS = ("token", "subtoken", "bpe", "char", "hashed")

MAX_UNITS_PER_TOKEN = 16
_CHAR_KERNELS = (3, 5)


@dataclass
class TokenEncoderModel:
    kind: str
    dim: int
    vocab: Vocabulary | None = None
    bpe: BpeModel | None = None
    unit_ids: dict = field(default=None, repr=False)
    alphabet: CharAlphabet | None = None
    hashing: HashingScheme | None = None
    channels: int | None = None
    embedding: T.Tensor | None = None
    conv3_w: T.Tensor | None = None
    conv3_b: T.Tensor | None = None
    conv5_w: T.Tensor | None = None
    conv5_b: T.Tensor | None = None
    proj_w: T.Tensor | None = None
    proj_b: T.Tensor | None = None

    def parameters(self) -> list[tuple[str, T.Tensor]]:
        names = (("embedding",) if self.kind != "char" else
                 ("conv3_w", "conv3_b", "conv5_w", "conv5_b",
                  "proj_w", "proj_b"))
        return [(n, getattr(self, n)) for n in names]

    @property
    def onehot_width(self) -> int:
        # alphabet chars + out-of-alphabet slot + pad slot
        return len(self.alphabet) + 1


def _init(rng, shape) -> T.Tensor:
    return T.parameter(rng.uniform(-0.05, 0.05, size=shape).astype(np.float32))


def _token_counts(instances) -> Counter:
    counts: Counter = Counter()
    for inst in instances:
        counts.update(inst.context_tokens)
        counts.update(inst.candidates)
    return counts


def fit_token_encoder(kind: str, dim: int, instances, *, rng,
                      vocab_size: int = 4096, merge_budget: int = 200,
                      hash_modulus: int = 2500, alphabet_size: int = 64,
                      channels: int | None = None) -> TokenEncoderModel:
    """Build the tokenizer artifact for `kind` from a training corpus and
    allocate freshly initialized parameters."""
    if kind not in KINDS:
        raise ValueError(f"unknown token encoder kind {kind!r}; "
                         f"expected one of {KINDS}")
    counts = _token_counts(instances)
    model = TokenEncoderModel(kind=kind, dim=dim)

    if kind == "token":
        model.vocab = build_vocab(counts, vocab_size)
        model.embedding = _init(rng, (len(model.vocab), dim))
    elif kind == "subtoken":
        sub_counts: Counter = Counter()
        for token, n in counts.items():
            for sub in split_subtokens(token):
                sub_counts[sub] += n
        model.vocab = build_vocab(sub_counts, vocab_size)
        model.embedding = _init(rng, (len(model.vocab), dim))
    elif kind == "bpe":
        model.bpe = bpe_train(counts, merge_budget)
        unit_ids = {UNK: 0}
        for ch in sorted(model.bpe.alphabet):
            unit_ids.setdefault(ch, len(unit_ids))
        for left, right in model.bpe.merges:
            unit_ids.setdefault(left + right, len(unit_ids))
        model.unit_ids = unit_ids
        model.embedding = _init(rng, (len(unit_ids), dim))
    elif kind == "hashed":
        model.hashing = HashingScheme(hash_modulus)
        model.embedding = _init(rng, (hash_modulus, dim))
    else:  # char
        model.alphabet = build_char_alphabet(counts, alphabet_size)
        c = channels if channels is not None else dim
        model.channels = c
        a = model.onehot_width
        model.conv3_w = _init(rng, (3, a, c))
        model.conv3_b = _init(rng, (c,))
        model.conv5_w = _init(rng, (5, a, c))
        model.conv5_b = _init(rng, (c,))
        model.proj_w = _init(rng, (2 * c, dim))
        model.proj_b = _init(rng, (dim,))
    return model


def _unit_ids(model: TokenEncoderModel, token: str) -> list[int]:
    if model.kind == "token":
        return [model.vocab.lookup(token)]
    if model.kind == "subtoken":
        subs = split_subtokens(token)[:MAX_UNITS_PER_TOKEN]
        return [model.vocab.lookup(s) for s in subs]
    if model.kind == "hashed":
        subs = split_subtokens(token)[:MAX_UNITS_PER_TOKEN]
        return [feature_hash(model.hashing, s) for s in subs]
    if model.kind == "bpe":
        units = bpe_apply(model.bpe, token)[:MAX_UNITS_PER_TOKEN]
        return [model.unit_ids.get(u, 0) for u in units] or [0]
    raise ValueError(f"no unit ids for kind {model.kind!r}")


def _char_onehot(model: TokenEncoderModel, token: str) -> np.ndarray:
    a = model.onehot_width
    length = max(len(token), max(_CHAR_KERNELS))
    out = np.zeros((length, a), dtype=np.float32)
    for i, ch in enumerate(token):
        out[i, model.alphabet.encode(ch)] = 1.0
    out[len(token):, a - 1] = 1.0  # pad slot
    return out


def _encode_char(model: TokenEncoderModel, token: str) -> T.Tensor:
    x = T.constant(_char_onehot(model, token))
    pooled = []
    for w, b in ((model.conv3_w, model.conv3_b), (model.conv5_w, model.conv5_b)):
        conv = T.relu(T.conv1d(x, w, b))
        pooled.append(T.reduce_max(conv, axis=0))
    features = T.reshape(T.concat(pooled, axis=0), (1, -1))
    out = T.add(T.matmul(features, model.proj_w), model.proj_b)
    return T.reshape(out, (model.dim,))


def encode(model: TokenEncoderModel, token: str) -> T.Tensor:
    """Encode one token to an R^D vector."""
    if model.kind == "char":
        return _encode_char(model, token)
    gathered = T.rows(model.embedding, _unit_ids(model, token))
    if model.kind == "token":
        return T.reshape(gathered, (model.dim,))
    return T.reduce_max(gathered, axis=0)


def encode_tokens(model: TokenEncoderModel, tokens) -> T.Tensor:
    """Encode a token sequence to an (n × D) matrix in one graph.

    Lookup kinds do a single gather over the concatenated unit ids followed by
    a per-token segment max; only the char kind loops.
    """
    if not tokens:
        raise T.ShapeError("cannot encode an empty token sequence")
    if model.kind == "char":
        rows = [T.reshape(_encode_char(model, t), (1, model.dim))
                for t in tokens]
        return T.concat(rows, axis=0)
    if model.kind == "token":
        return T.rows(model.embedding, [model.vocab.lookup(t) for t in tokens])
    flat: list[int] = []
    seg: list[int] = []
    for i, token in enumerate(tokens):
        ids = _unit_ids(model, token)
        flat.extend(ids)
        seg.extend([i] * len(ids))
    gathered = T.rows(model.embedding, flat)
    return T.segment_max(gathered, T.SegmentIndex(seg, len(tokens)))


def encode_token(model, token):
    if model.kind != "token":
        raise ValueError(f"encode_token on kind {model.kind!r}")
    return encode(model, token)


def encode_subtoken(model, token):
    if model.kind not in ("subtoken", "hashed"):
        raise ValueError(f"encode_subtoken on kind {model.kind!r}")
    return encode(model, token)


def encode_bpe(model, token):
    if model.kind != "bpe":
        raise ValueError(f"encode_bpe on kind {model.kind!r}")
    return encode(model, token)


def encode_char(model, token):
    if model.kind != "char":
        raise ValueError(f"encode_char on kind {model.kind!r}")
    return encode(model, token)


def annotate(encoding: T.Tensor, is_receiver: bool) -> T.Tensor:
    """Append the receiver-binding bit, widening R^D to R^(D+1)."""
    bit = T.constant(np.array([1.0 if is_receiver else 0.0],
                              dtype=encoding.data.dtype))
    return T.concat([encoding, bit], axis=0)


def annotate_rows(matrix: T.Tensor, receiver_mask) -> T.Tensor:
    """Append a receiver-bit column to an (n × D) encoding matrix."""
    bits = np.zeros((matrix.shape[0], 1), dtype=matrix.data.dtype)
    for i in receiver_mask:
        bits[i, 0] = 1.0
    return T.concat([matrix, T.constant(bits)], axis=1)


class EncodingCache:
    """Bounded least-recently-used memo of token encodings (inference only).

    Owned by a session/handler rather than the model, so reloading a model
    naturally starts from a cold cache.
    """

    def __init__(self, model: TokenEncoderModel, capacity: int = 4096):
        self.model = model
        self.capacity = capacity
        self._store: OrderedDict[str, np.ndarray] = OrderedDict()

    def encode(self, token: str) -> np.ndarray:
        hit = self._store.get(token)
        if hit is not None:
            self._store.move_to_end(token)
            return hit
        with T.no_grad():
            value = encode_tokens(self.model, [token]).data[0].copy()
        self._store[token] = value
        if len(self._store) > self.capacity:
            self._store.popitem(last=False)
        return value

    def keys(self):
        return list(self._store.keys())
