"""Context encoders: (n × D) token-encoding matrices → c_cx ∈ R^H.

Four kinds share one calling convention.  The recurrent kinds additionally
support a masked batched path: all instances of a minibatch advance through
the recurrence in lockstep, and instances shorter than the longest one freeze
their hidden state once exhausted — equivalent to encoding each instance
alone, but with B-row matmuls instead of B graph replays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T

KINDS = ("gru", "bigru", "cnn", "transformer")


@dataclass
class ContextEncoderModel:
    kind: str
    hidden: int
    input_dim: int
    layers: int = 1
    heads: int = 1
    _params: dict = field(default_factory=dict, repr=False)

    def parameters(self) -> list[tuple[str, T.Tensor]]:
        return list(self._params.items())

    def __getattr__(self, name):
        params = object.__getattribute__(self, "_params")
        if name in params:
            return params[name]
        raise AttributeError(name)

    def __setattr__(self, name, value):
        if isinstance(value, T.Tensor):
            self._params[name] = value
        else:
            object.__setattr__(self, name, value)


def _init(rng, shape) -> T.Tensor:
    return T.parameter(rng.uniform(-0.05, 0.05, size=shape).astype(np.float32))


def _pick_heads(hidden: int) -> int:
    for h in (4, 2, 1):
        if hidden % h == 0:
            return h
    return 1


def fit_context_encoder(kind: str, hidden: int, input_dim: int, *, rng,
                        layers: int = 1,
                        heads: int | None = None) -> ContextEncoderModel:
    if kind not in KINDS:
        raise ValueError(f"unknown context encoder kind {kind!r}; "
                         f"expected one of {KINDS}")
    model = ContextEncoderModel(kind=kind, hidden=hidden, input_dim=input_dim,
                                layers=layers)
    if kind == "gru":
        _alloc_gru(model, rng, "", input_dim, hidden)
    elif kind == "bigru":
        if hidden % 2:
            raise ValueError(f"bigru needs an even hidden width, got {hidden}")
        _alloc_gru(model, rng, "fwd_", input_dim, hidden // 2)
        _alloc_gru(model, rng, "bwd_", input_dim, hidden // 2)
    elif kind == "cnn":
        model.conv1_w = _init(rng, (3, input_dim, hidden))
        model.conv1_b = _init(rng, (hidden,))
        model.conv2_w = _init(rng, (3, hidden, hidden))
        model.conv2_b = _init(rng, (hidden,))
    else:  # transformer
        model.heads = heads if heads is not None else _pick_heads(hidden)
        if hidden % model.heads:
            raise ValueError(f"heads {model.heads} must divide hidden {hidden}")
        model.in_w = _init(rng, (input_dim, hidden))
        model.in_b = _init(rng, (hidden,))
        for layer in range(layers):
            p = f"l{layer}_"
            for name in ("wq", "wk", "wv", "wo"):
                setattr(model, p + name, _init(rng, (hidden, hidden)))
            setattr(model, p + "bo", _init(rng, (hidden,)))
            setattr(model, p + "ln1_g", T.parameter(np.ones(hidden, np.float32)))
            setattr(model, p + "ln1_b", T.parameter(np.zeros(hidden, np.float32)))
            setattr(model, p + "ffn1_w", _init(rng, (hidden, 4 * hidden)))
            setattr(model, p + "ffn1_b", _init(rng, (4 * hidden,)))
            setattr(model, p + "ffn2_w", _init(rng, (4 * hidden, hidden)))
            setattr(model, p + "ffn2_b", _init(rng, (hidden,)))
            setattr(model, p + "ln2_g", T.parameter(np.ones(hidden, np.float32)))
            setattr(model, p + "ln2_b", T.parameter(np.zeros(hidden, np.float32)))
        model.out_w = _init(rng, (hidden, hidden))
        model.out_b = _init(rng, (hidden,))
    return model


def _alloc_gru(model, rng, prefix, input_dim, hidden):
    setattr(model, prefix + "w_input", _init(rng, (input_dim, 3 * hidden)))
    setattr(model, prefix + "w_hidden", _init(rng, (hidden, 3 * hidden)))
    setattr(model, prefix + "b_input", _init(rng, (3 * hidden,)))
    setattr(model, prefix + "b_hidden", _init(rng, (3 * hidden,)))


# ---------------------------------------------------------------------------
# GRU
# ---------------------------------------------------------------------------

def _gru_step(x, h, w_i, w_h, b_i, b_h, hsz):
    """One cell update for a (B × D) input block and (B × H) state."""
    gi = T.add(T.matmul(x, w_i), b_i)
    gh = T.add(T.matmul(h, w_h), b_h)
    r = T.sigmoid(T.add(T.narrow(gi, 1, 0, hsz), T.narrow(gh, 1, 0, hsz)))
    z = T.sigmoid(T.add(T.narrow(gi, 1, hsz, hsz), T.narrow(gh, 1, hsz, hsz)))
    n = T.tanh(T.add(T.narrow(gi, 1, 2 * hsz, hsz),
                     T.mul(r, T.narrow(gh, 1, 2 * hsz, hsz))))
    return T.add(T.mul(1.0 - z, n), T.mul(z, h))


def _gru_run(model, prefix, mat: T.Tensor, hsz: int) -> T.Tensor:
    w_i = getattr(model, prefix + "w_input")
    w_h = getattr(model, prefix + "w_hidden")
    b_i = getattr(model, prefix + "b_input")
    b_h = getattr(model, prefix + "b_hidden")
    h = T.constant(np.zeros((1, hsz), dtype=np.float32))
    for t in range(mat.shape[0]):
        x = T.narrow(mat, 0, t, 1)
        h = _gru_step(x, h, w_i, w_h, b_i, b_h, hsz)
    return h


def encode_context_gru(model, mat: T.Tensor) -> T.Tensor:
    _expect(model, "gru", mat)
    return T.reshape(_gru_run(model, "", mat, model.hidden), (model.hidden,))


def encode_context_bigru(model, mat: T.Tensor) -> T.Tensor:
    _expect(model, "bigru", mat)
    half = model.hidden // 2
    fwd = _gru_run(model, "fwd_", mat, half)
    rev = T.rows(mat, list(range(mat.shape[0] - 1, -1, -1)))
    bwd = _gru_run(model, "bwd_", rev, half)
    return T.reshape(T.concat([fwd, bwd], axis=1), (model.hidden,))


# ---------------------------------------------------------------------------
# CNN
# ---------------------------------------------------------------------------

_CNN_MIN_LEN = 5  # two valid kernel-3 convolutions


def encode_context_cnn(model, mat: T.Tensor) -> T.Tensor:
    _expect(model, "cnn", mat)
    pad = _CNN_MIN_LEN - mat.shape[0]
    if pad > 0:
        mat = T.pad_rows(mat, pad, 0)
    x = T.relu(T.conv1d(mat, model.conv1_w, model.conv1_b))
    x = T.relu(T.conv1d(x, model.conv2_w, model.conv2_b))
    return T.reduce_max(x, axis=0)


# ---------------------------------------------------------------------------
# Transformer
# ---------------------------------------------------------------------------

def sinusoidal_positions(length: int, width: int) -> np.ndarray:
    pos = np.arange(length, dtype=np.float32)[:, None]
    i = np.arange(width, dtype=np.float32)[None, :]
    angles = pos / np.power(10000.0, (2 * (i // 2)) / width)
    out = np.empty((length, width), dtype=np.float32)
    out[:, 0::2] = np.sin(angles[:, 0::2])
    out[:, 1::2] = np.cos(angles[:, 1::2])
    return out


def _layer_norm(x: T.Tensor, gamma: T.Tensor, beta: T.Tensor) -> T.Tensor:
    mean = T.reduce_mean(x, axis=1, keepdims=True)
    centered = T.sub(x, mean)
    var = T.reduce_mean(T.mul(centered, centered), axis=1, keepdims=True)
    normed = T.div(centered, T.sqrt(T.add(var, T.constant(np.float32(1e-5)))))
    return T.add(T.mul(normed, gamma), beta)


def encode_context_transformer(model, mat: T.Tensor,
                               return_attention: bool = False):
    _expect(model, "transformer", mat)
    hsz, heads = model.hidden, model.heads
    dh = hsz // heads
    length = mat.shape[0]
    x = T.add(T.matmul(mat, model.in_w), model.in_b)
    x = T.add(x, T.constant(sinusoidal_positions(length, hsz)))
    attention = []
    for layer in range(model.layers):
        p = f"l{layer}_"
        q = T.matmul(x, getattr(model, p + "wq"))
        k = T.matmul(x, getattr(model, p + "wk"))
        v = T.matmul(x, getattr(model, p + "wv"))
        head_outs = []
        for h in range(heads):
            qh = T.narrow(q, 1, h * dh, dh)
            kh = T.narrow(k, 1, h * dh, dh)
            vh = T.narrow(v, 1, h * dh, dh)
            scores = T.mul(T.matmul(qh, T.transpose(kh)),
                           T.constant(np.float32(1.0 / np.sqrt(dh))))
            probs = T.softmax(scores, axis=-1)
            if return_attention:
                attention.append(probs.data.copy())
            head_outs.append(T.matmul(probs, vh))
        attn = T.add(T.matmul(T.concat(head_outs, axis=1),
                              getattr(model, p + "wo")),
                     getattr(model, p + "bo"))
        x = _layer_norm(T.add(x, attn), getattr(model, p + "ln1_g"),
                        getattr(model, p + "ln1_b"))
        ffn = T.add(T.matmul(T.relu(T.add(T.matmul(x, getattr(model, p + "ffn1_w")),
                                          getattr(model, p + "ffn1_b"))),
                             getattr(model, p + "ffn2_w")),
                    getattr(model, p + "ffn2_b"))
        x = _layer_norm(T.add(x, ffn), getattr(model, p + "ln2_g"),
                        getattr(model, p + "ln2_b"))
    last = T.narrow(x, 0, length - 1, 1)
    out = T.reshape(T.add(T.matmul(last, model.out_w), model.out_b),
                    (model.hidden,))
    return (out, attention) if return_attention else out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_ENCODERS = {
    "gru": encode_context_gru,
    "bigru": encode_context_bigru,
    "cnn": encode_context_cnn,
    "transformer": encode_context_transformer,
}


def _expect(model, kind, mat):
    if model.kind != kind:
        raise ValueError(f"encoder is {model.kind!r}, not {kind!r}")
    if mat.ndim != 2 or mat.shape[1] != model.input_dim:
        raise T.ShapeError(f"context matrix {mat.shape} does not match "
                           f"input width {model.input_dim}")
    if mat.shape[0] == 0:
        raise T.ShapeError("cannot encode an empty context")


def encode_context(model, mat: T.Tensor) -> T.Tensor:
    """Encode one instance's (n × D) matrix to (H,)."""
    return _ENCODERS[model.kind](model, mat)


def encode_contexts_batched(model, flat: T.Tensor, lengths) -> T.Tensor:
    """Encode a whole minibatch from one concatenated encoding matrix.

    ``flat`` stacks the instances' matrices in order; ``lengths`` gives each
    instance's row count.  Recurrent kinds run the lockstep masked recurrence;
    other kinds fall back to a per-instance loop.
    """
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    if model.kind == "gru":
        h = _masked_gru(model, "", flat, lengths, offsets, model.hidden,
                        reverse=False)
        return h
    if model.kind == "bigru":
        half = model.hidden // 2
        fwd = _masked_gru(model, "fwd_", flat, lengths, offsets, half,
                          reverse=False)
        bwd = _masked_gru(model, "bwd_", flat, lengths, offsets, half,
                          reverse=True)
        return T.concat([fwd, bwd], axis=1)
    rows = []
    for i, n in enumerate(lengths):
        mat = T.narrow(flat, 0, int(offsets[i]), int(n))
        rows.append(T.reshape(encode_context(model, mat), (1, model.hidden)))
    return T.concat(rows, axis=0)


def _masked_gru(model, prefix, flat, lengths, offsets, hsz, reverse):
    w_i = getattr(model, prefix + "w_input")
    w_h = getattr(model, prefix + "w_hidden")
    b_i = getattr(model, prefix + "b_input")
    b_h = getattr(model, prefix + "b_hidden")
    batch = len(lengths)
    lengths = np.asarray(lengths)
    h = T.constant(np.zeros((batch, hsz), dtype=np.float32))
    for t in range(int(lengths.max())):
        step = np.minimum(t, lengths - 1)
        idx = offsets + (lengths - 1 - step if reverse else step)
        x = T.rows(flat, idx)
        mask = T.constant((t < lengths).astype(np.float32)[:, None])
        h_new = _gru_step(x, h, w_i, w_h, b_i, b_h, hsz)
        # exhausted instances freeze their state
        h = T.add(T.mul(mask, h_new), T.mul(1.0 - mask, h))
    return h
