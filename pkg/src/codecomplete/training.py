"""Joint training of the encoders and ranker head.

Adam with global-norm gradient clipping, seeded minibatch shuffling, and
early stopping on validation mean reciprocal rank with best-epoch restore.
"""

from __future__ import annotations

import gc
from dataclasses import asdict, dataclass

import numpy as np

from . import ranker as rk
from . import tensor as T
from .context_encoders import KINDS as CONTEXT_KINDS
from .context_encoders import fit_context_encoder
from .corpus import CONTEXT_WINDOW, DatasetSplit
from .providers import VocabProvider
from .token_encoders import KINDS as TOKEN_KINDS
from .token_encoders import fit_token_encoder

CLIP_NORM = 5.0


@dataclass(frozen=True)
class TrainConfig:
    dim: int
    hidden: int
    batch_size: int
    learning_rate: float = 1e-3
    max_epochs: int = 10
    patience: int = 3
    seed: int = 0
    token_kind: str = "subtoken"
    context_kind: str = "gru"
    provider_kind: str = "stan"
    annotated: bool = False
    context_window: int = CONTEXT_WINDOW
    vocab_size: int = 4096
    merge_budget: int = 200
    hash_modulus: int = 2500
    alphabet_size: int = 64
    channels: int = None
    layers: int = 1
    heads: int = None
    vocab_provider_size: int = 1000

    def __post_init__(self):
        for name in ("dim", "hidden", "batch_size", "max_epochs", "patience",
                     "context_window", "vocab_size", "hash_modulus",
                     "alphabet_size", "layers", "vocab_provider_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.merge_budget < 0:
            raise ValueError("merge_budget must be non-negative")
        if self.token_kind not in TOKEN_KINDS:
            raise ValueError(f"unknown token encoder kind "
                             f"{self.token_kind!r}")
        if self.context_kind not in CONTEXT_KINDS:
            raise ValueError(f"unknown context encoder kind "
                             f"{self.context_kind!r}")
        if self.provider_kind not in rk.PROVIDER_KINDS:
            raise ValueError(f"unknown provider kind "
                             f"{self.provider_kind!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def build_model(config: TrainConfig, train_instances) -> rk.CompletionModel:
    """Fit the tokenizer artifacts and initialize all parameters."""
    if not train_instances:
        raise ValueError("cannot build a model from an empty train split")
    rng = np.random.default_rng(config.seed)
    token_encoder = fit_token_encoder(
        config.token_kind, config.dim, train_instances, rng=rng,
        vocab_size=config.vocab_size, merge_budget=config.merge_budget,
        hash_modulus=config.hash_modulus, alphabet_size=config.alphabet_size,
        channels=config.channels)
    input_dim = config.dim + 1 if config.annotated else config.dim
    context_encoder = fit_context_encoder(
        config.context_kind, config.hidden, input_dim, rng=rng,
        layers=config.layers, heads=config.heads)
    w = T.parameter(rng.uniform(-0.05, 0.05,
                                (config.hidden, config.dim))
                    .astype(np.float32))
    vocab_provider, bias = None, None
    if config.provider_kind == "vocab":
        vocab_provider = VocabProvider.fit(train_instances,
                                           config.vocab_provider_size)
        bias = T.parameter(np.zeros((len(vocab_provider.vocabulary), 1),
                                    dtype=np.float32))
    return rk.CompletionModel(
        token_encoder=token_encoder, context_encoder=context_encoder,
        ranker=rk.RankerModel(w=w, bias=bias),
        provider_kind=config.provider_kind, vocab_provider=vocab_provider,
        annotated=config.annotated, config=config.to_dict())


def trainable_instances(model: rk.CompletionModel, instances) -> list:
    """Drop instances the provider cannot supply the target for."""
    if model.provider_kind != "vocab":
        return list(instances)
    return [i for i in instances
            if model.vocab_provider.index(i.target) is not None]


class Adam:
    """Adam optimizer over named parameter tensors."""

    def __init__(self, params, learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._m = {n: np.zeros_like(p.data) for n, p in self.params}
        self._v = {n: np.zeros_like(p.data) for n, p in self.params}

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (self.learning_rate / b1c) * m \
                / (np.sqrt(v / b2c) + self.eps)
            p.data -= update


def clip_global_norm(params, max_norm: float):
    """Rescale all gradients in place so their joint norm is ≤ max_norm."""
    total = 0.0
    for _, p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        scale = np.float32(max_norm / norm)
        for _, p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


def _default_validation(model, valid):
    from .evaluation import mrr, rank_instances
    if not valid:
        return 0.0
    return mrr(rank_instances(model, valid))


def train(config: TrainConfig, parts: DatasetSplit, validation_fn=None,
          log_fn=None):
    """Train a model; returns (model, history).

    ``history`` holds one dict per completed epoch with keys ``epoch``,
    ``train_loss`` and ``valid_mrr``.  The returned model carries the
    parameters of the epoch with the best validation MRR.

    The heap that exists when training starts (datasets, other resident
    models) is frozen for the duration: graph construction allocates enough
    to trigger full collections constantly, and letting those scan a large
    static heap multiplies wall-clock time without freeing anything.
    """
    if not parts.train:
        raise ValueError("train split is empty")
    if validation_fn is None:
        validation_fn = _default_validation
    model = build_model(config, parts.train)
    train_set = trainable_instances(model, parts.train)
    if not train_set:
        raise ValueError("train split has no instances the provider "
                         "can represent")
    params = model.parameters()
    opt = Adam(params, learning_rate=config.learning_rate)
    shuffle_rng = np.random.default_rng([config.seed, 1])

    history = []
    best = {"mrr": -np.inf, "epoch": 0, "state": None}
    bad_epochs = 0
    gc.collect()
    gc.freeze()
    try:
        for epoch in range(1, config.max_epochs + 1):
            order = shuffle_rng.permutation(len(train_set))
            losses = []
            for start in range(0, len(order), config.batch_size):
                batch = [train_set[i] for i in order[start:start +
                                                     config.batch_size]]
                if model.provider_kind == "inbatch" and len(batch) < 2:
                    continue  # distractors need company
                loss = rk.batch_loss(model, batch)
                T.backward(loss)
                clip_global_norm(params, CLIP_NORM)
                opt.step()
                losses.append(loss.item())
            train_loss = float(np.mean(losses)) if losses else float("nan")
            valid_mrr = float(validation_fn(model, parts.valid))
            history.append({"epoch": epoch, "train_loss": train_loss,
                            "valid_mrr": valid_mrr})
            if log_fn is not None:
                log_fn(f"epoch {epoch} train_loss {train_loss:.4f} "
                       f"valid_mrr {valid_mrr:.4f}")
            if valid_mrr > best["mrr"]:
                best = {"mrr": valid_mrr, "epoch": epoch,
                        "state": {n: p.data.copy() for n, p in params}}
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= config.patience:
                    break
    finally:
        gc.unfreeze()
    if best["state"] is not None:
        for name, p in params:
            p.data[...] = best["state"][name]
    return model, history
