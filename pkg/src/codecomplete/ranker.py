"""Candidate scoring and ranking.

A completion model scores each candidate method name by the dot product
between a projected context encoding and the candidate's token encoding,
optionally plus a learned per-candidate prior when the candidate source is
a closed vocabulary.  Softmax over a candidate set yields probabilities.

Training flattens a whole minibatch of variable-size candidate sets into one
candidate list plus a segment index, so the softmax and the loss are computed
without padding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .context_encoders import ContextEncoderModel, encode_context, \
    encode_contexts_batched
from .providers import VocabProvider, provide_inbatch_distractors
from .token_encoders import TokenEncoderModel, annotate_rows, encode_tokens

PROVIDER_KINDS = ("stan", "vocab", "inbatch")


@dataclass
class RankedSuggestions:
    """Candidates with probabilities, best first, ties in name order."""

    items: list  # [(candidate, probability), ...]

    def __post_init__(self):
        if not self.items:
            raise ValueError("suggestion list must not be empty")
        total = sum(p for _, p in self.items)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {total!r}, expected 1")
        for (a, pa), (b, pb) in zip(self.items, self.items[1:]):
            if pa < pb:
                raise ValueError("probabilities must be non-increasing")
            if pa == pb and a > b:
                raise ValueError("tied candidates must be in name order")

    def names(self):
        return [name for name, _ in self.items]


@dataclass
class RankerModel:
    w: T.Tensor                 # hidden → embedding-space projection
    bias: T.Tensor = None       # (V, 1) per-vocabulary-entry prior, else None

    def parameters(self):
        out = [("w", self.w)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out


@dataclass
class CompletionModel:
    """Token encoder, context encoder and ranker head, trained jointly."""

    token_encoder: TokenEncoderModel
    context_encoder: ContextEncoderModel
    ranker: RankerModel
    provider_kind: str
    vocab_provider: VocabProvider = None
    annotated: bool = False
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provider_kind not in PROVIDER_KINDS:
            raise ValueError(f"unknown provider kind {self.provider_kind!r}")
        if self.provider_kind == "vocab":
            if self.vocab_provider is None or self.ranker.bias is None:
                raise ValueError("vocabulary provider requires a fitted "
                                 "vocabulary and a bias vector")
        elif self.ranker.bias is not None:
            raise ValueError("per-candidate bias is only defined for the "
                             "vocabulary provider")

    def parameters(self):
        out = [("te." + n, p) for n, p in self.token_encoder.parameters()]
        out += [("ce." + n, p) for n, p in self.context_encoder.parameters()]
        out += [("rk." + n, p) for n, p in self.ranker.parameters()]
        return out


@dataclass(frozen=True)
class SegmentedCandidateBatch:
    """A minibatch's candidate sets flattened into one list.

    ``origins[j]`` is the instance owning flat candidate ``j``;
    ``target_positions[i]`` is the flat position of instance ``i``'s target.
    """

    candidates: list
    origins: np.ndarray
    target_positions: list


def build_segmented_batch(instances, candidate_sets) -> SegmentedCandidateBatch:
    if len(instances) != len(candidate_sets):
        raise ValueError("one candidate set per instance required")
    flat, origins, targets = [], [], []
    for i, (inst, cands) in enumerate(zip(instances, candidate_sets)):
        if not cands:
            raise ValueError(f"instance {inst.id}: empty candidate set")
        try:
            pos = cands.index(inst.target)
        except ValueError:
            raise ValueError(f"instance {inst.id}: target {inst.target!r} "
                             f"missing from its candidate set") from None
        targets.append(len(flat) + pos)
        origins.extend([i] * len(cands))
        flat.extend(cands)
    return SegmentedCandidateBatch(candidates=flat,
                                   origins=np.asarray(origins, dtype=np.intp),
                                   target_positions=targets)


def candidate_sets_for(model: CompletionModel, instances) -> list:
    """Candidate lists per instance, according to the model's provider."""
    kind = model.provider_kind
    if kind == "stan":
        return [list(inst.candidates) for inst in instances]
    if kind == "vocab":
        return [list(model.vocab_provider.vocabulary) for _ in instances]
    if kind == "inbatch":
        return [cs.candidates for cs in provide_inbatch_distractors(instances)]
    raise ValueError(f"unknown provider kind {kind!r}")


def encode_instance(model: CompletionModel, context_tokens,
                    receiver_mask) -> T.Tensor:
    """Encode one instance's context window to a hidden vector."""
    enc = encode_tokens(model.token_encoder, list(context_tokens))
    if model.annotated:
        enc = annotate_rows(enc, receiver_mask)
    return encode_context(model.context_encoder, enc)


def encode_context_batch(model: CompletionModel, instances) -> T.Tensor:
    """Encode a minibatch of contexts to a (batch × hidden) matrix."""
    flat_tokens, lengths, mask = [], [], []
    for inst in instances:
        for j in inst.receiver_mask:
            mask.append(len(flat_tokens) + j)
        flat_tokens.extend(inst.context_tokens)
        lengths.append(len(inst.context_tokens))
    enc = encode_tokens(model.token_encoder, flat_tokens)
    if model.annotated:
        enc = annotate_rows(enc, mask)
    return encode_contexts_batched(model.context_encoder, enc, lengths)


def _bias_indices(model: CompletionModel, candidates) -> list:
    idx = []
    for cand in candidates:
        i = model.vocab_provider.index(cand)
        if i is None:
            raise ValueError(f"candidate {cand!r} outside the provider "
                             f"vocabulary has no bias entry")
        idx.append(i)
    return idx


def batch_loss_from_encodings(model: CompletionModel, instances,
                              context_encodings: T.Tensor,
                              candidate_sets) -> T.Tensor:
    """Mean cross-entropy of the targets under the flattened softmax."""
    if model.provider_kind != "vocab":
        assert model.ranker.bias is None, \
            "bias must stay zero outside the vocabulary provider"
    batch = build_segmented_batch(instances, candidate_sets)

    # encode each distinct candidate once, then gather into flat order
    unique, lookup = [], {}
    flat_idx = np.empty(len(batch.candidates), dtype=np.intp)
    for j, cand in enumerate(batch.candidates):
        if cand not in lookup:
            lookup[cand] = len(unique)
            unique.append(cand)
        flat_idx[j] = lookup[cand]
    cand_enc = encode_tokens(model.token_encoder, unique)
    flat_enc = T.rows(cand_enc, flat_idx)

    proj = T.matmul(context_encodings, model.ranker.w)        # (B, D)
    per_cand_ctx = T.rows(proj, batch.origins)                # (ΣM, D)
    logits = T.reduce_sum(per_cand_ctx * flat_enc, axis=1)    # (ΣM,)
    if model.ranker.bias is not None:
        prior = T.rows(model.ranker.bias,
                       _bias_indices(model, batch.candidates))
        logits = logits + T.reshape(prior, (len(batch.candidates),))

    seg = T.SegmentIndex(batch.origins, len(instances))
    log_probs = T.segment_log_softmax(logits, seg)
    picked = T.rows(T.reshape(log_probs, (-1, 1)), batch.target_positions)
    return T.neg(T.reduce_mean(picked))


def batch_loss(model: CompletionModel, instances) -> T.Tensor:
    if not instances:
        raise ValueError("batch must not be empty")
    ctx = encode_context_batch(model, instances)
    sets = candidate_sets_for(model, instances)
    return batch_loss_from_encodings(model, instances, ctx, sets)


def score(model: CompletionModel, context_encoding: T.Tensor,
          candidates) -> RankedSuggestions:
    """Rank a candidate list against an already-encoded context."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidate list must not be empty")
    with T.no_grad():
        proj = T.matmul(T.reshape(context_encoding, (1, -1)), model.ranker.w)
        cand = encode_tokens(model.token_encoder, candidates)
        logits = T.matmul(proj, T.transpose(cand)).data[0].astype(np.float64)
    if model.ranker.bias is not None:
        for j, c in enumerate(candidates):
            i = model.vocab_provider.index(c)
            if i is not None:
                logits[j] += float(model.ranker.bias.data[i, 0])
    probs = np.exp(logits - logits.max())
    probs /= probs.sum()
    order = sorted(zip(candidates, probs), key=lambda kv: (-kv[1], kv[0]))
    return RankedSuggestions(items=[(c, float(p)) for c, p in order])


def complete(model: CompletionModel, context_tokens, receiver_mask,
             candidates, top_k: int = None) -> RankedSuggestions:
    """Encode, score and optionally truncate to the top-k suggestions."""
    enc = encode_instance(model, context_tokens, receiver_mask)
    out = score(model, enc, candidates)
    if top_k is not None:
        out = truncate_suggestions(out, top_k)
    return out


def truncate_suggestions(suggestions: RankedSuggestions,
                         top_k: int) -> RankedSuggestions:
    """Keep the best ``top_k`` entries, renormalizing the probabilities."""
    if top_k < 1:
        raise ValueError("top_k must be positive")
    kept = suggestions.items[:top_k]
    total = sum(p for _, p in kept)
    return RankedSuggestions(items=[(c, p / total) for c, p in kept])
