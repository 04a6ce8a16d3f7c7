"""Ranking metrics, baselines, size and latency accounting, Pareto fronts.

Ranks are 1-based; a target missing from its candidate list ranks at
``math.inf`` so it counts as a miss in every metric.
"""

from __future__ import annotations

import gc
import json
import math
import statistics
import time
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ranker as rk

# ---------------------------------------------------------------------------
# rank-based metrics
# ---------------------------------------------------------------------------


def rank_of(suggestions: rk.RankedSuggestions, target: str) -> float:
    for position, (name, _) in enumerate(suggestions.items, start=1):
        if name == target:
            return float(position)
    return math.inf


def recall_at_k(ranks, k: int) -> float:
    if k < 1:
        raise ValueError("k must be at least 1")
    ranks = list(ranks)
    if not ranks:
        raise ValueError("rank list must not be empty")
    return sum(1 for r in ranks if r <= k) / len(ranks)


def mrr(ranks) -> float:
    """Mean reciprocal rank; misses (rank ∞) contribute zero."""
    ranks = list(ranks)
    if not ranks:
        raise ValueError("rank list must not be empty")
    total = 0.0
    for r in ranks:
        total += 1.0 / r
    return total / len(ranks)


def rank_instances(model: rk.CompletionModel, instances,
                   provider_kind: str = None) -> list:
    """Rank each instance's target under the model.

    The in-batch provider only exists at training time, so models trained
    with it are ranked against the dataset candidate lists.
    """
    kind = provider_kind
    if kind is None:
        kind = "vocab" if model.provider_kind == "vocab" else "stan"
    ranks = []
    for inst in instances:
        if kind == "vocab":
            cands = list(model.vocab_provider.vocabulary)
        else:
            cands = list(inst.candidates)
        enc = rk.encode_instance(model, inst.context_tokens,
                                 inst.receiver_mask)
        ranks.append(rank_of(rk.score(model, enc, cands), inst.target))
    return ranks


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PopularityRanker:
    """Orders candidates by training-set target frequency, ties by name."""

    counts: dict

    def order(self, candidates) -> list:
        return sorted(candidates,
                      key=lambda c: (-self.counts.get(c, 0), c))

    def rank(self, instance) -> float:
        ordered = self.order(instance.candidates)
        try:
            return float(ordered.index(instance.target) + 1)
        except ValueError:
            return math.inf


def popularity_baseline(train_instances) -> PopularityRanker:
    return PopularityRanker(counts=dict(Counter(i.target
                                                for i in train_instances)))


def random_baseline(instances, seed: int = 0) -> list:
    """Target ranks under a uniformly random shuffle of each candidate list."""
    rng = np.random.default_rng(seed)
    ranks = []
    for inst in instances:
        perm = rng.permutation(len(inst.candidates))
        idx = inst.candidates.index(inst.target)
        ranks.append(float(np.nonzero(perm == idx)[0][0] + 1))
    return ranks


# ---------------------------------------------------------------------------
# size accounting
# ---------------------------------------------------------------------------

BYTES_PER_PARAMETER = 4  # float32


def model_size(model) -> tuple:
    """(parameter count, bytes) by walking the actual tensors."""
    params = model.parameters() if hasattr(model, "parameters") else model
    count = sum(int(p.data.size) for _, p in params)
    return count, count * BYTES_PER_PARAMETER


def token_embedding_params(vocab_size: int, dim: int) -> int:
    return vocab_size * dim


def char_encoder_params(onehot_width: int, channels: int, dim: int) -> int:
    conv3 = 3 * onehot_width * channels + channels
    conv5 = 5 * onehot_width * channels + channels
    proj = 2 * channels * dim + dim
    return conv3 + conv5 + proj


def gru_params(input_dim: int, hidden: int) -> int:
    return 3 * (input_dim * hidden + hidden * hidden + 2 * hidden)


def bigru_params(input_dim: int, hidden: int) -> int:
    half = hidden // 2
    return 2 * gru_params(input_dim, half)


def cnn_params(input_dim: int, hidden: int) -> int:
    return (3 * input_dim * hidden + hidden) + (3 * hidden * hidden + hidden)


def transformer_params(input_dim: int, hidden: int, layers: int) -> int:
    proj_in = input_dim * hidden + hidden
    per_layer = (4 * hidden * hidden + hidden      # attention + out bias
                 + 2 * hidden                      # first layer norm
                 + hidden * 4 * hidden + 4 * hidden
                 + 4 * hidden * hidden + hidden    # feed-forward
                 + 2 * hidden)                     # second layer norm
    proj_out = hidden * hidden + hidden
    return proj_in + layers * per_layer + proj_out


def closed_form_param_count(model: rk.CompletionModel) -> int:
    """Parameter count from the architecture dimensions alone.

    Independent of ``model_size``: nothing here touches a tensor shape, so
    the two routes cross-check each other.
    """
    te = model.token_encoder
    if te.kind == "char":
        total = char_encoder_params(te.onehot_width, te.channels, te.dim)
    elif te.kind == "bpe":
        total = token_embedding_params(len(te.unit_ids), te.dim)
    elif te.kind == "hashed":
        total = token_embedding_params(te.hashing.modulus, te.dim)
    else:  # token, subtoken
        total = token_embedding_params(len(te.vocab), te.dim)

    ce = model.context_encoder
    formulas = {"gru": gru_params, "bigru": bigru_params, "cnn": cnn_params}
    if ce.kind == "transformer":
        total += transformer_params(ce.input_dim, ce.hidden, ce.layers)
    else:
        total += formulas[ce.kind](ce.input_dim, ce.hidden)

    total += ce.hidden * te.dim  # ranker projection
    if model.ranker.bias is not None:
        total += len(model.vocab_provider.vocabulary)
    return total


# ---------------------------------------------------------------------------
# latency
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatencyStats:
    mean_ms: float
    std_ms: float
    p50_ms: float
    p95_ms: float
    p99_ms: float
    samples: int


def measure_latency(model: rk.CompletionModel, instances,
                    repetitions: int = 100, warmup: int = 10) -> LatencyStats:
    """Wall-clock per-suggestion latency, one instance per measurement.

    Candidate lists are fixed before the clock starts, so provider time is
    excluded; every measurement encodes from scratch (no caching).

    The caller's pre-existing heap is frozen for the duration (a serving
    process holds one model, not an evaluation harness's corpora), so cyclic
    collections during the loop only scan allocations the scoring path itself
    makes; those still pay their usual cost.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    if not instances:
        raise ValueError("need at least one instance to measure")
    prepared = [(i.context_tokens, i.receiver_mask, list(i.candidates))
                for i in instances]
    samples = []
    gc.collect()
    gc.freeze()
    try:
        for r in range(warmup + repetitions):
            tokens, mask, cands = prepared[r % len(prepared)]
            start = time.perf_counter()
            enc = rk.encode_instance(model, tokens, mask)
            rk.score(model, enc, cands)
            elapsed = time.perf_counter() - start
            if r >= warmup:
                samples.append(elapsed * 1000.0)
    finally:
        gc.unfreeze()
    p50, p95, p99 = np.percentile(samples, [50, 95, 99])
    return LatencyStats(
        mean_ms=statistics.fmean(samples),
        std_ms=statistics.stdev(samples) if len(samples) > 1 else 0.0,
        p50_ms=float(p50), p95_ms=float(p95), p99_ms=float(p99),
        samples=len(samples))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    recall_at_1: float
    recall_at_5: float
    mrr: float
    param_count: int
    size_bytes: int
    latency: LatencyStats = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.recall_at_1 <= self.recall_at_5 <= 1.0):
            raise ValueError("recall@1 must not exceed recall@5")
        lower, upper = self.recall_at_1, \
            self.recall_at_1 + (1.0 - self.recall_at_1)
        if not (lower - 1e-9 <= self.mrr <= upper + 1e-9):
            raise ValueError("MRR outside its recall@1 bounds")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def evaluate_model(model: rk.CompletionModel, instances,
                   provider_kind: str = None,
                   latency_repetitions: int = 0) -> EvalReport:
    ranks = rank_instances(model, instances, provider_kind)
    count, size_bytes = model_size(model)
    latency = None
    if latency_repetitions > 0:
        latency = measure_latency(model, instances,
                                  repetitions=latency_repetitions)
    return EvalReport(
        recall_at_1=recall_at_k(ranks, 1), recall_at_5=recall_at_k(ranks, 5),
        mrr=mrr(ranks), param_count=count, size_bytes=size_bytes,
        latency=latency, config=dict(model.config))


def generalization_eval(model: rk.CompletionModel, instances,
                        heldout_tag: str, seed: int = 0) -> dict:
    """Evaluate only on the held-out library, with a random-order floor."""
    test = [i for i in instances if i.library == heldout_tag]
    if not test:
        raise ValueError(f"no instances carry library tag {heldout_tag!r}")
    report = evaluate_model(model, test)
    return {"report": report,
            "random_mrr": mrr(random_baseline(test, seed)),
            "heldout_tag": heldout_tag, "instances": len(test)}


# ---------------------------------------------------------------------------
# Pareto front
# ---------------------------------------------------------------------------


def _objectives(point):
    if hasattr(point, "recall_at_5"):
        return (point.recall_at_5, point.size_bytes, point.latency_ms)
    return (point[0], point[1], point[2])


def dominates(a, b) -> bool:
    """True when ``a`` is at least as good everywhere and better somewhere.

    Quality rises with recall@5 and falls with size and latency.
    """
    ra, sa, la = _objectives(a)
    rb, sb, lb = _objectives(b)
    return (ra >= rb and sa <= sb and la <= lb
            and (ra > rb or sa < sb or la < lb))


def pareto_front(points) -> list:
    """Points not strictly dominated by any other; duplicates all survive."""
    points = list(points)
    return [p for p in points
            if not any(dominates(q, p) for q in points)]
