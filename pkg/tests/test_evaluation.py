"""Metric oracles, baselines, size/latency accounting, Pareto fronts."""

import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codecomplete import evaluation as ev
from codecomplete import ranker as rk
from codecomplete import training
from codecomplete.corpus import (CompletionInstance, SynthSpec, file_group,
                                 split, synth_generate)

INF = math.inf


def exact_mrr(ranks):
    """Exact-arithmetic reference: Fraction sum, misses contribute 0."""
    total = Fraction(0)
    for r in ranks:
        if r != INF:
            total += Fraction(1, int(r))
    return total / len(ranks)


def exact_recall(ranks, k):
    return Fraction(sum(1 for r in ranks if r <= k), len(ranks))


class TestRecall:
    def test_worked_example(self):
        assert ev.recall_at_k([1, 6, 3], 5) == pytest.approx(2 / 3)

    def test_k_below_one_rejected(self):
        with pytest.raises(ValueError):
            ev.recall_at_k([1], 0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ev.recall_at_k([], 3)

    def test_misses_never_counted(self):
        assert ev.recall_at_k([INF, INF], 10) == 0.0

    @given(st.lists(st.one_of(st.integers(1, 30), st.just(INF)),
                    min_size=1, max_size=50),
           st.integers(1, 12))
    def test_matches_exact_oracle(self, ranks, k):
        assert ev.recall_at_k(ranks, k) == pytest.approx(
            float(exact_recall(ranks, k)), abs=1e-12)

    @given(st.lists(st.one_of(st.integers(1, 30), st.just(INF)),
                    min_size=1, max_size=50))
    def test_monotone_in_k(self, ranks):
        values = [ev.recall_at_k(ranks, k) for k in range(1, 12)]
        assert values == sorted(values)


class TestMrr:
    def test_worked_example(self):
        assert ev.mrr([1, 2, 4]) == pytest.approx(7 / 12, abs=1e-9)

    def test_repeated_rank(self):
        assert ev.mrr([2, 2]) == pytest.approx(0.5, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ev.mrr([])

    def test_miss_contributes_zero(self):
        assert ev.mrr([1, INF]) == pytest.approx(0.5, abs=1e-12)

    @given(st.lists(st.one_of(st.integers(1, 40), st.just(INF)),
                    min_size=1, max_size=60))
    def test_matches_exact_oracle(self, ranks):
        assert ev.mrr(ranks) == pytest.approx(float(exact_mrr(ranks)),
                                              abs=1e-9)

    @given(st.lists(st.one_of(st.integers(1, 40), st.just(INF)),
                    min_size=1, max_size=60))
    def test_bounded_by_recall_at_one(self, ranks):
        r1 = ev.recall_at_k(ranks, 1)
        m = ev.mrr(ranks)
        assert r1 - 1e-12 <= m <= r1 + (1 - r1) + 1e-12


def make_instance(candidates, target, ident="f0-i0"):
    return CompletionInstance(id=ident, context_tokens=["x", "."],
                              receiver_mask=[0], candidates=candidates,
                              target=target)


class TestPopularityBaseline:
    def test_worked_ordering(self):
        counts = {"dot": 5, "sum": 3, "conj": 1}
        ranker = ev.PopularityRanker(counts=counts)
        assert ranker.order(["conj", "dot", "sum"]) == ["dot", "sum", "conj"]

    def test_unseen_candidates_rank_last(self):
        train = [make_instance(["dot", "sum"], "dot") for _ in range(3)]
        ranker = ev.popularity_baseline(train)
        assert ranker.order(["zebra", "dot", "apple"]) == \
            ["dot", "apple", "zebra"]

    def test_rank_of_target(self):
        train = [make_instance(["dot", "sum"], "dot"),
                 make_instance(["dot", "sum"], "dot"),
                 make_instance(["dot", "sum"], "sum")]
        ranker = ev.popularity_baseline(train)
        assert ranker.rank(make_instance(["dot", "sum"], "sum")) == 2.0

    def test_deterministic(self):
        train = [make_instance(["a", "b", "c"], t) for t in "abcab"]
        r1 = ev.popularity_baseline(train)
        r2 = ev.popularity_baseline(train)
        test = make_instance(["a", "b", "c"], "c")
        assert r1.rank(test) == r2.rank(test)


class TestRandomBaseline:
    def test_singleton_always_rank_one(self):
        insts = [make_instance(["only"], "only") for _ in range(10)]
        assert ev.mrr(ev.random_baseline(insts, seed=1)) == 1.0

    def test_same_seed_same_ranks(self):
        insts = [make_instance(list("abcdef"), "c") for _ in range(20)]
        assert ev.random_baseline(insts, seed=5) == \
            ev.random_baseline(insts, seed=5)

    def test_expected_mrr_matches_harmonic_mean_formula(self):
        # E[MRR] over uniform ranks of M candidates is H(M)/M
        m = 4
        insts = [make_instance(["a", "b", "c", "d"], "b")
                 for _ in range(4000)]
        observed = ev.mrr(ev.random_baseline(insts, seed=9))
        expected = sum(1 / r for r in range(1, m + 1)) / m
        assert observed == pytest.approx(expected, abs=0.02)


class TestModelSize:
    def test_empty_parameter_list(self):
        assert ev.model_size([]) == (0, 0)

    def test_token_embedding_constant(self):
        assert ev.token_embedding_params(10000, 64) == 640000
        assert 640000 * ev.BYTES_PER_PARAMETER == 2560000

    def test_gru_formula(self):
        assert ev.gru_params(64, 64) == 3 * (64 * 64 + 64 * 64 + 2 * 64)

    @pytest.mark.parametrize("token_kind", ["token", "subtoken", "bpe",
                                            "char", "hashed"])
    @pytest.mark.parametrize("context_kind", ["gru", "bigru", "cnn",
                                              "transformer"])
    def test_closed_form_matches_actual_count(self, token_kind, context_kind):
        insts = synth_generate(SynthSpec(2, 3, 0.5, 0.5, 20, seed=1))
        cfg = training.TrainConfig(dim=6, hidden=8, batch_size=4, seed=0,
                                   token_kind=token_kind,
                                   context_kind=context_kind,
                                   hash_modulus=50, merge_budget=20)
        model = training.build_model(cfg, insts)
        count, nbytes = ev.model_size(model)
        assert count == ev.closed_form_param_count(model)
        assert nbytes == 4 * count

    def test_vocab_bias_counted(self):
        insts = synth_generate(SynthSpec(2, 3, 0.5, 0.5, 20, seed=1))
        cfg = training.TrainConfig(dim=6, hidden=8, batch_size=4, seed=0,
                                   provider_kind="vocab",
                                   vocab_provider_size=5)
        model = training.build_model(cfg, insts)
        count, _ = ev.model_size(model)
        assert count == ev.closed_form_param_count(model)


@pytest.fixture(scope="module")
def model_and_data():
    insts = synth_generate(SynthSpec(2, 3, 0.5, 0.5, 20, seed=2))
    cfg = training.TrainConfig(dim=8, hidden=8, batch_size=4, seed=0)
    return training.build_model(cfg, insts), insts


class TestLatency:
    def test_zero_repetitions_rejected(self, model_and_data):
        model, insts = model_and_data
        with pytest.raises(ValueError):
            ev.measure_latency(model, insts, repetitions=0)

    def test_sample_count_and_positivity(self, model_and_data):
        model, insts = model_and_data
        stats = ev.measure_latency(model, insts[:3], repetitions=12,
                                   warmup=2)
        assert stats.samples == 12
        assert stats.mean_ms > 0
        assert stats.p50_ms <= stats.p95_ms <= stats.p99_ms


def brute_force_front(points):
    """Independent O(n²) dominance filter over (recall, size, latency)."""
    keep = []
    for i, (ri, si, li) in enumerate(points):
        dominated = False
        for j, (rj, sj, lj) in enumerate(points):
            if j == i:
                continue
            if rj >= ri and sj <= si and lj <= li and \
                    (rj > ri or sj < si or lj < li):
                dominated = True
                break
        keep.append(not dominated)
    return [p for p, k in zip(points, keep) if k]


class TestParetoFront:
    def test_worked_example(self):
        pts = [(0.9, 10_000_000, 5.0), (0.8, 20_000_000, 9.0)]
        assert ev.pareto_front(pts) == [pts[0]]

    def test_singleton(self):
        assert ev.pareto_front([(0.5, 1, 1.0)]) == [(0.5, 1, 1.0)]

    def test_duplicates_all_survive(self):
        pts = [(0.5, 10, 2.0), (0.5, 10, 2.0)]
        assert ev.pareto_front(pts) == pts

    @given(st.lists(st.tuples(st.floats(0, 1, allow_nan=False),
                              st.integers(1, 100),
                              st.floats(0.1, 50, allow_nan=False)),
                    min_size=1, max_size=40))
    @settings(max_examples=200)
    def test_matches_brute_force_oracle(self, pts):
        assert ev.pareto_front(pts) == brute_force_front(pts)

    @given(st.lists(st.tuples(st.floats(0, 1, allow_nan=False),
                              st.integers(1, 100),
                              st.floats(0.1, 50, allow_nan=False)),
                    min_size=1, max_size=40))
    @settings(max_examples=100)
    def test_idempotent(self, pts):
        front = ev.pareto_front(pts)
        assert ev.pareto_front(front) == front


class TestEvalReport:
    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            ev.EvalReport(recall_at_1=0.5, recall_at_5=0.4, mrr=0.5,
                          param_count=1, size_bytes=4)
        with pytest.raises(ValueError):
            ev.EvalReport(recall_at_1=0.5, recall_at_5=0.9, mrr=0.3,
                          param_count=1, size_bytes=4)

    def test_json_round_trip(self):
        report = ev.EvalReport(recall_at_1=0.5, recall_at_5=0.8, mrr=0.6,
                               param_count=10, size_bytes=40,
                               config={"dim": 4})
        data = json.loads(report.to_json())
        assert data["recall_at_1"] == 0.5
        assert data["config"]["dim"] == 4

    def test_evaluate_model_end_to_end(self):
        insts = synth_generate(SynthSpec(2, 4, 0.8, 0.8, 60, seed=3))
        cfg = training.TrainConfig(dim=8, hidden=8, batch_size=8, seed=0)
        model = training.build_model(cfg, insts)
        report = ev.evaluate_model(model, insts[:20], latency_repetitions=5)
        assert report.recall_at_1 <= report.recall_at_5
        assert report.param_count > 0
        assert report.latency.samples == 5


class TestGeneralization:
    def test_filters_to_heldout_tag(self):
        a = synth_generate(SynthSpec(2, 3, 0.5, 0.5, 30, seed=1))
        b = synth_generate(SynthSpec(2, 3, 0.5, 0.5, 30, seed=2))
        cfg = training.TrainConfig(dim=8, hidden=8, batch_size=8, seed=0)
        model = training.build_model(cfg, a)
        out = ev.generalization_eval(model, a + b, heldout_tag="synthlib2")
        assert out["instances"] == len(b)
        assert 0.0 <= out["random_mrr"] <= 1.0

    def test_unknown_tag_rejected(self):
        a = synth_generate(SynthSpec(2, 3, 0.5, 0.5, 10, seed=1))
        cfg = training.TrainConfig(dim=8, hidden=8, batch_size=8, seed=0)
        model = training.build_model(cfg, a)
        with pytest.raises(ValueError, match="synthlib99"):
            ev.generalization_eval(model, a, heldout_tag="synthlib99")


class TestZeroSignalParity:
    def test_model_tracks_popularity_when_context_is_uninformative(self):
        insts = synth_generate(SynthSpec(1, 8, 0.0, 0.0, 400, seed=6))
        parts = split(insts, group_key=file_group, seed=0)
        cfg = training.TrainConfig(dim=16, hidden=16, batch_size=32,
                                   max_epochs=4, patience=4, seed=0,
                                   learning_rate=2e-3)
        model, _ = training.train(cfg, parts)
        model_mrr = ev.mrr(ev.rank_instances(model, parts.test))
        pop = ev.popularity_baseline(parts.train)
        pop_mrr = ev.mrr([pop.rank(i) for i in parts.test])
        assert abs(model_mrr - pop_mrr) < 0.30
