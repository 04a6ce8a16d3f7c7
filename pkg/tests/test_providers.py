"""Candidate providers: fixed vocab, dataset-supplied, in-batch, scope."""

import pytest

from codecomplete import providers as pv
from codecomplete.corpus import CompletionInstance


def inst(i, target, candidates=None, ctx=("x", ".")):
    cands = list(candidates) if candidates else [target, "zz_other"]
    return CompletionInstance(id=f"g-i{i}", context_tokens=list(ctx),
                              receiver_mask=[], candidates=cands, target=target)


class TestVocabProvider:
    def test_top_frequency_cutoff(self):
        train = [inst(i, t) for i, t in enumerate(
            ["dot"] * 5 + ["sum"] * 3 + ["conj"])]
        provider = pv.VocabProvider.fit(train, max_size=2)
        got = pv.provide_vocab(provider, train[0])
        assert got.candidates == ["dot", "sum"]
        assert got.provenance == "vocab"

    def test_context_independent(self):
        train = [inst(i, t) for i, t in enumerate(["dot", "sum", "dot"])]
        provider = pv.VocabProvider.fit(train, max_size=5)
        a = pv.provide_vocab(provider, inst(7, "dot"))
        b = pv.provide_vocab(provider, inst(8, "sum", ctx=("y", ".")))
        assert a.candidates == b.candidates

    def test_target_can_be_missing(self):
        train = [inst(i, t) for i, t in enumerate(["dot"] * 3 + ["sum"])]
        provider = pv.VocabProvider.fit(train, max_size=1)
        got = pv.provide_vocab(provider, inst(9, "sum"))
        assert "sum" not in got.candidates

    def test_tie_break_lexicographic(self):
        train = [inst(i, t) for i, t in enumerate(["zeta", "beta"])]
        provider = pv.VocabProvider.fit(train, max_size=2)
        assert provider.vocabulary == ["beta", "zeta"]

    def test_index_lookup(self):
        train = [inst(i, t) for i, t in enumerate(["dot", "sum", "dot"])]
        provider = pv.VocabProvider.fit(train, max_size=2)
        assert provider.index("dot") == 0
        assert provider.index("sum") == 1
        assert provider.index("conj") is None


class TestStanProvider:
    def test_verbatim_order_preserved(self):
        i = inst(0, "dot", candidates=["sum", "dot", "all"])
        got = pv.provide_stan(i)
        assert got.candidates == ["sum", "dot", "all"]
        assert got.provenance == "stan"
        assert i.target in got.candidates

    def test_singleton(self):
        got = pv.provide_stan(inst(0, "dot", candidates=["dot"]))
        assert got.candidates == ["dot"]


class TestInBatchProvider:
    def test_worked_example(self):
        batch = [inst(0, "dot"), inst(1, "sum"), inst(2, "dot")]
        sets = pv.provide_inbatch_distractors(batch)
        assert sets[0].candidates == ["dot", "sum"]
        assert sets[1].candidates == ["sum", "dot"]
        assert sets[2].candidates == ["dot", "sum"]
        assert all(s.provenance == "inbatch" for s in sets)

    def test_degenerate_identical_targets(self):
        batch = [inst(i, "dot") for i in range(3)]
        for s in pv.provide_inbatch_distractors(batch):
            assert s.candidates == ["dot"]

    def test_own_target_always_first(self):
        batch = [inst(0, "abc"), inst(1, "zzz")]
        sets = pv.provide_inbatch_distractors(batch)
        assert sets[0].candidates[0] == "abc"
        assert sets[1].candidates[0] == "zzz"

    def test_batch_of_one_rejected(self):
        with pytest.raises(ValueError, match="batch"):
            pv.provide_inbatch_distractors([inst(0, "dot")])


class TestScopeProvider:
    TABLE = {"ndarray": ["dot", "sum"], "DataFrame": ["merge", "join"]}

    def test_bound_receiver(self):
        ctx = ["a1", "=", "ndarray", "(", ")", "a1", "."]
        got = pv.provide_scope(self.TABLE, ctx, "a1")
        assert got.candidates == ["dot", "sum"]
        assert got.provenance == "scope"

    def test_unbound_receiver_union_fallback(self):
        got = pv.provide_scope(self.TABLE, ["b", "."], "b")
        assert got.candidates == sorted(["dot", "sum", "merge", "join"])

    def test_last_binding_wins(self):
        ctx = ["a", "=", "ndarray", "(", ")",
               "a", "=", "DataFrame", "(", ")", "a", "."]
        got = pv.provide_scope(self.TABLE, ctx, "a")
        assert got.candidates == ["merge", "join"]

    def test_import_alias_binding(self):
        ctx = ["import", "ndarray", "as", "nd", "nd", "."]
        got = pv.provide_scope(self.TABLE, ctx, "nd")
        assert got.candidates == ["dot", "sum"]

    def test_empty_table_rejected(self):
        with pytest.raises(ValueError, match="table"):
            pv.provide_scope({}, ["a", "."], "a")


class TestCandidateSetInvariants:
    def test_no_duplicates_enforced(self):
        with pytest.raises(ValueError):
            pv.CandidateSet(candidates=["a", "a"], provenance="stan")

    def test_non_empty_enforced(self):
        with pytest.raises(ValueError):
            pv.CandidateSet(candidates=[], provenance="stan")

    def test_api_table_load(self, tmp_path):
        p = tmp_path / "api.json"
        p.write_text('{"ndarray": ["dot", "sum"]}')
        table = pv.load_api_table(p)
        assert table == {"ndarray": ["dot", "sum"]}
        bad = tmp_path / "bad.json"
        bad.write_text('{"empty": []}')
        with pytest.raises(ValueError, match="empty"):
            pv.load_api_table(bad)
