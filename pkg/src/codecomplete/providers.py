"""Candidate providers: where the set of completions to rank comes from.

Vocab is a fixed frequency-cut list (context-independent, can miss the
target); StAn passes through the dataset's precomputed per-location sets;
in-batch distractors are a cheap training-time stand-in; the scope provider
backs the interactive demo with a declared API table.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass


@dataclass(frozen=True)
class CandidateSet:
    candidates: list[str]
    provenance: str  # vocab | stan | inbatch | scope

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("candidate set must be non-empty")
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError("candidate set contains duplicates")


@dataclass(frozen=True)
class VocabProvider:
    """The V_max most frequent training targets, served for every context."""

    vocabulary: list[str]

    @classmethod
    def fit(cls, train_instances, max_size: int) -> "VocabProvider":
        counts = Counter(inst.target for inst in train_instances)
        ranked = sorted(counts, key=lambda t: (-counts[t], t))
        return cls(vocabulary=ranked[:max_size])

    def index(self, target: str) -> int | None:
        """Position in the vocabulary (= bias index), None when absent."""
        try:
            return self.vocabulary.index(target)
        except ValueError:
            return None


def provide_vocab(provider: VocabProvider, instance) -> CandidateSet:
    return CandidateSet(candidates=list(provider.vocabulary),
                        provenance="vocab")


def provide_stan(instance) -> CandidateSet:
    return CandidateSet(candidates=list(instance.candidates),
                        provenance="stan")


def provide_inbatch_distractors(batch) -> list[CandidateSet]:
    """Own target first, then the other batch members' targets, deduplicated."""
    if len(batch) < 2:
        raise ValueError(f"in-batch distractors need a batch of ≥ 2 instances, "
                         f"got {len(batch)}")
    targets = [inst.target for inst in batch]
    sets = []
    for i, inst in enumerate(batch):
        seen = {inst.target}
        cands = [inst.target]
        for j, t in enumerate(targets):
            if j != i and t not in seen:
                seen.add(t)
                cands.append(t)
        sets.append(CandidateSet(candidates=cands, provenance="inbatch"))
    return sets


def provide_scope(api_table: dict, context_tokens, receiver: str) -> CandidateSet:
    """Heuristic interactive provider over a declared {type: members} table.

    Recognizes ``recv = TypeName (`` and ``import TypeName as recv`` bindings;
    the most recent binding wins; unbound receivers fall back to the union of
    all members.
    """
    if not api_table:
        raise ValueError("api table is empty")
    bound = None
    toks = list(context_tokens)
    for i in range(len(toks)):
        if (i + 2 < len(toks) and toks[i] == receiver and toks[i + 1] == "="
                and toks[i + 2] in api_table):
            bound = toks[i + 2]
        if (toks[i] == "import" and i + 1 < len(toks)
                and toks[i + 1] in api_table):
            alias = toks[i + 3] if (i + 3 < len(toks) and toks[i + 2] == "as") \
                else toks[i + 1]
            if alias == receiver:
                bound = toks[i + 1]
    if bound is not None:
        return CandidateSet(candidates=list(api_table[bound]),
                            provenance="scope")
    union = sorted({m for members in api_table.values() for m in members})
    return CandidateSet(candidates=union, provenance="scope")


def load_api_table(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        table = json.load(fh)
    for key, members in table.items():
        if not members:
            raise ValueError(f"api table entry {key!r} has an empty member list")
    return table
