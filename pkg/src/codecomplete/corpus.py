"""Completion-instance schema, dataset IO, dedup, splitting, synthesis.

A dataset is a list of completion events: the tokens leading up to a "."
member access, the mask of tokens bound to the receiver object, the candidate
member set (produced upstream by static analysis), and the member actually
chosen.  The synthetic generator fabricates corpora with controllable amounts
of the two signals a model can exploit: identifier-subtoken overlap with the
target, and call-sequence patterns on the receiver.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CONTEXT_WINDOW = 80


class DatasetError(ValueError):
    """Invalid dataset content (schema violation, bad record, bad split)."""


@dataclass(frozen=True)
class CompletionInstance:
    id: str
    context_tokens: list[str]
    receiver_mask: list[int]
    candidates: list[str]
    target: str
    library: str | None = None

    def __post_init__(self):
        if self.target not in self.candidates:
            raise DatasetError(
                f"instance {self.id!r}: target {self.target!r} not in candidates")
        if len(set(self.candidates)) != len(self.candidates):
            raise DatasetError(f"instance {self.id!r}: duplicate candidates")
        n = len(self.context_tokens)
        if any(not 0 <= i < n for i in self.receiver_mask):
            raise DatasetError(f"instance {self.id!r}: receiver_mask index out "
                               f"of range for {n} context tokens")
        if n > CONTEXT_WINDOW:
            raise DatasetError(f"instance {self.id!r}: context of {n} tokens "
                               f"exceeds window {CONTEXT_WINDOW}")


@dataclass(frozen=True)
class DatasetSplit:
    train: list[CompletionInstance]
    valid: list[CompletionInstance]
    test: list[CompletionInstance]


def load_dataset(path) -> list[CompletionInstance]:
    """Read a JSON-Lines dataset; every record is validated on ingestion."""
    instances = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}, line {lineno}: {exc}") from exc
            try:
                instances.append(CompletionInstance(
                    id=str(obj["id"]),
                    context_tokens=list(obj["context_tokens"]),
                    receiver_mask=list(obj["receiver_mask"]),
                    candidates=list(obj["candidates"]),
                    target=str(obj["target"]),
                    library=obj.get("library")))
            except KeyError as exc:
                raise DatasetError(
                    f"{path}, line {lineno}: missing field {exc}") from exc
            except DatasetError as exc:
                raise DatasetError(f"{path}, line {lineno}: {exc}") from exc
    return instances


def save_dataset(instances, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps({
                "id": inst.id,
                "context_tokens": inst.context_tokens,
                "receiver_mask": inst.receiver_mask,
                "candidates": inst.candidates,
                "target": inst.target,
                "library": inst.library,
            }) + "\n")
    tmp.replace(path)


def dedup(instances) -> list[CompletionInstance]:
    """Drop exact repeats of (context, candidates, target); first one wins."""
    seen = set()
    kept = []
    for inst in instances:
        key = (tuple(inst.context_tokens), tuple(inst.candidates), inst.target)
        if key not in seen:
            seen.add(key)
            kept.append(inst)
    return kept


def split(instances, ratios=(0.6, 0.2, 0.2), *, group_key, seed) -> DatasetSplit:
    """Partition into train/valid/test, assigning whole groups to one part.

    Group counts per part follow the ratios by largest-remainder rounding;
    every part receives at least one group.
    """
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != 3:
        raise ValueError(f"ratios must be 3 values summing to 1, got {ratios}")
    order: list[str] = []
    by_group: dict[str, list[CompletionInstance]] = {}
    for inst in instances:
        g = group_key(inst)
        if g not in by_group:
            by_group[g] = []
            order.append(g)
        by_group[g].append(inst)
    if len(order) < 3:
        raise DatasetError(f"need at least 3 groups to split, got {len(order)}")

    rng = np.random.default_rng(seed)
    shuffled = [order[i] for i in rng.permutation(len(order))]

    n = len(order)
    exact = [r * n for r in ratios]
    counts = [int(e) for e in exact]
    remainders = sorted(range(3), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in range(n - sum(counts)):
        counts[remainders[i % 3]] += 1
    while min(counts) == 0:  # tiny corpora: keep every part populated
        counts[counts.index(max(counts))] -= 1
        counts[counts.index(min(counts))] += 1

    bounds = np.cumsum(counts)
    assignment = {}
    for pos, g in enumerate(shuffled):
        assignment[g] = 0 if pos < bounds[0] else (1 if pos < bounds[1] else 2)
    parts = ([], [], [])
    for g in order:
        parts[assignment[g]].extend(by_group[g])
    return DatasetSplit(train=parts[0], valid=parts[1], test=parts[2])


def file_group(inst: CompletionInstance) -> str:
    """Default group key: the synthetic file id, namespaced by library."""
    return f"{inst.library}:{inst.id.rsplit('-i', 1)[0]}"


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    n_types: int
    methods_per_type: int
    subtoken_strength: float
    sequential_strength: float
    n_instances: int
    seed: int

    def __post_init__(self):
        if min(self.n_types, self.methods_per_type, self.n_instances) < 1:
            raise ValueError("counts must be positive")
        for s in (self.subtoken_strength, self.sequential_strength):
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"signal strength {s} outside [0,1]")


_SUBTOKEN_POOL = [
    "read", "write", "open", "close", "get", "set", "load", "save", "find",
    "make", "file", "name", "data", "buffer", "stream", "index", "array",
    "list", "table", "row", "col", "item", "value", "key", "text", "line",
    "byte", "char", "node", "path",
]
# fillers are single subtokens disjoint from the method-name pool, so filler
# statements can never fake a subtoken cue
_FILLER_POOL = [
    "alpha", "beta", "gamma", "delta", "omega", "tmp", "acc", "res", "cur",
    "total", "count", "flag", "state", "level", "limit", "step", "pos", "err",
]
_VAR_POOL = ["a1", "b2", "c3", "obj", "src", "dst", "box", "ref"]


def _method_names(rng, spec: SynthSpec) -> list[list[str]]:
    """Per-type method lists; names unique in-corpus and seed-tagged so two
    corpora with different seeds never share a method name (they do share the
    underlying subtoken pool)."""
    used = set()
    types = []
    for _ in range(spec.n_types):
        methods = []
        while len(methods) < spec.methods_per_type:
            k = 2 + int(rng.integers(0, 2))
            picks = rng.choice(len(_SUBTOKEN_POOL), size=k, replace=False)
            name = "_".join(_SUBTOKEN_POOL[j] for j in picks) + f"_v{spec.seed}"
            if name not in used:
                used.add(name)
                methods.append(name)
        types.append(methods)
    return types


def synth_generate(spec: SynthSpec) -> list[CompletionInstance]:
    """Fabricate completion events with tunable signal strengths.

    Targets follow a Zipf(1) law within each receiver type, so a popularity
    baseline has a fixed, known ceiling.  With probability
    ``subtoken_strength`` a variable whose name embeds the target's subtokens
    appears in context; with probability ``sequential_strength`` the receiver
    has already called the target's cyclic predecessor.  A same-typed second
    object always makes an unrelated call, so receiver binding matters.
    """
    rng = np.random.default_rng(spec.seed)
    types = _method_names(rng, spec)
    m = spec.methods_per_type
    zipf = np.array([1.0 / (r + 1) for r in range(m)])
    zipf /= zipf.sum()
    num_files = max(3, spec.n_instances // 50)
    library = f"synthlib{spec.seed}"

    instances = []
    for i in range(spec.n_instances):
        t = int(rng.integers(spec.n_types))
        methods = types[t]
        target_idx = int(rng.choice(m, p=zipf))
        target = methods[target_idx]
        v_pick, w_pick = rng.choice(len(_VAR_POOL), size=2, replace=False)
        v, w = _VAR_POOL[v_pick], _VAR_POOL[w_pick]
        type_token = f"Type{t}"

        middle: list[list[str]] = []
        for _ in range(int(rng.integers(2, 6))):
            f1, f2, f3 = (
                _FILLER_POOL[j]
                for j in rng.choice(len(_FILLER_POOL), size=3, replace=False))
            middle.append([f1, "=", f2, "(", f3, ")"])

        seq_cue = rng.random() < spec.sequential_strength
        pred_idx = (target_idx - 1) % m
        if seq_cue:
            middle.append([v, ".", methods[pred_idx], "(", ")"])
        # the other object's call must not point at the target
        distract_choices = [j for j in range(m)
                            if not (seq_cue and j == pred_idx)]
        d_idx = distract_choices[int(rng.integers(len(distract_choices)))]
        middle.append([w, ".", methods[d_idx], "(", ")"])

        middle = [middle[j] for j in rng.permutation(len(middle))]
        if rng.random() < spec.subtoken_strength:
            f = _FILLER_POOL[int(rng.integers(len(_FILLER_POOL)))]
            cue = [f, "=", "my_" + target]
            # name cues cluster near the completion point, like declarations
            # near first use
            lo = len(middle) // 2
            middle.insert(lo + int(rng.integers(len(middle) - lo + 1)), cue)

        context = [v, "=", type_token, "(", ")"]
        context += [w, "=", type_token, "(", ")"]
        for stmt in middle:
            context += stmt
        context += [v, "."]
        context = context[-CONTEXT_WINDOW:]

        instances.append(CompletionInstance(
            id=f"f{i % num_files}-i{i}",
            context_tokens=context,
            receiver_mask=[k for k, tok in enumerate(context) if tok == v],
            candidates=sorted(methods),
            target=target,
            library=library))
    return instances
