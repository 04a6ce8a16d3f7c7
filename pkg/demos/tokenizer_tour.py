#!/usr/bin/env python3
"""Identifier tokenization strategies, side by side.

Shows how one identifier is seen by the four unit schemes the engine
supports: whole tokens, camelCase/snake_case subtokens, learned BPE merges,
and hashed subtokens (no stored vocabulary at all).
"""

from collections import Counter

from codecomplete.corpus import SynthSpec, synth_generate
from codecomplete.tokenizers import (HashingScheme, bpe_apply, bpe_train,
                                     feature_hash, split_subtokens,
                                     tokenize_source)

SAMPLES = ["readFileToString", "parse_json_config", "XMLHttpRequest",
           "write_buffer", "maxValue2"]


def main():
    print("== subtoken splitting ==")
    for ident in SAMPLES:
        print(f"  {ident:22s} -> {split_subtokens(ident)}")

    print("\n== byte-pair encoding ==")
    insts = synth_generate(SynthSpec(
        n_types=8, methods_per_type=10, subtoken_strength=0.8,
        sequential_strength=0.5, n_instances=400, seed=3))
    counts = Counter(tok for i in insts for tok in i.context_tokens)
    model = bpe_train(counts, merge_budget=60)
    print(f"  trained {len(model.merges)} merges over "
          f"{len(counts)} distinct tokens")
    for ident in ["my_read_file_v3", "write_buffer", "load_table_row"]:
        print(f"  {ident:22s} -> {bpe_apply(model, ident)}")

    print("\n== feature hashing ==")
    scheme = HashingScheme(modulus=64)
    subs = sorted({s for i in insts[:50]
                   for t in i.context_tokens for s in split_subtokens(t)})
    buckets = Counter(feature_hash(scheme, s) for s in subs)
    clashes = sum(c - 1 for c in buckets.values() if c > 1)
    print(f"  {len(subs)} distinct subtokens into {scheme.modulus} buckets: "
          f"{clashes} collisions")
    for s in subs[:5]:
        print(f"  {s:12s} -> bucket {feature_hash(scheme, s)}")

    print("\n== source tokenization ==")
    snippet = "row = table.get_row(index)\nvalue = row.read_value()"
    print(f"  {snippet!r}")
    print(f"  -> {tokenize_source(snippet)}")


if __name__ == "__main__":
    main()
