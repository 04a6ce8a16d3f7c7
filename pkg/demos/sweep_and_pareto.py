#!/usr/bin/env python3
"""Sweep a few model sizes and read the accuracy/size/latency trade-off.

Trains three small configurations on the same corpus, evaluates each, and
prints which ones sit on the Pareto front over (recall@5, size, latency).
The CLI `codecomplete sweep` does the same against config files.
"""

from codecomplete.corpus import SynthSpec, file_group, split, synth_generate
from codecomplete.evaluation import evaluate_model, pareto_front
from codecomplete.training import TrainConfig, train


def main():
    insts = synth_generate(SynthSpec(
        n_types=8, methods_per_type=8, subtoken_strength=0.9,
        sequential_strength=0.7, n_instances=1500, seed=13))
    parts = split(insts, group_key=file_group, seed=0)

    grid = [dict(dim=8, hidden=8), dict(dim=16, hidden=16),
            dict(dim=16, hidden=16, context_kind="cnn")]
    reports = []
    for overrides in grid:
        config = TrainConfig(batch_size=64, learning_rate=5e-3, max_epochs=2,
                             patience=2, seed=0, **overrides)
        print(f"training {overrides} ...")
        model, _ = train(config, parts)
        reports.append(evaluate_model(model, parts.test,
                                      latency_repetitions=30))

    points = [(rep.recall_at_5, rep.size_bytes, rep.latency.p95_ms, i)
              for i, rep in enumerate(reports)]
    front = {p[3] for p in pareto_front(points)}
    print(f"\n{'config':36s} {'recall@5':>9s} {'bytes':>9s} {'p95 ms':>7s}")
    for i, (overrides, rep) in enumerate(zip(grid, reports)):
        star = "*" if i in front else " "
        label = ",".join(f"{k}={v}" for k, v in overrides.items())
        print(f"{star} {label:34s} {rep.recall_at_5:9.3f} "
              f"{rep.size_bytes:9d} {rep.latency.p95_ms:7.2f}")
    print("\n* = on the Pareto front (nothing beats it on every axis)")


if __name__ == "__main__":
    main()
