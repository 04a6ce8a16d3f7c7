#!/usr/bin/env python3
"""Run the completion service in-process and talk to it over HTTP.

Trains a small model, mounts it on the threaded server, then plays the role
of an editor: it sends raw source text ending in a receiver + ".", plus an
API table to derive candidates from, and prints the ranked suggestions.
"""

import json
import threading
import urllib.request

from codecomplete.corpus import SynthSpec, file_group, split, synth_generate
from codecomplete.service import create_server
from codecomplete.training import TrainConfig, train


def call(port, route, payload=None):
    url = f"http://127.0.0.1:{port}{route}"
    if payload is None:
        with urllib.request.urlopen(url, timeout=10) as resp:
            return json.load(resp)
    req = urllib.request.Request(
        url, data=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req, timeout=10) as resp:
        return json.load(resp)


def main():
    insts = synth_generate(SynthSpec(
        n_types=6, methods_per_type=8, subtoken_strength=0.9,
        sequential_strength=0.7, n_instances=1200, seed=21))
    parts = split(insts, group_key=file_group, seed=0)
    model, _ = train(TrainConfig(dim=16, hidden=16, batch_size=64,
                                 learning_rate=5e-3, max_epochs=2, patience=2,
                                 seed=0), parts)

    # candidates for two fake receiver types, as an editor plugin would
    # derive them from static analysis
    api_table = {"Reader": sorted({i.target for i in insts})[:8],
                 "Writer": sorted({i.target for i in insts})[8:16]}

    server = create_server(model, port=0, api_table=api_table)
    port = server.server_address[1]
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    print(f"serving on 127.0.0.1:{port}")

    try:
        health = call(port, "/health")
        print(f"health: {health['status']}, model {health['model']}, "
              f"{health['param_count']} params\n")

        inst = parts.test[0]
        body = {"context": inst.context_tokens, "receiver": "Reader",
                "candidates": inst.candidates, "top_k": 3}
        out = call(port, "/complete", body)
        print("explicit candidate list ->")
        for name, prob in out["suggestions"]:
            print(f"  {prob:.3f}  {name}")
        print(f"  ({out['latency_ms']:.1f} ms)\n")

        source = "r = open_stream(path)\nReader ."
        out = call(port, "/complete", {"context": source,
                                       "receiver": "Reader"})
        print(f"source text {source!r} with API-table candidates ->")
        for name, prob in out["suggestions"]:
            print(f"  {prob:.3f}  {name}")
    finally:
        server.shutdown()
        thread.join(timeout=5)


if __name__ == "__main__":
    main()
