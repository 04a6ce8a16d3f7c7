"""Command-line interface.

Subcommands: synth, train, eval, sweep, complete, serve.  Every artifact is
written atomically (temp file + rename) so a failed run leaves nothing
partial behind; all randomness flows from --seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import fields

from . import ranker as rk
from .corpus import (SynthSpec, file_group, load_dataset, save_dataset,
                     split, synth_generate)
from .evaluation import evaluate_model, model_size, pareto_front
from .model_io import load_model, model_id, save_model
from .providers import load_api_table
from .service import (DEFAULT_TOP_K, RequestProblem, create_server,
                      resolve_request)
from .training import TrainConfig, train

_TRAIN_FIELDS = {f.name for f in fields(TrainConfig)}
_SYNTH_FIELDS = {f.name for f in fields(SynthSpec)}


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config_args(entries) -> list:
    """Each --config occurrence contributes one configuration.

    An occurrence is either comma-separated key=value pairs or a path to a
    JSON file; a file holding a list contributes one configuration per
    element, which is how sweeps take their grid.
    """
    out = []
    for entry in entries or []:
        if "=" not in entry:
            if not os.path.exists(entry):
                raise ValueError(f"config entry {entry!r} is neither "
                                 f"key=value nor an existing file")
            with open(entry, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
            if isinstance(loaded, list):
                out.extend(loaded)
            elif isinstance(loaded, dict):
                out.append(loaded)
            else:
                raise ValueError(f"config file {entry} must hold an object "
                                 f"or a list of objects")
            continue
        options = {}
        for pair in entry.split(","):
            key, eq, value = pair.partition("=")
            if not key or not eq:
                raise ValueError(f"bad config entry {pair!r}; "
                                 f"expected key=value")
            options[key.strip()] = _parse_value(value.strip())
        out.append(options)
    return out


def _single_config(entries) -> dict:
    configs = parse_config_args(entries)
    if len(configs) > 1:
        raise ValueError("this command takes a single configuration")
    return configs[0] if configs else {}


def make_train_config(options: dict, seed) -> TrainConfig:
    unknown = set(options) - _TRAIN_FIELDS
    if unknown:
        raise ValueError(f"unknown training option(s): "
                         f"{', '.join(sorted(unknown))}")
    merged = dict(dim=32, hidden=32, batch_size=32)
    merged.update(options)
    if seed is not None:
        merged["seed"] = seed
    return TrainConfig(**merged)


def make_synth_spec(options: dict, seed) -> SynthSpec:
    unknown = set(options) - _SYNTH_FIELDS
    if unknown:
        raise ValueError(f"unknown corpus option(s): "
                         f"{', '.join(sorted(unknown))}")
    merged = dict(n_types=5, methods_per_type=10, subtoken_strength=0.8,
                  sequential_strength=0.8, n_instances=1000, seed=0)
    merged.update(options)
    if seed is not None:
        merged["seed"] = seed
    return SynthSpec(**merged)


def _write_atomic(path, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _select_split(instances, part: str, seed: int):
    if part == "all":
        return instances
    parts = split(instances, group_key=file_group, seed=seed)
    return getattr(parts, part)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = make_synth_spec(_single_config(args.config), args.seed)
    instances = synth_generate(spec)
    save_dataset(instances, args.out)
    print(f"wrote {len(instances)} instances to {args.out}")
    return 0


def cmd_train(args) -> int:
    instances = load_dataset(args.data)
    config = make_train_config(_single_config(args.config), args.seed)
    parts = split(instances, group_key=file_group, seed=config.seed)
    model, history = train(config, parts, log_fn=print)
    save_model(model, args.out)
    best = max(h["valid_mrr"] for h in history)
    print(f"saved {model_id(model)} to {args.out} "
          f"(best valid_mrr {best:.4f}, {len(history)} epochs)")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    instances = load_dataset(args.data)
    seed = int(model.config.get("seed", 0))
    subset = _select_split(instances, args.split, seed)
    if not subset:
        raise ValueError(f"no instances in split {args.split!r}")
    report = evaluate_model(model, subset,
                            latency_repetitions=args.latency)
    print(f"recall@1 {report.recall_at_1:.4f}")
    print(f"recall@5 {report.recall_at_5:.4f}")
    print(f"mrr {report.mrr:.4f}")
    print(f"params {report.param_count}")
    print(f"bytes {report.size_bytes}")
    if report.latency is not None:
        print(f"latency_ms_mean {report.latency.mean_ms:.3f}")
        print(f"latency_ms_p95 {report.latency.p95_ms:.3f}")
    if args.out:
        _write_atomic(args.out, report.to_json() + "\n")
    return 0


def cmd_sweep(args) -> int:
    instances = load_dataset(args.data)
    configs = parse_config_args(args.config)
    if not configs:
        raise ValueError("sweep needs at least one --config")
    rows = []
    for options in configs:
        config = make_train_config(dict(options), args.seed)
        parts = split(instances, group_key=file_group, seed=config.seed)
        model, _ = train(config, parts)
        report = evaluate_model(model, parts.test,
                                latency_repetitions=args.latency)
        rows.append(report)
        print(f"evaluated {model_id(model)}: recall@5 "
              f"{report.recall_at_5:.4f}")
    # tag each point with its row index so front membership maps back
    points = [(r.recall_at_5, r.size_bytes, r.latency.p95_ms, i)
              for i, r in enumerate(rows)]
    front_idx = {p[3] for p in pareto_front(points)}

    lines = []
    for i, row in enumerate(rows):
        record = json.loads(row.to_json())
        record["pareto"] = i in front_idx
        lines.append(json.dumps(record, sort_keys=True))
    _write_atomic(args.out, "\n".join(lines) + "\n")

    csv_path = os.path.splitext(args.out)[0] + ".csv"
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["recall5", "size_bytes", "latency_ms", "config"])
    for (recall5, size_bytes, latency, _), row in zip(points, rows):
        writer.writerow([recall5, size_bytes, latency,
                         json.dumps(row.config, sort_keys=True)])
    _write_atomic(csv_path, buf.getvalue())

    print(f"pareto front: {len(front_idx)} of {len(rows)} configurations")
    return 0


def cmd_complete(args) -> int:
    model = load_model(args.model)
    candidates = args.candidates.split(",") if args.candidates else None
    api_table = load_api_table(args.api_table) if args.api_table else None
    if candidates is None and api_table is None:
        raise ValueError("need --candidates or --api-table to provide "
                         "completions")
    while True:
        sys.stdout.write("code> ")
        sys.stdout.flush()
        line = sys.stdin.readline()
        if not line:  # EOF: clean exit
            sys.stdout.write("\n")
            return 0
        text = line.strip()
        if not text:
            continue
        if not text.endswith("."):
            print("context must end with '.' — try again", file=sys.stderr)
            continue
        body = {"context": text, "top_k": args.top_k}
        if candidates is not None:
            body["candidates"] = candidates
        try:
            tokens, mask, cands, top_k = resolve_request(
                model, body, api_table, args.top_k)
            out = rk.complete(model, tokens, mask, cands, top_k=top_k)
        except (RequestProblem, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            continue
        for name, prob in out.items:
            print(f"{name}  {prob:.4f}")


def cmd_serve(args) -> int:
    model = load_model(args.model)
    api_table = load_api_table(args.api_table) if args.api_table else None
    server = create_server(model, host=args.host, port=args.port,
                           api_table=api_table, static_dir=args.static,
                           default_top_k=args.top_k)
    host, port = server.server_address[:2]
    count, _ = model_size(model)
    print(f"serving {model_id(model)} ({count} parameters) "
          f"on http://{host}:{port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codecomplete",
        description="train, evaluate and serve code-completion rankers")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", action="append", metavar="KV_OR_FILE",
                       help="key=value pairs (comma separated) or a JSON "
                            "config file; may repeat")

    def add_seed(p):
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    add_config(p)
    add_seed(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a completion model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    add_config(p)
    add_seed(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.add_argument("--split", choices=("all", "train", "valid", "test"),
                   default="all")
    p.add_argument("--latency", type=int, default=0,
                   help="latency repetitions (0 = skip)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train and compare several configs")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="JSONL output path")
    p.add_argument("--latency", type=int, default=20)
    add_config(p)
    add_seed(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("complete", help="interactive completion loop")
    p.add_argument("--model", required=True)
    p.add_argument("--candidates", default=None,
                   help="comma-separated candidate override")
    p.add_argument("--api-table", default=None)
    p.add_argument("--top-k", type=int, default=DEFAULT_TOP_K)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("serve", help="run the HTTP completion service")
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--api-table", default=None)
    p.add_argument("--static", default=None,
                   help="directory of static files to serve at /")
    p.add_argument("--top-k", type=int, default=DEFAULT_TOP_K)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 0
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
