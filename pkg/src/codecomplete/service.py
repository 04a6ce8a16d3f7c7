"""HTTP completion service.

POST /complete scores candidates for a context; GET /health reports the
loaded model.  Built on the stdlib threading HTTP server so concurrent
requests against the same (read-only) model are safe.
"""

from __future__ import annotations

import json
import mimetypes
import os
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import ranker as rk
from .evaluation import model_size
from .model_io import model_id
from .providers import provide_scope
from .tokenizers import tokenize_source

DEFAULT_TOP_K = 5


class RequestProblem(ValueError):
    """A client request that cannot be served (HTTP 400)."""


def resolve_request(model, body: dict, api_table=None,
                    default_top_k: int = DEFAULT_TOP_K):
    """Normalize a /complete body into (tokens, mask, candidates, top_k)."""
    if not isinstance(body, dict):
        raise RequestProblem("request body must be a JSON object")
    context = body.get("context")
    if isinstance(context, str):
        tokens = tokenize_source(context)
    elif isinstance(context, list) and \
            all(isinstance(t, str) for t in context):
        tokens = list(context)
    else:
        raise RequestProblem("'context' must be a string or a list of "
                             "string tokens")
    if not tokens:
        raise RequestProblem("context is empty after tokenization")
    receiver = body.get("receiver")
    if receiver is None and len(tokens) >= 2 and tokens[-1] == ".":
        receiver = tokens[-2]
    if receiver is not None and not isinstance(receiver, str):
        raise RequestProblem("'receiver' must be a string")

    window = int(model.config.get("context_window", 80))
    tokens = tokens[-window:]
    mask = [i for i, t in enumerate(tokens) if receiver and t == receiver]

    candidates = body.get("candidates")
    if candidates is not None:
        if not isinstance(candidates, list) or not candidates or \
                not all(isinstance(c, str) for c in candidates):
            raise RequestProblem("'candidates' must be a non-empty list "
                                 "of strings")
    elif api_table is not None:
        candidates = provide_scope(api_table, tokens,
                                   receiver or "").candidates
    else:
        raise RequestProblem("no candidates given and no API table loaded")

    top_k = body.get("top_k", default_top_k)
    if not isinstance(top_k, int) or top_k < 1:
        raise RequestProblem("'top_k' must be a positive integer")
    return tokens, mask, candidates, top_k


def complete_response(model, body: dict, api_table=None,
                      default_top_k: int = DEFAULT_TOP_K,
                      ident: str = None) -> dict:
    tokens, mask, candidates, top_k = resolve_request(
        model, body, api_table, default_top_k)
    start = time.perf_counter()
    suggestions = rk.complete(model, tokens, mask, candidates, top_k=top_k)
    elapsed_ms = (time.perf_counter() - start) * 1000.0
    return {
        "suggestions": [[name, prob] for name, prob in suggestions.items],
        "model": ident if ident is not None else model_id(model),
        "latency_ms": elapsed_ms,
    }


def health_response(model, ident: str = None) -> dict:
    count, size_bytes = model_size(model)
    return {
        "status": "ok",
        "model": ident if ident is not None else model_id(model),
        "param_count": count,
        "size_bytes": size_bytes,
    }


def _make_handler(model, api_table, static_dir, default_top_k, ident):
    class CompletionHandler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # keep test output quiet
            pass

        def _send_json(self, status: int, payload: dict):
            raw = json.dumps(payload, sort_keys=True).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(raw)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(raw)

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods",
                             "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            if self.path == "/health":
                self._send_json(200, health_response(model, ident))
                return
            if static_dir is not None and self._try_static():
                return
            self._send_json(404, {"error": f"unknown path {self.path}"})

        def _try_static(self) -> bool:
            rel = self.path.lstrip("/") or "index.html"
            rel = os.path.normpath(rel)
            if rel.startswith(".."):
                return False
            full = os.path.join(static_dir, rel)
            if not os.path.isfile(full):
                return False
            ctype = mimetypes.guess_type(full)[0] or \
                "application/octet-stream"
            with open(full, "rb") as fh:
                raw = fh.read()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(raw)))
            self.end_headers()
            self.wfile.write(raw)
            return True

        def do_POST(self):
            if self.path != "/complete":
                self._send_json(404, {"error": f"unknown path {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length).decode("utf-8"))
            except (ValueError, UnicodeDecodeError) as exc:
                self._send_json(400, {"error": f"malformed body: {exc}"})
                return
            try:
                payload = complete_response(model, body, api_table,
                                            default_top_k, ident)
            except RequestProblem as exc:
                self._send_json(400, {"error": str(exc)})
            except Exception as exc:  # noqa: BLE001 - report, don't crash
                self._send_json(500, {"error": f"internal error: {exc}"})
            else:
                self._send_json(200, payload)

    return CompletionHandler


def create_server(model, host: str = "127.0.0.1", port: int = 8765,
                  api_table=None, static_dir=None,
                  default_top_k: int = DEFAULT_TOP_K) -> ThreadingHTTPServer:
    ident = model_id(model)  # digest once; weights never change while serving
    handler = _make_handler(model, api_table, static_dir, default_top_k,
                            ident)
    return ThreadingHTTPServer((host, port), handler)
