"""Log-probability queries over HTTP.

One endpoint, POST /v1/logprobs. Request body:

    {"version": 1, "request_id": "r00000001", "tokens": [3, 17, 9],
     "queries": [{"position": 1, "targets": [17, 4]}]}

Success is HTTP 200 with the version and request_id echoed back, the number
of forward passes the server spent, and one result per query in order:

    {"version": 1, "request_id": "r00000001", "nfe": 1,
     "results": [{"position": 1, "logprobs": [-0.1, -2.3]}]}

Malformed requests get HTTP 4xx with {"error": "..."}. Values are natural-log
probabilities; positions are 0-based over the request's token list. Queries
are pure, so clients retry transport failures (at most twice) reusing the
same request id.
"""

from __future__ import annotations

import contextlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import requests

from .errors import BackendError, ProtocolError, RemoteUnavailable
from .backend import DenoisingBackend, LogProbQuery
from .corpus import Vocabulary

PROTOCOL_VERSION = 1
ENDPOINT_PATH = "/v1/logprobs"


def _parse_request(body: dict) -> LogProbQuery:
    if body.get("version") != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {body.get('version')!r}")
    if not isinstance(body.get("request_id"), str):
        raise ProtocolError("request_id must be a string")
    tokens = body.get("tokens")
    if not isinstance(tokens, list) or not all(isinstance(t, int) for t in tokens):
        raise ProtocolError("tokens must be a list of integers")
    queries = body.get("queries")
    if not isinstance(queries, list) or not queries:
        raise ProtocolError("queries must be a non-empty list")
    parsed = []
    for q in queries:
        if not isinstance(q, dict) or not isinstance(q.get("position"), int):
            raise ProtocolError("each query needs an integer position")
        targets = q.get("targets")
        if not isinstance(targets, list) or not all(isinstance(t, int) for t in targets):
            raise ProtocolError("each query needs a list of integer targets")
        parsed.append((q["position"], targets))
    return LogProbQuery.make(tokens, parsed)


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, fmt, *args):  # keep test output clean
        pass

    def _reply(self, status: int, payload: dict) -> None:
        blob = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)

    def do_POST(self):
        if self.path != ENDPOINT_PATH:
            self._reply(404, {"error": f"no such endpoint {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length))
        except (ValueError, json.JSONDecodeError):
            self._reply(400, {"error": "request body is not valid JSON"})
            return
        backend = self.server.backend
        try:
            query = _parse_request(body)
            before = backend.nfe.value
            results = backend.query_logprobs(query, "bidirectional")
            spent = backend.nfe.value - before
        except (ProtocolError, BackendError) as e:
            self._reply(400, {"error": str(e)})
            return
        self._reply(
            200,
            {
                "version": PROTOCOL_VERSION,
                "request_id": body["request_id"],
                "nfe": spent,
                "results": [
                    {"position": pos, "logprobs": [float(v) for v in vals]}
                    for (pos, _), vals in zip(query.queries, results)
                ],
            },
        )


class LogProbServer(ThreadingHTTPServer):
    """Serves a backend's query_logprobs over the wire protocol."""

    def __init__(self, backend: DenoisingBackend, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.backend = backend

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}{ENDPOINT_PATH}"


@contextlib.contextmanager
def running_server(backend: DenoisingBackend, host: str = "127.0.0.1", port: int = 0):
    """Start a server on a background thread; yields it with .url set."""
    server = LogProbServer(backend, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)


class RemoteBackend(DenoisingBackend):
    """Client for a log-prob service; bidirectional queries only.

    NFE counts the passes the server reports. Transport failures and 5xx
    responses are retried (same request id) up to `retries` extra attempts;
    protocol violations in a 200 response are never retried.
    """

    supports_causal = False

    def __init__(
        self,
        endpoint: str,
        vocab: Vocabulary,
        context_limit: int = 4096,
        timeout: float = 10.0,
        retries: int = 2,
    ):
        super().__init__(vocab, context_limit)
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self._session = requests.Session()
        self._counter = 0

    def _next_request_id(self) -> str:
        self._counter += 1
        return f"r{self._counter:08d}"

    def _post(self, payload: dict) -> requests.Response:
        last = None
        for attempt in range(1 + self.retries):
            try:
                resp = self._session.post(self.endpoint, json=payload, timeout=self.timeout)
            except requests.RequestException as e:
                last = f"attempt {attempt + 1}: {e.__class__.__name__}"
                continue
            if resp.status_code >= 500:
                last = f"attempt {attempt + 1}: HTTP {resp.status_code}"
                continue
            return resp
        raise RemoteUnavailable(
            f"{self.endpoint} unreachable after {1 + self.retries} attempts ({last})"
        )

    def query_logprobs(self, q: LogProbQuery, mode: str = "bidirectional") -> list:
        self._validate(q, mode)
        payload = {
            "version": PROTOCOL_VERSION,
            "request_id": self._next_request_id(),
            "tokens": [int(t) for t in q.tokens],
            "queries": [
                {"position": int(pos), "targets": [int(t) for t in targets]}
                for pos, targets in q.queries
            ],
        }
        resp = self._post(payload)
        if 400 <= resp.status_code < 500:
            try:
                message = resp.json().get("error", "")
            except ValueError:
                message = resp.text[:200]
            raise ProtocolError(f"server rejected request: HTTP {resp.status_code} {message}")
        try:
            body = resp.json()
        except ValueError:
            raise ProtocolError("response body is not valid JSON") from None
        return self._parse_response(body, payload)

    def _parse_response(self, body: dict, payload: dict) -> list:
        if body.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(f"response version {body.get('version')!r}")
        if body.get("request_id") != payload["request_id"]:
            raise ProtocolError(
                f"response id {body.get('request_id')!r} != {payload['request_id']!r}"
            )
        nfe = body.get("nfe")
        if not isinstance(nfe, int) or nfe < 0:
            raise ProtocolError(f"bad nfe field {nfe!r}")
        results = body.get("results")
        if not isinstance(results, list) or len(results) != len(payload["queries"]):
            raise ProtocolError("results do not match the queries one for one")
        out = []
        for sent, got in zip(payload["queries"], results):
            if not isinstance(got, dict) or got.get("position") != sent["position"]:
                raise ProtocolError(f"result position mismatch for position {sent['position']}")
            vals = got.get("logprobs")
            if not isinstance(vals, list) or len(vals) != len(sent["targets"]):
                raise ProtocolError(f"result at position {sent['position']} has wrong arity")
            arr = np.asarray(vals, dtype=np.float64)
            if np.isnan(arr).any() or (arr > 1e-9).any():
                raise ProtocolError(
                    f"result at position {sent['position']} is not a log-probability"
                )
            out.append(arr)
        self.nfe.increment(nfe)
        return out
