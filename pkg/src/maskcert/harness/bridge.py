"""Line-delimited JSON bridge to an external scorer process.

One request per line, one response per line; responses carry the request id
and may arrive out of order within the pipelining window. Endpoints:

  stdio:<command line>   spawn the command, speak over its std streams
  tcp:<host>:<port>      connect a TCP socket

The MASKCERT_BRIDGE environment variable overrides the endpoint. Scores
outside [0,1] are protocol errors (RangeViolation).
"""

from __future__ import annotations

import json
import os
import select
import shlex
import socket
import subprocess
import time

from ..errors import (
    BridgeFailure,
    BridgeMalformed,
    BridgeRemoteError,
    BridgeTimeout,
    RangeViolation,
)
from ..scorer import PairwiseJudgment, ScorerHandle, _judgment_from_p1
from ..text import TokenSeq

WINDOW = 64
DEFAULT_TIMEOUT = 30.0

ENV_ENDPOINT = "MASKCERT_BRIDGE"


def resolve_endpoint(endpoint: str | None) -> str:
    env = os.environ.get(ENV_ENDPOINT)
    if env:
        return env
    if not endpoint:
        raise BridgeFailure("no bridge endpoint configured")
    return endpoint


class _StdioTransport:
    def __init__(self, command: str):
        self.proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            bufsize=0,
        )
        self._rfd = self.proc.stdout.fileno()

    def send(self, data: bytes) -> None:
        try:
            self.proc.stdin.write(data)
            self.proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise BridgeFailure(f"bridge process pipe closed: {exc}") from exc

    def recv_into(self, buf: bytearray, deadline: float) -> None:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise BridgeTimeout("bridge response timed out")
        ready, _, _ = select.select([self._rfd], [], [], remaining)
        if not ready:
            raise BridgeTimeout("bridge response timed out")
        chunk = os.read(self._rfd, 65536)
        if not chunk:
            raise BridgeFailure("bridge process closed its output stream")
        buf.extend(chunk)

    def close(self) -> None:
        try:
            if self.proc.stdin:
                self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()


class _TcpTransport:
    def __init__(self, host: str, port: int):
        self.sock = socket.create_connection((host, port), timeout=DEFAULT_TIMEOUT)
        self.sock.setblocking(False)

    def send(self, data: bytes) -> None:
        try:
            self.sock.setblocking(True)
            self.sock.sendall(data)
        finally:
            self.sock.setblocking(False)

    def recv_into(self, buf: bytearray, deadline: float) -> None:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise BridgeTimeout("bridge response timed out")
        ready, _, _ = select.select([self.sock], [], [], remaining)
        if not ready:
            raise BridgeTimeout("bridge response timed out")
        chunk = self.sock.recv(65536)
        if not chunk:
            raise BridgeFailure("bridge connection closed")
        buf.extend(chunk)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class BridgeConnection:
    """One connection; requests are pipelined up to the window size."""

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        self.endpoint = endpoint
        self.timeout = timeout
        self._next_id = 1
        self._buf = bytearray()
        if endpoint.startswith("stdio:"):
            self.transport = _StdioTransport(endpoint[len("stdio:"):])
        elif endpoint.startswith("tcp:"):
            rest = endpoint[len("tcp:"):]
            host, _, port = rest.rpartition(":")
            if not host:
                raise BridgeFailure(f"bad tcp endpoint {endpoint!r}")
            self.transport = _TcpTransport(host, int(port))
        else:
            raise BridgeFailure(f"unknown endpoint scheme in {endpoint!r}")

    def close(self) -> None:
        self.transport.close()

    def _read_line(self, deadline: float) -> bytes:
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line = bytes(self._buf[:nl])
                del self._buf[: nl + 1]
                return line
            self.transport.recv_into(self._buf, deadline)

    def _read_response(self, pending: dict[int, dict], deadline: float) -> None:
        line = self._read_line(deadline)
        try:
            obj = json.loads(line.decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise BridgeMalformed(f"non-JSON bridge response: {line[:200]!r}") from exc
        rid = obj.get("id")
        if rid not in pending:
            raise BridgeMalformed(f"response id {rid!r} matches no pending request")
        pending[rid]["response"] = obj

    def call_many(self, requests: list[dict]) -> list[dict]:
        """Send requests with pipelining; returns responses in request order.

        The timeout applies per response read, not to the whole batch.
        """
        pending: dict[int, dict] = {}
        order: list[int] = []
        sent = 0
        while sent < len(requests) or any(
            p["response"] is None for p in pending.values()
        ):
            in_flight = sum(1 for p in pending.values() if p["response"] is None)
            while sent < len(requests) and in_flight < WINDOW:
                req = dict(requests[sent])
                req["id"] = self._next_id
                self._next_id += 1
                pending[req["id"]] = {"response": None}
                order.append(req["id"])
                self.transport.send(json.dumps(req).encode("utf-8") + b"\n")
                sent += 1
                in_flight += 1
            self._read_response(pending, time.monotonic() + self.timeout)
        return [pending[rid]["response"] for rid in order]

    def call(self, op: str, **payload) -> dict:
        response = self.call_many([{"op": op, **payload}])[0]
        if "error" in response and response["error"]:
            err = response["error"]
            raise BridgeRemoteError(f"{err.get('code')}: {err.get('message')}")
        return response


def _validated_score(value) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise BridgeMalformed(f"score result is not a number: {value!r}")
    if not 0.0 <= float(value) <= 1.0:
        raise RangeViolation(f"bridge score {value} outside [0, 1]")
    return float(value)


class BridgeScorer(ScorerHandle):
    """ScorerHandle backed by an external process over the bridge protocol.

    Has no build_program, so smoothing takes the generic path (same keep
    sets, same reduction order as the kernel path).
    """

    kind = "external-bridge"

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        self.conn = BridgeConnection(resolve_endpoint(endpoint), timeout)
        info = self.conn.call("info")
        result = info.get("result") or {}
        if "name" not in result:
            raise BridgeMalformed("info response lacks a scorer name")
        self.name = str(result["name"])
        self.version = str(result.get("version", "0"))
        self.max_doc_tokens = int(result.get("max_doc_tokens", 0)) or None

    def close(self) -> None:
        self.conn.close()

    def score(self, q: TokenSeq, x) -> float:
        response = self.conn.call("score", query=list(q.tokens), doc=list(x.tokens))
        return _validated_score(response.get("result"))

    def score_batch(self, q: TokenSeq, docs) -> list[float]:
        requests = [
            {"op": "score", "query": list(q.tokens), "doc": list(x.tokens)}
            for x in docs
        ]
        out = []
        for response in self.conn.call_many(requests):
            if "error" in response and response["error"]:
                err = response["error"]
                raise BridgeRemoteError(f"{err.get('code')}: {err.get('message')}")
            out.append(_validated_score(response.get("result")))
        return out

    def judge_pair(self, q: TokenSeq, xi, xj) -> PairwiseJudgment:
        response = self.conn.call(
            "judge_pair",
            query=list(q.tokens),
            doc_i=list(xi.tokens),
            doc_j=list(xj.tokens),
        )
        result = response.get("result")
        if not isinstance(result, list) or len(result) != 2:
            raise BridgeMalformed(f"judge_pair result is not a pair: {result!r}")
        p0, p1 = float(result[0]), float(result[1])
        if abs((p0 + p1) - 1.0) > 1e-9 or p0 < 0 or p1 < 0:
            raise RangeViolation(f"judge_pair probabilities invalid: {result}")
        return _judgment_from_p1(p1)
