"""Minimal bridge-protocol stub server used by the client tests.

Implements the same token-Dice formula as the engine's lexical built-in
(independently, in-line) plus magic tokens that trigger misbehavior:

  sleepy      delay the response by 1.5 s        (timeout tests)
  outofrange  return score 1.7                   (range validation)
  wrongid     respond with a bogus request id    (id matching)
  garbage     emit a non-JSON line first         (malformed framing)
  remoteerr   respond with an error object       (remote errors)

Run with no args for stdio framing, or `--tcp PORT` to serve one TCP
connection.
"""

import json
import socket
import sys
import time


def dice(query, doc):
    counts = {}
    for tok in query:
        counts[tok] = counts.get(tok, 0) + 1
    overlap = 0
    for tok in doc:
        if tok == "[MASK]":
            continue
        if counts.get(tok, 0) > 0:
            counts[tok] -= 1
            overlap += 1
    return 2.0 * overlap / (len(query) + len(doc))


def handle(line, out):
    line = line.strip()
    if not line:
        return
    try:
        req = json.loads(line)
    except json.JSONDecodeError:
        out(json.dumps({"id": None, "error": {"code": "malformed",
                                              "message": "bad json"}}))
        return
    rid = req.get("id")
    op = req.get("op")
    doc = req.get("doc") or []
    if "sleepy" in doc:
        time.sleep(1.5)
    if "wrongid" in doc:
        out(json.dumps({"id": 999999, "result": 0.5}))
        return
    if "garbage" in doc:
        out("this is not json")
        return
    if "remoteerr" in doc:
        out(json.dumps({"id": rid, "error": {"code": "boom",
                                             "message": "remote failure"}}))
        return
    if op == "info":
        out(json.dumps({"id": rid, "result": {
            "name": "stub-lexical", "version": "1", "max_doc_tokens": 256}}))
    elif op == "score":
        score = 1.7 if "outofrange" in doc else dice(req["query"], doc)
        out(json.dumps({"id": rid, "result": score}))
    elif op == "judge_pair":
        si = dice(req["query"], req["doc_i"])
        sj = dice(req["query"], req["doc_j"])
        import math

        p1 = 1.0 / (1.0 + math.exp(-(si - sj)))
        out(json.dumps({"id": rid, "result": [1.0 - p1, p1]}))
    else:
        out(json.dumps({"id": rid, "error": {"code": "unknown-op",
                                             "message": str(op)}}))


def main():
    if len(sys.argv) >= 3 and sys.argv[1] == "--tcp":
        srv = socket.create_server(("127.0.0.1", int(sys.argv[2])))
        conn, _ = srv.accept()
        buf = b""
        fh = conn.makefile("rwb")
        for raw in fh:
            handle(raw.decode("utf-8"),
                   lambda s: (fh.write((s + "\n").encode()), fh.flush()))
        conn.close()
        return
    for raw in sys.stdin:
        handle(raw, lambda s: (sys.stdout.write(s + "\n"), sys.stdout.flush()))


if __name__ == "__main__":
    main()
