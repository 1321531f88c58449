"""Line-delimited JSON protocol for serving language models over TCP or stdio.

Each message is one JSON object on one ``\\n``-terminated UTF-8 line.

Handshake::

    client  {"op": "hello", "proto": 1}
    server  {"op": "vocab", "tokens": [...], "bos": i, "eos": j, "unk": k}

Step::

    client  {"op": "next", "ctx": [token ids]}
    server  {"op": "dist", "logp": [|V| floats]}

Errors::

    server  {"op": "err", "code": "...", "msg": "..."}

Log probabilities are finite JSON numbers or the string ``"-inf"``.
The default per-step timeout is 10 seconds. Failures are distinguishable
by exception type: transport problems (connect, timeout, closed socket)
are retryable; protocol violations (malformed frames, wrong-length
distributions) are not.
"""

from __future__ import annotations

import json
import math
import socket
import socketserver
import sys
import threading
from typing import BinaryIO, Optional, Sequence

import numpy as np

from .lm import LanguageModel, NextTokenDistribution, Vocabulary

PROTO_VERSION = 1
DEFAULT_TIMEOUT = 10.0


class WireError(Exception):
    retryable = False


class TransportError(WireError):
    """Connection failed, timed out, or closed mid-exchange."""

    retryable = True


class StepTimeout(TransportError):
    pass


class ProtocolError(WireError):
    """The peer sent something outside the protocol; do not retry."""


class VocabularyMismatch(ProtocolError):
    """Distribution length does not match the declared vocabulary."""


class ServerReported(WireError):
    """The server answered with an explicit error frame."""

    def __init__(self, code: str, msg: str) -> None:
        super().__init__(f"{code}: {msg}")
        self.code = code
        self.msg = msg


def _encode_logp(values: np.ndarray) -> list:
    return [float(v) if math.isfinite(v) else "-inf" for v in values]


def _decode_logp(values: list, expected_len: int) -> np.ndarray:
    if not isinstance(values, list):
        raise ProtocolError("logp must be a list")
    if len(values) != expected_len:
        raise VocabularyMismatch(
            f"distribution has {len(values)} entries, vocabulary has {expected_len}"
        )
    out = np.empty(expected_len)
    for i, v in enumerate(values):
        if v == "-inf":
            out[i] = -math.inf
        elif isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v):
            out[i] = float(v)
        else:
            raise ProtocolError(f"logp entry {i} is not a finite number or '-inf': {v!r}")
    return out


def _send(stream: BinaryIO, obj: dict) -> None:
    stream.write(json.dumps(obj, ensure_ascii=False).encode("utf-8") + b"\n")
    stream.flush()


def _recv(stream: BinaryIO) -> dict:
    line = stream.readline()
    if not line:
        raise TransportError("connection closed by peer")
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed frame: {exc}") from exc
    if not isinstance(obj, dict) or "op" not in obj:
        raise ProtocolError("frame is not an object with an 'op' field")
    return obj


class RemoteLM:
    """LanguageModel client over the wire protocol (one TCP connection)."""

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT) -> None:
        host, _, port = endpoint.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"endpoint must be host:port, got {endpoint!r}")
        self.endpoint = endpoint
        try:
            self._sock = socket.create_connection((host, int(port)), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {endpoint}: {exc}") from exc
        self._stream = self._sock.makefile("rwb")
        self._vocab = self._handshake()

    def _exchange(self, request: dict) -> dict:
        try:
            _send(self._stream, request)
            response = _recv(self._stream)
        except socket.timeout as exc:
            raise StepTimeout(f"no response from {self.endpoint} in time") from exc
        except OSError as exc:
            raise TransportError(f"transport failure: {exc}") from exc
        if response.get("op") == "err":
            raise ServerReported(str(response.get("code", "unknown")), str(response.get("msg", "")))
        return response

    def _handshake(self) -> Vocabulary:
        response = self._exchange({"op": "hello", "proto": PROTO_VERSION})
        if response.get("op") != "vocab":
            raise ProtocolError(f"expected vocab frame, got op={response.get('op')!r}")
        try:
            return Vocabulary(
                tokens=tuple(response["tokens"]),
                bos_id=response["bos"],
                eos_id=response["eos"],
                unk_id=response["unk"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"invalid vocab frame: {exc}") from exc

    def vocabulary(self) -> Vocabulary:
        return self._vocab

    def next(self, context: Sequence[int]) -> NextTokenDistribution:
        response = self._exchange({"op": "next", "ctx": [int(i) for i in context]})
        if response.get("op") != "dist":
            raise ProtocolError(f"expected dist frame, got op={response.get('op')!r}")
        logp = _decode_logp(response.get("logp"), len(self._vocab))
        dist = NextTokenDistribution(logp)
        try:
            dist.validate()
        except ValueError as exc:
            raise ProtocolError(f"invalid distribution: {exc}") from exc
        return dist

    def close(self) -> None:
        try:
            self._stream.close()
            self._sock.close()
        except OSError:
            pass

    def __enter__(self) -> "RemoteLM":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def _build_reply(model: LanguageModel, vocab: Vocabulary, request: dict) -> dict:
    op = request.get("op")
    if op == "hello":
        if request.get("proto") != PROTO_VERSION:
            return {"op": "err", "code": "bad_proto",
                    "msg": f"unsupported protocol {request.get('proto')!r}"}
        return {
            "op": "vocab",
            "tokens": list(vocab.tokens),
            "bos": vocab.bos_id,
            "eos": vocab.eos_id,
            "unk": vocab.unk_id,
        }
    if op == "next":
        ctx = request.get("ctx")
        if not isinstance(ctx, list) or not all(
            isinstance(i, int) and not isinstance(i, bool) for i in ctx
        ):
            return {"op": "err", "code": "bad_context", "msg": "ctx must be a list of ids"}
        try:
            dist = model.next(ctx)
        except ValueError as exc:
            return {"op": "err", "code": "bad_context", "msg": str(exc)}
        return {"op": "dist", "logp": _encode_logp(dist.log_probs)}
    return {"op": "err", "code": "bad_op", "msg": f"unknown op {op!r}"}


def serve_session(model: LanguageModel, reader: BinaryIO, writer: BinaryIO) -> None:
    """Answer protocol requests on a stream pair until it closes."""
    vocab = model.vocabulary()
    while True:
        try:
            request = _recv(reader)
        except TransportError:
            return
        except ProtocolError as exc:
            reply = {"op": "err", "code": "bad_frame", "msg": str(exc)}
        else:
            reply = _build_reply(model, vocab, request)
        try:
            _send(writer, reply)
        except OSError:
            return


class LMServer(socketserver.ThreadingTCPServer):
    """TCP server exposing one LanguageModel to protocol clients."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, model: LanguageModel, host: str = "127.0.0.1", port: int = 0) -> None:
        self.model = model

        class Handler(socketserver.StreamRequestHandler):
            def handle(handler) -> None:  # noqa: N805
                serve_session(model, handler.rfile, handler.wfile)

        super().__init__((host, port), Handler)

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def serve_stdio(model: LanguageModel, stdin: Optional[BinaryIO] = None,
                stdout: Optional[BinaryIO] = None) -> None:
    """Serve one protocol session over standard streams."""
    serve_session(model, stdin or sys.stdin.buffer, stdout or sys.stdout.buffer)
