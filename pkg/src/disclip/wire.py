"""Newline-delimited JSON protocol between the engine and model backends.

One JSON object per line, one request in flight per connection, responses
strictly in request order. Ops: hello, encode_text, encode_image, top_k,
tokenize, detokenize. Every response carries "ok"; failures add
{"error": {"code", "message"}}. Floats are serialized with Python's
shortest round-trip repr, so serialize -> parse is the identity on every
schema-valid message. Images travel as base64 of raw RGB8 plus width and
height. Retries are never automatic; callers decide.
"""

from __future__ import annotations

import base64
import json
import socket
import threading
from typing import Optional, Sequence

from disclip.core import BackendError, DisclipError, Embedding
from disclip.imaging import Image

PROTOCOL_VERSION = 1
OPS = ("hello", "encode_text", "encode_image", "top_k", "tokenize", "detokenize")


class WireError(DisclipError, RuntimeError):
    """Transport failure or malformed frame."""


class ProtocolError(WireError):
    """Error reported by the server, with its code and message preserved."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message


def dump_message(message: dict) -> bytes:
    return (json.dumps(message, separators=(",", ":")) + "\n").encode("utf-8")


def parse_message(line: bytes | str) -> dict:
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    try:
        message = json.loads(line)
    except json.JSONDecodeError as exc:
        raise WireError(f"malformed frame: {exc}") from exc
    if not isinstance(message, dict):
        raise WireError(f"frame must be a JSON object, got {type(message).__name__}")
    return message


def image_to_wire(image: Image) -> dict:
    return {
        "width": image.width,
        "height": image.height,
        "data": base64.b64encode(image.pixels).decode("ascii"),
    }


def image_from_wire(payload: dict) -> Image:
    try:
        width = int(payload["width"])
        height = int(payload["height"])
        data = base64.b64decode(payload["data"], validate=True)
    except (KeyError, TypeError, ValueError) as exc:
        raise WireError(f"bad image payload: {exc}") from exc
    return Image(width=width, height=height, pixels=data)


def parse_endpoint(endpoint: str) -> tuple[str, object]:
    """"host:port", "tcp:host:port", "unix:/path", or a bare socket path."""
    if endpoint.startswith("unix:"):
        return "unix", endpoint[len("unix:") :]
    if endpoint.startswith("tcp:"):
        endpoint = endpoint[len("tcp:") :]
    if endpoint.startswith("/"):
        return "unix", endpoint
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise WireError(f"cannot parse endpoint {endpoint!r}")
    return "tcp", (host or "127.0.0.1", int(port))


class Connection:
    """A single ordered request/response channel to a backend server."""

    def __init__(self, endpoint: str, timeout: Optional[float] = 30.0):
        kind, address = parse_endpoint(endpoint)
        try:
            if kind == "unix":
                self._sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
            else:
                self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            self._sock.settimeout(timeout)
            self._sock.connect(address)
        except OSError as exc:
            raise WireError(f"cannot connect to {endpoint!r}: {exc}") from exc
        self._rfile = self._sock.makefile("rb")

    def request(self, message: dict) -> dict:
        """Send one request and return the raw response object.

        Server-reported failures come back as {"ok": false, ...} without
        raising; transport problems raise `WireError`.
        """
        try:
            self._sock.sendall(dump_message(message))
            line = self._rfile.readline()
        except OSError as exc:
            raise WireError(f"transport failure: {exc}") from exc
        if not line:
            raise WireError("connection closed by server")
        return parse_message(line)

    def checked(self, message: dict) -> dict:
        """Like `request`, but raise `ProtocolError` on server failures."""
        response = self.request(message)
        if not response.get("ok"):
            error = response.get("error") or {}
            raise ProtocolError(
                str(error.get("code", "unknown")), str(error.get("message", ""))
            )
        return response

    def close(self):
        try:
            self._rfile.close()
        finally:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def protocol_client(endpoint: str, request: dict) -> dict:
    """One-shot request against a backend endpoint; returns the response."""
    with Connection(endpoint) as conn:
        return conn.request(request)


class RemoteBackend:
    """Language model and encoder facade over one protocol connection.

    Performs the hello negotiation on connect and checks every embedding
    against the advertised dimension. Instances are safe for one thread at
    a time; open one connection per worker for parallelism.
    """

    def __init__(self, endpoint: str, timeout: Optional[float] = 30.0):
        self._conn = Connection(endpoint, timeout=timeout)
        hello = self._conn.checked({"op": "hello"})
        try:
            self.dim = int(hello["dim"])
            self.vocab_size = int(hello["vocab_size"])
            self.eot_token = int(hello["eot_token"])
            version = int(hello["protocol_version"])
        except (KeyError, TypeError, ValueError) as exc:
            raise WireError(f"bad hello response: {exc}") from exc
        if version != PROTOCOL_VERSION:
            raise WireError(f"unsupported protocol version {version}")

    def _embedding(self, values) -> Embedding:
        emb = Embedding(values)
        if emb.dim != self.dim:
            raise BackendError(
                f"embedding dimension {emb.dim} does not match negotiated {self.dim}"
            )
        return emb

    def encode_text(self, text: str) -> Embedding:
        response = self._conn.checked({"op": "encode_text", "text": text})
        return self._embedding(response["embedding"])

    def encode_image(self, image: Image) -> Embedding:
        payload = {"op": "encode_image", **image_to_wire(image)}
        response = self._conn.checked(payload)
        return self._embedding(response["embedding"])

    def tokenize(self, text: str) -> list[int]:
        response = self._conn.checked({"op": "tokenize", "text": text})
        return [int(t) for t in response["tokens"]]

    def detokenize(self, tokens: Sequence[int]) -> str:
        response = self._conn.checked({"op": "detokenize", "tokens": list(tokens)})
        return str(response["text"])

    def top_k(self, context: Sequence[int], k: int) -> list[tuple[int, float, Embedding]]:
        response = self._conn.checked(
            {"op": "top_k", "context": list(context), "k": int(k)}
        )
        out = []
        for cand in response["candidates"]:
            out.append(
                (int(cand["token"]), float(cand["p"]), Embedding(cand["hidden"]))
            )
        return out

    def close(self):
        self._conn.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def handle_request(lm, encoder, request: dict) -> dict:
    """Dispatch one request against in-process backends; never raises."""
    op = request.get("op")
    try:
        if op == "hello":
            return {
                "ok": True,
                "dim": int(encoder.dim),
                "vocab_size": int(lm.vocab_size),
                "eot_token": int(lm.eot_token),
                "protocol_version": PROTOCOL_VERSION,
            }
        if op == "encode_text":
            emb = encoder.encode_text(str(request["text"]))
            return {"ok": True, "embedding": emb.values.tolist()}
        if op == "encode_image":
            emb = encoder.encode_image(image_from_wire(request))
            return {"ok": True, "embedding": emb.values.tolist()}
        if op == "tokenize":
            return {"ok": True, "tokens": lm.tokenize(str(request["text"]))}
        if op == "detokenize":
            tokens = [int(t) for t in request["tokens"]]
            return {"ok": True, "text": lm.detokenize(tokens)}
        if op == "top_k":
            context = [int(t) for t in request["context"]]
            candidates = lm.top_k(context, int(request["k"]))
            return {
                "ok": True,
                "candidates": [
                    {"token": token, "p": p, "hidden": hidden.values.tolist()}
                    for token, p, hidden in candidates
                ],
            }
        return {
            "ok": False,
            "error": {"code": "unknown_op", "message": f"unknown op {op!r}"},
        }
    except KeyError as exc:
        return {
            "ok": False,
            "error": {"code": "bad_request", "message": f"missing field {exc}"},
        }
    except (TypeError, ValueError, WireError) as exc:
        return {"ok": False, "error": {"code": "bad_request", "message": str(exc)}}
    except Exception as exc:  # noqa: BLE001 - backend errors become frames
        return {"ok": False, "error": {"code": "backend_error", "message": str(exc)}}


def serve_stream(lm, encoder, rfile, wfile):
    """Answer requests from a byte stream until EOF."""
    for line in rfile:
        if not line.strip():
            continue
        try:
            request = parse_message(line)
        except WireError as exc:
            response = {"ok": False, "error": {"code": "bad_request", "message": str(exc)}}
        else:
            response = handle_request(lm, encoder, request)
        wfile.write(dump_message(response))
        wfile.flush()


class BackendServer:
    """Threaded protocol server hosting in-process backends (used in tests)."""

    def __init__(self, lm, encoder, host: str = "127.0.0.1", port: int = 0):
        self._lm = lm
        self._encoder = encoder
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen()
        self._stopped = threading.Event()
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self._listener.getsockname()
        return f"{host}:{port}"

    def start(self) -> "BackendServer":
        self._thread.start()
        return self

    def _accept_loop(self):
        while not self._stopped.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_one, args=(conn,), daemon=True).start()

    def _serve_one(self, conn: socket.socket):
        with conn:
            rfile = conn.makefile("rb")
            wfile = conn.makefile("wb")
            try:
                serve_stream(self._lm, self._encoder, rfile, wfile)
            except OSError:
                pass

    def stop(self):
        self._stopped.set()
        self._listener.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc_info):
        self.stop()
