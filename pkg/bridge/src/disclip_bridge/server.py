"""Protocol server: dispatches ops against the model adapters.

One thread per connection, requests answered strictly in order; model
access is serialized with a lock, so multiple connections are safe.
Per-request failures become error frames; the connection is never dropped
in response to a bad request.
"""

from __future__ import annotations

import socket
import threading

from disclip_bridge.protocol import (
    PROTOCOL_VERSION,
    FrameError,
    decode_image_payload,
    dump_line,
    error_frame,
    parse_line,
)


class RequestHandler:
    """Pure request -> response mapping over the two adapters."""

    def __init__(self, lm, encoder):
        self._lm = lm
        self._encoder = encoder
        self._lock = threading.Lock()

    def handle(self, request: dict) -> dict:
        op = request.get("op")
        try:
            with self._lock:
                if op == "hello":
                    return {
                        "ok": True,
                        "dim": self._encoder.dim,
                        "vocab_size": self._lm.vocab_size,
                        "eot_token": self._lm.eot_token,
                        "protocol_version": PROTOCOL_VERSION,
                    }
                if op == "encode_text":
                    return {"ok": True, "embedding": self._encoder.encode_text(str(request["text"]))}
                if op == "encode_image":
                    width, height, rgb = decode_image_payload(request)
                    return {"ok": True, "embedding": self._encoder.encode_image(width, height, rgb)}
                if op == "tokenize":
                    return {"ok": True, "tokens": self._lm.tokenize(str(request["text"]))}
                if op == "detokenize":
                    tokens = [int(t) for t in request["tokens"]]
                    return {"ok": True, "text": self._lm.detokenize(tokens)}
                if op == "top_k":
                    context = [int(t) for t in request["context"]]
                    return {"ok": True, "candidates": self._lm.top_k(context, int(request["k"]))}
            return error_frame("unknown_op", f"unknown op {op!r}")
        except KeyError as exc:
            return error_frame("bad_request", f"missing field {exc}")
        except (TypeError, ValueError, FrameError) as exc:
            return error_frame("bad_request", str(exc))
        except Exception as exc:  # noqa: BLE001 - surface as protocol error
            return error_frame("backend_error", str(exc))


class BridgeServer:
    """Threaded socket server speaking the backend protocol."""

    def __init__(self, handler: RequestHandler, host: str = "127.0.0.1", port: int = 0):
        self._handler = handler
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

    def start(self) -> "BridgeServer":
        self._thread.start()
        return self

    def serve_forever(self):
        self.start()
        self._thread.join()

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
                for line in rfile:
                    if not line.strip():
                        continue
                    try:
                        request = parse_line(line)
                    except FrameError as exc:
                        response = error_frame("bad_request", str(exc))
                    else:
                        response = self._handler.handle(request)
                    wfile.write(dump_line(response))
                    wfile.flush()
            except OSError:
                pass

    def stop(self):
        self._stopped.set()
        self._listener.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc_info):
        self.stop()
