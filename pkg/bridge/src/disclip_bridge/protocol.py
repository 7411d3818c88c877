"""Framing for the newline-delimited JSON backend protocol.

One JSON object per line, one request in flight per connection, responses
in request order. Every response carries "ok"; failures carry
{"error": {"code", "message"}}. Floats serialize with Python's shortest
round-trip repr, images travel as base64 raw RGB8 with width/height.
"""

from __future__ import annotations

import base64
import json

PROTOCOL_VERSION = 1
OPS = ("hello", "encode_text", "encode_image", "top_k", "tokenize", "detokenize")


class FrameError(ValueError):
    """A line that is not a JSON object."""


def dump_line(message: dict) -> bytes:
    return (json.dumps(message, separators=(",", ":")) + "\n").encode("utf-8")


def parse_line(line: bytes | str) -> dict:
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    try:
        message = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FrameError(f"malformed frame: {exc}") from exc
    if not isinstance(message, dict):
        raise FrameError(f"frame must be a JSON object, got {type(message).__name__}")
    return message


def error_frame(code: str, message: str) -> dict:
    return {"ok": False, "error": {"code": code, "message": message}}


def decode_image_payload(request: dict) -> tuple[int, int, bytes]:
    """(width, height, raw RGB bytes) from an encode_image request."""
    try:
        width = int(request["width"])
        height = int(request["height"])
        data = base64.b64decode(request["data"], validate=True)
    except (KeyError, TypeError, ValueError) as exc:
        raise FrameError(f"bad image payload: {exc}") from exc
    expected = width * height * 3
    if len(data) != expected:
        raise FrameError(
            f"image payload has {len(data)} bytes, expected {expected} "
            f"for {width}x{height} RGB"
        )
    return width, height, data
