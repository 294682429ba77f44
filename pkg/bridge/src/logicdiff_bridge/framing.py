"""Server-side implementation of the v1 length-prefixed JSON wire protocol.

Implemented against docs/protocol.md in the engine repository; deliberately
shares no code with the engine's client so the two sides check each other.
"""

from __future__ import annotations

import json
import socket
import struct

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 256 * 1024 * 1024
MASK_SENTINEL = 0

_HEADER = struct.Struct(">I")


class FramingError(Exception):
    """A frame that violates the wire contract."""


class RequestError(Exception):
    """A well-framed request the server must answer with an error frame."""


def encode_frame(payload: dict) -> bytes:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_FRAME_BYTES:
        raise FramingError(f"frame body of {len(body)} bytes exceeds the limit")
    return _HEADER.pack(len(body)) + body


def recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            raise FramingError(f"peer closed mid-frame with {remaining} of {n} bytes unread")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock: socket.socket) -> dict:
    header = recv_exact(sock, _HEADER.size)
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise FramingError(f"declared frame length {length} exceeds the limit")
    body = recv_exact(sock, length)
    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FramingError(f"frame body is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise FramingError("frame body must be a JSON object")
    return payload


def send_frame(sock: socket.socket, payload: dict) -> None:
    sock.sendall(encode_frame(payload))


def error_frame(message: str) -> dict:
    return {"v": PROTOCOL_VERSION, "error": message}


def parse_request(payload: dict) -> tuple[list[int], int]:
    """Validate a request frame; returns (tokens, prompt_len)."""
    if "v" not in payload:
        raise RequestError("request missing field 'v'")
    if payload["v"] != PROTOCOL_VERSION:
        raise RequestError(
            f"unsupported protocol version {payload['v']!r}, this server speaks {PROTOCOL_VERSION}"
        )
    for field in ("tokens", "prompt_len"):
        if field not in payload:
            raise RequestError(f"request missing field {field!r}")
    tokens = payload["tokens"]
    if not isinstance(tokens, list) or not all(
        isinstance(t, int) and not isinstance(t, bool) for t in tokens
    ):
        raise RequestError("request field 'tokens' must be a list of integers")
    if not tokens:
        raise RequestError("request field 'tokens' must not be empty")
    prompt_len = payload["prompt_len"]
    if not isinstance(prompt_len, int) or isinstance(prompt_len, bool):
        raise RequestError("request field 'prompt_len' must be an integer")
    if not 0 <= prompt_len <= len(tokens):
        raise RequestError(
            f"prompt_len {prompt_len} outside [0, {len(tokens)}] for this request"
        )
    return tokens, prompt_len
