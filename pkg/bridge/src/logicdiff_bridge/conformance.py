"""Black-box conformance check run against a live server.

Replays the recorded request fixtures that also test the engine's remote
client, validates every response field against the v1 schema, and checks
the determinism contract. Fails fast, naming the first divergent field.
"""

from __future__ import annotations

import json
import socket
import struct
from importlib import resources

from .framing import MASK_SENTINEL, MAX_FRAME_BYTES, PROTOCOL_VERSION, encode_frame

_HEADER = struct.Struct(">I")
HANDSHAKE_LENGTH = 8


def _recv_raw(sock: socket.socket) -> bytes:
    def exact(n):
        chunks = []
        remaining = n
        while remaining > 0:
            chunk = sock.recv(remaining)
            if not chunk:
                raise ConnectionError(f"peer closed with {remaining} bytes unread")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    header = exact(_HEADER.size)
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise ConnectionError(f"peer declared an oversized frame of {length} bytes")
    return header + exact(length)


def _round_trip(host: str, port: int, frame: bytes, timeout: float) -> bytes:
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.settimeout(timeout)
        sock.sendall(frame)
        return _recv_raw(sock)


def _body(raw: bytes) -> dict:
    payload = json.loads(raw[_HEADER.size:].decode("utf-8"))
    if not isinstance(payload, dict):
        raise ValueError("frame body is not a JSON object")
    return payload


def _check_response(payload: dict, tokens: list[int], prompt_len: int) -> str | None:
    """Returns the first divergent field as a message, or None when clean."""
    length = len(tokens)
    if "error" in payload:
        return f"server error: {payload['error']}"
    if payload.get("v") != PROTOCOL_VERSION:
        return f"v: got {payload.get('v')!r}, want {PROTOCOL_VERSION}"
    d = payload.get("d")
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        return f"d: got {d!r}, want a positive integer"

    has_dense = "hidden" in payload
    has_sparse = "hidden_sparse" in payload
    if has_dense == has_sparse:
        return "hidden: response must carry exactly one of hidden / hidden_sparse"
    masked = {i for i in range(prompt_len, length) if tokens[i] == MASK_SENTINEL}
    if has_dense:
        rows = payload["hidden"]
        if not isinstance(rows, list) or len(rows) != length:
            return f"hidden: got {len(rows) if isinstance(rows, list) else type(rows).__name__} rows, want {length}"
        for i, row in enumerate(rows):
            if not isinstance(row, list) or len(row) != d:
                return f"hidden: row {i} is not a length-{d} vector"
    else:
        pairs = payload["hidden_sparse"]
        if not isinstance(pairs, list):
            return "hidden_sparse: not a list"
        seen = set()
        for pair in pairs:
            if not (isinstance(pair, list) and len(pair) == 2):
                return "hidden_sparse: entries must be [position, vector] pairs"
            pos, vec = pair
            if not isinstance(pos, int) or not 0 <= pos < length:
                return f"hidden_sparse: position {pos!r} outside the sequence"
            if not isinstance(vec, list) or len(vec) != d:
                return f"hidden_sparse: vector at {pos} is not length {d}"
            seen.add(pos)
        if not masked <= seen:
            missing = min(masked - seen)
            return f"hidden_sparse: masked position {missing} not covered"

    for field in ("top_token", "top_prob"):
        if field not in payload:
            return f"{field}: missing"
        if not isinstance(payload[field], list) or len(payload[field]) != length:
            return f"{field}: wrong length, want {length}"
    probs = payload["top_prob"]
    for i, p in enumerate(probs):
        if not isinstance(p, (int, float)) or isinstance(p, bool) or not 0.0 < p <= 1.0:
            return f"top_prob: value {p!r} at {i} outside (0, 1]"
    toks = payload["top_token"]
    for i, t in enumerate(toks):
        if not isinstance(t, int) or isinstance(t, bool) or t < 0:
            return f"top_token: value {t!r} at {i} is not a token id"
    for i in range(length):
        if i in masked:
            if toks[i] == MASK_SENTINEL:
                return f"top_token: masked position {i} predicts the mask sentinel"
        else:
            if toks[i] != tokens[i]:
                return f"top_token: revealed position {i} echoes {toks[i]} instead of {tokens[i]}"
            if probs[i] != 1.0:
                return f"top_prob: revealed position {i} has prob {probs[i]}, want 1.0"
    return None


def recorded_requests() -> list[bytes]:
    """The committed request frames, bit-identical to the client test fixtures."""
    root = resources.files("logicdiff_bridge").joinpath("fixtures")
    frames = []
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.startswith("request") and entry.name.endswith(".bin"):
            frames.append(entry.read_bytes())
    if not frames:
        raise FileNotFoundError("no recorded request fixtures packaged")
    return frames


def conformance_client_check(host: str, port: int, timeout: float = 10.0) -> tuple[bool, list[str]]:
    """Returns (passed, failure messages). Stops at the first failure."""
    failures: list[str] = []

    # Handshake: an all-mask request; a wrong version fails right here.
    handshake = {
        "v": PROTOCOL_VERSION,
        "tokens": [MASK_SENTINEL] * HANDSHAKE_LENGTH,
        "prompt_len": 0,
    }
    try:
        raw = _round_trip(host, port, encode_frame(handshake), timeout)
        payload = _body(raw)
    except (OSError, ValueError) as exc:
        return False, [f"handshake: {exc}"]
    if payload.get("v") != PROTOCOL_VERSION:
        return False, [f"handshake: protocol version {payload.get('v')!r}, want {PROTOCOL_VERSION}"]
    problem = _check_response(payload, handshake["tokens"], 0)
    if problem is not None:
        return False, [f"handshake: {problem}"]
    d = payload["d"]

    # Replay the recorded frames exactly as the client tests send them.
    for frame in recorded_requests():
        request = _body(frame)
        try:
            raw = _round_trip(host, port, frame, timeout)
            payload = _body(raw)
        except (OSError, ValueError) as exc:
            return False, [f"replay: {exc}"]
        problem = _check_response(payload, request["tokens"], request["prompt_len"])
        if problem is not None:
            return False, [f"replay: {problem}"]
        if payload["d"] != d:
            return False, [f"replay: d changed from {d} to {payload['d']} between requests"]

        # Determinism: an identical request must produce identical bytes.
        again = _round_trip(host, port, frame, timeout)
        if again != raw:
            return False, ["determinism: identical requests produced different responses"]

    return True, failures
