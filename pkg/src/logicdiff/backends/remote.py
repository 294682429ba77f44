"""Remote denoiser client speaking the length-prefixed JSON wire protocol.

Frames are a 4-byte big-endian length followed by that many bytes of UTF-8
JSON. Requests carry {"v": 1, "tokens": [...], "prompt_len": n}; responses
carry {"v": 1, "d": D, "hidden": [[...]] | "hidden_sparse": [[pos, [...]],
...], "top_token": [...], "top_prob": [...]}. See docs/protocol.md.

Timeouts and connection failures are retried with exponential backoff up to
max_retries times; protocol violations (version mismatch, malformed frames)
are raised immediately.
"""

from __future__ import annotations

import json
import socket
import struct
import time

import numpy as np

from ..core import LogicDiffError, SequenceState
from . import DenoiserBackend, DenoiserOutput

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 256 * 1024 * 1024
_HEADER = struct.Struct(">I")


class WireError(LogicDiffError):
    """Base class for wire-protocol failures."""


class VersionMismatchError(WireError):
    """Peer speaks a different protocol version; not retryable."""


class MalformedFrameError(WireError):
    """Frame could not be parsed or is missing required fields; not retryable."""


class BackendTimeoutError(WireError):
    """The backend did not answer in time; the request may be retried."""


def encode_frame(payload: dict) -> bytes:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_FRAME_BYTES:
        raise MalformedFrameError(f"frame of {len(body)} bytes exceeds the {MAX_FRAME_BYTES} limit")
    return _HEADER.pack(len(body)) + body


def read_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            raise MalformedFrameError(
                f"connection closed mid-frame with {remaining} of {n} bytes unread"
            )
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> dict:
    header = read_exact(sock, _HEADER.size)
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise MalformedFrameError(f"declared frame length {length} exceeds the limit")
    body = read_exact(sock, length)
    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFrameError(f"frame body is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise MalformedFrameError("frame body must be a JSON object")
    return payload


def make_request(state: SequenceState) -> dict:
    return {
        "v": PROTOCOL_VERSION,
        "tokens": [int(t) for t in state.ids],
        "prompt_len": state.prompt_len,
    }


def parse_response(payload: dict, expected_length: int) -> DenoiserOutput:
    """Validate a response frame and expand it into a DenoiserOutput."""
    if "v" not in payload:
        raise MalformedFrameError("response missing field 'v'")
    if payload["v"] != PROTOCOL_VERSION:
        raise VersionMismatchError(
            f"peer protocol version {payload['v']!r}, expected {PROTOCOL_VERSION}"
        )
    if "error" in payload:
        raise WireError(f"backend error: {payload['error']}")
    for field in ("d", "top_token", "top_prob"):
        if field not in payload:
            raise MalformedFrameError(f"response missing field '{field}'")
    has_dense = "hidden" in payload
    has_sparse = "hidden_sparse" in payload
    if has_dense == has_sparse:
        raise MalformedFrameError("response must carry exactly one of 'hidden' or 'hidden_sparse'")
    d = int(payload["d"])
    top_token = np.asarray(payload["top_token"], dtype=np.int64)
    top_prob = np.asarray(payload["top_prob"], dtype=np.float64)
    if top_token.shape != (expected_length,) or top_prob.shape != (expected_length,):
        raise MalformedFrameError(
            f"top arrays have lengths {top_token.shape[0]}/{top_prob.shape[0]}, "
            f"expected {expected_length}"
        )
    if has_dense:
        hidden = np.asarray(payload["hidden"], dtype=np.float64)
        if hidden.shape != (expected_length, d):
            raise MalformedFrameError(
                f"hidden has shape {hidden.shape}, expected ({expected_length}, {d})"
            )
    else:
        hidden = np.zeros((expected_length, d), dtype=np.float64)
        for entry in payload["hidden_sparse"]:
            if not isinstance(entry, (list, tuple)) or len(entry) != 2:
                raise MalformedFrameError("hidden_sparse entries must be [position, vector] pairs")
            pos, vec = entry
            pos = int(pos)
            if not 0 <= pos < expected_length:
                raise MalformedFrameError(f"hidden_sparse position {pos} out of range")
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (d,):
                raise MalformedFrameError(
                    f"hidden_sparse vector at position {pos} has length {vec.shape[0]}, expected {d}"
                )
            hidden[pos] = vec
    return DenoiserOutput(hidden, top_token, top_prob)


class RemoteBackend(DenoiserBackend):
    """Client for a denoiser served over the wire protocol."""

    def __init__(
        self,
        host: str,
        port: int,
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff: float = 0.5,
    ):
        self.host = host
        self.port = port
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self._d: int | None = None

    @property
    def d(self) -> int:
        if self._d is None:
            raise WireError("hidden dimensionality unknown before the first forward call")
        return self._d

    def _round_trip(self, request: bytes) -> dict:
        with socket.create_connection((self.host, self.port), timeout=self.timeout) as sock:
            sock.sendall(request)
            return read_frame(sock)

    def forward(self, state: SequenceState) -> DenoiserOutput:
        request = encode_frame(make_request(state))
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                payload = self._round_trip(request)
            except (socket.timeout, TimeoutError) as exc:
                last = BackendTimeoutError(
                    f"no response from {self.host}:{self.port} within {self.timeout}s"
                )
                last.__cause__ = exc
            except ConnectionError as exc:
                last = WireError(f"connection to {self.host}:{self.port} failed: {exc}")
                last.__cause__ = exc
            else:
                out = parse_response(payload, state.length)
                self._d = out.d
                return out
            if attempt < self.max_retries:
                time.sleep(self.backoff * (2**attempt))
        assert last is not None
        raise last
