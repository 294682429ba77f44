"""Wire protocol: recorded-frame fixtures, framing, client error handling, retries."""

import json
import os
import socket
import struct
import threading
import time

import numpy as np
import pytest

from logicdiff.backends import (
    BackendTimeoutError,
    MalformedFrameError,
    RemoteBackend,
    SyntheticBackend,
    TrapConfig,
    VersionMismatchError,
    WireError,
)
from logicdiff.backends.remote import (
    PROTOCOL_VERSION,
    encode_frame,
    make_request,
    parse_response,
    read_frame,
)
from logicdiff.core import SequenceState, initial_state

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures", "protocol")


def fixture_bytes(name: str) -> bytes:
    with open(os.path.join(FIXTURES, name), "rb") as f:
        return f.read()


def fixture_payload(name: str) -> dict:
    blob = fixture_bytes(name)
    return json.loads(blob[4:].decode("utf-8"))


def feed(blob: bytes):
    """Play raw bytes through a real socket pair."""
    a, b = socket.socketpair()
    a.sendall(blob)
    a.close()
    return b


def test_request_frame_is_bit_exact_against_fixture():
    state = initial_state([7, 12], gen_len=3)
    assert encode_frame(make_request(state)) == fixture_bytes("request.bin")


def test_frame_header_is_big_endian_length():
    blob = fixture_bytes("request.bin")
    (length,) = struct.unpack(">I", blob[:4])
    assert length == len(blob) - 4


def test_read_frame_round_trips_all_fixtures():
    for name in ("request.bin", "response_dense.bin", "response_sparse.bin"):
        sock = feed(fixture_bytes(name))
        payload = read_frame(sock)
        sock.close()
        assert encode_frame(payload) == fixture_bytes(name)


def test_read_frame_rejects_truncated_stream():
    sock = feed(fixture_bytes("response_dense.bin")[:-10])
    with pytest.raises(MalformedFrameError, match="mid-frame"):
        read_frame(sock)
    sock.close()


def test_read_frame_rejects_non_json_body():
    sock = feed(fixture_bytes("response_not_json.bin"))
    with pytest.raises(MalformedFrameError, match="not valid JSON"):
        read_frame(sock)
    sock.close()


def test_parse_dense_response_fixture():
    out = parse_response(fixture_payload("response_dense.bin"), expected_length=5)
    assert out.d == 3
    assert out.hidden.shape == (5, 3)
    assert list(out.top_token) == [7, 12, 44, 9, 3]
    assert out.top_prob[2] == 0.95
    assert out.hidden[3, 2] == 0.125


def test_parse_sparse_response_expands_with_zero_default():
    out = parse_response(fixture_payload("response_sparse.bin"), expected_length=5)
    dense = parse_response(fixture_payload("response_dense.bin"), expected_length=5)
    assert np.array_equal(out.hidden[2:], dense.hidden[2:])
    assert np.all(out.hidden[:2] == 0.0)
    assert np.array_equal(out.top_token, dense.top_token)


def test_missing_field_error_names_the_field():
    with pytest.raises(MalformedFrameError, match="top_prob"):
        parse_response(fixture_payload("response_missing_field.bin"), expected_length=5)


def test_version_mismatch_is_fatal():
    with pytest.raises(VersionMismatchError, match="2"):
        parse_response(fixture_payload("response_bad_version.bin"), expected_length=5)


def test_server_error_frame_raises_wire_error():
    with pytest.raises(WireError, match="no checkpoint loaded"):
        parse_response(fixture_payload("response_error.bin"), expected_length=5)


@pytest.mark.parametrize(
    "mutate,match",
    [
        (lambda p: {k: v for k, v in p.items() if k != "v"}, "'v'"),
        (lambda p: {k: v for k, v in p.items() if k != "d"}, "'d'"),
        (lambda p: {k: v for k, v in p.items() if k != "top_token"}, "top_token"),
        (lambda p: {**p, "hidden_sparse": []}, "exactly one"),
        (lambda p: {k: v for k, v in p.items() if k != "hidden"}, "exactly one"),
        (lambda p: {**p, "top_prob": [1.0]}, "lengths"),
        (lambda p: {**p, "hidden": [[0.0] * 3] * 4}, "shape"),
    ],
)
def test_malformed_response_variants(mutate, match):
    payload = mutate(fixture_payload("response_dense.bin"))
    with pytest.raises(MalformedFrameError, match=match):
        parse_response(payload, expected_length=5)


def test_sparse_position_out_of_range():
    payload = fixture_payload("response_sparse.bin")
    payload["hidden_sparse"][0][0] = 9
    with pytest.raises(MalformedFrameError, match="out of range"):
        parse_response(payload, expected_length=5)


class FixtureServer(threading.Thread):
    """Single-threaded protocol server driven by a handler(payload) -> payload."""

    def __init__(self, handler):
        super().__init__(daemon=True)
        self.handler = handler
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind(("127.0.0.1", 0))
        self.sock.listen(8)
        self.sock.settimeout(0.1)
        self.port = self.sock.getsockname()[1]
        self._stop_flag = threading.Event()

    def run(self):
        while not self._stop_flag.is_set():
            try:
                conn, _ = self.sock.accept()
            except socket.timeout:
                continue
            try:
                request = read_frame(conn)
                response = self.handler(request)
                if response is not None:
                    conn.sendall(encode_frame(response))
            except Exception:
                pass
            finally:
                conn.close()

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self._stop_flag.set()
        self.join(timeout=2.0)
        self.sock.close()


def synthetic_handler(backend):
    def handle(payload):
        state = SequenceState(np.array(payload["tokens"]), payload["prompt_len"])
        out = backend.forward(state)
        return {
            "v": PROTOCOL_VERSION,
            "d": out.d,
            "hidden": out.hidden.tolist(),
            "top_token": [int(t) for t in out.top_token],
            "top_prob": [float(p) for p in out.top_prob],
        }

    return handle


def test_remote_backend_matches_local_synthetic(small_problems, vocab):
    local = SyntheticBackend(small_problems[0], TrapConfig(), vocab)
    state = initial_state(local.question_ids, local.gen_len)
    with FixtureServer(synthetic_handler(local)) as server:
        remote = RemoteBackend("127.0.0.1", server.port, timeout=5.0)
        want = local.forward(state)
        got = remote.forward(state)
        assert np.array_equal(got.hidden, want.hidden)
        assert np.array_equal(got.top_token, want.top_token)
        assert np.array_equal(got.top_prob, want.top_prob)
        assert remote.d == local.d


def test_remote_backend_sparse_server(small_problems, vocab):
    local = SyntheticBackend(small_problems[1], TrapConfig(), vocab)
    state = initial_state(local.question_ids, local.gen_len)

    def sparse_handler(payload):
        full = synthetic_handler(local)(payload)
        masked = [i for i, t in enumerate(payload["tokens"]) if t == 0]
        return {
            "v": PROTOCOL_VERSION,
            "d": full["d"],
            "hidden_sparse": [[i, full["hidden"][i]] for i in masked],
            "top_token": full["top_token"],
            "top_prob": full["top_prob"],
        }

    with FixtureServer(sparse_handler) as server:
        remote = RemoteBackend("127.0.0.1", server.port, timeout=5.0)
        got = remote.forward(state)
        want = local.forward(state)
        window = slice(state.prompt_len, state.length)
        assert np.array_equal(got.hidden[window], want.hidden[window])
        assert np.all(got.hidden[: state.prompt_len] == 0.0)


def test_remote_version_mismatch_not_retried(small_problems, vocab):
    calls = []

    def bad_version(payload):
        calls.append(1)
        return {"v": 99}

    local = SyntheticBackend(small_problems[0], TrapConfig(), vocab)
    state = initial_state(local.question_ids, local.gen_len)
    with FixtureServer(bad_version) as server:
        remote = RemoteBackend("127.0.0.1", server.port, timeout=5.0, max_retries=3, backoff=0.01)
        with pytest.raises(VersionMismatchError):
            remote.forward(state)
    assert len(calls) == 1


def test_timeout_retries_then_succeeds(small_problems, vocab, monkeypatch):
    """Two timeouts, then an answer: the client must quietly absorb the retries."""
    local = SyntheticBackend(small_problems[0], TrapConfig(), vocab)
    state = initial_state(local.question_ids, local.gen_len)
    good_payload = synthetic_handler(local)(make_request(state))
    remote = RemoteBackend("127.0.0.1", 1, timeout=0.1, max_retries=3, backoff=0.0)
    attempts = []

    def flaky_round_trip(request):
        attempts.append(1)
        if len(attempts) <= 2:
            raise socket.timeout("simulated stall")
        return good_payload

    monkeypatch.setattr(remote, "_round_trip", flaky_round_trip)
    out = remote.forward(state)
    assert len(attempts) == 3
    assert np.array_equal(out.top_token, local.forward(state).top_token)


def test_timeout_exhausts_retries(monkeypatch):
    remote = RemoteBackend("127.0.0.1", 1, timeout=0.1, max_retries=2, backoff=0.0)
    attempts = []

    def always_slow(request):
        attempts.append(1)
        raise socket.timeout("simulated stall")

    monkeypatch.setattr(remote, "_round_trip", always_slow)
    with pytest.raises(BackendTimeoutError):
        remote.forward(initial_state([7, 12], gen_len=3))
    assert len(attempts) == 3  # the first try plus two retries


def test_real_socket_timeout_maps_to_backend_timeout(small_problems, vocab):
    local = SyntheticBackend(small_problems[0], TrapConfig(), vocab)
    state = initial_state(local.question_ids, local.gen_len)

    def never_answers(payload):
        time.sleep(0.6)
        return None

    with FixtureServer(never_answers) as server:
        remote = RemoteBackend("127.0.0.1", server.port, timeout=0.15, max_retries=0)
        with pytest.raises(BackendTimeoutError):
            remote.forward(state)


def test_connection_refused_raises_wire_error():
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    free_port = probe.getsockname()[1]
    probe.close()
    remote = RemoteBackend("127.0.0.1", free_port, timeout=0.5, max_retries=1, backoff=0.01)
    with pytest.raises(WireError):
        remote.forward(initial_state([7, 12], gen_len=3))
