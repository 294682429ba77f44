"""Conformance checker: passes against the real server, names defects in fakes."""

import socket
import threading

import pytest

from logicdiff_bridge import ServeConfig, conformance_client_check, start_in_thread
from logicdiff_bridge.framing import encode_frame, recv_frame, send_frame


class RiggedServer(threading.Thread):
    """Answers through `rig(request, good_response) -> payload`."""

    def __init__(self, inner, rig):
        super().__init__(daemon=True)
        self.inner = inner  # a real BridgeServer used to build correct payloads
        self.rig = rig
        self.sock = socket.socket()
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind(("127.0.0.1", 0))
        self.sock.listen(8)
        self.sock.settimeout(0.1)
        self.port = self.sock.getsockname()[1]
        self.done = threading.Event()

    def run(self):
        while not self.done.is_set():
            try:
                conn, _ = self.sock.accept()
            except socket.timeout:
                continue
            with conn:
                try:
                    request = recv_frame(conn)
                    send_frame(conn, self.rig(request, self.inner.answer(request)))
                except Exception:
                    pass
        self.sock.close()

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.done.set()
        self.join(timeout=5)


def test_compliant_server_passes(dense_server):
    ok, failures = conformance_client_check(dense_server.host, dense_server.port)
    assert ok, failures
    assert failures == []


def test_sparse_server_also_passes(sparse_server):
    ok, failures = conformance_client_check(sparse_server.host, sparse_server.port)
    assert ok, failures


def _check_rigged(dense_server, rig):
    with RiggedServer(dense_server, rig) as fake:
        return conformance_client_check("127.0.0.1", fake.port, timeout=5.0)


def test_omitted_top_prob_is_named(dense_server):
    ok, failures = _check_rigged(
        dense_server, lambda req, p: {k: v for k, v in p.items() if k != "top_prob"}
    )
    assert not ok
    assert "top_prob" in failures[0]


def test_wrong_version_fails_at_handshake(dense_server):
    ok, failures = _check_rigged(dense_server, lambda req, p: {**p, "v": 2})
    assert not ok
    assert failures[0].startswith("handshake:")
    assert "version" in failures[0]


def test_broken_echo_is_named(dense_server):
    def rig(req, p):
        # the handshake is all-mask; only the replayed fixture (prompt 7, 12)
        # exercises the echo rule, so corrupt the first revealed position
        if all(t == 0 for t in req["tokens"]):
            return p
        out = dict(p)
        out["top_token"] = list(p["top_token"])
        out["top_token"][0] = p["top_token"][0] + 1
        return out

    ok, failures = _check_rigged(dense_server, rig)
    assert not ok
    assert "echoes" in failures[0]


def test_out_of_range_prob_is_named(dense_server):
    def rig(req, p):
        out = dict(p)
        out["top_prob"] = list(p["top_prob"])
        out["top_prob"][-1] = 1.5
        return out

    ok, failures = _check_rigged(dense_server, rig)
    assert not ok
    assert "top_prob" in failures[0]


def test_both_hidden_forms_is_named(dense_server):
    ok, failures = _check_rigged(dense_server, lambda req, p: {**p, "hidden_sparse": []})
    assert not ok
    assert "hidden" in failures[0]


def test_nondeterministic_server_is_caught(dense_server):
    flip = {"n": 0}

    def rig(req, p):
        flip["n"] += 1
        out = dict(p)
        out["jitter"] = flip["n"]  # extra field changes the bytes every time
        return out

    ok, failures = _check_rigged(dense_server, rig)
    assert not ok
    assert "determinism" in failures[0]


def test_cli_check_against_live_server(dense_server, capsys):
    from logicdiff_bridge.cli import main

    code = main(["check", "--host", dense_server.host, "--port", str(dense_server.port)])
    out = capsys.readouterr().out
    assert code == 0
    assert "conformance: PASS" in out


def test_cli_check_reports_failure(dense_server, capsys):
    with RiggedServer(dense_server, lambda req, p: {**p, "v": 9}) as fake:
        from logicdiff_bridge.cli import main

        code = main(["check", "--host", "127.0.0.1", "--port", str(fake.port)])
    out = capsys.readouterr().out
    assert code == 1
    assert "conformance: FAIL" in out
