"""Socket server that answers v1 request frames with one frozen forward pass.

Per request: the wire mask sentinel (token id 0) is remapped to the
checkpoint's own mask id, the model runs once under no_grad, and the reply
carries per-position hidden vectors plus the top-1 (token, prob). Revealed
positions echo their own token with probability 1, and neither the model's
mask id nor the wire sentinel can be emitted as a prediction — committing
either would wedge the client's decode loop.

One request at a time per connection; concurrent connections share the
frozen model behind a lock.
"""

from __future__ import annotations

import socket
import threading
from dataclasses import dataclass

import torch

from .framing import (
    MASK_SENTINEL,
    PROTOCOL_VERSION,
    FramingError,
    RequestError,
    error_frame,
    parse_request,
    recv_frame,
    send_frame,
)
from .model import TinyDenoiser, load_checkpoint

HIDDEN_LAYERS = ("final", "pre_head")


@dataclass(frozen=True)
class ServeConfig:
    checkpoint: str
    host: str = "127.0.0.1"
    port: int = 0
    device: str = "cpu"
    sparse: bool = False
    hidden_layer: str = "final"

    def __post_init__(self):
        if self.hidden_layer not in HIDDEN_LAYERS:
            raise ValueError(f"hidden_layer must be one of {HIDDEN_LAYERS}")


class BridgeServer:
    """Load once, then serve until shutdown(). Construction aborts on a bad
    checkpoint or an unbindable address."""

    def __init__(self, cfg: ServeConfig):
        self.cfg = cfg
        self.model: TinyDenoiser = load_checkpoint(cfg.checkpoint, device=cfg.device)
        self.d = self.model.cfg.d_model
        self._forward_lock = threading.Lock()
        self._shutdown = threading.Event()
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((cfg.host, cfg.port))
        self._sock.listen(16)
        self.host, self.port = self._sock.getsockname()[:2]

    def serve_forever(self) -> None:
        self._sock.settimeout(0.2)
        try:
            while not self._shutdown.is_set():
                try:
                    conn, _ = self._sock.accept()
                except socket.timeout:
                    continue
                except OSError:
                    break
                thread = threading.Thread(
                    target=self._serve_connection, args=(conn,), daemon=True
                )
                thread.start()
        finally:
            self._sock.close()

    def shutdown(self) -> None:
        self._shutdown.set()

    def _serve_connection(self, conn: socket.socket) -> None:
        with conn:
            while not self._shutdown.is_set():
                try:
                    payload = recv_frame(conn)
                except (FramingError, OSError):
                    return  # client went away or sent garbage; drop the connection
                try:
                    response = self.answer(payload)
                except RequestError as exc:
                    response = error_frame(str(exc))
                try:
                    send_frame(conn, response)
                except OSError:
                    return

    def answer(self, payload: dict) -> dict:
        """One request frame in, one response frame out (both as dicts)."""
        tokens, prompt_len = parse_request(payload)
        vocab_size = self.model.cfg.vocab_size
        max_len = self.model.cfg.max_len
        if len(tokens) > max_len:
            raise RequestError(f"sequence of {len(tokens)} exceeds max length {max_len}")
        for i, t in enumerate(tokens):
            if not 0 <= t < vocab_size:
                raise RequestError(f"token id {t} at position {i} outside vocab of {vocab_size}")

        mask_id = self.model.cfg.effective_mask_id
        mapped = [mask_id if t == MASK_SENTINEL else t for t in tokens]
        ids = torch.tensor(mapped, dtype=torch.int64)
        with self._forward_lock, torch.no_grad():
            final, pre_head, logits = self.model(ids)
            hidden = final if self.cfg.hidden_layer == "final" else pre_head
            # a served prediction must be a committable token
            logits[:, mask_id] = float("-inf")
            if MASK_SENTINEL != mask_id:
                logits[:, MASK_SENTINEL] = float("-inf")
            probs = torch.softmax(logits, dim=-1)
            top_prob, top_token = probs.max(dim=-1)

        hidden_rows = hidden.cpu().double().tolist()
        out_token = top_token.cpu().tolist()
        out_prob = top_prob.cpu().double().tolist()
        for i, t in enumerate(tokens):
            if i < prompt_len or t != MASK_SENTINEL:
                out_token[i] = t
                out_prob[i] = 1.0

        response = {
            "v": PROTOCOL_VERSION,
            "d": self.d,
            "top_token": out_token,
            "top_prob": out_prob,
        }
        if self.cfg.sparse:
            response["hidden_sparse"] = [
                [i, hidden_rows[i]]
                for i, t in enumerate(tokens)
                if i >= prompt_len and t == MASK_SENTINEL
            ]
        else:
            response["hidden"] = hidden_rows
        return response


def start_in_thread(cfg: ServeConfig) -> tuple[BridgeServer, threading.Thread]:
    """Convenience for tests and embedding: returns a running server."""
    server = BridgeServer(cfg)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
