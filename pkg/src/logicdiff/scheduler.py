"""Unmasking schedulers: role-guided priority, confidence baseline, random baseline.

One decode step runs the backend, scores every masked position, unmasks the
k lowest-priority-score positions with their argmax tokens, and repeats until
nothing is masked. The role-guided score is

    score(i) = w_role * role_order(role_i) / 4 + w_conf * (1 - conf_i)

with lower scores unmasked first, so premises lead and fillers trail. The
confidence baseline uses score(i) = 1 - conf_i, which the role-guided rule
degenerates to at w_role = 0, w_conf = 1.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .backends import DenoiserBackend
from .core import (
    GenerationConfig,
    InvalidInputError,
    Role,
    SequenceState,
    ShapeError,
    initial_state,
    masked_positions,
    role_order,
    tokens_per_step,
)
from .rolehead import RoleHeadParams, predict_roles_batch

ROLE_SPAN = 4  # highest role order; normalizes role_order into [0, 1]


def priority_score(role: Role | int, conf: float, w_role: float, w_conf: float) -> float:
    return w_role * role_order(Role(int(role))) / ROLE_SPAN + w_conf * (1.0 - conf)


def priority_scores(roles: np.ndarray, confs: np.ndarray, w_role: float, w_conf: float) -> np.ndarray:
    roles = np.asarray(roles, dtype=np.int64)
    confs = np.asarray(confs, dtype=np.float64)
    if roles.shape != confs.shape:
        raise ShapeError(f"roles shape {roles.shape} != confs shape {confs.shape}")
    return w_role * roles.astype(np.float64) / ROLE_SPAN + w_conf * (1.0 - confs)


def select_unmask_set(positions, scores, k: int) -> list[int]:
    """The k lowest-score positions; ties break toward the lower position.

    Returned in ascending position order (the unmask set is a set; writes
    within one step are order-independent).
    """
    positions = np.asarray(positions, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if positions.shape != scores.shape or positions.ndim != 1:
        raise ShapeError(
            f"positions shape {positions.shape} and scores shape {scores.shape} must match 1-D"
        )
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    if k >= len(positions):
        return [int(p) for p in np.sort(positions)]
    order = np.lexsort((positions, scores))
    return sorted(int(p) for p in positions[order[:k]])


@dataclass(frozen=True)
class UnmaskEvent:
    """One position committed during decoding."""

    step: int
    position: int
    token: int
    role: int | None
    conf: float
    score: float

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "position": self.position,
            "token": self.token,
            "role": self.role,
            "conf": self.conf,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UnmaskEvent":
        return cls(
            step=int(d["step"]),
            position=int(d["position"]),
            token=int(d["token"]),
            role=None if d["role"] is None else int(d["role"]),
            conf=float(d["conf"]),
            score=float(d["score"]),
        )


@dataclass
class GenerationResult:
    state: SequenceState
    events: list[UnmaskEvent]
    config: GenerationConfig
    backend_seconds: float = 0.0
    scheduler_seconds: float = 0.0

    @property
    def generated_ids(self) -> np.ndarray:
        return self.state.ids[self.state.prompt_len :]


def _roles_for(
    out_hidden: np.ndarray,
    masked: np.ndarray,
    head: RoleHeadParams | None,
    gold_roles: np.ndarray | None,
    prompt_len: int,
) -> np.ndarray:
    if gold_roles is not None:
        return gold_roles[masked - prompt_len]
    if head is not None:
        return predict_roles_batch(head, out_hidden[masked])
    raise InvalidInputError("role-guided scheduling needs a role head or gold roles")


def generate(
    backend: DenoiserBackend,
    prompt_ids,
    cfg: GenerationConfig,
    head: RoleHeadParams | None = None,
    gold_roles=None,
) -> GenerationResult:
    """Decode one sequence with the configured scheduler.

    head / gold_roles drive the role-guided scheduler; for the baselines they
    only annotate the trace (gold_roles, when given, is a per-offset array
    over the generation window).
    """
    state = initial_state(prompt_ids, cfg.gen_len)
    per_step = tokens_per_step(cfg.gen_len, cfg.steps)
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([cfg.rng_seed & 0xFFFFFFFFFFFFFFFF, 0]))
    )
    if gold_roles is not None:
        gold_roles = np.asarray(gold_roles, dtype=np.int64)
        if gold_roles.shape != (cfg.gen_len,):
            raise ShapeError(
                f"gold_roles shape {gold_roles.shape} must be ({cfg.gen_len},)"
            )

    events: list[UnmaskEvent] = []
    backend_seconds = 0.0
    scheduler_seconds = 0.0
    step = 0
    while True:
        t0 = time.perf_counter()
        masked = np.array(masked_positions(state), dtype=np.int64)
        if len(masked) == 0:
            break
        t1 = time.perf_counter()
        out = backend.forward(state)
        backend_seconds += time.perf_counter() - t1

        t2 = time.perf_counter()
        confs = out.top_prob[masked]
        k = min(per_step, len(masked))
        roles: np.ndarray | None = None
        if cfg.scheduler == "logicdiff" or head is not None or gold_roles is not None:
            try:
                roles = _roles_for(out.hidden, masked, head, gold_roles, state.prompt_len)
            except InvalidInputError:
                if cfg.scheduler == "logicdiff":
                    raise
        if cfg.scheduler == "logicdiff":
            scores = priority_scores(roles, confs, cfg.w_role, cfg.w_conf)
            selected = select_unmask_set(masked, scores, k)
        elif cfg.scheduler == "confidence":
            scores = 1.0 - confs
            selected = select_unmask_set(masked, scores, k)
        else:
            scores = np.zeros(len(masked), dtype=np.float64)
            pick = rng.choice(len(masked), size=k, replace=False)
            selected = sorted(int(masked[i]) for i in pick)

        by_pos = {int(p): i for i, p in enumerate(masked)}
        for pos in selected:
            i = by_pos[pos]
            state.write(pos, int(out.top_token[pos]))
            events.append(
                UnmaskEvent(
                    step=step,
                    position=pos,
                    token=int(out.top_token[pos]),
                    role=None if roles is None else int(roles[i]),
                    conf=float(confs[i]),
                    score=float(scores[i]),
                )
            )
        scheduler_seconds += (time.perf_counter() - t2) + (t1 - t0)
        step += 1

    return GenerationResult(state, events, cfg, backend_seconds, scheduler_seconds)


def strict_role_phases(events: list[UnmaskEvent]) -> bool:
    """True when the traced role orders never decrease across the unmask sequence."""
    if not events:
        return True
    if any(e.role is None for e in events):
        raise InvalidInputError("trace has no role annotations")
    orders = [role_order(Role(e.role)) for e in events]
    return all(a <= b for a, b in zip(orders, orders[1:]))


def save_trace(path, events: list[UnmaskEvent]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in events:
            f.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")


def load_trace(path) -> list[UnmaskEvent]:
    events = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                events.append(UnmaskEvent.from_dict(json.loads(line)))
    return events
