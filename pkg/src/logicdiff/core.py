"""Shared sequence-state, role, and configuration types used by every other module."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

# Reserved sentinel ids are fixed so file formats stay bit-exact.
MASK_ID = 0
PAD_ID = 1
UNK_ID = 2

NUM_ROLES = 5


class LogicDiffError(Exception):
    pass


class InvalidConfigError(LogicDiffError, ValueError):
    pass


class InvalidInputError(LogicDiffError, ValueError):
    pass


class ShapeError(LogicDiffError, ValueError):
    pass


class Role(enum.IntEnum):
    """Five-way logical-role taxonomy; the integer value is the dependency order."""

    PREMISE = 0
    CONNECTIVE = 1
    DERIVED = 2
    CONCLUSION = 3
    FILLER = 4


def role_order(role: Role) -> int:
    return int(role)


SCHEDULERS = ("confidence", "logicdiff", "random")


@dataclass(frozen=True)
class GenerationConfig:
    """Knobs for one generation run; immutable and shareable across loops."""

    steps: int = 256
    gen_len: int = 256
    w_role: float = 0.7
    w_conf: float = 0.3
    scheduler: str = "logicdiff"
    rng_seed: int = 0

    def __post_init__(self):
        if self.steps < 1 or self.gen_len < 1:
            raise InvalidConfigError(
                f"steps and gen_len must be positive, got steps={self.steps} gen_len={self.gen_len}"
            )
        if self.w_role < 0 or self.w_conf < 0 or self.w_role + self.w_conf <= 0:
            raise InvalidConfigError(
                f"weights must be non-negative with a positive sum, got "
                f"w_role={self.w_role} w_conf={self.w_conf}"
            )
        if self.scheduler not in SCHEDULERS:
            raise InvalidConfigError(f"unknown scheduler {self.scheduler!r}")


def tokens_per_step(gen_len: int, steps: int) -> int:
    """Per-step unmask budget: ceil(gen_len / steps)."""
    if gen_len < 1 or steps < 1:
        raise InvalidConfigError(
            f"gen_len and steps must be positive, got gen_len={gen_len} steps={steps}"
        )
    return -(-gen_len // steps)


@dataclass
class SequenceState:
    """Token buffer with an immutable prompt prefix and a generation window.

    Positions below ``prompt_len`` are never masked and never rewritten;
    unmask writes may only fill positions that currently hold the mask id.
    """

    ids: np.ndarray
    prompt_len: int
    mask_id: int = MASK_ID

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.ids.ndim != 1:
            raise InvalidInputError("state ids must be one-dimensional")
        if not 0 <= self.prompt_len <= len(self.ids):
            raise InvalidInputError(
                f"prompt_len {self.prompt_len} outside sequence of length {len(self.ids)}"
            )
        if np.any(self.ids[: self.prompt_len] == self.mask_id):
            raise InvalidInputError("prompt prefix may not contain the mask sentinel")

    @property
    def length(self) -> int:
        return len(self.ids)

    @property
    def gen_len(self) -> int:
        return len(self.ids) - self.prompt_len

    def write(self, pos: int, token: int) -> None:
        """Unmask one position. Rejects prompt positions and double writes."""
        if pos < self.prompt_len:
            raise InvalidInputError(f"position {pos} is inside the immutable prompt")
        if self.ids[pos] != self.mask_id:
            raise InvalidInputError(f"position {pos} was already unmasked")
        if token == self.mask_id:
            raise InvalidInputError("cannot write the mask sentinel")
        self.ids[pos] = token

    def copy(self) -> "SequenceState":
        return SequenceState(self.ids.copy(), self.prompt_len, self.mask_id)


def initial_state(prompt_ids, gen_len: int, mask_id: int = MASK_ID) -> SequenceState:
    """Prompt followed by ``gen_len`` mask sentinels."""
    prompt_ids = np.asarray(prompt_ids, dtype=np.int64)
    if gen_len < 1:
        raise InvalidConfigError(f"gen_len must be positive, got {gen_len}")
    ids = np.concatenate([prompt_ids, np.full(gen_len, mask_id, dtype=np.int64)])
    return SequenceState(ids, prompt_len=len(prompt_ids), mask_id=mask_id)


def masked_positions(state: SequenceState) -> list[int]:
    """Strictly increasing positions currently holding the mask sentinel."""
    return [int(p) for p in np.flatnonzero(state.ids == state.mask_id)]
