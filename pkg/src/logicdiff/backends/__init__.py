"""Denoiser backends: the shared output contract plus synthetic and remote implementations."""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from ..core import SequenceState, ShapeError


@dataclass
class DenoiserOutput:
    """Per-position denoiser read-out for one full sequence.

    hidden is (L, D); top_token / top_prob are length L and describe the
    argmax of the per-position next-token distribution. Revealed positions
    report their own token with probability 1.
    """

    hidden: np.ndarray
    top_token: np.ndarray
    top_prob: np.ndarray

    def __post_init__(self):
        self.hidden = np.asarray(self.hidden, dtype=np.float64)
        self.top_token = np.asarray(self.top_token, dtype=np.int64)
        self.top_prob = np.asarray(self.top_prob, dtype=np.float64)
        if self.hidden.ndim != 2:
            raise ShapeError(f"hidden must be 2-D, got shape {self.hidden.shape}")
        length = self.hidden.shape[0]
        if self.top_token.shape != (length,) or self.top_prob.shape != (length,):
            raise ShapeError(
                f"top_token/top_prob must both have shape ({length},), got "
                f"{self.top_token.shape} and {self.top_prob.shape}"
            )
        if not np.all(np.isfinite(self.hidden)):
            raise ShapeError("hidden contains non-finite values")
        if np.any(self.top_prob < -1e-12) or np.any(self.top_prob > 1.0 + 1e-12):
            raise ShapeError("top_prob outside [0, 1]")

    @property
    def length(self) -> int:
        return self.hidden.shape[0]

    @property
    def d(self) -> int:
        return self.hidden.shape[1]


class DenoiserBackend(abc.ABC):
    """A denoiser accepts a partially revealed sequence and predicts every position.

    Implementations must be deterministic: the same state yields an identical
    DenoiserOutput.
    """

    @property
    @abc.abstractmethod
    def d(self) -> int:
        """Hidden-state dimensionality."""

    @abc.abstractmethod
    def forward(self, state: SequenceState) -> DenoiserOutput:
        ...


from .synthetic import SyntheticBackend, TrapConfig  # noqa: E402
from .remote import (  # noqa: E402
    BackendTimeoutError,
    MalformedFrameError,
    RemoteBackend,
    VersionMismatchError,
    WireError,
)

__all__ = [
    "DenoiserOutput",
    "DenoiserBackend",
    "SyntheticBackend",
    "TrapConfig",
    "RemoteBackend",
    "WireError",
    "VersionMismatchError",
    "MalformedFrameError",
    "BackendTimeoutError",
]
