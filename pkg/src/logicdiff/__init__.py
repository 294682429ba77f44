"""Role-guided unmasking for masked-diffusion text generation."""

from .core import (
    GenerationConfig,
    InvalidConfigError,
    InvalidInputError,
    LogicDiffError,
    MASK_ID,
    NUM_ROLES,
    PAD_ID,
    Role,
    SCHEDULERS,
    SequenceState,
    ShapeError,
    UNK_ID,
    initial_state,
    masked_positions,
    role_order,
    tokens_per_step,
)

__version__ = "0.1.0"

__all__ = [
    "GenerationConfig",
    "InvalidConfigError",
    "InvalidInputError",
    "LogicDiffError",
    "MASK_ID",
    "NUM_ROLES",
    "PAD_ID",
    "Role",
    "SCHEDULERS",
    "SequenceState",
    "ShapeError",
    "UNK_ID",
    "initial_state",
    "masked_positions",
    "role_order",
    "tokens_per_step",
    "__version__",
]
