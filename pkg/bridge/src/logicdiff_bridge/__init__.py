"""Wire-protocol bridge: serves a frozen denoiser checkpoint's hidden states."""

__version__ = "0.1.0"

from .conformance import conformance_client_check
from .framing import (
    MASK_SENTINEL,
    MAX_FRAME_BYTES,
    PROTOCOL_VERSION,
    FramingError,
    RequestError,
)
from .model import (
    CheckpointError,
    ModelConfig,
    TinyDenoiser,
    create_model,
    load_checkpoint,
    save_checkpoint,
)
from .server import BridgeServer, ServeConfig, start_in_thread

__all__ = [
    "BridgeServer",
    "CheckpointError",
    "FramingError",
    "MASK_SENTINEL",
    "MAX_FRAME_BYTES",
    "ModelConfig",
    "PROTOCOL_VERSION",
    "RequestError",
    "ServeConfig",
    "TinyDenoiser",
    "conformance_client_check",
    "create_model",
    "load_checkpoint",
    "save_checkpoint",
    "start_in_thread",
]
