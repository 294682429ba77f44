"""Checkpoint format and the reference denoiser architecture.

A checkpoint is a torch-saved dict: {"format", "version", "config",
"state_dict"}. The reference architecture is a small bidirectional
transformer encoder — enough to exercise the serving path end to end;
swapping in a larger model only means registering another architecture.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
from torch import nn

CHECKPOINT_FORMAT = "logicdiff-bridge"
CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    """The checkpoint file is unreadable or structurally wrong."""


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 200
    d_model: int = 32
    n_heads: int = 4
    n_layers: int = 1
    d_ff: int = 64
    max_len: int = 512
    mask_id: int | None = None  # None means the last vocabulary slot
    rng_seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 2:
            raise CheckpointError("vocab_size must be at least 2")
        if self.d_model % self.n_heads != 0:
            raise CheckpointError("d_model must be divisible by n_heads")
        if self.max_len < 1:
            raise CheckpointError("max_len must be positive")
        if self.mask_id is not None and not 0 <= self.mask_id < self.vocab_size:
            raise CheckpointError(f"mask_id {self.mask_id} outside the vocabulary")

    @property
    def effective_mask_id(self) -> int:
        return self.vocab_size - 1 if self.mask_id is None else self.mask_id


class TinyDenoiser(nn.Module):
    """Bidirectional encoder over the full sequence; no causal masking."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_embed = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.pos_embed = nn.Embedding(cfg.max_len, cfg.d_model)
        layer = nn.TransformerEncoderLayer(
            d_model=cfg.d_model,
            nhead=cfg.n_heads,
            dim_feedforward=cfg.d_ff,
            dropout=0.0,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=cfg.n_layers)
        self.ln_f = nn.LayerNorm(cfg.d_model)
        self.lm_head = nn.Linear(cfg.d_model, cfg.vocab_size)

    def forward(self, ids: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """ids: (L,) int64. Returns (final hidden, pre-head hidden, logits)."""
        length = ids.shape[0]
        positions = torch.arange(length, device=ids.device)
        x = self.tok_embed(ids) + self.pos_embed(positions)
        final = self.encoder(x.unsqueeze(0)).squeeze(0)
        pre_head = self.ln_f(final)
        logits = self.lm_head(pre_head)
        return final, pre_head, logits


def create_model(cfg: ModelConfig) -> TinyDenoiser:
    torch.manual_seed(cfg.rng_seed)
    model = TinyDenoiser(cfg)
    model.eval()
    return model


def save_checkpoint(path, model: TinyDenoiser) -> None:
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": asdict(model.cfg),
            "state_dict": model.state_dict(),
        },
        path,
    )


def load_checkpoint(path, device: str = "cpu") -> TinyDenoiser:
    """Load a frozen model in eval mode; any defect raises CheckpointError."""
    try:
        blob = torch.load(path, map_location=device, weights_only=True)
    except OSError:
        raise
    except Exception as exc:  # torch wraps unpickling failures many ways
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(blob, dict) or blob.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {blob.get('version')!r} unsupported, expected {CHECKPOINT_VERSION}"
        )
    cfg = ModelConfig(**blob["config"])
    model = TinyDenoiser(cfg)
    try:
        model.load_state_dict(blob["state_dict"])
    except RuntimeError as exc:
        raise CheckpointError(f"state dict does not fit the declared config: {exc}") from exc
    model.to(device)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model
