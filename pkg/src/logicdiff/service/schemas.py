"""Request/response models for the HTTP service.

Endpoints exchange file paths rather than bulk payloads: corpora, labeled
sets, checkpoints, traces, and reports live on disk where the service runs.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, model_validator


class HealthResponse(BaseModel):
    status: Literal["ok"] = "ok"
    version: str


class TrapModel(BaseModel):
    beta: float = Field(default=0.9, ge=0.0, le=1.0)
    conn_entropy_split: float = Field(default=0.5, gt=0.0, lt=1.0)
    noise_sigma: float = Field(default=0.25, ge=0.0)
    d_syn: int = Field(default=32, ge=32)
    rng_seed: int = 0


class CorpusRequest(BaseModel):
    n_problems: int = Field(ge=1)
    steps_min: int = Field(default=2, ge=1)
    steps_max: int = Field(default=5, ge=1)
    value_max: int = Field(default=20, ge=1)
    rng_seed: int = 0
    out_path: str


class CorpusResponse(BaseModel):
    n_problems: int
    out_path: str
    role_histogram: dict[int, int]


class LabelRequest(BaseModel):
    corpus_path: str
    out_path: str


class LabelResponse(BaseModel):
    n_records: int
    n_tokens: int
    out_path: str
    class_weights: dict[int, float]
    role_distribution: dict[int, float]
    gold_agreement: float


class TrainHeadRequest(BaseModel):
    corpus_path: str
    out_path: str
    trap: TrapModel = TrapModel()
    min_examples: int = Field(default=50000, ge=1)
    epochs: int = Field(default=10, ge=0)
    batch_size: int = Field(default=256, ge=1)
    learning_rate: float = Field(default=0.05, ge=0.0)
    val_fraction: float = Field(default=0.1, gt=0.0, lt=1.0)
    dropout_rate: float = Field(default=0.1, ge=0.0, lt=1.0)
    rng_seed: int = 0
    data_seed: int = 0


class TrainHeadResponse(BaseModel):
    checkpoint_path: str
    val_accuracy: float
    per_class_recall: dict[int, float]
    param_count: int
    n_train: int
    n_val: int


class RemoteSpec(BaseModel):
    host: str
    port: int = Field(ge=1, le=65535)
    timeout: float = Field(default=30.0, gt=0.0)


class GenerateRequest(BaseModel):
    corpus_path: str
    index: int = Field(default=0, ge=0)
    scheduler: Literal["confidence", "logicdiff", "random"] = "logicdiff"
    w_role: float = Field(default=0.7, ge=0.0)
    w_conf: float = Field(default=0.3, ge=0.0)
    steps: int | None = Field(default=None, ge=1)
    rng_seed: int = 0
    head_path: str | None = None
    use_gold_roles: bool = False
    trap: TrapModel = TrapModel()
    remote: RemoteSpec | None = None
    trace_path: str | None = None

    @model_validator(mode="after")
    def _role_source_present(self):
        if self.scheduler == "logicdiff" and self.head_path is None and not self.use_gold_roles:
            raise ValueError("the role-guided scheduler needs head_path or use_gold_roles")
        return self


class GenerateResponse(BaseModel):
    text: str
    answer: str | None
    gold_answer: str
    correct: bool
    n_steps: int
    n_events: int
    trace_path: str | None


class ArmModel(BaseModel):
    name: str
    scheduler: Literal["confidence", "logicdiff", "random"]
    w_role: float = Field(default=0.7, ge=0.0)
    w_conf: float = Field(default=0.3, ge=0.0)
    role_source: Literal["head", "gold", "none"] = "head"


class EvalRequest(BaseModel):
    corpus_path: str
    arms: list[ArmModel] = Field(min_length=1)
    trap: TrapModel = TrapModel()
    steps: int | None = Field(default=None, ge=1)
    rng_seed: int = 0
    warmup: int = Field(default=5, ge=0)
    limit: int | None = Field(default=None, ge=1)
    head_path: str | None = None
    report_json: str
    report_csv: str | None = None
    report_svg: str | None = None
    trace_dir: str | None = None
    mask_timing: bool = False


class EvalResponse(BaseModel):
    summary: dict[str, float]
    n_problems: int
    report_json: str
    report_csv: str | None
    report_svg: str | None


class RenderRequest(BaseModel):
    report_json: str
    report_csv: str | None = None
    report_svg: str | None = None


class RenderResponse(BaseModel):
    report_csv: str | None
    report_svg: str | None
