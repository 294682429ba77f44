"""A/B evaluation of schedulers over a template corpus.

Each arm decodes every problem with its own scheduler settings; accuracy is
exact match on the extracted final answer. Reports are deterministic given
the inputs: serializing with mask_timing=True zeroes the wall-clock fields
so two runs of the same evaluation produce byte-identical JSON.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .backends import TrapConfig
from .backends.synthetic import SyntheticBackend
from .core import GenerationConfig, InvalidConfigError, InvalidInputError, Role
from .corpus import Problem, default_vocab
from .rolehead import RoleHeadParams
from .scheduler import GenerationResult, UnmaskEvent, generate, save_trace

REPORT_VERSION = 1
ANSWER_MARKER = "####"
ROLE_SOURCES = ("head", "gold", "none")


@dataclass(frozen=True)
class ArmSpec:
    """One scheduler configuration to evaluate."""

    name: str
    scheduler: str
    w_role: float = 0.7
    w_conf: float = 0.3
    role_source: str = "head"

    def __post_init__(self):
        if self.role_source not in ROLE_SOURCES:
            raise InvalidConfigError(f"unknown role_source {self.role_source!r}")
        if self.scheduler == "logicdiff" and self.role_source == "none":
            raise InvalidConfigError("the role-guided scheduler needs a role source")


@dataclass(frozen=True)
class EvalConfig:
    """steps=None decodes one token per step (steps equals the target length)."""

    steps: int | None = None
    rng_seed: int = 0
    warmup: int = 5

    def __post_init__(self):
        if self.steps is not None and self.steps < 1:
            raise InvalidConfigError(f"steps must be positive, got {self.steps}")
        if self.warmup < 0:
            raise InvalidConfigError(f"warmup must be >= 0, got {self.warmup}")


def extract_answer(tokens: list[str]) -> str | None:
    """Token after the last answer marker, or None when absent."""
    marker_at = None
    for i, tok in enumerate(tokens):
        if tok == ANSWER_MARKER:
            marker_at = i
    if marker_at is None or marker_at + 1 >= len(tokens):
        return None
    return tokens[marker_at + 1]


def role_step_stats(events: list[UnmaskEvent]) -> dict[str, float]:
    """Mean unmask step per annotated role, keyed by role id as a string."""
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for e in events:
        if e.role is None:
            continue
        sums[e.role] = sums.get(e.role, 0.0) + e.step
        counts[e.role] = counts.get(e.role, 0) + 1
    return {str(r): sums[r] / counts[r] for r in sorted(sums)}


def _unique_names(arms: list[ArmSpec]) -> list[str]:
    seen: dict[str, int] = {}
    names = []
    for arm in arms:
        n = seen.get(arm.name, 0)
        seen[arm.name] = n + 1
        names.append(arm.name if n == 0 else f"{arm.name}#{n + 1}")
    return names


def evaluate(
    problems: list[Problem],
    arms: list[ArmSpec],
    trap: TrapConfig | None = None,
    head: RoleHeadParams | None = None,
    cfg: EvalConfig | None = None,
    trace_dir: str | None = None,
) -> dict:
    """Run every arm over every problem and aggregate a report dict."""
    if not problems:
        raise InvalidInputError("no problems to evaluate")
    if not arms:
        raise InvalidInputError("no arms to evaluate")
    for arm in arms:
        if arm.role_source == "head" and head is None:
            raise InvalidInputError(f"arm {arm.name!r} needs a trained role head")
    trap = trap if trap is not None else TrapConfig()
    cfg = cfg if cfg is not None else EvalConfig()
    vocab = default_vocab()

    arm_reports = []
    for arm, label in zip(arms, _unique_names(arms)):
        records = []
        all_events: list[UnmaskEvent] = []
        n_correct = 0
        backend_seconds = 0.0
        scheduler_seconds = 0.0
        for idx, problem in enumerate(problems):
            backend = SyntheticBackend(problem, trap, vocab)
            gen_len = backend.gen_len
            gen_cfg = GenerationConfig(
                steps=cfg.steps if cfg.steps is not None else gen_len,
                gen_len=gen_len,
                w_role=arm.w_role,
                w_conf=arm.w_conf,
                scheduler=arm.scheduler,
                rng_seed=cfg.rng_seed + idx,
            )
            gold = None
            use_head = head if arm.role_source == "head" else None
            if arm.role_source == "gold":
                gold = np.asarray(problem.gold_roles, dtype=np.int64)
            result: GenerationResult = generate(
                backend, backend.question_ids, gen_cfg, head=use_head, gold_roles=gold
            )
            tokens = [vocab.decode(int(t)) for t in result.generated_ids]
            predicted = extract_answer(tokens)
            gold_answer = str(problem.answer)
            correct = predicted == gold_answer
            n_correct += int(correct)
            if idx >= cfg.warmup:
                backend_seconds += result.backend_seconds
                scheduler_seconds += result.scheduler_seconds
            records.append(
                {
                    "index": idx,
                    "correct": correct,
                    "predicted": predicted,
                    "gold": gold_answer,
                    "n_events": len(result.events),
                }
            )
            all_events.extend(result.events)
            if trace_dir is not None:
                arm_dir = os.path.join(trace_dir, label)
                os.makedirs(arm_dir, exist_ok=True)
                save_trace(os.path.join(arm_dir, f"problem_{idx:05d}.trace.jsonl"), result.events)
        arm_reports.append(
            {
                "name": label,
                "scheduler": arm.scheduler,
                "w_role": arm.w_role,
                "w_conf": arm.w_conf,
                "role_source": arm.role_source,
                "n_problems": len(problems),
                "n_correct": n_correct,
                "accuracy": n_correct / len(problems),
                "role_mean_step": role_step_stats(all_events),
                "problems": records,
                "timing": {
                    "backend_seconds": backend_seconds,
                    "scheduler_seconds": scheduler_seconds,
                    "warmup_excluded": min(cfg.warmup, len(problems)),
                },
            }
        )

    baseline = next((a for a in arm_reports if a["scheduler"] == "confidence"), None)
    for a in arm_reports:
        ratio = None
        if baseline is not None and baseline["timing"]["scheduler_seconds"] > 0:
            ratio = a["timing"]["scheduler_seconds"] / baseline["timing"]["scheduler_seconds"]
        a["timing"]["overhead_vs_confidence"] = ratio

    return {
        "version": REPORT_VERSION,
        "config": {
            "steps": cfg.steps,
            "rng_seed": cfg.rng_seed,
            "warmup": cfg.warmup,
            "trap": {
                "beta": trap.beta,
                "conn_entropy_split": trap.conn_entropy_split,
                "noise_sigma": trap.noise_sigma,
                "d_syn": trap.d_syn,
                "rng_seed": trap.rng_seed,
            },
            "n_problems": len(problems),
        },
        "arms": arm_reports,
        "summary": {a["name"]: a["accuracy"] for a in arm_reports},
    }


def _mask_timing(node):
    if isinstance(node, dict):
        out = {}
        for k, v in node.items():
            if k == "timing":
                out[k] = {
                    key: (0.0 if isinstance(val, (int, float)) and key != "warmup_excluded" else val)
                    for key, val in v.items()
                }
                out[k]["overhead_vs_confidence"] = None
            else:
                out[k] = _mask_timing(v)
        return out
    if isinstance(node, list):
        return [_mask_timing(v) for v in node]
    return node


def report_to_json(report: dict, mask_timing: bool = False) -> str:
    """Canonical serialization; mask_timing zeroes wall-clock fields for diffing."""
    payload = _mask_timing(report) if mask_timing else report
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def write_report_json(report: dict, path, mask_timing: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(report_to_json(report, mask_timing=mask_timing))


def write_report_csv(report: dict, path) -> None:
    """One row per arm with headline numbers."""
    fields = [
        "name", "scheduler", "w_role", "w_conf", "role_source",
        "n_problems", "n_correct", "accuracy",
        "mean_step_connective", "mean_step_derived",
        "backend_seconds", "scheduler_seconds",
    ]
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for a in report["arms"]:
            writer.writerow(
                {
                    "name": a["name"],
                    "scheduler": a["scheduler"],
                    "w_role": a["w_role"],
                    "w_conf": a["w_conf"],
                    "role_source": a["role_source"],
                    "n_problems": a["n_problems"],
                    "n_correct": a["n_correct"],
                    "accuracy": a["accuracy"],
                    "mean_step_connective": a["role_mean_step"].get(str(int(Role.CONNECTIVE))),
                    "mean_step_derived": a["role_mean_step"].get(str(int(Role.DERIVED))),
                    "backend_seconds": a["timing"]["backend_seconds"],
                    "scheduler_seconds": a["timing"]["scheduler_seconds"],
                }
            )


def write_report_svg(report: dict, path) -> None:
    """Horizontal accuracy bars, one per arm; plain hand-assembled SVG."""
    arms = report["arms"]
    bar_h, gap, label_w, scale = 24, 12, 150, 300.0
    width = label_w + int(scale) + 80
    height = gap + len(arms) * (bar_h + gap)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="13">'
    ]
    for i, a in enumerate(arms):
        y = gap + i * (bar_h + gap)
        w = a["accuracy"] * scale
        parts.append(
            f'<text x="4" y="{y + bar_h - 7}">{a["name"]}</text>'
            f'<rect x="{label_w}" y="{y}" width="{w:.1f}" height="{bar_h}" fill="#4878a8"/>'
            f'<text x="{label_w + w + 6:.1f}" y="{y + bar_h - 7}">{a["accuracy"]:.1%}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("".join(parts) + "\n")
