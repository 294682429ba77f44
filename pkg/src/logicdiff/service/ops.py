"""Service operations: one function per endpoint, shared by the app and the CLI."""

from __future__ import annotations

import json

import numpy as np

from .. import __version__
from ..backends import RemoteBackend, TrapConfig
from ..backends.synthetic import SyntheticBackend
from ..core import GenerationConfig, InvalidInputError, Role
from ..corpus import (
    CorpusConfig,
    default_vocab,
    generate_corpus,
    load_corpus,
    role_histogram,
    save_corpus,
)
from ..evalharness import ArmSpec, EvalConfig, evaluate, extract_answer, write_report_csv, write_report_json, write_report_svg
from ..labeling import compute_class_weights, label_record, save_labeled
from ..rolehead import TrainConfig, collect_hidden_dataset, load_checkpoint, save_checkpoint, train_role_head
from ..scheduler import generate, save_trace
from . import schemas


def health() -> schemas.HealthResponse:
    return schemas.HealthResponse(version=__version__)


def _trap(model: schemas.TrapModel) -> TrapConfig:
    return TrapConfig(
        beta=model.beta,
        conn_entropy_split=model.conn_entropy_split,
        noise_sigma=model.noise_sigma,
        d_syn=model.d_syn,
        rng_seed=model.rng_seed,
    )


def run_corpus(req: schemas.CorpusRequest) -> schemas.CorpusResponse:
    cfg = CorpusConfig(
        n_problems=req.n_problems,
        steps_min=req.steps_min,
        steps_max=req.steps_max,
        value_max=req.value_max,
        rng_seed=req.rng_seed,
    )
    problems = generate_corpus(cfg)
    save_corpus(problems, req.out_path)
    return schemas.CorpusResponse(
        n_problems=len(problems),
        out_path=req.out_path,
        role_histogram=role_histogram(problems),
    )


def run_label(req: schemas.LabelRequest) -> schemas.LabelResponse:
    problems = load_corpus(req.corpus_path)
    if not problems:
        raise InvalidInputError(f"corpus {req.corpus_path} is empty")
    vocab = default_vocab()
    records = []
    labels: list[int] = []
    agree = 0
    total = 0
    for p in problems:
        record = label_record(p.question, p.solution, vocab)
        records.append(record)
        labels.extend(record.roles)
        gold = p.gold_roles
        if len(gold) == len(record.roles):
            agree += sum(int(a == b) for a, b in zip(gold, record.roles))
            total += len(gold)
    save_labeled(records, req.out_path)
    weights, distribution = compute_class_weights(labels)
    return schemas.LabelResponse(
        n_records=len(records),
        n_tokens=len(labels),
        out_path=req.out_path,
        class_weights={int(r): weights[Role(r)] for r in Role},
        role_distribution={int(k): v for k, v in distribution.items()},
        gold_agreement=agree / total if total else 0.0,
    )


def run_train_head(req: schemas.TrainHeadRequest) -> schemas.TrainHeadResponse:
    problems = load_corpus(req.corpus_path)
    if not problems:
        raise InvalidInputError(f"corpus {req.corpus_path} is empty")
    x, y = collect_hidden_dataset(problems, _trap(req.trap), req.data_seed, req.min_examples)
    cfg = TrainConfig(
        epochs=req.epochs,
        batch_size=req.batch_size,
        learning_rate=req.learning_rate,
        val_fraction=req.val_fraction,
        rng_seed=req.rng_seed,
        dropout_rate=req.dropout_rate,
    )
    params, metrics = train_role_head((x, y), cfg)
    save_checkpoint(params, req.out_path)
    return schemas.TrainHeadResponse(
        checkpoint_path=req.out_path,
        val_accuracy=metrics.val_accuracy,
        per_class_recall=metrics.per_class_recall,
        param_count=params.param_count,
        n_train=metrics.n_train,
        n_val=metrics.n_val,
    )


def run_generate(req: schemas.GenerateRequest) -> schemas.GenerateResponse:
    problems = load_corpus(req.corpus_path)
    if not 0 <= req.index < len(problems):
        raise InvalidInputError(
            f"problem index {req.index} outside corpus of {len(problems)} problems"
        )
    problem = problems[req.index]
    vocab = default_vocab()
    synthetic = SyntheticBackend(problem, _trap(req.trap), vocab)
    backend = synthetic
    if req.remote is not None:
        backend = RemoteBackend(req.remote.host, req.remote.port, timeout=req.remote.timeout)
    gen_len = synthetic.gen_len
    cfg = GenerationConfig(
        steps=req.steps if req.steps is not None else gen_len,
        gen_len=gen_len,
        w_role=req.w_role,
        w_conf=req.w_conf,
        scheduler=req.scheduler,
        rng_seed=req.rng_seed,
    )
    head = load_checkpoint(req.head_path) if req.head_path else None
    gold = np.asarray(problem.gold_roles, dtype=np.int64) if req.use_gold_roles else None
    result = generate(backend, synthetic.question_ids, cfg, head=head, gold_roles=gold)
    tokens = [vocab.decode(int(t)) for t in result.generated_ids]
    answer = extract_answer(tokens)
    if req.trace_path is not None:
        save_trace(req.trace_path, result.events)
    n_steps = 1 + max(e.step for e in result.events) if result.events else 0
    return schemas.GenerateResponse(
        text=" ".join(tokens),
        answer=answer,
        gold_answer=str(problem.answer),
        correct=answer == str(problem.answer),
        n_steps=n_steps,
        n_events=len(result.events),
        trace_path=req.trace_path,
    )


def run_eval(req: schemas.EvalRequest) -> schemas.EvalResponse:
    problems = load_corpus(req.corpus_path)
    if req.limit is not None:
        problems = problems[: req.limit]
    arms = [
        ArmSpec(a.name, a.scheduler, w_role=a.w_role, w_conf=a.w_conf, role_source=a.role_source)
        for a in req.arms
    ]
    head = load_checkpoint(req.head_path) if req.head_path else None
    report = evaluate(
        problems,
        arms,
        trap=_trap(req.trap),
        head=head,
        cfg=EvalConfig(steps=req.steps, rng_seed=req.rng_seed, warmup=req.warmup),
        trace_dir=req.trace_dir,
    )
    write_report_json(report, req.report_json, mask_timing=req.mask_timing)
    if req.report_csv:
        write_report_csv(report, req.report_csv)
    if req.report_svg:
        write_report_svg(report, req.report_svg)
    return schemas.EvalResponse(
        summary=report["summary"],
        n_problems=len(problems),
        report_json=req.report_json,
        report_csv=req.report_csv,
        report_svg=req.report_svg,
    )


def render_report(req: schemas.RenderRequest) -> schemas.RenderResponse:
    with open(req.report_json, "r", encoding="utf-8") as f:
        report = json.load(f)
    if not isinstance(report, dict) or "arms" not in report:
        raise InvalidInputError(f"{req.report_json} is not an evaluation report")
    if req.report_csv:
        write_report_csv(report, req.report_csv)
    if req.report_svg:
        write_report_svg(report, req.report_svg)
    return schemas.RenderResponse(report_csv=req.report_csv, report_svg=req.report_svg)
