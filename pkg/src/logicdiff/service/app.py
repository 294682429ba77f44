"""FastAPI application exposing the service operations."""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..core import LogicDiffError
from . import ops, schemas

app = FastAPI(title="logicdiff", version=__version__)


@app.exception_handler(LogicDiffError)
async def _domain_error(request: Request, exc: LogicDiffError) -> JSONResponse:
    return JSONResponse(status_code=400, content={"detail": str(exc)})


@app.exception_handler(OSError)
async def _os_error(request: Request, exc: OSError) -> JSONResponse:
    return JSONResponse(status_code=400, content={"detail": str(exc)})


@app.get("/health", response_model=schemas.HealthResponse)
def health() -> schemas.HealthResponse:
    return ops.health()


@app.post("/corpus/generate", response_model=schemas.CorpusResponse)
def corpus_generate(req: schemas.CorpusRequest) -> schemas.CorpusResponse:
    return ops.run_corpus(req)


@app.post("/label/run", response_model=schemas.LabelResponse)
def label_run(req: schemas.LabelRequest) -> schemas.LabelResponse:
    return ops.run_label(req)


@app.post("/head/train", response_model=schemas.TrainHeadResponse)
def head_train(req: schemas.TrainHeadRequest) -> schemas.TrainHeadResponse:
    return ops.run_train_head(req)


@app.post("/generate", response_model=schemas.GenerateResponse)
def generate(req: schemas.GenerateRequest) -> schemas.GenerateResponse:
    return ops.run_generate(req)


@app.post("/eval/run", response_model=schemas.EvalResponse)
def eval_run(req: schemas.EvalRequest) -> schemas.EvalResponse:
    return ops.run_eval(req)


@app.post("/report/render", response_model=schemas.RenderResponse)
def report_render(req: schemas.RenderRequest) -> schemas.RenderResponse:
    return ops.render_report(req)
