"""Command-line interface.

Every workhorse subcommand is a thin client of the HTTP service: with
--server it POSTs the request there, without it the same operation runs
in-process. `serve` starts the service; `compare` reads a report file.
"""

from __future__ import annotations

import argparse
import json
import sys

import pydantic

from .core import InvalidInputError, LogicDiffError, Role
from .service import ops, schemas

DEFAULT_ARMS = (
    "name=confidence,scheduler=confidence,w_role=0.0,w_conf=1.0",
    "name=logicdiff,scheduler=logicdiff",
    "name=random,scheduler=random",
)


def _post(server: str, route: str, payload: dict) -> dict:
    import httpx

    response = httpx.post(server.rstrip("/") + route, json=payload, timeout=None)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise LogicDiffError(f"server returned {response.status_code}: {detail}")
    return response.json()


def _dispatch(args, route: str, request_model, response_model, op):
    """Run an operation remotely when --server is given, else in-process."""
    req = request_model.model_validate(
        {k: v for k, v in vars(args).items() if k in request_model.model_fields and v is not None}
    )
    if getattr(args, "server", None):
        payload = _post(args.server, route, json.loads(req.model_dump_json()))
        resp = response_model.model_validate(payload)
    else:
        resp = op(req)
    print(resp.model_dump_json(indent=2))
    return resp


def _parse_arm(text: str) -> dict:
    arm: dict = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise InvalidInputError(f"arm field {part!r} is not key=value")
        key, value = part.split("=", 1)
        arm[key.strip()] = value.strip()
    for key in ("w_role", "w_conf"):
        if key in arm:
            arm[key] = float(arm[key])
    return arm


def _add_trap_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beta", type=float, default=0.9, help="trap strength in [0, 1]")
    p.add_argument("--conn-entropy-split", type=float, default=0.5)
    p.add_argument("--noise-sigma", type=float, default=0.25)
    p.add_argument("--trap-seed", type=int, default=0)


def _trap_model(args) -> schemas.TrapModel:
    return schemas.TrapModel(
        beta=args.beta,
        conn_entropy_split=args.conn_entropy_split,
        noise_sigma=args.noise_sigma,
        rng_seed=args.trap_seed,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logicdiff",
        description="Role-guided unmasking for masked-diffusion text generation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    def client_parser(name: str, help_text: str) -> argparse.ArgumentParser:
        cp = sub.add_parser(name, help=help_text)
        cp.add_argument("--server", default=None, help="service URL; omit to run in-process")
        return cp

    p = client_parser("corpus", "generate a synthetic problem corpus")
    p.add_argument("--n-problems", type=int, required=True)
    p.add_argument("--steps-min", type=int, default=2)
    p.add_argument("--steps-max", type=int, default=5)
    p.add_argument("--value-max", type=int, default=20)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--out", dest="out_path", required=True)

    p = client_parser("label", "run the two-pass role labeler over a corpus")
    p.add_argument("--corpus", dest="corpus_path", required=True)
    p.add_argument("--out", dest="out_path", required=True)

    p = client_parser("train-head", "train the role head on synthetic hidden states")
    p.add_argument("--corpus", dest="corpus_path", required=True)
    p.add_argument("--out", dest="out_path", required=True)
    p.add_argument("--min-examples", type=int, default=50000)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--dropout-rate", type=float, default=0.1)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--data-seed", type=int, default=0)
    _add_trap_flags(p)

    p = client_parser("generate", "decode one corpus problem")
    p.add_argument("--corpus", dest="corpus_path", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--scheduler", choices=("confidence", "logicdiff", "random"), default="logicdiff")
    p.add_argument("--w-role", dest="w_role", type=float, default=0.7)
    p.add_argument("--w-conf", dest="w_conf", type=float, default=0.3)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--head", dest="head_path", default=None)
    p.add_argument("--gold-roles", dest="use_gold_roles", action="store_true")
    p.add_argument("--remote-host", default=None, help="serve predictions from a remote denoiser")
    p.add_argument("--remote-port", type=int, default=None)
    p.add_argument("--trace", dest="trace_path", default=None)
    _add_trap_flags(p)

    p = client_parser("eval", "A/B evaluate schedulers over a corpus")
    p.add_argument("--corpus", dest="corpus_path", required=True)
    p.add_argument("--arm", action="append", default=None, metavar="K=V[,K=V...]",
                   help="arm spec, e.g. name=ld,scheduler=logicdiff,w_role=0.7,role_source=head")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--head", dest="head_path", default=None)
    p.add_argument("--report-json", required=True)
    p.add_argument("--report-csv", default=None)
    p.add_argument("--report-svg", default=None)
    p.add_argument("--trace-dir", default=None)
    p.add_argument("--mask-timing", action="store_true")
    _add_trap_flags(p)

    p = sub.add_parser("compare", help="summarize arm gaps from a report file")
    p.add_argument("--report", required=True)
    p.add_argument("--baseline", default=None, help="arm name; defaults to the first confidence arm")
    p.add_argument("--candidate", default=None, help="arm name; defaults to the first logicdiff arm")

    p = sub.add_parser("render", help="derive CSV/SVG views from a report file")
    p.add_argument("--server", default=None)
    p.add_argument("--report-json", required=True)
    p.add_argument("--report-csv", default=None)
    p.add_argument("--report-svg", default=None)

    return parser


def _cmd_compare(args) -> int:
    with open(args.report, "r", encoding="utf-8") as f:
        report = json.load(f)
    arms = {a["name"]: a for a in report.get("arms", [])}
    if not arms:
        raise InvalidInputError(f"{args.report} contains no arms")

    def pick(name: str | None, scheduler: str, flag: str) -> dict:
        if name is not None:
            if name not in arms:
                raise InvalidInputError(f"no arm named {name!r} in the report")
            return arms[name]
        for a in arms.values():
            if a["scheduler"] == scheduler:
                return a
        raise InvalidInputError(f"no {scheduler} arm in the report; pass {flag}")

    base = pick(args.baseline, "confidence", "--baseline")
    cand = pick(args.candidate, "logicdiff", "--candidate")
    gap = (cand["accuracy"] - base["accuracy"]) * 100.0
    conn, derived = str(int(Role.CONNECTIVE)), str(int(Role.DERIVED))
    lines = [
        f"baseline   {base['name']:<20s} accuracy {base['accuracy']:.4f}",
        f"candidate  {cand['name']:<20s} accuracy {cand['accuracy']:.4f}",
        f"gap        {gap:+.1f}pp over {base['n_problems']} problems",
    ]
    for a in (base, cand):
        steps = a.get("role_mean_step", {})
        if conn in steps and derived in steps:
            lines.append(
                f"deferral   {a['name']:<20s} mean step connective {steps[conn]:.2f} "
                f"vs derived {steps[derived]:.2f}"
            )
        ratio = a.get("timing", {}).get("overhead_vs_confidence")
        if ratio is not None:
            lines.append(f"overhead   {a['name']:<20s} {ratio:.3f}x scheduler time vs baseline")
    print("\n".join(lines))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            import uvicorn

            from .service.app import app

            uvicorn.run(app, host=args.host, port=args.port)
            return 0
        if args.command == "corpus":
            _dispatch(args, "/corpus/generate", schemas.CorpusRequest, schemas.CorpusResponse, ops.run_corpus)
            return 0
        if args.command == "label":
            _dispatch(args, "/label/run", schemas.LabelRequest, schemas.LabelResponse, ops.run_label)
            return 0
        if args.command == "train-head":
            args.trap = _trap_model(args).model_dump()
            _dispatch(args, "/head/train", schemas.TrainHeadRequest, schemas.TrainHeadResponse, ops.run_train_head)
            return 0
        if args.command == "generate":
            args.trap = _trap_model(args).model_dump()
            if args.remote_host is not None:
                if args.remote_port is None:
                    raise InvalidInputError("--remote-host needs --remote-port")
                args.remote = {"host": args.remote_host, "port": args.remote_port}
            _dispatch(args, "/generate", schemas.GenerateRequest, schemas.GenerateResponse, ops.run_generate)
            return 0
        if args.command == "eval":
            args.trap = _trap_model(args).model_dump()
            specs = args.arm if args.arm else list(DEFAULT_ARMS)
            args.arms = [_parse_arm(s) for s in specs]
            if args.head_path is None:
                for arm in args.arms:
                    arm.setdefault("role_source", "gold" if arm.get("scheduler") == "logicdiff" else "none")
            _dispatch(args, "/eval/run", schemas.EvalRequest, schemas.EvalResponse, ops.run_eval)
            return 0
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "render":
            _dispatch(args, "/report/render", schemas.RenderRequest, schemas.RenderResponse, ops.render_report)
            return 0
        raise InvalidInputError(f"unknown command {args.command!r}")
    except pydantic.ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "request"
        print(f"error: {where}: {first['msg']}", file=sys.stderr)
        return 2
    except LogicDiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
