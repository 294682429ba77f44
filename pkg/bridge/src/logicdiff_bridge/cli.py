"""Command-line entry points: make-checkpoint, serve, check."""

from __future__ import annotations

import argparse
import sys

from .conformance import conformance_client_check
from .model import CheckpointError, ModelConfig, create_model, save_checkpoint
from .server import HIDDEN_LAYERS, BridgeServer, ServeConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logicdiff-bridge",
        description="serve a frozen denoiser checkpoint over the v1 wire protocol",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-checkpoint", help="write a reference checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-size", type=int, default=200)
    p.add_argument("--d-model", type=int, default=32)
    p.add_argument("--n-heads", type=int, default=4)
    p.add_argument("--n-layers", type=int, default=1)
    p.add_argument("--d-ff", type=int, default=64)
    p.add_argument("--max-len", type=int, default=512)
    p.add_argument("--mask-id", type=int, default=None,
                   help="defaults to the last vocabulary slot")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("serve", help="serve a checkpoint until interrupted")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=9400)
    p.add_argument("--device", default="cpu")
    p.add_argument("--sparse", action="store_true",
                   help="send hidden vectors for masked positions only")
    p.add_argument("--hidden-layer", choices=HIDDEN_LAYERS, default="final")

    p = sub.add_parser("check", help="run the conformance suite against a server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--timeout", type=float, default=10.0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "make-checkpoint":
            cfg = ModelConfig(
                vocab_size=args.vocab_size,
                d_model=args.d_model,
                n_heads=args.n_heads,
                n_layers=args.n_layers,
                d_ff=args.d_ff,
                max_len=args.max_len,
                mask_id=args.mask_id,
                rng_seed=args.seed,
            )
            save_checkpoint(args.out, create_model(cfg))
            print(f"wrote {args.out} (d={cfg.d_model}, vocab={cfg.vocab_size}, "
                  f"mask_id={cfg.effective_mask_id})")
            return 0
        if args.command == "serve":
            cfg = ServeConfig(
                checkpoint=args.checkpoint,
                host=args.host,
                port=args.port,
                device=args.device,
                sparse=args.sparse,
                hidden_layer=args.hidden_layer,
            )
            server = BridgeServer(cfg)
            print(f"serving d={server.d} on {server.host}:{server.port}", flush=True)
            try:
                server.serve_forever()
            except KeyboardInterrupt:
                server.shutdown()
            return 0
        if args.command == "check":
            ok, failures = conformance_client_check(args.host, args.port, timeout=args.timeout)
            if ok:
                print("conformance: PASS")
                return 0
            for line in failures:
                print(f"conformance: FAIL: {line}")
            return 1
        raise AssertionError(f"unhandled command {args.command}")
    except (CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
