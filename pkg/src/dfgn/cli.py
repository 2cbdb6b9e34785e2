"""Command-line client for the answer-selection pipeline.

Commands: ``train``, ``eval``, ``ablate``, ``inspect``, ``score``,
``config`` (emit the full-default config), and ``serve`` (run the HTTP
service).  By default commands execute in-process; with ``--server URL``
the same request is posted to a running service instead.

Relative dataset paths resolve against $DFGN_DATA_ROOT when set.  Exit
codes: 0 success, 1 input error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional

from .config import ABLATION_PRESETS, DATA_ROOT_ENV, RunConfig
from .errors import DfgnError, InputError

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_RUNTIME = 2

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to the input-error exit code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_INPUT)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="dfgn",
        description="Answer sentence selection: train, evaluate, ablate, inspect.",
        epilog=f"Relative data paths resolve against ${DATA_ROOT_ENV} when set.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser, needs_checkpoint: bool = False) -> None:
        p.add_argument("--config", required=True, help="path to a JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--server", default=None, help="run against this service URL")
        p.add_argument("--out", default=None, help="write the JSON report here")
        if needs_checkpoint:
            p.add_argument("--checkpoint", required=True, help="model checkpoint path")

    p_train = sub.add_parser("train", help="train and keep the best-dev checkpoint")
    common(p_train)
    p_train.add_argument("--checkpoint", default=None, help="checkpoint target path")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    common(p_eval, needs_checkpoint=True)
    p_eval.add_argument(
        "--split", default="test", choices=["train", "dev", "test"],
    )

    p_ablate = sub.add_parser("ablate", help="train/evaluate ablation presets")
    common(p_ablate)
    p_ablate.add_argument(
        "--preset", action="append", dest="presets", metavar="PRESET",
        help=f"one of: {', '.join(ABLATION_PRESETS)} (repeatable; default all)",
    )

    p_inspect = sub.add_parser("inspect", help="dump attention weights for a pair")
    common(p_inspect, needs_checkpoint=True)
    p_inspect.add_argument("--question", required=True)
    p_inspect.add_argument("--answer", required=True)

    p_score = sub.add_parser("score", help="rank ad-hoc candidate answers")
    common(p_score, needs_checkpoint=True)
    p_score.add_argument("--question", required=True)
    p_score.add_argument(
        "--candidate", action="append", dest="candidates", required=True,
        help="a candidate answer (repeatable)",
    )

    p_config = sub.add_parser("config", help="emit the full-default config")
    p_config.add_argument("--out", default=None)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)

    return parser


def _load_config(path: str) -> RunConfig:
    return RunConfig.from_file(path)


def _post(server: str, endpoint: str, payload: dict) -> dict:
    import httpx

    url = server.rstrip("/") + endpoint
    try:
        response = httpx.post(url, json=payload, timeout=None)
    except httpx.HTTPError as exc:
        raise DfgnError(f"cannot reach {url}: {exc}") from exc
    if response.status_code >= 500:
        raise DfgnError(f"server error from {url}: {response.text}")
    if response.status_code >= 400:
        raise InputError(f"request rejected by {url}: {response.text}")
    return response.json()


def _print_eval(payload: dict) -> None:
    print(
        f"split={payload['split']} MAP={payload['map']:.4f} "
        f"MRR={payload['mrr']:.4f} P@1={payload['p_at_1']:.4f} "
        f"questions={payload['num_questions']} "
        f"excluded_no_positive={payload['excluded_no_positive']}"
    )
    types = payload.get("question_types", {})
    for qtype, stats in sorted(types.items()):
        print(
            f"  {qtype:<6} count={stats['count']:<4} "
            f"share={stats['share']:.3f} mrr={stats['mrr']:.4f}"
        )


def _run(args: argparse.Namespace) -> int:
    from . import operations

    if args.command == "config":
        text = RunConfig().to_json()
        if args.out:
            from pathlib import Path

            Path(args.out).write_text(text, encoding="utf-8")
            print(f"wrote default config to {args.out}")
        else:
            print(text, end="")
        return EXIT_OK

    if args.command == "serve":
        import uvicorn

        from .service.app import app

        uvicorn.run(app, host=args.host, port=args.port)
        return EXIT_OK

    config = _load_config(args.config)

    if args.command == "train":
        if args.server:
            payload = _post(args.server, "/train", {
                "config": config.model_dump(), "seed": args.seed,
                "checkpoint": args.checkpoint, "out": args.out,
            })
        else:
            payload = operations.op_train(
                config, seed=args.seed, checkpoint=args.checkpoint, out=args.out
            )
        last = payload["epochs"][-1]
        print(
            f"trained {len(payload['epochs'])} epochs; "
            f"best dev MAP {payload['best_dev_map']:.4f} "
            f"at epoch {payload['best_epoch']}; "
            f"final loss {last['train_loss']:.4f}; "
            f"checkpoint {payload['checkpoint_path']}"
        )
        return EXIT_OK

    if args.command == "eval":
        if args.server:
            payload = _post(args.server, "/eval", {
                "config": config.model_dump(), "checkpoint": args.checkpoint,
                "split": args.split, "seed": args.seed, "out": args.out,
            })
        else:
            payload = operations.op_eval(
                config, args.checkpoint, split=args.split,
                seed=args.seed, out=args.out,
            )
        _print_eval(payload)
        return EXIT_OK

    if args.command == "ablate":
        presets = args.presets or list(ABLATION_PRESETS)
        if args.server:
            payload = _post(args.server, "/ablate", {
                "config": config.model_dump(), "presets": presets,
                "seed": args.seed, "out": args.out,
            })
        else:
            payload = operations.op_ablate(
                config, presets, seed=args.seed, out=args.out
            )
        print(payload["table"])
        return EXIT_OK

    if args.command == "inspect":
        out = args.out or "inspection.json"
        if args.server:
            payload = _post(args.server, "/inspect", {
                "config": config.model_dump(), "checkpoint": args.checkpoint,
                "question": args.question, "answer": args.answer, "out": out,
            })["payload"]
        else:
            payload = operations.op_inspect(
                config, args.checkpoint, args.question, args.answer, out=out
            )
        print(f"score={payload['score']:.6f}; wrote attention dump to {out}")
        return EXIT_OK

    if args.command == "score":
        if args.server:
            payload = _post(args.server, "/score", {
                "config": config.model_dump(), "checkpoint": args.checkpoint,
                "question": args.question, "candidates": args.candidates,
            })
        else:
            payload = operations.op_score(
                config, args.checkpoint, args.question, args.candidates
            )
        for rank, idx in enumerate(payload["ranking"], start=1):
            print(f"{rank}. [{payload['scores'][idx]: .6f}] {args.candidates[idx]}")
        return EXIT_OK

    raise AssertionError(f"unhandled command {args.command}")


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _run(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except InputError as exc:
        sys.stderr.write(f"input error: {exc}\n")
        return EXIT_INPUT
    except DfgnError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
