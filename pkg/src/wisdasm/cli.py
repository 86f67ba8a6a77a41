"""Command-line interface.

Each subcommand is a thin client of the HTTP service: by default the
requests run against the app in-process (no socket, same filesystem);
``--server`` points them at a remote instance instead. Artifact-producing
commands print machine-readable text to stdout (or write the file given by
their output flag) and keep human-oriented summaries on stderr, so stdout
is always a single parseable format and byte-stable across runs.

Exit status is 0 unless an internal error occurred; metric outcomes
(violated constraints, unsound binaries, low precision) never affect it.

The optional ``--config`` file is JSON: top-level ``seed``, ``jobs``,
``timeout``, and ``server`` set defaults for the matching global flags, and
a ``corpus`` object supplies gen-corpus generator settings. Explicit flags
win over file values.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys

import httpx

from .oracle import ORACLE_LIMIT
from .pipeline import DEFAULT_TIMEOUT


class CliError(Exception):
    """Fatal command failure; message goes to stderr, exit status 1."""


def _read_config(path):
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(config, dict):
        raise CliError(f"config {path} must hold a JSON object")
    return config


async def _post_in_process(path, payload):
    from .service import create_app

    transport = httpx.ASGITransport(app=create_app())
    async with httpx.AsyncClient(
        transport=transport, base_url="http://wisdasm.internal", timeout=None
    ) as client:
        return await client.post(path, json=payload)


def _post(server, path, payload):
    if server:
        try:
            with httpx.Client(base_url=server, timeout=None) as client:
                response = client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise CliError(f"cannot reach {server}: {exc}") from exc
    else:
        response = asyncio.run(_post_in_process(path, payload))
    if response.status_code != 200:
        try:
            body = response.json()
            message = f"{body.get('error', response.status_code)}: {body.get('detail', '')}"
        except ValueError:
            message = f"HTTP {response.status_code}: {response.text.strip()}"
        raise CliError(message)
    return response.json()


def _emit(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


# --- subcommands ----------------------------------------------------------------

_RATE_FLAGS = (
    "data_rate",
    "table_rate",
    "unbounded_mix",
    "literal_rate",
    "string_rate",
    "padding_rate",
    "rodata_rate",
    "call_rate",
    "tail_jump_rate",
    "train_split",
)
_RANGE_FLAGS = ("functions", "body_ops", "padding_len")


def _cmd_gen_corpus(args, config):
    corpus = dict(config.get("corpus", {}))
    if args.seed is not None:
        corpus["seed"] = args.seed
    if args.binaries is not None:
        corpus["binaries"] = args.binaries
    if args.mode_mix is not None:
        corpus["mode_mix"] = args.mode_mix
    for name in _RATE_FLAGS:
        value = getattr(args, name)
        if value is not None:
            corpus[name] = value
    for name in _RANGE_FLAGS:
        value = getattr(args, name)
        if value is not None:
            corpus[name] = list(value)
    if args.prefix_twins:
        corpus["prefix_twins"] = True
    if args.overlap_decoys:
        corpus["overlap_decoys"] = True
    if args.plant:
        from .heuristics import DEFAULT_WEIGHTS

        corpus["plant"] = dict(DEFAULT_WEIGHTS)
    body = _post(args.server, "/gen-corpus", {"out_dir": args.out, "config": corpus})
    print(body["manifest_path"])
    print(
        f"{body['binaries']} binaries, config {body['config_hash']}",
        file=sys.stderr,
    )
    return 0


def _cmd_disasm(args, config):
    payload = {
        "image_path": args.image,
        "weights_path": args.weights,
        "dump_candidates": args.dump_candidates is not False,
        "dump_schedule": args.dump_schedule is not False or args.dump_candidates is False,
    }
    body = _post(args.server, "/disasm", payload)
    if payload["dump_candidates"]:
        _emit(body["candidates_text"], args.dump_candidates)
    if payload["dump_schedule"]:
        target = None if args.dump_schedule is False else args.dump_schedule
        _emit(body["schedule_text"], target)
    print(
        f"{body['blocks']} blocks, {body['instructions']} instructions,"
        f" total weight {body['total']}",
        file=sys.stderr,
    )
    return 0


def _cmd_infer_constraints(args, config):
    payload = {"image_path": args.image, "sidecar_path": args.truth, "cap": args.cap}
    body = _post(args.server, "/infer-constraints", payload)
    _emit(body["constraints_text"], args.out)
    print(f"{body['constraints']} constraints", file=sys.stderr)
    return 0


def _cmd_solve_weights(args, config):
    if args.report and args.out in (None, "-"):
        raise CliError("--report needs --out so stdout stays a single format")
    body = _post(args.server, "/solve-weights", {"constraint_paths": args.constraints})
    _emit(body["weights_text"], args.out)
    if args.report:
        lines = [
            f"OBJECTIVE {body['objective']}",
            f"SATISFIED {body['satisfied']}",
            f"VIOLATED {body['violated']}",
        ]
        lines.extend(f"ZERO {name}" for name in body["zero_heuristics"])
        sys.stdout.write("\n".join(lines) + "\n")
    return 0


def _cmd_train(args, config):
    payload = {
        "manifest_path": args.manifest,
        "split": args.split,
        "jobs": args.jobs,
        "timeout": args.timeout,
        "cap": args.cap,
    }
    body = _post(args.server, "/train", payload)
    _emit(body["weights_text"], args.out)
    _emit(body["report_text"], args.report)
    print(body["summary"], end="", file=sys.stderr)
    return 0


def _cmd_eval(args, config):
    payload = {
        "manifest_path": args.manifest,
        "weights_path": args.weights,
        "split": args.split,
        "jobs": args.jobs,
        "timeout": args.timeout,
    }
    body = _post(args.server, "/eval", payload)
    _emit(body["report_text"], args.report)
    print(body["summary"], end="", file=sys.stderr)
    return 0


def _cmd_oracle(args, config):
    payload = {
        "image_path": args.image,
        "weights_path": args.weights,
        "limit": args.limit,
    }
    body = _post(args.server, "/oracle", payload)
    lines = [
        f"ORACLE {body['oracle_total']}",
        f"SOLVER {body['solver_total']}",
        f"AGREE {'yes' if body['agrees'] else 'no'}",
    ]
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="wisdasm",
        description="Two-mode flat-binary disassembler with learned conflict resolution.",
    )
    parser.add_argument("--server", help="remote service URL (default: run in-process)")
    parser.add_argument("--seed", type=int, help="corpus generator seed")
    parser.add_argument(
        "--timeout",
        type=float,
        help=f"per-binary time budget in seconds (default {DEFAULT_TIMEOUT:g}; 0 = none)",
    )
    parser.add_argument("--jobs", type=int, help="worker threads for corpus commands")
    parser.add_argument("--config", help="JSON file with flag and generator defaults")

    # The global flags are also accepted after the subcommand; SUPPRESS keeps
    # an absent post-subcommand flag from clobbering a pre-subcommand value.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--server", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("--timeout", type=float, default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("--config", default=argparse.SUPPRESS, help=argparse.SUPPRESS)

    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-corpus", parents=[common], help="generate a synthetic labeled corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--binaries", type=int, help="number of binaries")
    p.add_argument("--mode-mix", choices=("a", "t", "mixed"), dest="mode_mix")
    for name in _RATE_FLAGS:
        p.add_argument(f"--{name.replace('_', '-')}", type=float, dest=name)
    for name in _RANGE_FLAGS:
        p.add_argument(
            f"--{name.replace('_', '-')}",
            nargs=2,
            type=int,
            metavar=("LO", "HI"),
            dest=name,
        )
    p.add_argument("--prefix-twins", action="store_true", help="emit prefix-twin functions")
    p.add_argument("--overlap-decoys", action="store_true", help="emit overlapping-byte decoys")
    p.add_argument(
        "--plant",
        action="store_true",
        help="resample binaries until the default weights recover them exactly",
    )
    p.set_defaults(handler=_cmd_gen_corpus)

    p = sub.add_parser("disasm", parents=[common], help="disassemble one image")
    p.add_argument("--image", required=True, help="image manifest file")
    p.add_argument("--weights", help="weights file (default: built-in weights)")
    p.add_argument(
        "--dump-candidates",
        nargs="?",
        const="-",
        default=False,
        metavar="PATH",
        help="emit the candidate blocks (stdout unless PATH is given)",
    )
    p.add_argument(
        "--dump-schedule",
        nargs="?",
        const="-",
        default=False,
        metavar="PATH",
        help="emit the selected schedule (stdout unless PATH is given; default output)",
    )
    p.set_defaults(handler=_cmd_disasm)

    p = sub.add_parser("infer-constraints", parents=[common], help="infer weight constraints from one binary")
    p.add_argument("--image", required=True, help="image manifest file")
    p.add_argument("--truth", required=True, help="ground-truth sidecar file")
    p.add_argument("--cap", type=int, help="schedule frontier cap")
    p.add_argument("--out", help="constraints file (default stdout)")
    p.set_defaults(handler=_cmd_infer_constraints)

    p = sub.add_parser("solve-weights", parents=[common], help="solve pooled constraints for weights")
    p.add_argument("constraints", nargs="+", help="constraint files")
    p.add_argument("--out", help="weights file (default stdout)")
    p.add_argument(
        "--report",
        action="store_true",
        help="print objective, satisfied/violated counts, and zero-weight heuristics",
    )
    p.set_defaults(handler=_cmd_solve_weights)

    p = sub.add_parser("train", parents=[common], help="infer constraints across a corpus and solve")
    p.add_argument("--manifest", required=True, help="corpus manifest file")
    p.add_argument("--out", required=True, help="weights file to write")
    p.add_argument("--split", choices=("train", "validate", "all"), default="train")
    p.add_argument("--report", help="training report file (default stdout)")
    p.add_argument("--cap", type=int, help="schedule frontier cap")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score a corpus against its ground truth")
    p.add_argument("--manifest", required=True, help="corpus manifest file")
    p.add_argument("--weights", required=True, help="weights file")
    p.add_argument("--split", choices=("train", "validate", "all"), default="all")
    p.add_argument("--report", help="evaluation report file (default stdout)")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("oracle", parents=[common], help="cross-check the scheduler against brute force")
    p.add_argument("--image", required=True, help="image manifest file")
    p.add_argument("--weights", help="weights file (default: built-in weights)")
    p.add_argument("--limit", type=int, default=ORACLE_LIMIT, help="oracle size limit")
    p.set_defaults(handler=_cmd_oracle)

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _read_config(args.config)
        if args.server is None:
            args.server = config.get("server")
        if args.seed is None:
            args.seed = config.get("seed")
        if args.jobs is None:
            args.jobs = config.get("jobs", 1)
        if args.timeout is None:
            args.timeout = config.get("timeout", DEFAULT_TIMEOUT)
        return args.handler(args, config)
    except CliError as exc:
        print(f"wisdasm: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
