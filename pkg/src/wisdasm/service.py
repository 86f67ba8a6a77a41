"""HTTP service exposing the disassembly pipeline.

Every operation of the core package is an endpoint taking a small JSON
request and returning JSON with the produced artifacts inline as text in
the package's line formats. File paths in requests are resolved by the
server process; the bundled CLI runs this app in-process by default, so
paths behave like local ones.

Domain failures (bad inputs, parse errors, per-corpus configuration
problems) map to HTTP 400 with the error type and message; anything else
is a genuine server error and stays a 500.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .corpus import ConfigInvalid, GenConfig, config_hash, gen_corpus, load_corpus
from .heuristics import (
    DEFAULT_WEIGHTS,
    REGISTRY,
    WeightOverflow,
    format_weights,
    load_weights,
)
from .image import load_image
from .linexpr import format_constraints, load_constraints
from .lp import solve_weights
from .model import ModelError, load_sidecar
from .oracle import ORACLE_LIMIT, oracle_wis
from .pipeline import (
    DEFAULT_TIMEOUT,
    disassemble_image,
    eval_corpus,
    format_eval_report,
    format_eval_summary,
    format_train_report,
    format_train_summary,
    infer_image_constraints,
    train_corpus,
)
from .schedule import competing_blocks, format_blocks, format_disassembly, instruction_keys

SPLIT_ALL = "all"


def _split_arg(split):
    return None if split in (None, SPLIT_ALL) else split


def _load_weights_arg(path):
    return dict(DEFAULT_WEIGHTS) if path is None else load_weights(path)


class GenCorpusRequest(BaseModel):
    out_dir: str
    config: dict = {}


class GenCorpusResponse(BaseModel):
    manifest_path: str
    binaries: int
    config_hash: str


class DisasmRequest(BaseModel):
    image_path: str
    weights_path: str | None = None  # package defaults when omitted
    dump_candidates: bool = False
    dump_schedule: bool = True


class DisasmResponse(BaseModel):
    blocks: int
    instructions: int
    total: int
    candidates_text: str | None = None
    schedule_text: str | None = None


class InferConstraintsRequest(BaseModel):
    image_path: str
    sidecar_path: str
    cap: int | None = None


class InferConstraintsResponse(BaseModel):
    constraints: int
    constraints_text: str


class SolveWeightsRequest(BaseModel):
    constraint_paths: list[str]


class SolveWeightsResponse(BaseModel):
    weights_text: str
    objective: str
    satisfied: int
    violated: int
    zero_heuristics: list[str]
    iterations: int
    used_bland: bool


class TrainRequest(BaseModel):
    manifest_path: str
    split: str | None = "train"  # train | validate | all
    jobs: int = 1
    timeout: float | None = DEFAULT_TIMEOUT
    cap: int | None = None


class TrainResponse(BaseModel):
    weights_text: str
    report_text: str
    summary: str
    objective: str
    satisfied: int
    violated: int
    constraints: int
    failures: int


class EvalRequest(BaseModel):
    manifest_path: str
    weights_path: str
    split: str | None = None
    jobs: int = 1
    timeout: float | None = DEFAULT_TIMEOUT


class EvalResponse(BaseModel):
    report_text: str
    summary: str
    precision: str
    recall: str
    correct: int
    evaluated: int
    sound: int
    unsound: int
    failures: int


class OracleRequest(BaseModel):
    image_path: str
    weights_path: str | None = None
    limit: int | None = None


class OracleResponse(BaseModel):
    oracle_total: int
    solver_total: int
    agrees: bool
    selected_text: str


def create_app():
    app = FastAPI(title="wisdasm", docs_url=None, redoc_url=None)

    @app.exception_handler(ModelError)
    async def _domain_error(request: Request, exc: ModelError):
        return JSONResponse(
            status_code=400,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.exception_handler(WeightOverflow)
    async def _overflow_error(request: Request, exc: WeightOverflow):
        return JSONResponse(
            status_code=400,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.exception_handler(OSError)
    async def _io_error(request: Request, exc: OSError):
        return JSONResponse(
            status_code=400,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/gen-corpus", response_model=GenCorpusResponse)
    def gen_corpus_endpoint(req: GenCorpusRequest):
        config = dict(req.config)
        for key in ("functions", "body_ops", "padding_len"):
            if key in config and isinstance(config[key], list):
                config[key] = tuple(config[key])
        try:
            cfg = GenConfig(**config)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from exc
        manifest_path = gen_corpus(cfg, req.out_dir)
        entries, _ = load_corpus(manifest_path)
        return GenCorpusResponse(
            manifest_path=manifest_path, binaries=len(entries), config_hash=config_hash(cfg)
        )

    @app.post("/disasm", response_model=DisasmResponse)
    def disasm_endpoint(req: DisasmRequest):
        image = load_image(req.image_path)
        weights = _load_weights_arg(req.weights_path)
        result, resolution = disassemble_image(image, weights)
        return DisasmResponse(
            blocks=len(resolution.blocks),
            instructions=len(instruction_keys(resolution.blocks)),
            total=resolution.schedule.total,
            candidates_text=(
                format_blocks(result.candidate_set.blocks) if req.dump_candidates else None
            ),
            schedule_text=(
                format_disassembly(resolution.blocks, resolution.schedule.total)
                if req.dump_schedule
                else None
            ),
        )

    @app.post("/infer-constraints", response_model=InferConstraintsResponse)
    def infer_endpoint(req: InferConstraintsRequest):
        image = load_image(req.image_path)
        gt = load_sidecar(req.sidecar_path)
        constraints = infer_image_constraints(image, gt, cap=req.cap)
        return InferConstraintsResponse(
            constraints=len(constraints),
            constraints_text=format_constraints(constraints),
        )

    @app.post("/solve-weights", response_model=SolveWeightsResponse)
    def solve_endpoint(req: SolveWeightsRequest):
        pooled = []
        seen = set()
        for path in req.constraint_paths:
            for con in load_constraints(path):
                if con not in seen:
                    seen.add(con)
                    pooled.append(con)
        report = solve_weights(pooled)
        return SolveWeightsResponse(
            weights_text=format_weights(report.weights),
            objective=str(report.objective),
            satisfied=report.satisfied,
            violated=report.violated,
            zero_heuristics=[h.name for h in REGISTRY if report.weights[h.name] == 0],
            iterations=report.iterations,
            used_bland=report.used_bland,
        )

    @app.post("/train", response_model=TrainResponse)
    def train_endpoint(req: TrainRequest):
        report = train_corpus(
            req.manifest_path,
            jobs=req.jobs,
            timeout=req.timeout,
            split=_split_arg(req.split),
            cap=req.cap,
        )
        return TrainResponse(
            weights_text=format_weights(report.solve.weights),
            report_text=format_train_report(report),
            summary=format_train_summary(report),
            objective=str(report.solve.objective),
            satisfied=report.solve.satisfied,
            violated=report.solve.violated,
            constraints=len(report.pooled),
            failures=len(report.failures),
        )

    @app.post("/eval", response_model=EvalResponse)
    def eval_endpoint(req: EvalRequest):
        weights = load_weights(req.weights_path)
        report = eval_corpus(
            req.manifest_path,
            weights,
            split=_split_arg(req.split),
            jobs=req.jobs,
            timeout=req.timeout,
        )
        return EvalResponse(
            report_text=format_eval_report(report),
            summary=format_eval_summary(report),
            precision=str(report.precision),
            recall=str(report.recall),
            correct=report.correct_count,
            evaluated=report.evaluated,
            sound=report.sound_count,
            unsound=report.unsound_count,
            failures=report.failure_count,
        )

    @app.post("/oracle", response_model=OracleResponse)
    def oracle_endpoint(req: OracleRequest):
        image = load_image(req.image_path)
        weights = _load_weights_arg(req.weights_path)
        result, resolution = disassemble_image(image, weights)
        blocks = competing_blocks(result.candidate_set)
        limit = ORACLE_LIMIT if req.limit is None else req.limit
        answer = oracle_wis(blocks, resolution.block_weights.__getitem__, limit)
        return OracleResponse(
            oracle_total=answer.total,
            solver_total=resolution.schedule.total,
            agrees=answer.total == resolution.schedule.total,
            selected_text=format_blocks(answer.selected),
        )

    return app


app = create_app()
