"""FastAPI application wrapping the core operations.

Run it with ``dfgn serve`` or ``uvicorn dfgn.service.app:app``.  Commands
execute synchronously: training here is desk-scale; long full-corpus runs
belong in the CLI.  Input problems (bad configs, unreadable files, unknown
presets, checkpoint mismatches) map to 400; internal failures to 500.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, operations
from ..errors import DfgnError, InputError
from . import schemas


def create_app() -> FastAPI:
    app = FastAPI(
        title="dfgn answer selection service",
        version=__version__,
        description=(
            "Train, evaluate, ablate, and inspect a dynamic-feature-"
            "generation answer selection model."
        ),
    )

    @app.exception_handler(InputError)
    async def input_error(request: Request, exc: InputError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(DfgnError)
    async def runtime_error(request: Request, exc: DfgnError) -> JSONResponse:
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/config/default", response_model=schemas.ConfigResponse)
    def default_config() -> schemas.ConfigResponse:
        from ..config import RunConfig

        return schemas.ConfigResponse(config=RunConfig())

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest) -> schemas.TrainResponse:
        payload = operations.op_train(
            req.config, seed=req.seed, checkpoint=req.checkpoint, out=req.out
        )
        return schemas.TrainResponse(**payload)

    @app.post("/eval", response_model=schemas.EvalResponse)
    def evaluate(req: schemas.EvalRequest) -> schemas.EvalResponse:
        payload = operations.op_eval(
            req.config, req.checkpoint, split=req.split, seed=req.seed, out=req.out
        )
        return schemas.EvalResponse(**payload)

    @app.post("/ablate", response_model=schemas.AblateResponse)
    def ablate(req: schemas.AblateRequest) -> schemas.AblateResponse:
        payload = operations.op_ablate(
            req.config, req.presets, seed=req.seed, out=req.out
        )
        return schemas.AblateResponse(**payload)

    @app.post("/inspect", response_model=schemas.InspectResponse)
    def inspect(req: schemas.InspectRequest) -> schemas.InspectResponse:
        payload = operations.op_inspect(
            req.config, req.checkpoint, req.question, req.answer, out=req.out
        )
        return schemas.InspectResponse(payload=payload)

    @app.post("/score", response_model=schemas.ScoreResponse)
    def score(req: schemas.ScoreRequest) -> schemas.ScoreResponse:
        payload = operations.op_score(
            req.config, req.checkpoint, req.question, req.candidates
        )
        return schemas.ScoreResponse(**payload)

    return app


app = create_app()
