"""FastAPI service: train/eval/selftest jobs over HTTP.

The handlers hold the actual logic; the CLI calls them in-process by default
and over HTTP when pointed at a server, so both paths return identical
payloads. Configuration errors surface as 400s, numeric failures as 500s.
"""

from fastapi import FastAPI, HTTPException

from .. import config as cfgmod
from ..errors import CheckpointError, ConfigError, ToolkitError
from ..orchestrator import evaluate_checkpoint, train
from ..selftest import run_selftest
from .schemas import (
    DefaultsResponse,
    EvalRequest,
    EvalResponse,
    SelftestRequest,
    SelftestResponse,
    SuiteReport,
    TrainRequest,
    TrainResponse,
)


def handle_train(req: TrainRequest) -> TrainResponse:
    overrides = dict(req.overrides)
    if req.env is not None:
        overrides["env.name"] = req.env
    if req.mode is not None:
        overrides["train.mode"] = req.mode
    if req.episodes is not None:
        overrides["train.episodes"] = str(req.episodes)
    if req.seed is not None:
        overrides["train.seed"] = str(req.seed)
    settings, echo = cfgmod.run_config(req.config_text, overrides)
    result = train(settings, out_dir=req.out_dir, config_echo=echo)
    return TrainResponse(
        out_dir=req.out_dir,
        episodes_run=result.episodes_run,
        env_steps=result.env_steps,
        final_eval_return=result.final_eval_return,
        stopped_early=result.stopped_early,
        wall_time_s=result.wall_time_s,
        metrics_path=result.paths.get("metrics", ""),
        checkpoint_path=result.paths.get("checkpoint", ""),
    )


def handle_eval(req: EvalRequest) -> EvalResponse:
    if req.episodes < 1:
        raise ConfigError("eval needs episodes >= 1")
    try:
        mean, std = evaluate_checkpoint(req.checkpoint_path, req.episodes, req.seed)
    except FileNotFoundError as err:
        raise CheckpointError(f"checkpoint not found: {req.checkpoint_path}") from err
    return EvalResponse(mean_return=mean, std_return=std, episodes=req.episodes)


def handle_selftest(req: SelftestRequest) -> SelftestResponse:
    try:
        results = run_selftest(req.suites)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    reports = [SuiteReport(name=r.name, passed=r.passed, detail=r.detail) for r in results]
    return SelftestResponse(passed=all(r.passed for r in reports), suites=reports)


def handle_defaults() -> DefaultsResponse:
    defaults = {
        k.name: cfgmod.format_value(k.default) for k in cfgmod.KEYS
    }
    return DefaultsResponse(defaults=defaults, help={k.name: k.help for k in cfgmod.KEYS})


def create_app() -> FastAPI:
    app = FastAPI(title="nafrl", version="0.1.0")

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/defaults", response_model=DefaultsResponse)
    def defaults():
        return handle_defaults()

    @app.post("/train", response_model=TrainResponse)
    def train_endpoint(req: TrainRequest):
        try:
            return handle_train(req)
        except (ConfigError, CheckpointError, ValueError) as err:
            raise HTTPException(status_code=400, detail=str(err)) from err
        except ToolkitError as err:
            raise HTTPException(status_code=500, detail=str(err)) from err

    @app.post("/eval", response_model=EvalResponse)
    def eval_endpoint(req: EvalRequest):
        try:
            return handle_eval(req)
        except (ConfigError, CheckpointError, ValueError) as err:
            raise HTTPException(status_code=400, detail=str(err)) from err
        except ToolkitError as err:
            raise HTTPException(status_code=500, detail=str(err)) from err

    @app.post("/selftest", response_model=SelftestResponse)
    def selftest_endpoint(req: SelftestRequest):
        try:
            return handle_selftest(req)
        except ConfigError as err:
            raise HTTPException(status_code=400, detail=str(err)) from err

    return app


app = create_app()
