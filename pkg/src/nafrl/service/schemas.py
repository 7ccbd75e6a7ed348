"""Request/response models shared by the HTTP service and the CLI client."""

from pydantic import BaseModel, Field


class TrainRequest(BaseModel):
    env: str | None = None
    mode: str | None = None
    episodes: int | None = None
    seed: int | None = None
    out_dir: str = Field(description="directory to write run artifacts into")
    config_text: str | None = Field(default=None, description="contents of a config file")
    overrides: dict[str, str] = Field(default_factory=dict, description="key=value settings")


class TrainResponse(BaseModel):
    out_dir: str
    episodes_run: int
    env_steps: int
    final_eval_return: float
    stopped_early: bool
    wall_time_s: float
    metrics_path: str
    checkpoint_path: str


class EvalRequest(BaseModel):
    checkpoint_path: str
    episodes: int = 10
    seed: int = 0


class EvalResponse(BaseModel):
    mean_return: float
    std_return: float
    episodes: int


class SelftestRequest(BaseModel):
    suites: list[str] | None = None


class SuiteReport(BaseModel):
    name: str
    passed: bool
    detail: str


class SelftestResponse(BaseModel):
    passed: bool
    suites: list[SuiteReport]


class DefaultsResponse(BaseModel):
    defaults: dict[str, str]
    help: dict[str, str]
