"""Flat key=value configuration with typed defaults and strict validation.

Files are plain text, one ``key = value`` per line, ``#`` comments allowed.
Unknown keys are rejected, every value must parse to its declared type, and a
resolved configuration can always be rendered back out and re-parsed to the
identical mapping.
"""

from dataclasses import dataclass
from typing import Any, Callable

from .envs import ENV_NAMES
from .errors import ConfigError
from .exploration import EXPLORE_MODES, NoiseConfig
from .naf import HyperParams
from .orchestrator import MODES, TrainSettings


@dataclass(frozen=True)
class KeySpec:
    name: str
    type: type
    default: Any
    check: Callable[[Any], bool] | None
    help: str


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _unit(v):
    return 0.0 <= v <= 1.0


def _hidden_ok(v):
    try:
        dims = [int(s) for s in v.split(",")]
    except ValueError:
        return False
    return len(dims) >= 1 and all(d >= 1 for d in dims)


KEYS = [
    KeySpec("env.name", str, "pointmass", lambda v: v in ENV_NAMES,
            f"environment, one of {'/'.join(ENV_NAMES)}"),
    KeySpec("env.dt", float, 0.0, _nonneg, "integration step; 0 uses the env default"),
    KeySpec("env.horizon", int, 0, _nonneg, "episode length; 0 uses the env default"),
    KeySpec("env.init_std", float, -1.0, None,
            "reset-state spread; negative uses the env default"),
    KeySpec("env.noise_std", float, 0.0, _nonneg,
            "additive process-noise std (pointmass only)"),
    KeySpec("naf.gamma", float, 0.99, _unit, "discount factor"),
    KeySpec("naf.tau", float, 1e-3, lambda v: 0.0 < v <= 1.0,
            "target-network tracking rate"),
    KeySpec("naf.updates_per_step", int, 5, _positive,
            "Q-updates per real environment step"),
    KeySpec("naf.batch_size", int, 64, _positive, "minibatch size"),
    KeySpec("naf.lr", float, 1e-3, _positive, "Adam step size"),
    KeySpec("naf.hidden", str, "200,200", _hidden_ok,
            "comma-separated trunk widths"),
    KeySpec("naf.max_log_diag", float, 5.0, _positive,
            "symmetric clamp on raw triangular diagonals before exp"),
    KeySpec("explore.mode", str, "ou", lambda v: v in EXPLORE_MODES,
            f"noise process, one of {'/'.join(EXPLORE_MODES)}"),
    KeySpec("explore.sigma", float, 0.3, _nonneg, "exploration noise scale"),
    KeySpec("explore.ou_theta", float, 0.15, _nonneg, "mean-reversion rate"),
    KeySpec("explore.ou_dt", float, 1.0, _positive, "noise-process step size"),
    KeySpec("explore.precision_start_step", int, 50000, _nonneg,
            "global step after which curvature-shaped innovations engage"),
    KeySpec("explore.scale_rate", float, 0.01, lambda v: 0.0 < v <= 1.0,
            "running-average rate of the shaped-noise trace normalizer"),
    KeySpec("ilqg.c", float, 1.0, _positive,
            "action-covariance temperature of the trajectory optimizer"),
    KeySpec("train.mode", str, "naf", lambda v: v in MODES,
            f"algorithm variant, one of {'/'.join(MODES)}"),
    KeySpec("train.episodes", int, 200, _positive, "training episodes"),
    KeySpec("train.seed", int, 0, _nonneg, "master seed for all substreams"),
    KeySpec("train.eval_interval", int, 5, _positive,
            "episodes between greedy evaluations"),
    KeySpec("train.eval_episodes", int, 10, _positive, "episodes per evaluation"),
    KeySpec("train.refit_n", int, 5, lambda v: v >= 2,
            "episodes per model refit (the fitting buffer holds this many)"),
    KeySpec("train.rollout_length", int, 5, _nonneg,
            "imagination rollout length"),
    KeySpec("train.mix_p", float, 0.5, _unit,
            "per-episode probability of the learned behavior policy"),
    KeySpec("train.switch_off_episode", int, -1, lambda v: v >= -1,
            "imagination off for good after this episode; -1 = never"),
    KeySpec("train.trigger_period", int, 0, _nonneg,
            "steps between imagination triggers; 0 = once per episode"),
    KeySpec("train.rollout_seeds", int, 8, _positive,
            "stale transitions seeded per imagination trigger"),
    KeySpec("train.replay_capacity", int, 1_000_000, _positive, "real replay size"),
    KeySpec("train.rf_capacity", int, 100_000, _positive, "fictional replay size"),
    KeySpec("train.clear_rf_on_refit", bool, False, None,
            "drop fictional data on every model refit"),
    KeySpec("train.stop_return", float, float("nan"), None,
            "stop once an evaluation mean reaches this; nan = run all episodes"),
    KeySpec("train.dump_transitions", bool, False, None, "write replay contents as CSV"),
    KeySpec("train.dump_model", bool, False, None,
            "write the fitted model (and controller, if any) as text"),
]

KEY_MAP = {k.name: k for k in KEYS}


def default_config() -> dict[str, Any]:
    return {k.name: k.default for k in KEYS}


def parse_value(key: str, text: str) -> Any:
    spec = KEY_MAP.get(key)
    if spec is None:
        raise ConfigError(f"unknown config key '{key}'")
    text = text.strip()
    try:
        if spec.type is bool:
            if text not in ("true", "false"):
                raise ValueError
            val = text == "true"
        elif spec.type is int:
            val = int(text)
        elif spec.type is float:
            val = float(text)
        else:
            val = text
    except ValueError:
        raise ConfigError(
            f"config key '{key}' expects a {spec.type.__name__}, got '{text}'"
        ) from None
    if spec.check is not None and not spec.check(val):
        raise ConfigError(f"config value out of range: {key}={text} ({spec.help})")
    return val


def format_value(val: Any) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    return str(val)


def parse_config_text(text: str) -> dict[str, str]:
    """Raw key -> value-string pairs from file contents."""
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got '{raw.strip()}'")
        key, val = line.split("=", 1)
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        pairs[key] = val.strip()
    return pairs


def validate(cfg: dict[str, Any]) -> None:
    """Cross-key consistency checks beyond per-key ranges."""
    mode = cfg["train.mode"]
    if mode.endswith("imr") and cfg["train.rollout_length"] < 1:
        raise ConfigError("imagination modes need train.rollout_length >= 1")
    if "ilqg" in mode and cfg["train.mix_p"] >= 1.0:
        raise ConfigError(
            "trajectory-optimized exploration needs train.mix_p < 1, "
            "otherwise the optimizer is never used"
        )
    if cfg["train.replay_capacity"] < cfg["naf.batch_size"]:
        raise ConfigError("train.replay_capacity must be >= naf.batch_size")
    if mode.endswith("imr") and cfg["train.rf_capacity"] < cfg["naf.batch_size"]:
        raise ConfigError("train.rf_capacity must be >= naf.batch_size")


def resolve(file_text: str | None = None, overrides: dict[str, str] | None = None) -> dict[str, Any]:
    """Defaults, then file pairs, then override pairs; validated end to end."""
    cfg = default_config()
    for source in (parse_config_text(file_text) if file_text else {}, overrides or {}):
        for key, text in source.items():
            cfg[key] = parse_value(key, text)
    validate(cfg)
    return cfg


def render(cfg: dict[str, Any]) -> str:
    """Canonical text form; parses back to the identical mapping."""
    lines = [f"{name}={format_value(cfg[name])}" for name in sorted(cfg)]
    return "\n".join(lines) + "\n"


def to_settings(cfg: dict[str, Any]) -> TrainSettings:
    hidden = tuple(int(s) for s in cfg["naf.hidden"].split(","))
    hp = HyperParams(
        gamma=cfg["naf.gamma"],
        tau=cfg["naf.tau"],
        updates_per_step=cfg["naf.updates_per_step"],
        batch_size=cfg["naf.batch_size"],
        lr=cfg["naf.lr"],
        sigma=cfg["explore.sigma"],
        rollout_length=cfg["train.rollout_length"],
        refit_interval=cfg["train.refit_n"],
        mix_p=cfg["train.mix_p"],
        temperature=cfg["ilqg.c"],
        switch_off_episode=cfg["train.switch_off_episode"],
        max_log_diag=cfg["naf.max_log_diag"],
    )
    noise = NoiseConfig(
        mode=cfg["explore.mode"],
        sigma=cfg["explore.sigma"],
        ou_theta=cfg["explore.ou_theta"],
        ou_dt=cfg["explore.ou_dt"],
        precision_start_step=cfg["explore.precision_start_step"],
        temperature=cfg["ilqg.c"],
        scale_rate=cfg["explore.scale_rate"],
    )
    return TrainSettings(
        env_name=cfg["env.name"],
        env_dt=cfg["env.dt"],
        env_horizon=cfg["env.horizon"],
        env_init_std=cfg["env.init_std"],
        env_noise_std=cfg["env.noise_std"],
        mode=cfg["train.mode"],
        episodes=cfg["train.episodes"],
        seed=cfg["train.seed"],
        hidden=hidden,
        hp=hp,
        noise=noise,
        trigger_period=cfg["train.trigger_period"],
        rollout_seeds=cfg["train.rollout_seeds"],
        replay_capacity=cfg["train.replay_capacity"],
        rf_capacity=cfg["train.rf_capacity"],
        clear_rf_on_refit=cfg["train.clear_rf_on_refit"],
        eval_interval=cfg["train.eval_interval"],
        eval_episodes=cfg["train.eval_episodes"],
        stop_return=cfg["train.stop_return"],
        dump_transitions=cfg["train.dump_transitions"],
        dump_model=cfg["train.dump_model"],
    )


def run_config(file_text: str | None = None, overrides: dict[str, str] | None = None):
    """(settings, echo text) for a resolved configuration."""
    cfg = resolve(file_text, overrides)
    return to_settings(cfg), render(cfg)
