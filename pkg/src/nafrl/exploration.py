"""Exploration noise: temporally correlated OU, plain Gaussian, and a
precision-shaped variant that draws innovations from the learned advantage
curvature."""

from dataclasses import dataclass, field

import numpy as np

from .naf import NafHeads, build_precision
from .numerics import chol_lower, inv_psd, symmetrize

EXPLORE_MODES = ("ou", "precision-ou", "gaussian")


@dataclass
class OUProcess:
    """Mean-reverting random walk toward zero.

    state <- state + theta * (0 - state) * dt + scale * sqrt(dt) * innovation
    """

    dim: int
    theta: float = 0.15
    dt: float = 1.0
    state: np.ndarray = field(init=False)

    def __post_init__(self):
        self.state = np.zeros(self.dim)

    def reset(self) -> None:
        self.state = np.zeros(self.dim)

    def step(self, innovation: np.ndarray, scale: float = 1.0) -> np.ndarray:
        self.state = (
            self.state
            + self.theta * (-self.state) * self.dt
            + scale * np.sqrt(self.dt) * innovation
        )
        return self.state.copy()


@dataclass
class RunningScale:
    """Running average of a trace statistic, used to renormalize shaped noise
    so its average per-dimension variance tracks a fixed target."""

    target: float
    rate: float = 0.01
    value: float = -1.0

    def update(self, observed: float) -> float:
        if self.value <= 0.0:
            self.value = observed
        else:
            self.value += self.rate * (observed - self.value)
        return self.value


def precision_covariance(precision: np.ndarray, temperature: float,
                         scaler: RunningScale | None = None) -> np.ndarray:
    """Noise covariance c * P^-1, optionally trace-rescaled.

    The raw inverse-curvature covariance can swing over orders of magnitude as
    the advantage head sharpens, so the scaler renormalizes it to keep the
    running mean per-dimension variance at its target.
    """
    d = precision.shape[0]
    cov = symmetrize(temperature * inv_psd(precision))
    if scaler is not None:
        avg = scaler.update(float(np.trace(cov)) / d)
        cov = cov * (scaler.target / avg)
    return cov


@dataclass
class NoiseConfig:
    mode: str = "ou"
    sigma: float = 0.3
    ou_theta: float = 0.15
    ou_dt: float = 1.0
    precision_start_step: int = 50000
    temperature: float = 1.0
    scale_rate: float = 0.01


class NoiseSource:
    """Per-episode exploration noise generator for one action dimension count.

    In precision-ou mode the OU innovations are drawn from N(0, c P(x)^-1)
    (trace-normalized) once enough steps have elapsed; before that it falls
    back to plain OU so early random-quadratic curvature cannot dominate.
    """

    def __init__(self, dim: int, cfg: NoiseConfig):
        if cfg.mode not in EXPLORE_MODES:
            raise ValueError(f"unknown exploration mode '{cfg.mode}'")
        self.cfg = cfg
        self.dim = dim
        self.ou = OUProcess(dim=dim, theta=cfg.ou_theta, dt=cfg.ou_dt)
        self.scaler = RunningScale(target=cfg.sigma * cfg.sigma, rate=cfg.scale_rate)

    def reset(self) -> None:
        self.ou.reset()

    def sample(self, rng: np.random.Generator, heads: NafHeads | None = None,
               global_step: int = 0) -> np.ndarray:
        cfg = self.cfg
        z = rng.standard_normal(self.dim)
        if cfg.mode == "gaussian":
            return cfg.sigma * z
        if (
            cfg.mode == "precision-ou"
            and heads is not None
            and global_step >= cfg.precision_start_step
        ):
            _, prec = build_precision(heads.l_entries, self.dim)
            cov = precision_covariance(prec, cfg.temperature, self.scaler)
            innovation = chol_lower(cov) @ z
            return self.ou.step(innovation, scale=1.0)
        return self.ou.step(z, scale=cfg.sigma)


def behavior_action(base: np.ndarray, noise: np.ndarray, low: np.ndarray,
                    high: np.ndarray) -> np.ndarray:
    """Noisy action clipped to bounds; the greedy action is untouched."""
    return np.clip(np.asarray(base, float) + noise, low, high)
