"""Iteratively refitted time-varying linear-Gaussian dynamics.

Each refit stacks the most recent episodes, fits one joint Gaussian over
[x_t; u_t; x_{t+1}] per timestep, and conditions it on [x; u] to get
p(x_{t+1} | x_t, u_t) = N(F_t [x; u] + f_t, N_t). The model is local to the
data that produced it; it is consumed by the trajectory optimizer and by
imagination rollouts, and is refit every few episodes.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError, InsufficientEpisodes
from .numerics import chol_lower, solve_psd, symmetrize

RIDGE_REL = 1e-6  # relative ridge on the conditioning block
MODEL_MAGIC = "nafrl-dynamics"
MODEL_VERSION = 1


@dataclass
class TimeVaryingLinearModel:
    """Per-timestep conditional Gaussians; arrays indexed 0..horizon-1."""

    f_mat: np.ndarray  # (T, n, n + a)
    f_vec: np.ndarray  # (T, n)
    noise: np.ndarray  # (T, n, n), symmetric PD

    @property
    def horizon(self) -> int:
        return self.f_mat.shape[0]

    @property
    def state_dim(self) -> int:
        return self.f_mat.shape[1]

    @property
    def action_dim(self) -> int:
        return self.f_mat.shape[2] - self.f_mat.shape[1]


def gaussian_condition(mean: np.ndarray, cov: np.ndarray, q: int, ridge_rel: float = RIDGE_REL):
    """Condition a joint Gaussian on its first q coordinates.

    Returns (F, f, N) with E[y | z] = F z + f and Cov[y | z] = N. A ridge of
    ridge_rel * mean(diag(cov)) is added to the conditioning block before
    solving, and the same floor is added to N so exactly deterministic data
    still yields a positive definite conditional covariance.
    """
    ridge = ridge_rel * float(np.mean(np.diag(cov)))
    s11 = symmetrize(cov[:q, :q]) + ridge * np.eye(q)
    s21 = cov[q:, :q]
    s22 = symmetrize(cov[q:, q:])
    f_mat = solve_psd(s11, s21.T).T
    f_vec = mean[q:] - f_mat @ mean[:q]
    noise = symmetrize(s22 - f_mat @ s21.T) + ridge * np.eye(s22.shape[0])
    return f_mat, f_vec, noise


def fit_local_linear(episodes, ridge_rel: float = RIDGE_REL) -> TimeVaryingLinearModel:
    """Fit per-timestep conditional linear-Gaussians from complete episodes.

    Args:
        episodes: list of (x, u, x_next) array triples, each of shape
            (horizon, n) / (horizon, a) / (horizon, n).

    Raises:
        InsufficientEpisodes: with fewer than two episodes the per-timestep
            covariance is degenerate rank-0/1 and conditioning is meaningless.
    """
    if len(episodes) < 2:
        raise InsufficientEpisodes(
            f"per-timestep fit needs at least 2 episodes, got {len(episodes)}"
        )
    xs = np.stack([ep[0] for ep in episodes])  # (E, T, n)
    us = np.stack([ep[1] for ep in episodes])
    xns = np.stack([ep[2] for ep in episodes])
    horizon = xs.shape[1]
    n = xs.shape[2]
    a = us.shape[2]
    f_mat = np.empty((horizon, n, n + a))
    f_vec = np.empty((horizon, n))
    noise = np.empty((horizon, n, n))
    for t in range(horizon):
        rows = np.concatenate([xs[:, t, :], us[:, t, :], xns[:, t, :]], axis=1)
        mean = rows.mean(axis=0)
        centered = rows - mean
        cov = (centered.T @ centered) / rows.shape[0]  # ML estimate
        f_mat[t], f_vec[t], noise[t] = gaussian_condition(mean, cov, n + a, ridge_rel)
    return TimeVaryingLinearModel(f_mat=f_mat, f_vec=f_vec, noise=noise)


def predict_mean(model: TimeVaryingLinearModel, x: np.ndarray, u: np.ndarray,
                 t: int) -> np.ndarray:
    """Conditional mean at 1-based timestep t; indices clamp at the horizon."""
    idx = min(max(int(t), 1), model.horizon) - 1
    z = np.concatenate([np.asarray(x, float), np.asarray(u, float)])
    return model.f_mat[idx] @ z + model.f_vec[idx]


def simulate(model: TimeVaryingLinearModel, x: np.ndarray, u: np.ndarray, t: int,
             rng: np.random.Generator | None = None) -> np.ndarray:
    """Sample x' ~ N(F_t [x;u] + f_t, N_t); mean step when rng is None."""
    mean = predict_mean(model, x, u, t)
    if rng is None:
        return mean
    idx = min(max(int(t), 1), model.horizon) - 1
    low = chol_lower(model.noise[idx])
    return mean + low @ rng.standard_normal(mean.shape[0])


def one_step_error(model: TimeVaryingLinearModel, episodes) -> float:
    """Mean squared one-step prediction error of the conditional means."""
    total = 0.0
    count = 0
    for x, u, xn in episodes:
        for t in range(x.shape[0]):
            gap = predict_mean(model, x[t], u[t], t + 1) - xn[t]
            total += float(gap @ gap)
            count += 1
    return total / max(count, 1)


def save_model(path, model: TimeVaryingLinearModel) -> None:
    """Versioned plain-text dump, same conventions as checkpoints."""
    lines = [
        f"{MODEL_MAGIC} {MODEL_VERSION}",
        f"horizon {model.horizon}",
        f"state_dim {model.state_dim}",
        f"action_dim {model.action_dim}",
    ]
    for name, arr in (("F", model.f_mat), ("f", model.f_vec), ("N", model.noise)):
        lines.append(name)
        flat = arr.ravel()
        for i in range(0, flat.size, 8):
            lines.append(" ".join(repr(float(v)) for v in flat[i : i + 8]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> TimeVaryingLinearModel:
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 8 or tokens[0] != MODEL_MAGIC:
        raise CheckpointError("not a dynamics model file")
    if int(tokens[1]) != MODEL_VERSION:
        raise CheckpointError(f"unsupported model version {tokens[1]}")
    fields = {tokens[i]: int(tokens[i + 1]) for i in (2, 4, 6)}
    horizon, n, a = fields["horizon"], fields["state_dim"], fields["action_dim"]
    cur = 8
    out = {}
    for name, shape in (
        ("F", (horizon, n, n + a)),
        ("f", (horizon, n)),
        ("N", (horizon, n, n)),
    ):
        if tokens[cur] != name:
            raise CheckpointError(f"expected block '{name}', got '{tokens[cur]}'")
        cur += 1
        size = int(np.prod(shape))
        vals = np.array([float(v) for v in tokens[cur : cur + size]])
        if vals.size != size:
            raise CheckpointError("model file truncated")
        cur += size
        out[name] = vals.reshape(shape)
    return TimeVaryingLinearModel(f_mat=out["F"], f_vec=out["f"], noise=out["N"])
