"""One-step trajectory optimization under the fitted time-varying linear model.

The backward pass runs the standard quadratic recursion

    Q_x  = r_x  + f_x' V'_x          Q_u  = r_u  + f_u' V'_x
    Q_xx = r_xx + f_x' V'_xx f_x     Q_uu = r_uu + f_u' V'_xx f_u
    Q_ux = r_ux + f_u' V'_xx f_x

    k = -Q_uu^-1 Q_u    K = -Q_uu^-1 Q_ux
    V_x = Q_x - Q_ux' Q_uu^-1 Q_u    V_xx = Q_xx - Q_ux' Q_uu^-1 Q_ux

from V_{T+1} = 0, so at the last step the Q-expansion is the reward expansion
alone. This is a maximization, so -Q_uu must be positive definite; when it is
not, a Levenberg-Marquardt shift subtracts rho I from Q_uu and retries with
escalating rho. The per-step action distribution is N(u_nom + k + K dx, c * (-Q_uu)^-1).
"""

from dataclasses import dataclass, field

import numpy as np

from .envs import RewardExpansion
from .errors import IllConditioned, NonFiniteState, NotPositiveDefinite
from .numerics import chol_lower, solve_psd, symmetrize

RHO_INIT = 1e-6
RHO_MAX = 1e6
CONTROLLER_MAGIC = "nafrl-controller"
CONTROLLER_VERSION = 1


@dataclass
class ILQGController:
    """Time-varying affine-Gaussian policy around a nominal trajectory."""

    k: np.ndarray  # (T, a) open-loop corrections
    gain: np.ndarray  # (T, a, n) feedback gains
    sigma: np.ndarray  # (T, a, a) action covariances, PD
    x_nom: np.ndarray  # (T, n)
    u_nom: np.ndarray  # (T, a)
    _chol: np.ndarray = field(init=False)

    def __post_init__(self):
        self._chol = np.stack([chol_lower(s) for s in self.sigma])

    @property
    def horizon(self) -> int:
        return self.k.shape[0]

    def mean_action(self, x: np.ndarray, t: int) -> np.ndarray:
        """Policy mean at 1-based timestep t; indices clamp at the horizon."""
        idx = min(max(int(t), 1), self.horizon) - 1
        dx = np.asarray(x, float) - self.x_nom[idx]
        return self.u_nom[idx] + self.k[idx] + self.gain[idx] @ dx

    def act(self, x: np.ndarray, t: int, rng: np.random.Generator | None = None,
            stochastic: bool = True) -> np.ndarray:
        u = self.mean_action(x, t)
        if stochastic and rng is not None:
            idx = min(max(int(t), 1), self.horizon) - 1
            u = u + self._chol[idx] @ rng.standard_normal(u.shape[0])
        if not np.all(np.isfinite(u)):
            raise NonFiniteState(f"controller action at t={t} is not finite")
        return u


def backward_pass(model, expansions: list[RewardExpansion], temperature: float = 1.0):
    """Quadratic backward recursion; returns (k, K, Sigma).

    Raises:
        IllConditioned: if no Levenberg-Marquardt shift up to the cap makes
            every -Q_uu positive definite.
    """
    horizon = model.horizon
    n = model.state_dim
    a = model.action_dim
    f_x = model.f_mat[:, :, :n]
    f_u = model.f_mat[:, :, n:]

    rho = 0.0
    while True:
        try:
            return _backward_once(horizon, n, a, f_x, f_u, expansions, temperature, rho)
        except NotPositiveDefinite:
            rho = RHO_INIT if rho == 0.0 else rho * 10.0
            if rho > RHO_MAX:
                raise IllConditioned(
                    f"backward pass unstable: curvature shift exceeded {RHO_MAX:g}"
                ) from None


def _backward_once(horizon, n, a, f_x, f_u, expansions, temperature, rho):
    k = np.empty((horizon, a))
    gain = np.empty((horizon, a, n))
    sigma = np.empty((horizon, a, a))
    v_x = np.zeros(n)
    v_xx = np.zeros((n, n))
    eye_a = np.eye(a)
    for t in range(horizon - 1, -1, -1):
        exp = expansions[t]
        fx, fu = f_x[t], f_u[t]
        q_x = exp.r_x + fx.T @ v_x
        q_u = exp.r_u + fu.T @ v_x
        q_xx = symmetrize(exp.r_xx + fx.T @ v_xx @ fx)
        q_uu = symmetrize(exp.r_uu + fu.T @ v_xx @ fu) - rho * eye_a
        q_ux = exp.r_xu.T + fu.T @ v_xx @ fx
        neg_quu = -q_uu  # must be PD for a well-posed maximum
        k[t] = solve_psd(neg_quu, q_u)
        gain[t] = solve_psd(neg_quu, q_ux)
        sigma[t] = symmetrize(temperature * solve_psd(neg_quu, eye_a))
        v_x = q_x + gain[t].T @ q_u  # = Q_x - Q_ux' Q_uu^-1 Q_u
        v_xx = symmetrize(q_xx + gain[t].T @ q_ux)
    return k, gain, sigma


def forward_pass(controller: ILQGController, step_mean) -> ILQGController:
    """Roll the mean policy through a mean dynamics function and rebase.

    The open-loop correction is absorbed into the new nominal actions
    (k becomes zero) and the nominal states are replayed from the original
    start state. Feedback gains and covariances are kept.
    """
    horizon = controller.horizon
    x = controller.x_nom[0].copy()
    x_nom = np.empty_like(controller.x_nom)
    u_nom = np.empty_like(controller.u_nom)
    for t in range(horizon):
        dx = x - controller.x_nom[t]
        u = controller.u_nom[t] + controller.k[t] + controller.gain[t] @ dx
        x_nom[t] = x
        u_nom[t] = u
        x = step_mean(x, u, t + 1)
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"forward pass diverged at t={t + 1}")
    return ILQGController(
        k=np.zeros_like(controller.k),
        gain=controller.gain.copy(),
        sigma=controller.sigma.copy(),
        x_nom=x_nom,
        u_nom=u_nom,
    )


def ilqg_one_step(episodes, model, reward_expansion, temperature: float = 1.0) -> ILQGController:
    """One backward + one forward pass around the mean of recent episodes.

    Args:
        episodes: list of (x, u, x_next) triples from the fitting buffer.
        model: time-varying linear model fit from those episodes.
        reward_expansion: callable (x, u) -> RewardExpansion.

    The nominal trajectory is the pointwise mean of the episodes, expansions
    are taken there, and the forward pass replays the improved policy through
    the model mean to rebase the nominals.
    """
    xs = np.stack([ep[0] for ep in episodes]).mean(axis=0)
    us = np.stack([ep[1] for ep in episodes]).mean(axis=0)
    expansions = [reward_expansion(xs[t], us[t]) for t in range(xs.shape[0])]
    k, gain, sigma = backward_pass(model, expansions, temperature)
    seed = ILQGController(k=k, gain=gain, sigma=sigma, x_nom=xs, u_nom=us)

    def model_mean(x, u, t):
        from .dynamics import predict_mean

        return predict_mean(model, x, u, t)

    return forward_pass(seed, model_mean)


def save_controller(path, controller: ILQGController) -> None:
    lines = [
        f"{CONTROLLER_MAGIC} {CONTROLLER_VERSION}",
        f"horizon {controller.horizon}",
        f"state_dim {controller.x_nom.shape[1]}",
        f"action_dim {controller.u_nom.shape[1]}",
    ]
    blocks = (
        ("k", controller.k),
        ("K", controller.gain),
        ("Sigma", controller.sigma),
        ("x_nom", controller.x_nom),
        ("u_nom", controller.u_nom),
    )
    for name, arr in blocks:
        lines.append(name)
        flat = arr.ravel()
        for i in range(0, flat.size, 8):
            lines.append(" ".join(repr(float(v)) for v in flat[i : i + 8]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
