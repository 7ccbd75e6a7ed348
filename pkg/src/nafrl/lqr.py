"""Finite-horizon LQR solved by direct dynamic programming on quadratics.

Used as the analytic oracle: gains and values here come from backward
induction on V_t(x) = x' S_t x + s_t' x + c_t with V_{T+1} = 0, written
straight from the algebra of maximizing a quadratic in u. It shares no code
with the trajectory optimizer it is used to check.

Conventions: reward r(x, u) = x' Rxx x + u' Ruu u + 2 x' Rxu u + rx' x
+ ru' u + r0 (a maximization problem, so Ruu must be negative definite along
the recursion), dynamics x' = A x + B u.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import solve_psd, symmetrize


@dataclass
class LqrProblem:
    a: np.ndarray
    b: np.ndarray
    r_xx: np.ndarray
    r_uu: np.ndarray
    r_xu: np.ndarray
    r_x: np.ndarray
    r_u: np.ndarray
    r_0: float
    horizon: int


@dataclass
class LqrSolution:
    """Policies u_t = K_t x + k_t and value quadratics, t = 0..T-1."""

    gain: np.ndarray  # (T, a, n)
    bias: np.ndarray  # (T, a)
    s_mat: np.ndarray  # (T, n, n) value curvature at each t
    s_vec: np.ndarray  # (T, n)
    s_const: np.ndarray  # (T,)

    def value(self, x: np.ndarray, t: int = 0) -> float:
        x = np.asarray(x, float)
        return float(x @ self.s_mat[t] @ x + self.s_vec[t] @ x + self.s_const[t])


def solve_lqr(prob: LqrProblem) -> LqrSolution:
    n = prob.a.shape[0]
    a_dim = prob.b.shape[1]
    horizon = prob.horizon
    gain = np.empty((horizon, a_dim, n))
    bias = np.empty((horizon, a_dim))
    s_mat = np.empty((horizon, n, n))
    s_vec = np.empty((horizon, n))
    s_const = np.empty(horizon)

    s = np.zeros((n, n))
    sv = np.zeros(n)
    sc = 0.0
    for t in range(horizon - 1, -1, -1):
        # substitute x' = Ax + Bu into x''Sx' + sv'x' + sc and collect terms
        q_xx = prob.r_xx + prob.a.T @ s @ prob.a
        q_uu = prob.r_uu + prob.b.T @ s @ prob.b
        q_xu = prob.r_xu + prob.a.T @ s @ prob.b
        q_x = prob.r_x + prob.a.T @ sv
        q_u = prob.r_u + prob.b.T @ sv
        neg_quu = symmetrize(-q_uu)
        k_mat = solve_psd(neg_quu, q_xu.T)  # = -Quu^-1 Qxu'
        k_vec = 0.5 * solve_psd(neg_quu, q_u)
        gain[t] = k_mat
        bias[t] = k_vec
        s = symmetrize(q_xx + q_xu @ k_mat + k_mat.T @ q_xu.T + k_mat.T @ q_uu @ k_mat)
        sv = q_x + k_mat.T @ q_u + 2.0 * (k_mat.T @ q_uu @ k_vec + q_xu @ k_vec)
        sc = sc + prob.r_0 + float(k_vec @ q_uu @ k_vec + q_u @ k_vec)
        s_mat[t] = s
        s_vec[t] = sv
        s_const[t] = sc
    return LqrSolution(gain=gain, bias=bias, s_mat=s_mat, s_vec=s_vec, s_const=s_const)


def from_linear_env(env) -> LqrProblem:
    """Oracle problem for a LinearQuadraticEnv (goal folded into linear terms)."""
    goal = env.goal
    return LqrProblem(
        a=env.a,
        b=env.b,
        r_xx=-env.q_cost,
        r_uu=-env.r_cost,
        r_xu=np.zeros((env.a.shape[0], env.b.shape[1])),
        r_x=2.0 * (env.q_cost @ goal),
        r_u=np.zeros(env.b.shape[1]),
        r_0=-float(goal @ env.q_cost @ goal),
        horizon=env.horizon,
    )


def rollout_policy(prob: LqrProblem, sol: LqrSolution, x0: np.ndarray):
    """Deterministic rollout of the solved policy; returns (return, states, actions)."""
    x = np.asarray(x0, float)
    total = 0.0
    states = [x]
    actions = []
    for t in range(prob.horizon):
        u = sol.gain[t] @ x + sol.bias[t]
        total += float(
            x @ prob.r_xx @ x + u @ prob.r_uu @ u + 2.0 * x @ prob.r_xu @ u
            + prob.r_x @ x + prob.r_u @ u + prob.r_0
        )
        x = prob.a @ x + prob.b @ u
        states.append(x)
        actions.append(u)
    return total, np.stack(states), np.stack(actions)


def optimal_return(env) -> float:
    """LQR-optimal undiscounted return of a linear env from its mean start state."""
    prob = from_linear_env(env)
    sol = solve_lqr(prob)
    return sol.value(env.x0_mean, 0)
