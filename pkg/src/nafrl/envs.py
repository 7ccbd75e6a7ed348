"""Built-in control tasks: linear point mass, pendulum swing-up, two-link reacher.

All dynamics are plain numpy; episodes are fixed-horizon with no terminal
states. Rewards are negative costs, so returns approach zero from below.
"""

from dataclasses import dataclass, field

import numpy as np

from .numerics import assert_finite, finite_diff_grad, finite_diff_hess, symmetrize


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    obs_dim: int
    horizon: int
    dt: float
    action_low: np.ndarray
    action_high: np.ndarray


@dataclass
class RewardExpansion:
    """Second-order expansion of r(x, u) around a nominal pair.

    Fields hold the actual derivative values (gradients and Hessians), not
    half-Hessians, so consumers apply no hidden factors of two.
    """

    r_x: np.ndarray
    r_u: np.ndarray
    r_xx: np.ndarray
    r_uu: np.ndarray
    r_xu: np.ndarray  # d2r/dx du, shape (state_dim, action_dim)


class Env:
    """Fixed-horizon continuous-control task.

    Subclasses set ``spec`` and implement ``reset``, ``_mean_step`` and
    ``reward``. States are numpy vectors owned by the caller; the env holds no
    mutable episode state.
    """

    spec: EnvSpec

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def reward(self, x: np.ndarray, u: np.ndarray) -> float:
        raise NotImplementedError

    def _mean_step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _noise(self, rng: np.random.Generator) -> np.ndarray | None:
        return None

    def clip_action(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.spec.action_low, self.spec.action_high)

    def step(self, x, u, rng: np.random.Generator | None = None):
        """Advance one step; returns (next_state, reward).

        The action is clipped to bounds first and the reward is computed on
        the clipped action. ``rng=None`` yields the deterministic mean step.
        """
        u = self.clip_action(np.asarray(u, dtype=float))
        x2 = self._mean_step(np.asarray(x, dtype=float), u)
        if rng is not None:
            noise = self._noise(rng)
            if noise is not None:
                x2 = x2 + noise
        assert_finite("state", x2)
        return x2, float(self.reward(x, u))

    def observe(self, x: np.ndarray) -> np.ndarray:
        """Map state(s) to network observations; vectorized over leading dims."""
        return np.asarray(x, dtype=float)

    def reward_expansion(self, x: np.ndarray, u: np.ndarray, h: float = 1e-3) -> RewardExpansion:
        """Numeric second-order expansion of the reward at (x, u)."""
        n = self.spec.state_dim
        z0 = np.concatenate([np.asarray(x, float), np.asarray(u, float)])

        def joint(z):
            return self.reward(z[:n], z[n:])

        grad = finite_diff_grad(joint, z0, h)
        hess = finite_diff_hess(joint, z0, h)
        return RewardExpansion(
            r_x=grad[:n],
            r_u=grad[n:],
            r_xx=symmetrize(hess[:n, :n]),
            r_uu=symmetrize(hess[n:, n:]),
            r_xu=hess[:n, n:],
        )


@dataclass
class LinearQuadraticEnv(Env):
    """x' = A x + B u (+ noise), r = -(x-g)' Qc (x-g) - u' Rc u."""

    a: np.ndarray
    b: np.ndarray
    q_cost: np.ndarray
    r_cost: np.ndarray
    goal: np.ndarray
    x0_mean: np.ndarray
    init_std: float
    horizon: int
    dt: float = 0.05
    noise_std: float = 0.0
    action_bound: float = 10.0
    name: str = "pointmass"
    spec: EnvSpec = field(init=False)

    def __post_init__(self):
        n, m = self.b.shape
        self.spec = EnvSpec(
            name=self.name,
            state_dim=n,
            action_dim=m,
            obs_dim=n,
            horizon=self.horizon,
            dt=self.dt,
            action_low=np.full(m, -self.action_bound),
            action_high=np.full(m, self.action_bound),
        )

    def reset(self, rng):
        return self.x0_mean + self.init_std * rng.standard_normal(self.spec.state_dim)

    def reward(self, x, u):
        dx = np.asarray(x, float) - self.goal
        u = np.asarray(u, float)
        return float(-(dx @ self.q_cost @ dx) - (u @ self.r_cost @ u))

    def _mean_step(self, x, u):
        return self.a @ x + self.b @ u

    def _noise(self, rng):
        if self.noise_std <= 0.0:
            return None
        return self.noise_std * rng.standard_normal(self.spec.state_dim)


def pointmass(dt=0.05, horizon=20, init_std=0.01, noise_std=0.0) -> LinearQuadraticEnv:
    """Planar double integrator driven to the origin.

    State [px, py, vx, vy], action = acceleration. Starts near (1, 1) at rest.
    """
    a = np.eye(4)
    a[0, 2] = dt
    a[1, 3] = dt
    b = np.zeros((4, 2))
    b[0, 0] = 0.5 * dt * dt
    b[1, 1] = 0.5 * dt * dt
    b[2, 0] = dt
    b[3, 1] = dt
    return LinearQuadraticEnv(
        a=a,
        b=b,
        q_cost=np.diag([1.0, 1.0, 0.1, 0.1]),
        r_cost=0.1 * np.eye(2),
        goal=np.zeros(4),
        x0_mean=np.array([1.0, 1.0, 0.0, 0.0]),
        init_std=init_std,
        horizon=horizon,
        dt=dt,
        noise_std=noise_std,
    )


@dataclass
class PendulumEnv(Env):
    """Torque-limited swing-up; angle measured from upright.

    The torque bound is well below the gravity torque, so the solution must
    pump energy over several swings. Observations are [sin, cos, angular vel].
    """

    dt: float = 0.05
    horizon: int = 100
    init_std: float = 0.05
    gravity: float = 9.81
    length: float = 1.0
    mass: float = 1.0
    damping: float = 0.05
    torque_bound: float = 2.0
    w_angle: float = 1.0
    w_vel: float = 0.1
    w_act: float = 0.01
    spec: EnvSpec = field(init=False)

    def __post_init__(self):
        self.spec = EnvSpec(
            name="pendulum",
            state_dim=2,
            action_dim=1,
            obs_dim=3,
            horizon=self.horizon,
            dt=self.dt,
            action_low=np.array([-self.torque_bound]),
            action_high=np.array([self.torque_bound]),
        )

    def reset(self, rng):
        # hanging down, tiny spread
        return np.array([np.pi, 0.0]) + self.init_std * rng.standard_normal(2)

    def reward(self, x, u):
        theta, omega = float(x[0]), float(x[1])
        torque = float(np.asarray(u).reshape(-1)[0])
        return -(
            self.w_angle * (2.0 - 2.0 * np.cos(theta))
            + self.w_vel * omega * omega
            + self.w_act * torque * torque
        )

    def _accel(self, s, torque):
        inertia = self.mass * self.length * self.length
        return np.array(
            [
                s[1],
                (self.gravity / self.length) * np.sin(s[0])
                - self.damping * s[1]
                + torque / inertia,
            ]
        )

    def _mean_step(self, x, u):
        torque = float(np.asarray(u).reshape(-1)[0])
        k1 = self._accel(x, torque)
        k2 = self._accel(x + 0.5 * self.dt * k1, torque)
        k3 = self._accel(x + 0.5 * self.dt * k2, torque)
        k4 = self._accel(x + self.dt * k3, torque)
        return x + (self.dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def observe(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack(
            [np.sin(x[..., 0]), np.cos(x[..., 0]), x[..., 1]], axis=-1
        )


@dataclass
class ReacherEnv(Env):
    """Planar two-link arm (no gravity) reaching a fixed target point.

    State [q1, q2, dq1, dq2]; standard manipulator dynamics with viscous
    joint damping. Observations are joint sines/cosines plus velocities.
    """

    dt: float = 0.05
    horizon: int = 50
    init_std: float = 0.05
    l1: float = 0.5
    l2: float = 0.5
    m1: float = 1.0
    m2: float = 1.0
    damping: float = 0.1
    torque_bound: float = 1.0
    w_dist: float = 1.0
    w_vel: float = 0.01
    w_act: float = 0.01
    target_angles: tuple = (0.8, 0.6)
    spec: EnvSpec = field(init=False)

    def __post_init__(self):
        self.spec = EnvSpec(
            name="reacher",
            state_dim=4,
            action_dim=2,
            obs_dim=6,
            horizon=self.horizon,
            dt=self.dt,
            action_low=np.full(2, -self.torque_bound),
            action_high=np.full(2, self.torque_bound),
        )
        self.target = self.tip(np.asarray(self.target_angles, dtype=float))

    def tip(self, q):
        return np.array(
            [
                self.l1 * np.cos(q[0]) + self.l2 * np.cos(q[0] + q[1]),
                self.l1 * np.sin(q[0]) + self.l2 * np.sin(q[0] + q[1]),
            ]
        )

    def reset(self, rng):
        q = np.array([np.pi / 2.0, 0.0]) + self.init_std * rng.standard_normal(2)
        return np.concatenate([q, np.zeros(2)])

    def reward(self, x, u):
        x = np.asarray(x, float)
        u = np.asarray(u, float)
        gap = self.tip(x[:2]) - self.target
        return float(
            -self.w_dist * (gap @ gap) - self.w_vel * (x[2:] @ x[2:]) - self.w_act * (u @ u)
        )

    def _accel(self, s, u):
        q2, w1, w2 = s[1], s[2], s[3]
        lc1, lc2 = 0.5 * self.l1, 0.5 * self.l2
        i1 = self.m1 * self.l1 * self.l1 / 12.0
        i2 = self.m2 * self.l2 * self.l2 / 12.0
        c2 = np.cos(q2)
        m11 = (
            i1 + i2 + self.m1 * lc1 * lc1
            + self.m2 * (self.l1 * self.l1 + lc2 * lc2 + 2.0 * self.l1 * lc2 * c2)
        )
        m12 = i2 + self.m2 * (lc2 * lc2 + self.l1 * lc2 * c2)
        m22 = i2 + self.m2 * lc2 * lc2
        inertia = np.array([[m11, m12], [m12, m22]])
        h = self.m2 * self.l1 * lc2 * np.sin(q2)
        coriolis = np.array([-h * w2 * (2.0 * w1 + w2), h * w1 * w1])
        torque = u - self.damping * s[2:]
        acc = np.linalg.solve(inertia, torque - coriolis)
        return np.concatenate([s[2:], acc])

    def _mean_step(self, x, u):
        u = np.asarray(u, float)
        k1 = self._accel(x, u)
        k2 = self._accel(x + 0.5 * self.dt * k1, u)
        k3 = self._accel(x + 0.5 * self.dt * k2, u)
        k4 = self._accel(x + self.dt * k3, u)
        return x + (self.dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def observe(self, x):
        x = np.asarray(x, dtype=float)
        return np.concatenate(
            [
                np.sin(x[..., :2]),
                np.cos(x[..., :2]),
                x[..., 2:],
            ],
            axis=-1,
        )


ENV_NAMES = ("pointmass", "pendulum", "reacher")


def make_env(name: str, dt: float = 0.0, horizon: int = 0, init_std: float = -1.0,
             noise_std: float = 0.0) -> Env:
    """Build a registered env; zero/negative overrides mean env defaults."""
    if name == "pointmass":
        kw = {}
        if dt > 0:
            kw["dt"] = dt
        if horizon > 0:
            kw["horizon"] = horizon
        if init_std >= 0:
            kw["init_std"] = init_std
        kw["noise_std"] = noise_std
        return pointmass(**kw)
    if name == "pendulum":
        kw = {}
        if dt > 0:
            kw["dt"] = dt
        if horizon > 0:
            kw["horizon"] = horizon
        if init_std >= 0:
            kw["init_std"] = init_std
        return PendulumEnv(**kw)
    if name == "reacher":
        kw = {}
        if dt > 0:
            kw["dt"] = dt
        if horizon > 0:
            kw["horizon"] = horizon
        if init_std >= 0:
            kw["init_std"] = init_std
        return ReacherEnv(**kw)
    raise ValueError(f"unknown env '{name}', expected one of {ENV_NAMES}")
