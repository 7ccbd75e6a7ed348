"""Q-learning with a state value plus quadratic advantage in the action.

The Q-function is V(x) + A(x, u) with A = -1/2 (u - mu)' P (u - mu) and
P = L L' assembled from the network's packed triangular head. Because P is
positive definite by construction, the greedy action is mu itself, which is
what makes continuous-action Q-learning tractable here.
"""

from dataclasses import dataclass, field

import numpy as np

from . import approximator as ap
from .errors import InsufficientData

MAX_LOG_DIAG = 5.0  # symmetric clamp on the raw diagonal before exponentiation


@dataclass
class HyperParams:
    """Scalar knobs shared across training components."""

    gamma: float = 0.99
    tau: float = 1e-3
    updates_per_step: int = 5
    batch_size: int = 64
    lr: float = 1e-3
    sigma: float = 0.3
    horizon: int = 0
    episodes: int = 0
    rollout_length: int = 5
    refit_interval: int = 5
    mix_p: float = 0.5
    temperature: float = 1.0
    switch_off_episode: int = -1
    max_log_diag: float = MAX_LOG_DIAG


@dataclass
class NafHeads:
    """Single-state head values."""

    v: float
    mu: np.ndarray
    l_entries: np.ndarray


@dataclass
class QDecomposition:
    q: float
    v: float
    advantage: float
    mu: np.ndarray
    precision: np.ndarray


@dataclass
class NafNetwork:
    arch: ap.Arch
    params: list = field(default_factory=list)

    @classmethod
    def create(cls, obs_dim, action_dim, hidden, rng):
        arch = ap.Arch(obs_dim=obs_dim, action_dim=action_dim, hidden=tuple(hidden))
        return cls(arch=arch, params=ap.init_params(arch, rng))

    def heads(self, obs: np.ndarray) -> NafHeads:
        v, mu, l_raw, _ = ap.forward(self.arch, self.params, np.asarray(obs, float)[None, :])
        return NafHeads(v=float(v[0]), mu=mu[0], l_entries=l_raw[0])

    def clone(self) -> "NafNetwork":
        return NafNetwork(arch=self.arch, params=ap.copy_params(self.params))


def tril_positions(d: int):
    """Row-major lower-triangle index pairs; defines the packed entry order."""
    return np.tril_indices(d)


def build_lower(l_raw: np.ndarray, d: int, max_log_diag: float = MAX_LOG_DIAG):
    """Unpack batched triangular entries into L with exponentiated diagonal.

    Returns (L, diag_mask) where diag_mask marks diagonal raw entries inside
    the clamp (the exp gradient is zero where the clamp saturates).
    """
    l_raw = np.atleast_2d(l_raw)
    batch = l_raw.shape[0]
    rows, cols = tril_positions(d)
    lower = np.zeros((batch, d, d))
    lower[:, rows, cols] = l_raw
    diag_idx = np.where(rows == cols)[0]
    raw_diag = l_raw[:, diag_idx]
    clipped = np.clip(raw_diag, -max_log_diag, max_log_diag)
    diag = np.exp(clipped)
    lower[:, np.arange(d), np.arange(d)] = diag
    mask = (raw_diag > -max_log_diag) & (raw_diag < max_log_diag)
    return lower, mask


def build_precision(l_entries: np.ndarray, d: int, max_log_diag: float = MAX_LOG_DIAG):
    """(L, P) for one packed entry vector; P = L L' is positive definite."""
    lower, _ = build_lower(l_entries[None, :], d, max_log_diag)
    low = lower[0]
    return low, low @ low.T


def assemble_q(heads: NafHeads, u: np.ndarray, max_log_diag: float = MAX_LOG_DIAG) -> QDecomposition:
    """Q(x, u) from head values.

    The advantage is computed as -1/2 ||L'(u - mu)||^2, which is exactly
    nonpositive in floating point, so Q <= V and the argmax at u = mu hold
    structurally rather than to a tolerance.
    """
    d = heads.mu.shape[0]
    low, prec = build_precision(heads.l_entries, d, max_log_diag)
    delta = np.asarray(u, float) - heads.mu
    w = low.T @ delta
    adv = -0.5 * float(w @ w)
    return QDecomposition(
        q=heads.v + adv, v=heads.v, advantage=adv, mu=heads.mu, precision=prec
    )


def greedy_action(heads: NafHeads) -> np.ndarray:
    """Analytic argmax of Q over actions."""
    return heads.mu.copy()


def td_target(reward: np.ndarray, obs_next: np.ndarray, target_net: NafNetwork,
              gamma: float) -> np.ndarray:
    """y = r + gamma * V'(x') under the target network. No terminal masking:
    episodes end by horizon, not by absorbing states."""
    v, _, _, _ = ap.forward(target_net.arch, target_net.params, obs_next)
    return np.asarray(reward, float) + gamma * v


def bellman_loss_and_grads(net: NafNetwork, obs, actions, targets,
                           max_log_diag: float = MAX_LOG_DIAG):
    """Mean squared Bellman error and its parameter gradients.

    The quadratic-advantage head is differentiated by hand: with
    delta = u - mu and w = L' delta, dA/dmu = L w and dA/dL = -delta w'.
    Diagonal raw entries chain through exp (zero outside the clamp).
    """
    arch = net.arch
    d = arch.action_dim
    v, mu, l_raw, cache = ap.forward(arch, net.params, obs)
    lower, diag_mask = build_lower(l_raw, d, max_log_diag)
    delta = np.asarray(actions, float) - mu
    w = np.einsum("bij,bi->bj", lower, delta)
    q = v - 0.5 * np.einsum("bj,bj->b", w, w)
    err = q - np.asarray(targets, float)
    batch = err.shape[0]
    loss = float(err @ err) / batch

    d_q = (2.0 / batch) * err
    d_v = d_q
    lw = np.einsum("bij,bj->bi", lower, w)
    d_mu = d_q[:, None] * lw
    d_lower = -d_q[:, None, None] * np.einsum("bi,bj->bij", delta, w)
    rows, cols = tril_positions(d)
    d_l_raw = d_lower[:, rows, cols]
    diag_idx = np.where(rows == cols)[0]
    diag_vals = lower[:, np.arange(d), np.arange(d)]
    d_l_raw[:, diag_idx] = d_l_raw[:, diag_idx] * diag_vals * diag_mask
    grads = ap.backward(arch, net.params, cache, d_v, d_mu, d_l_raw)
    return loss, grads


def learn_step(buffer, net: NafNetwork, target_net: NafNetwork, adam: ap.AdamState,
               hp: HyperParams, rng: np.random.Generator, observe,
               n_updates: int | None = None) -> float:
    """Run a block of minibatch updates; returns the mean Bellman loss.

    Each update: sample uniformly with replacement, form y = r + gamma V',
    take one Adam step on the mean squared error, then move the target
    network by tau toward the online one.

    Raises:
        InsufficientData: if the buffer holds fewer than batch_size transitions.
    """
    if len(buffer) < hp.batch_size:
        raise InsufficientData(
            f"replay holds {len(buffer)} transitions, need {hp.batch_size}"
        )
    if n_updates is None:
        n_updates = hp.updates_per_step
    total = 0.0
    for _ in range(n_updates):
        batch = buffer.sample(hp.batch_size, rng)
        obs = observe(batch.x)
        obs_next = observe(batch.x_next)
        y = td_target(batch.r, obs_next, target_net, hp.gamma)
        loss, grads = bellman_loss_and_grads(net, obs, batch.u, y, hp.max_log_diag)
        ap.adam_step(net.params, grads, adam)
        ap.soft_update(target_net.params, net.params, hp.tau)
        total += loss
    return total / max(n_updates, 1)
