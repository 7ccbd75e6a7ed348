"""ReLU MLP with value / action / triangular-factor heads, trained by hand-rolled Adam.

The network maps an observation to three heads sharing one trunk:
scalar state value, action vector, and the packed entries of a lower-
triangular matrix whose diagonal is exponentiated downstream. Forward and
backward passes are explicit numpy; there is no autodiff dependency.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError

CHECKPOINT_MAGIC = "nafrl-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Arch:
    obs_dim: int
    action_dim: int
    hidden: tuple[int, ...]

    @property
    def n_tril(self) -> int:
        d = self.action_dim
        return d * (d + 1) // 2


def init_params(arch: Arch, rng: np.random.Generator) -> list[np.ndarray]:
    """Uniform fan-in init for the trunk; heads scaled down 10x to start near zero."""
    sizes = [arch.obs_dim, *arch.hidden]
    params: list[np.ndarray] = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    top = sizes[-1]
    bound = 0.1 / np.sqrt(top)
    for head_dim in (1, arch.action_dim, arch.n_tril):
        params.append(rng.uniform(-bound, bound, size=(top, head_dim)))
        params.append(np.zeros(head_dim))
    return params


def forward(arch: Arch, params: list[np.ndarray], obs: np.ndarray):
    """Batched forward pass.

    Args:
        obs: (batch, obs_dim) observations.

    Returns:
        (v, mu, l_raw, cache): value (batch,), action (batch, d), packed
        triangular entries (batch, n_tril), and the activation cache the
        backward pass needs. Pure: mutates nothing.
    """
    n_trunk = len(arch.hidden)
    acts = [np.asarray(obs, dtype=float)]
    pre = []
    h = acts[0]
    for i in range(n_trunk):
        z = h @ params[2 * i] + params[2 * i + 1]
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    base = 2 * n_trunk
    v = (h @ params[base] + params[base + 1])[:, 0]
    mu = h @ params[base + 2] + params[base + 3]
    l_raw = h @ params[base + 4] + params[base + 5]
    return v, mu, l_raw, (acts, pre)


def backward(arch: Arch, params: list[np.ndarray], cache, d_v, d_mu, d_l_raw):
    """Gradients of a scalar loss w.r.t. every parameter, given head gradients."""
    acts, pre = cache
    n_trunk = len(arch.hidden)
    base = 2 * n_trunk
    h_top = acts[-1]
    grads: list[np.ndarray] = [np.empty(0)] * len(params)

    d_v2 = d_v[:, None]
    grads[base] = h_top.T @ d_v2
    grads[base + 1] = d_v2.sum(axis=0)
    grads[base + 2] = h_top.T @ d_mu
    grads[base + 3] = d_mu.sum(axis=0)
    grads[base + 4] = h_top.T @ d_l_raw
    grads[base + 5] = d_l_raw.sum(axis=0)

    d_h = d_v2 @ params[base].T + d_mu @ params[base + 2].T + d_l_raw @ params[base + 4].T
    for i in range(n_trunk - 1, -1, -1):
        d_z = d_h * (pre[i] > 0.0)
        grads[2 * i] = acts[i].T @ d_z
        grads[2 * i + 1] = d_z.sum(axis=0)
        if i > 0:
            d_h = d_z @ params[2 * i].T
    return grads


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState):
    """One Adam update, in place; returns (params, state)."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1t = 1.0 - state.beta1 ** state.t
    b2t = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / b1t) / (np.sqrt(v / b2t) + state.eps)
    return params, state


def soft_update(target: list[np.ndarray], source: list[np.ndarray], tau: float) -> None:
    """target <- tau * source + (1 - tau) * target, elementwise in place."""
    for tp, sp in zip(target, source):
        tp *= 1.0 - tau
        tp += tau * sp


def copy_params(params: list[np.ndarray]) -> list[np.ndarray]:
    return [p.copy() for p in params]


def flatten_params(params: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([p.ravel() for p in params])


def unflatten_params(arch: Arch, vec: np.ndarray, like: list[np.ndarray]) -> list[np.ndarray]:
    out = []
    off = 0
    for p in like:
        out.append(np.asarray(vec[off : off + p.size], dtype=float).reshape(p.shape))
        off += p.size
    if off != vec.size:
        raise ValueError(f"parameter vector has {vec.size} entries, expected {off}")
    return out


def save_checkpoint(path, arch: Arch, params: list[np.ndarray], env_name: str) -> None:
    """Plain-text checkpoint: versioned header then whitespace-separated decimals.

    Values are written with shortest round-trip repr, so loading restores the
    exact float64 bits.
    """
    lines = [
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}",
        f"env {env_name}",
        f"obs_dim {arch.obs_dim}",
        f"action_dim {arch.action_dim}",
        "hidden " + " ".join(str(h) for h in arch.hidden),
        f"arrays {len(params)}",
    ]
    for p in params:
        lines.append("shape " + " ".join(str(s) for s in p.shape))
        flat = p.ravel()
        for i in range(0, flat.size, 8):
            lines.append(" ".join(repr(float(v)) for v in flat[i : i + 8]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns (arch, params, env_name)."""
    with open(path) as fh:
        tokens = fh.read().split()
    cur = 0

    def take(n):
        nonlocal cur
        got = tokens[cur : cur + n]
        if len(got) < n:
            raise CheckpointError("checkpoint truncated")
        cur += n
        return got

    magic, version = take(2)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"not a checkpoint file (header '{magic}')")
    if int(version) != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = {}
    for key in ("env", "obs_dim", "action_dim"):
        k, val = take(2)
        if k != key:
            raise CheckpointError(f"expected '{key}' field, got '{k}'")
        header[key] = val
    k = take(1)[0]
    if k != "hidden":
        raise CheckpointError(f"expected 'hidden' field, got '{k}'")
    hidden = []
    while tokens[cur] != "arrays":
        hidden.append(int(take(1)[0]))
    n_arrays = int(take(2)[1])
    arch = Arch(
        obs_dim=int(header["obs_dim"]),
        action_dim=int(header["action_dim"]),
        hidden=tuple(hidden),
    )
    params = []
    for _ in range(n_arrays):
        k = take(1)[0]
        if k != "shape":
            raise CheckpointError(f"expected 'shape' field, got '{k}'")
        shape = []
        while cur < len(tokens) and tokens[cur].isdigit():
            shape.append(int(take(1)[0]))
        size = int(np.prod(shape)) if shape else 1
        vals = np.array([float(v) for v in take(size)])
        params.append(vals.reshape(shape))
    return arch, params, header["env"]
