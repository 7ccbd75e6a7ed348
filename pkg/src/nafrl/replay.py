"""Ring replay buffers for real and fictional transitions.

Storage is columnar (preallocated arrays, one row per transition) so uniform
minibatch sampling is a single fancy-index gather; pushing is still one
transition at a time.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, NotFull


@dataclass(frozen=True, eq=False)
class Transition:
    """One step: state, action, reward, successor, 1-based timestep index."""

    x: np.ndarray
    u: np.ndarray
    r: float
    x_next: np.ndarray
    t: int


@dataclass
class Batch:
    x: np.ndarray
    u: np.ndarray
    r: np.ndarray
    x_next: np.ndarray
    t: np.ndarray

    def __len__(self):
        return self.x.shape[0]


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform with-replacement sampling."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._x = np.empty((capacity, state_dim))
        self._u = np.empty((capacity, action_dim))
        self._r = np.empty(capacity)
        self._xn = np.empty((capacity, state_dim))
        self._t = np.empty(capacity, dtype=np.int64)
        self._head = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def full(self) -> bool:
        return self._size == self.capacity

    def clear(self) -> None:
        self._head = 0
        self._size = 0

    def push(self, tr: Transition) -> None:
        """Append one transition, overwriting the oldest once full."""
        i = self._head
        self._x[i] = tr.x
        self._u[i] = tr.u
        self._r[i] = tr.r
        self._xn[i] = tr.x_next
        self._t[i] = tr.t
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, m: int, rng: np.random.Generator) -> Batch:
        """Uniform sample of m transitions, with replacement.

        Raises:
            InsufficientData: if the buffer is empty or holds fewer than one
                candidate row (sampling never invents data).
        """
        if self._size == 0:
            raise InsufficientData("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self._size, size=m)
        return Batch(
            x=self._x[idx].copy(),
            u=self._u[idx].copy(),
            r=self._r[idx].copy(),
            x_next=self._xn[idx].copy(),
            t=self._t[idx].copy(),
        )

    def rows(self):
        """Transitions in insertion order (oldest first)."""
        if self._size < self.capacity:
            order = np.arange(self._size)
        else:
            order = (np.arange(self.capacity) + self._head) % self.capacity
        for i in order:
            yield Transition(
                x=self._x[i].copy(),
                u=self._u[i].copy(),
                r=float(self._r[i]),
                x_next=self._xn[i].copy(),
                t=int(self._t[i]),
            )


def swap_batch(batch: ReplayBuffer, batch_old: ReplayBuffer) -> None:
    """Move the contents of a full fitting buffer into the stale one and empty it.

    Raises:
        NotFull: if the fitting buffer has not filled yet; model refits only
            consume complete episode blocks.
    """
    if not batch.full:
        raise NotFull(
            f"fitting buffer holds {len(batch)}/{batch.capacity} transitions"
        )
    batch_old.clear()
    for tr in batch.rows():
        batch_old.push(tr)
    batch.clear()


def episodes_view(buffer: ReplayBuffer, horizon: int):
    """Group buffer contents into consecutive full episodes.

    Returns a list of (x, u, x_next) array triples, each of length ``horizon``,
    in insertion order. The buffer length must be a multiple of the horizon and
    timestep fields must run 1..horizon within each chunk.
    """
    rows = list(buffer.rows())
    if len(rows) % horizon != 0:
        raise InsufficientData(
            f"buffer length {len(rows)} is not a whole number of episodes of length {horizon}"
        )
    episodes = []
    for start in range(0, len(rows), horizon):
        chunk = rows[start : start + horizon]
        ts = [tr.t for tr in chunk]
        if ts != list(range(1, horizon + 1)):
            raise InsufficientData("buffer contents are not aligned to episode boundaries")
        episodes.append(
            (
                np.stack([tr.x for tr in chunk]),
                np.stack([tr.u for tr in chunk]),
                np.stack([tr.x_next for tr in chunk]),
            )
        )
    return episodes


def write_csv(buffer: ReplayBuffer, path) -> None:
    """Dump transitions oldest-first as CSV for offline inspection."""
    with open(path, "w") as fh:
        first = next(iter(buffer.rows()), None)
        if first is None:
            fh.write("t\n")
            return
        n = first.x.shape[0]
        a = first.u.shape[0]
        cols = (
            ["t"]
            + [f"x{i}" for i in range(n)]
            + [f"u{i}" for i in range(a)]
            + ["r"]
            + [f"xn{i}" for i in range(n)]
        )
        fh.write(",".join(cols) + "\n")
        for tr in buffer.rows():
            vals = [str(tr.t)] + [repr(float(v)) for v in tr.x]
            vals += [repr(float(v)) for v in tr.u] + [repr(tr.r)]
            vals += [repr(float(v)) for v in tr.x_next]
            fh.write(",".join(vals) + "\n")
