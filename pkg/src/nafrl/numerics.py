"""Shared numeric helpers: PSD linear algebra, finite differences, RNG streams."""

import numpy as np
from scipy.linalg import cho_solve

from .errors import NonFiniteState, NotPositiveDefinite

# Every consumer of randomness gets its own named substream so that adding or
# removing draws in one place cannot shift any other stream.
STREAM_NAMES = ("params", "env", "explore", "sample", "model", "mix", "eval")


def make_streams(seed: int) -> dict[str, np.random.Generator]:
    """Spawn one independent generator per named consumer from a single seed."""
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(STREAM_NAMES))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAM_NAMES, children)}


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def chol_lower(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric PD matrix.

    Raises:
        NotPositiveDefinite: if the factorization fails.
    """
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefinite(f"matrix is not positive definite: {err}") from err


def solve_psd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b for symmetric PD a via Cholesky."""
    low = chol_lower(a)
    return cho_solve((low, True), b)


def inv_psd(a: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric PD matrix, symmetrized against roundoff."""
    return symmetrize(solve_psd(a, np.eye(a.shape[0])))


def assert_finite(name: str, *arrays: np.ndarray) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NonFiniteState(f"{name} contains non-finite values")


def finite_diff_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        grad.flat[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return grad


def finite_diff_hess(f, x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Four-point central-difference Hessian of a scalar function.

    Exact (to roundoff) for quadratics, which is what the toy rewards are.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    hess = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        for j in range(i, n):
            ej = np.zeros(n)
            ej[j] = h
            val = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * h * h)
            hess[i, j] = val
            hess[j, i] = val
    return hess
