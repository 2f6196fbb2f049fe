"""Dense linear algebra, seeded randomness, and weight initializers.

Everything runs in float64. Randomness flows exclusively through numpy's
PCG64 generator (``numpy.random.default_rng``): identical seeds yield
identical streams on every platform, which keeps every experiment in this
package reproducible bit for bit.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionMismatchError, SingularMatrixError

# Seeded generator type used throughout the package.
Rng = np.random.Generator

# A pivot below this fraction of the largest input entry counts as singular.
PIVOT_RTOL = 1e-13


def make_rng(seed: int) -> Rng:
    """Return a PCG64 generator seeded with ``seed``."""
    return np.random.default_rng(seed)


def _require_square(a: np.ndarray) -> int:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    return a.shape[0]


def lu_solve(a, rhs) -> np.ndarray:
    """Solve ``a @ x = rhs`` by LU factorization with partial pivoting.

    Parameters
    ----------
    a : (n, n) array_like
    rhs : (n,) array_like

    Raises
    ------
    SingularMatrixError
        If any pivot magnitude falls to or below ``PIVOT_RTOL`` times the
        largest entry magnitude of the input matrix.
    DimensionMismatchError
        If ``a`` is not square or ``rhs`` has the wrong length.
    """
    a = np.array(a, dtype=float)
    x = np.array(rhs, dtype=float)
    n = _require_square(a)
    if x.shape != (n,):
        raise DimensionMismatchError(f"rhs shape {x.shape} does not match matrix size {n}")
    tol = PIVOT_RTOL * (np.abs(a).max() if n else 0.0)
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) <= tol:
            raise SingularMatrixError(
                f"pivot {a[p, k]:.3e} at column {k} below threshold {tol:.3e}"
            )
        if p != k:
            a[[k, p]] = a[[p, k]]
            x[[k, p]] = x[[p, k]]
        m = a[k + 1 :, k] / a[k, k]
        a[k + 1 :, k + 1 :] -= np.outer(m, a[k, k + 1 :])
        x[k + 1 :] -= m * x[k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - a[k, k + 1 :] @ x[k + 1 :]) / a[k, k]
    return x


def solve_many(mats: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a stack of dense systems ``mats[i] @ x[i] = rhs[i]``.

    Backed by LAPACK's partial-pivot LU through ``numpy.linalg.solve``;
    used on the hot training path where per-sample systems are solved in
    one call. Exactly singular stacks raise ``SingularMatrixError``.
    """
    try:
        sol = np.linalg.solve(mats, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from None
    if not np.all(np.isfinite(sol)):
        raise SingularMatrixError("linear solve produced non-finite values")
    return sol


def skew_symmetrize(a) -> np.ndarray:
    """Return ``W = a - a.T``, the skew-symmetric part (times two).

    The result satisfies ``W + W.T == 0`` exactly, so its spectrum is
    purely imaginary and the quadratic form ``v.T @ W @ v`` vanishes.
    """
    a = np.asarray(a, dtype=float)
    _require_square(a)
    return a - a.T


def glorot_uniform(rng: Rng, fan_in: int, fan_out: int) -> np.ndarray:
    """Matrix of shape ``(fan_out, fan_in)`` with entries uniform on [-s, s].

    The half-width is ``s = sqrt(6 / (fan_in + fan_out))``.
    """
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fan_in and fan_out must be >= 1, got {fan_in}, {fan_out}")
    s = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_out, fan_in))
