"""Linear stability laboratory for the oscillator  y' = -w^2 z,  z' = y.

Four one-step discretizations are implemented through their exact 2x2
update matrices. Since the system is linear, n steps equal the n-th matrix
power, so long-time behaviour is governed by the spectral radius of the
one-step map, which depends on h and w only through the product h*w:

* forward Euler      rho = sqrt(1 + (hw)^2)        always expanding
* backward Euler     rho = 1 / sqrt(1 + (hw)^2)    always contracting
* trapezoidal        rho = 1                       exactly neutral
* Verlet             rho = 1 iff |hw| <= 2         conditionally neutral

``energy`` is the quadratic invariant y^2 + w^2 z^2 of the exact flow;
the growth or decay of its discrete counterpart separates the regimes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

# Trajectories are truncated and flagged once any state component passes this.
OVERFLOW_LIMIT = 1e12


class SchemeKind(Enum):
    FORWARD_EULER = "forward-euler"
    BACKWARD_EULER = "backward-euler"
    TRAPEZOIDAL = "trapezoidal"
    VERLET = "verlet"


@dataclass(frozen=True)
class TestSystem:
    """The linear oscillator with frequency ``omega > 0``."""

    omega: float

    __test__ = False  # keep pytest from collecting this as a test class

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")


@dataclass(frozen=True)
class SpectralReport:
    """Eigenvalues of one scheme's update matrix at a given ``h*omega``."""

    h_omega: float
    eigenvalues: tuple[complex, complex]
    spectral_radius: float


@dataclass(frozen=True)
class Trajectory:
    """States ``(y_k, z_k)`` for k = 0..steps; ``diverged`` marks truncation."""

    states: np.ndarray  # shape (steps + 1, 2)
    h: float
    steps: int
    diverged: bool = field(default=False)


def iteration_matrix(scheme: SchemeKind, h: float, omega: float) -> np.ndarray:
    """Exact 2x2 one-step map acting on the state (y, z).

    ``h`` may be zero (the map degenerates to the identity) or negative
    (the time-reversed step, used to probe the symmetric schemes).
    """
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    hw2 = h * omega * omega
    if scheme is SchemeKind.FORWARD_EULER:
        return np.array([[1.0, -hw2], [h, 1.0]])
    if scheme is SchemeKind.BACKWARD_EULER:
        # Closed-form inverse of [[1, h w^2], [-h, 1]].
        det = 1.0 + h * hw2
        return np.array([[1.0, -hw2], [h, 1.0]]) / det
    if scheme is SchemeKind.TRAPEZOIDAL:
        # Cayley map (I - (h/2) M)^-1 (I + (h/2) M), M = [[0, -w^2], [1, 0]].
        u = 0.5 * hw2
        v = 0.5 * h
        det = 1.0 + u * v
        return np.array([[1.0 - u * v, -2.0 * u], [2.0 * v, 1.0 - u * v]]) / det
    if scheme is SchemeKind.VERLET:
        half_kick = np.array([[1.0, -0.5 * hw2], [0.0, 1.0]])
        drift = np.array([[1.0, 0.0], [h, 1.0]])
        return half_kick @ drift @ half_kick
    raise ValueError(f"unknown scheme {scheme!r}")


def spectral_report(scheme: SchemeKind, h_omega: float) -> SpectralReport:
    """Eigenvalues and spectral radius of the one-step map at ``h*omega``.

    The spectrum depends on h and omega only through their product, so the
    matrix is evaluated at omega = 1, h = h_omega.
    """
    if h_omega < 0:
        raise ValueError(f"h_omega must be nonnegative, got {h_omega}")
    m = iteration_matrix(scheme, h_omega, 1.0)
    tr = m[0, 0] + m[1, 1]
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    disc = tr * tr - 4.0 * det
    if disc < 0.0:
        root = math.sqrt(-disc) / 2.0
        lam1 = complex(tr / 2.0, root)
        lam2 = complex(tr / 2.0, -root)
    else:
        root = math.sqrt(disc) / 2.0
        lam1 = complex(tr / 2.0 + root, 0.0)
        lam2 = complex(tr / 2.0 - root, 0.0)
    rho = max(abs(lam1), abs(lam2))
    return SpectralReport(h_omega, (lam1, lam2), rho)


def integrate(
    scheme: SchemeKind,
    sys: TestSystem,
    y0: float,
    z0: float,
    h: float,
    steps: int,
) -> Trajectory:
    """Apply the scheme ``steps`` times from ``(y0, z0)``.

    If any component exceeds ``OVERFLOW_LIMIT`` in magnitude the trajectory
    is truncated at that step and flagged divergent.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    a = iteration_matrix(scheme, h, sys.omega)
    states = np.empty((steps + 1, 2))
    states[0] = (y0, z0)
    s = states[0]
    for k in range(1, steps + 1):
        s = a @ s
        states[k] = s
        if np.abs(s).max() > OVERFLOW_LIMIT:
            return Trajectory(states[: k + 1].copy(), h, k, diverged=True)
    return Trajectory(states, h, steps, diverged=False)


def energy(sys: TestSystem, y, z):
    """Quadratic invariant ``y^2 + omega^2 z^2`` (vectorizes over arrays)."""
    return y * y + (sys.omega * sys.omega) * z * z
