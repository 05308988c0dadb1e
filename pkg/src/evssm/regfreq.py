"""Frequency response of the continuous system and the H2 tail-norm penalty.

The tail norm is sqrt((1/pi) * integral_{omega_min}^{omega_max} ||G(j w)||_F^2 dw)
evaluated by trapezoidal quadrature on a logarithmic grid; omega_max stands in
for the infinite upper limit and the estimate converges monotonically as it
grows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import log_grid


@dataclass
class H2Config:
    omega_min: float
    omega_max: float
    n_points: int = 4096
    weight: float = 1e-2
    # When True the training penalty is weight * norm^2, avoiding the sqrt
    # gradient singularity at zero response.
    squared: bool = True

    def __post_init__(self):
        if not (0.0 < self.omega_min < self.omega_max):
            raise ValueError("h2 config requires 0 < omega_min < omega_max")
        if self.n_points < 2:
            raise ValueError("h2 config requires n_points >= 2")
        if self.weight < 0.0:
            raise ValueError("h2 weight must be nonnegative")


def transfer_fn(ssm, omega) -> np.ndarray:
    """G(j w) = C~ diag(1/(j w - lam)) B~; shape (M, U), or (n, M, U) for a grid."""
    w = np.asarray(omega, dtype=np.float64)
    scalar = w.ndim == 0
    w = np.atleast_1d(w)
    denom = 1j * w[:, None] - ssm.lam[None, :]
    if np.any(denom == 0.0):
        raise ZeroDivisionError("j*omega hits an eigenvalue of the state matrix")
    resolvent = 1.0 / denom  # (n, P)
    g = np.einsum("mp,np,pu->nmu", ssm.c_tilde, resolvent, ssm.b_tilde)
    return g[0] if scalar else g


def frequency_response_sq(ssm, grid) -> np.ndarray:
    """Squared Frobenius norm ||G(j w)||_F^2 sampled on the grid."""
    g = transfer_fn(ssm, np.asarray(grid, dtype=np.float64))
    return np.sum(np.abs(g) ** 2, axis=(1, 2))


def h2_tail_norm(ssm, cfg: H2Config) -> float:
    """Trapezoidal estimate of the tail norm on a log grid."""
    grid = log_grid(cfg.omega_min, cfg.omega_max, cfg.n_points)
    gsq = frequency_response_sq(ssm, grid)
    return float(np.sqrt(np.trapezoid(gsq, grid) / np.pi))


def default_omega_max(lam) -> float:
    """Heuristic upper limit: two decades above the fastest pole scale."""
    lam = np.asarray(lam, dtype=np.complex128)
    return 100.0 * float(np.max(np.abs(lam.imag) + np.abs(lam.real)))


def trapezoid_weights(grid) -> np.ndarray:
    """Quadrature weights w such that w . f == trapezoid(f, grid)."""
    grid = np.asarray(grid, dtype=np.float64)
    w = np.zeros_like(grid)
    d = np.diff(grid)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w
