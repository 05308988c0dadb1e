"""Shared numerical primitives: FFT convolution, Hermitian eigensolver, log grids.

Everything here is pure and double precision; f32 inputs are upcast, never
accumulated in single precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NumericsError(ValueError):
    """A numerical contract was violated (bad input or unacceptable residual)."""


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p <<= 1
    return p


def fft_convolve(signal, kernel) -> np.ndarray:
    """First L samples of the linear (zero-padded, non-circular) convolution.

    Both inputs must be length-L 1-d vectors. The transform length is the next
    power of two >= 2L-1, so the circular wrap never touches the returned span.
    """
    s = np.asarray(signal)
    k = np.asarray(kernel)
    if s.ndim != 1 or k.ndim != 1:
        raise NumericsError("fft_convolve expects 1-d inputs")
    if s.shape[0] != k.shape[0]:
        raise NumericsError(f"fft_convolve length mismatch: {s.shape[0]} vs {k.shape[0]}")
    length = s.shape[0]
    if length < 1:
        raise NumericsError("fft_convolve requires length >= 1")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(k))):
        raise NumericsError("fft_convolve requires finite inputs")
    n = _next_pow2(2 * length - 1)
    out = np.fft.ifft(np.fft.fft(s, n) * np.fft.fft(k, n))[:length]
    if not (np.iscomplexobj(s) or np.iscomplexobj(k)):
        return out.real
    return out


@dataclass
class HermitianEigResult:
    """Eigendecomposition H = V diag(w) V* with w real ascending and V unitary."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


_HERMITIAN_TOL = 1e-12
_UNITARITY_TOL = 1e-10
_RECON_TOL = 1e-9


def hermitian_eig(h) -> HermitianEigResult:
    """Eigendecomposition of a Hermitian matrix, with verified residuals.

    Raises NumericsError if the input is not Hermitian (max |H - H*| > 1e-12),
    or if the solver output fails the unitarity / reconstruction contracts.
    """
    mat = np.asarray(h, dtype=np.complex128)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise NumericsError("hermitian_eig expects a square matrix")
    if not np.all(np.isfinite(mat.view(np.float64))):
        raise NumericsError("hermitian_eig requires finite input")
    dev = np.abs(mat - mat.conj().T).max() if mat.size else 0.0
    if dev > _HERMITIAN_TOL:
        raise NumericsError(f"input is not Hermitian: max |H - H*| = {dev:.3e}")
    try:
        w, v = np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"eigensolver failed to converge: {exc}") from exc
    p = mat.shape[0]
    unit = np.abs(v.conj().T @ v - np.eye(p)).max()
    scale = max(np.abs(mat).max(), np.finfo(np.float64).tiny)
    recon = np.abs(v @ np.diag(w) @ v.conj().T - mat).max()
    if unit > _UNITARITY_TOL or recon > _RECON_TOL * scale:
        raise NumericsError(
            f"eigendecomposition residuals too large: unitarity {unit:.3e}, "
            f"reconstruction {recon:.3e} (scale {scale:.3e})"
        )
    return HermitianEigResult(eigenvalues=w, eigenvectors=v)


def log_grid(omega_min: float, omega_max: float, n: int) -> np.ndarray:
    """N logarithmically spaced points on [omega_min, omega_max], endpoints exact."""
    if omega_min <= 0.0:
        raise NumericsError("log_grid requires omega_min > 0")
    if omega_max <= omega_min:
        raise NumericsError("log_grid requires omega_max > omega_min")
    if n < 2:
        raise NumericsError("log_grid requires n >= 2")
    grid = np.geomspace(omega_min, omega_max, n)
    grid[0] = omega_min
    grid[-1] = omega_max
    return grid
