"""HiPPO-LegS matrices, their normal part, diagonalization, and full SSM init.

The continuous state matrix is initialized from the normal part of the
HiPPO-LegS operator: A_legs = A_normal - p p^T, where A_normal is -1/2 I plus
a real skew-symmetric matrix, hence unitarily diagonalizable with eigenvalues
on the Re = -1/2 line. J > 1 builds a block-diagonal init from J identical
smaller blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import NumericsError, hermitian_eig
from .rng import CounterRng

# Stream ids for init_ssm sampling (see rng.CounterRng for draw accounting).
STREAM_B = 1
STREAM_C = 2
STREAM_D = 3
STREAM_LOG_DELTA = 4


@dataclass
class HippoLegS:
    """Lower-triangular memory operator and its input vector."""

    a: np.ndarray  # (N, N) float64
    b: np.ndarray  # (N,) float64


@dataclass
class HippoNormal:
    """Normal part of HiPPO-LegS plus the rank-one factor p."""

    a_normal: np.ndarray  # (N, N) float64
    p: np.ndarray  # (N,) float64


@dataclass
class ContinuousDiagSSM:
    """Diagonal continuous-time system (Lambda, B~, C~, D) with per-state log step."""

    lam: np.ndarray  # (P,) complex128, Re < 0 at init
    b_tilde: np.ndarray  # (P, U) complex128
    c_tilde: np.ndarray  # (M, P) complex128
    d: np.ndarray  # (H,) float64 elementwise feedthrough, M = U = H
    log_delta: np.ndarray  # (P,) float64

    @property
    def state_size(self) -> int:
        return self.lam.shape[0]

    @property
    def width(self) -> int:
        return self.d.shape[0]


def legs_matrix(n: int) -> HippoLegS:
    """HiPPO-LegS matrix: a[n,k] = -sqrt(2n+1)sqrt(2k+1) below, -(n+1) on the diagonal."""
    if n < 1:
        raise ValueError("legs_matrix requires n >= 1")
    idx = np.arange(n)
    r = np.sqrt(2.0 * idx + 1.0)
    a = np.tril(-np.outer(r, r), -1)
    a -= np.diag(idx + 1.0)
    return HippoLegS(a=a, b=r.copy())


def legs_normal(n: int) -> HippoNormal:
    """Normal part of HiPPO-LegS: -1/2 on the diagonal, +/- sqrt(n+1/2)sqrt(k+1/2) off it."""
    if n < 1:
        raise ValueError("legs_normal requires n >= 1")
    r = np.sqrt(np.arange(n) + 0.5)
    a = -np.outer(r, r)
    iu = np.triu_indices(n, 1)
    a[iu] = -a[iu]
    np.fill_diagonal(a, -0.5)
    return HippoNormal(a_normal=a, p=r.copy())


def diagonalize_normal(h: HippoNormal) -> tuple[np.ndarray, np.ndarray]:
    """Unitary diagonalization a_normal = V diag(lam) V*, all Re(lam) = -1/2.

    a_normal + I/2 is skew-symmetric, so -i*(a_normal + I/2) is Hermitian and
    the problem reduces to a Hermitian eigensolve.
    """
    a = np.asarray(h.a_normal, dtype=np.float64)
    n = a.shape[0]
    skew = a + 0.5 * np.eye(n)
    if np.abs(skew + skew.T).max() > 1e-12:
        raise NumericsError("a_normal + I/2 is not skew-symmetric")
    res = hermitian_eig(-1j * skew)
    lam = -0.5 + 1j * res.eigenvalues
    v = res.eigenvectors
    recon = np.abs(v @ np.diag(lam) @ v.conj().T - a).max()
    if recon > 1e-9 * n:
        raise NumericsError(f"diagonalization residual too large: {recon:.3e}")
    return lam, v


def init_ssm(
    p: int,
    h: int,
    j: int = 1,
    seed: int = 0,
    delta_min: float = 0.001,
    delta_max: float = 0.1,
) -> ContinuousDiagSSM:
    """Initialize a P-state, H-wide diagonal SSM from J HiPPO-N blocks.

    B and C are sampled dense real, N(0, 1/sqrt(P)) per element, then projected
    into the eigenbasis blockwise (B~ = V^-1 B, C~ = C V). D is standard normal
    per channel and log_delta is uniform on [log delta_min, log delta_max).
    Deterministic in (seed); each parameter draws from its own stream.
    """
    if p < 1 or h < 1 or j < 1:
        raise ValueError("init_ssm requires p, h, j >= 1")
    if p % j != 0:
        raise ValueError(f"state size {p} not divisible by block count {j}")
    if not (0.0 < delta_min < delta_max):
        raise ValueError("init_ssm requires 0 < delta_min < delta_max")
    n = p // j
    lam_block, v = diagonalize_normal(legs_normal(n))
    lam = np.tile(lam_block, j)

    scale = 1.0 / np.sqrt(p)
    b = CounterRng(seed, STREAM_B).normal((p, h)) * scale
    c = CounterRng(seed, STREAM_C).normal((h, p)) * scale
    vinv = v.conj().T
    b_tilde = np.empty((p, h), dtype=np.complex128)
    c_tilde = np.empty((h, p), dtype=np.complex128)
    for blk in range(j):
        rows = slice(blk * n, (blk + 1) * n)
        b_tilde[rows] = vinv @ b[rows]
        c_tilde[:, rows] = c[:, rows] @ v

    d = CounterRng(seed, STREAM_D).normal((h,))
    lo, hi = np.log(delta_min), np.log(delta_max)
    log_delta = lo + CounterRng(seed, STREAM_LOG_DELTA).uniform((p,)) * (hi - lo)
    return ContinuousDiagSSM(lam=lam, b_tilde=b_tilde, c_tilde=c_tilde, d=d, log_delta=log_delta)
