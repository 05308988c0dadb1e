"""The diagonal state-space layer: scan path, convolutional path, kernels,
bandlimit masking, and deploy-time rate retargeting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretize import DiscretizationError, bilinear, effective_step, zoh
from .numerics import fft_convolve
from .scan import scan_parallel


@dataclass
class BandlimitConfig:
    """Mask C~ columns whose effective frequency exceeds alpha/2."""

    alpha: float
    enabled: bool = True

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("bandlimit alpha must lie in [0, 1]")


@dataclass
class SsmLayerOutput:
    y: np.ndarray  # (L, H) float64
    final_state: np.ndarray  # (P,) complex128, last forward scan state


def retarget(train_hz: float, deploy_hz: float) -> float:
    """Rate multiplier r = f_train / f_deploy (halved at double the frequency)."""
    if train_hz <= 0.0 or deploy_hz <= 0.0:
        raise ValueError("frequencies must be positive")
    return train_hz / deploy_hz


def effective_frequency(lam, log_delta, rate: float) -> np.ndarray:
    """Per-state frequency f_p = (exp(log_delta_p) / rate) * |Im lam_p| / (2 pi)."""
    if rate <= 0.0:
        raise ValueError("rate must be positive")
    lam = np.asarray(lam, dtype=np.complex128)
    delta = np.exp(np.asarray(log_delta, dtype=np.float64))
    return delta / rate * np.abs(lam.imag) / (2.0 * np.pi)


def bandlimit_mask(c_tilde, freqs, alpha: float) -> np.ndarray:
    """Zero every C~ column whose state frequency exceeds alpha/2 (boundary kept).

    Accepts P or 2P columns; in the bidirectional case the per-state
    frequencies apply to both halves.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ValueError("bandlimit alpha must lie in [0, 1]")
    c = np.asarray(c_tilde)
    f = np.asarray(freqs, dtype=np.float64)
    if c.shape[1] == 2 * f.shape[0]:
        f = np.concatenate([f, f])
    elif c.shape[1] != f.shape[0]:
        raise ValueError(f"mask width mismatch: C~ has {c.shape[1]} columns, got {f.shape[0]} frequencies")
    return c * (f <= alpha / 2.0)


def _discretize(ssm, rate, rule):
    step = effective_step(ssm.log_delta, rate)
    if rule == "bilinear":
        return bilinear(ssm.lam, ssm.b_tilde, step)
    if rule == "zoh":
        return zoh(ssm.lam, ssm.b_tilde, step)
    raise DiscretizationError(f"unknown discretization rule '{rule}'")


def _masked_c(ssm, rate, bandlimit, bidir):
    c = np.asarray(ssm.c_tilde, dtype=np.complex128)
    p = ssm.lam.shape[0]
    expected = 2 * p if bidir else p
    if c.shape[1] != expected:
        raise ValueError(f"C~ has {c.shape[1]} columns, expected {expected}")
    if bandlimit is not None and bandlimit.enabled:
        c = bandlimit_mask(c, effective_frequency(ssm.lam, ssm.log_delta, rate), bandlimit.alpha)
    return c


def apply_recurrent(
    ssm,
    u,
    prev_state=None,
    rate: float = 1.0,
    bandlimit: BandlimitConfig | None = None,
    bidir: bool = False,
    rule: str = "bilinear",
    threads: int | None = None,
) -> SsmLayerOutput:
    """Run the discretized recurrence over u (L, H) and project the outputs.

    y_k = Re(C~ x_k) + d * u_k. With bidir=True, forward and reverse scan
    states are concatenated before the C projection (C~ needs 2P columns) and
    an initial-state carry is rejected: the reverse scan needs the whole
    sequence, so carry and bidir are mutually exclusive.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError("apply_recurrent expects u of shape (L, H)")
    if u.shape[1] != ssm.width:
        raise ValueError(f"u has {u.shape[1]} channels, system width is {ssm.width}")
    if bidir and prev_state is not None:
        raise ValueError("state carry is incompatible with bidirectional mode")
    lam_bar, b_bar = _discretize(ssm, rate, rule)
    c = _masked_c(ssm, rate, bandlimit, bidir)

    length = u.shape[0]
    bu = u.astype(np.complex128) @ b_bar.T  # (L, P)
    a = np.broadcast_to(lam_bar, bu.shape)
    xs = scan_parallel(a, bu, prev_state, threads=threads)
    states = xs
    if bidir:
        xs_rev = scan_parallel(a, bu, None, reverse=True, threads=threads)
        states = np.concatenate([xs, xs_rev], axis=1)
    y = (states @ c.T).real + ssm.d * u
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("non-finite layer output")
    return SsmLayerOutput(y=y, final_state=xs[length - 1].copy())


def state_basis(ssm, length: int, rate: float = 1.0, rule: str = "bilinear") -> np.ndarray:
    """Discrete basis functions lam_bar^k b_bar, shape (L, P, U)."""
    if length < 1:
        raise ValueError("length must be >= 1")
    lam_bar, b_bar = _discretize(ssm, rate, rule)
    out = np.empty((length, *b_bar.shape), dtype=np.complex128)
    cur = b_bar.copy()
    for k in range(length):
        out[k] = cur
        cur = cur * lam_bar[:, None]
    return out


def materialize_kernel(
    ssm,
    length: int,
    rate: float = 1.0,
    bandlimit: BandlimitConfig | None = None,
    rule: str = "bilinear",
) -> np.ndarray:
    """Discrete kernel K_k = Re(C~ lam_bar^k b_bar) for k = 0..L-1, shape (L, M, U).

    Built by iterated multiplication with lam_bar (stable for |lam_bar| < 1).
    The feedthrough d is not included; convolution adds d * u at lag 0.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    lam_bar, b_bar = _discretize(ssm, rate, rule)
    c = _masked_c(ssm, rate, bandlimit, bidir=False)
    out = np.empty((length, c.shape[0], b_bar.shape[1]), dtype=np.float64)
    cur = b_bar.copy()
    for k in range(length):
        out[k] = (c @ cur).real
        cur = cur * lam_bar[:, None]
    return out


def apply_convolutional(
    ssm,
    u,
    rate: float = 1.0,
    bandlimit: BandlimitConfig | None = None,
    rule: str = "bilinear",
) -> np.ndarray:
    """Convolutional (zero initial state) evaluation; equals apply_recurrent(prev=0)."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2:
        raise ValueError("apply_convolutional expects u of shape (L, H)")
    if u.shape[1] != ssm.width:
        raise ValueError(f"u has {u.shape[1]} channels, system width is {ssm.width}")
    kernel = materialize_kernel(ssm, u.shape[0], rate=rate, bandlimit=bandlimit, rule=rule)
    h = u.shape[1]
    y = np.zeros_like(u)
    for m in range(kernel.shape[1]):
        for cch in range(h):
            y[:, m] += fft_convolve(u[:, cch], kernel[:, m, cch])
    return y + ssm.d * u
