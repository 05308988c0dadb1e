"""Continuous-to-discrete maps for diagonal systems at a retargetable step size.

The per-state step is rate * exp(log_delta); the scalar rate is the deploy-time
multiplier (rate = f_train / f_deploy, so doubling the inference frequency
halves every step).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DiscretizationError(ValueError):
    pass


@dataclass
class DiscreteDiagSSM:
    """Discrete transition/input pair produced at a given rate multiplier."""

    lam_bar: np.ndarray  # (P,) complex128, |lam_bar| < 1 for stable systems
    b_bar: np.ndarray  # (P, U) complex128
    rate: float


def effective_step(log_delta, rate: float) -> np.ndarray:
    """Per-state step sizes rate * exp(log_delta)."""
    if rate <= 0.0:
        raise DiscretizationError("rate must be positive")
    return rate * np.exp(np.asarray(log_delta, dtype=np.float64))


def _check_step(step: np.ndarray) -> np.ndarray:
    step = np.asarray(step, dtype=np.float64)
    if np.any(step <= 0.0) or not np.all(np.isfinite(step)):
        raise DiscretizationError("step sizes must be positive and finite")
    return step


def bilinear(lam, b_tilde, step) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear (Tustin) rule: lam_bar = (1 + d/2 lam)/(1 - d/2 lam), b_bar = d/(1 - d/2 lam) B~."""
    lam = np.asarray(lam, dtype=np.complex128)
    b_tilde = np.asarray(b_tilde, dtype=np.complex128)
    step = _check_step(step)
    half = 0.5 * step * lam
    denom = 1.0 - half
    if np.any(np.abs(denom) < 1e-12):
        raise DiscretizationError("bilinear pole: 1 - (step/2) lam vanishes for some state")
    lam_bar = (1.0 + half) / denom
    b_bar = (step / denom)[:, None] * b_tilde
    return lam_bar, b_bar


def zoh(lam, b_tilde, step) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order hold: lam_bar = exp(lam d), b_bar = (lam_bar - 1)/lam B~ (limit d B~ at lam = 0)."""
    lam = np.asarray(lam, dtype=np.complex128)
    b_tilde = np.asarray(b_tilde, dtype=np.complex128)
    step = _check_step(step)
    lam_bar = np.exp(lam * step)
    factor = np.empty_like(lam_bar)
    nz = lam != 0.0
    factor[nz] = (lam_bar[nz] - 1.0) / lam[nz]
    factor[~nz] = np.broadcast_to(step, lam.shape)[~nz]
    b_bar = factor[:, None] * b_tilde
    return lam_bar, b_bar


_RULES = {"bilinear": bilinear, "zoh": zoh}


def discretize_ssm(ssm, rate: float = 1.0, rule: str = "bilinear") -> DiscreteDiagSSM:
    """Discretize a ContinuousDiagSSM at its effective per-state steps."""
    if rule not in _RULES:
        raise DiscretizationError(f"unknown discretization rule '{rule}'")
    step = effective_step(ssm.log_delta, rate)
    lam_bar, b_bar = _RULES[rule](ssm.lam, ssm.b_tilde, step)
    return DiscreteDiagSSM(lam_bar=lam_bar, b_bar=b_bar, rate=rate)
