"""Reference noise schedules and conversions between noise parameterizations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .schedule import NoiseSchedule

# The log-tan form of the shifted cosine diverges at t = 0 and t = 1.
T_CLAMP = 1e-9


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def linear_schedule(n_steps: int = 1000, beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    """Per-step decay schedule built from a linear beta ramp.

    alpha_0 = 1 and alpha_i = sqrt(1 - beta_i) * alpha_{i-1} with beta_i
    linearly spaced over i = 1..n_steps; knots sit at t = i/n_steps and are
    linearly interpolated between.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    betas = np.linspace(beta_min, beta_max, n_steps)
    alphas = np.concatenate(([1.0], np.cumprod(np.sqrt(1.0 - betas))))
    return NoiseSchedule(np.arange(n_steps + 1) / n_steps, alphas)


def shifted_cosine_schedule(
    d: int,
    n_knots: int = 1001,
    sampling: bool = False,
    alpha_min: float = 0.01,
    alpha_max: float = 1.0,
) -> NoiseSchedule:
    """Cosine schedule in log-SNR with resolution shift 2*log(64/d).

    alpha(t) = sqrt(sigmoid(lambda(t))) with
    lambda(t) = -2 log tan(pi t / 2) + 2 log(64 / d); t is clamped away from
    the endpoint singularities.  With ``sampling=True`` the curve is
    affinely rescaled in alpha onto [alpha_min, alpha_max].
    """
    if d < 1:
        raise ValueError("d must be a positive integer")
    t = np.linspace(0.0, 1.0, n_knots)
    clamped = np.clip(t, T_CLAMP, 1.0 - T_CLAMP)
    log_snr = -2.0 * np.log(np.tan(0.5 * np.pi * clamped)) + 2.0 * math.log(64.0 / d)
    alpha = np.sqrt(_sigmoid(log_snr))
    if sampling:
        alpha = alpha_min + (alpha_max - alpha_min) * alpha
    return NoiseSchedule(t, alpha)


@dataclass(frozen=True)
class EdmParams:
    """Bounds and warp exponent of the rho-interpolated sigma ladder."""

    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0

    def __post_init__(self):
        if self.sigma_min <= 0.0 or self.sigma_max <= 0.0:
            raise ValueError("sigma bounds must be positive")
        if self.sigma_min >= self.sigma_max:
            raise ValueError("sigma_min must be smaller than sigma_max")
        if self.rho <= 0.0:
            raise ValueError("rho must be positive")


def edm_schedule(params: EdmParams, n_steps: int) -> np.ndarray:
    """Discrete alpha ladder for the rho-warped sigma grid (sampling only).

    sigma(t) = (sigma_max^(1/rho) + (sigma_min^(1/rho) - sigma_max^(1/rho))
    * (1 - t))^rho at t = i/n_steps, mapped through alpha_from_edm_sigma.
    The first entry is overridden to exactly 1 (clean-data endpoint).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    t = np.arange(n_steps + 1) / n_steps
    inv_rho = 1.0 / params.rho
    ramp = params.sigma_max**inv_rho + (params.sigma_min**inv_rho - params.sigma_max**inv_rho) * (1.0 - t)
    alphas = alpha_from_edm_sigma(ramp**params.rho)
    alphas[0] = 1.0
    return alphas


def alpha_from_edm_sigma(sigma):
    """Map a variance-exploding noise level to the VP alpha with equal log-SNR.

    log(alpha^2 / (1 - alpha^2)) = -2 log sigma  =>  alpha = 1/sqrt(1 + sigma^2).
    """
    arr = np.asarray(sigma, dtype=float)
    if np.any(arr <= 0.0):
        raise ValueError("sigma must be positive")
    out = 1.0 / np.sqrt(1.0 + arr * arr)
    return float(out) if out.ndim == 0 else out


def sigma_from_alpha(alpha):
    """Inverse of alpha_from_edm_sigma: sigma = sqrt(1 - alpha^2) / alpha."""
    arr = np.asarray(alpha, dtype=float)
    if np.any((arr <= 0.0) | (arr >= 1.0)):
        raise ValueError("alpha must lie strictly inside (0, 1)")
    out = np.sqrt(1.0 - arr * arr) / arr
    return float(out) if out.ndim == 0 else out
