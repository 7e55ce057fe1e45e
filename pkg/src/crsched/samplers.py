"""Reverse-process samplers driven by a data predictor.

Both steppers consume an increasing alpha ladder (denoising direction) and
a predictor with ``evaluate(x, alpha)``.  All state is carried explicitly,
so trajectories can be batched along the leading axis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .diffusion import PointDataset, PosteriorMeanPredictor
from .util import make_rng

SAMPLER_KINDS = ("ddim", "dpmpp2m")

# Pure noise is the starting state of the reverse pass; above this alpha it
# stops being a reasonable proxy for the diffused marginal.
START_ALPHA_WARN = 0.05


@dataclass(frozen=True)
class SamplerSpec:
    """Sampler kind, stochasticity, and the alpha ladder of the reverse pass.

    The ladder is normalized to a sorted, deduplicated increasing array, so
    specs built from permuted or repeated grids are identical.
    """

    kind: str
    alphas: np.ndarray
    eta: float = 0.0

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        alphas = np.unique(np.asarray(self.alphas, dtype=float))
        if alphas.size < 2:
            raise ValueError("need at least 2 distinct alpha levels")
        if alphas[0] < 0.0 or alphas[-1] > 1.0:
            raise ValueError("alphas must lie within [0, 1]")
        if alphas[0] > START_ALPHA_WARN:
            warnings.warn(
                f"reverse pass starts at alpha = {alphas[0]:.4g}; pure noise is a poor "
                "proxy for the diffused marginal above alpha = 0.05",
                stacklevel=2,
            )
        alphas.setflags(write=False)
        object.__setattr__(self, "alphas", alphas)

    @property
    def nfe(self) -> int:
        return self.alphas.size - 1


def _check_step(alpha_t: float, alpha_s: float):
    if alpha_s <= alpha_t:
        raise ValueError("denoising step requires alpha_s > alpha_t")
    if alpha_t >= 1.0:
        raise ValueError("alpha_t must be below 1")


def ddim_step(x_t, alpha_t: float, alpha_s: float, predictor, eta: float = 0.0, rng=None):
    """One (stochastic) DDIM update from alpha_t up to alpha_s.

    x_s = alpha_s x_hat + sqrt(sigma_s^2 - churn^2) eps_hat + churn z with
    churn = eta (sigma_s / sigma_t) sqrt(1 - alpha_t^2 / alpha_s^2); eta = 0
    is the deterministic map and consumes no randomness.  At alpha_s = 1 the
    update collapses to the prediction itself.
    """
    _check_step(alpha_t, alpha_s)
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    x_t = np.asarray(x_t, dtype=float)
    sigma_t = math.sqrt(1.0 - alpha_t * alpha_t)
    sigma_s = math.sqrt(max(1.0 - alpha_s * alpha_s, 0.0))
    x_hat = predictor.evaluate(x_t, alpha_t)
    if sigma_s == 0.0:
        return alpha_s * x_hat
    eps_hat = (x_t - alpha_t * x_hat) / sigma_t
    churn = eta * (sigma_s / sigma_t) * math.sqrt(1.0 - (alpha_t / alpha_s) ** 2)
    assert churn <= sigma_s * (1.0 + 1e-12), "churn exceeded the step noise scale"
    x_s = alpha_s * x_hat + math.sqrt(max(sigma_s**2 - churn**2, 0.0)) * eps_hat
    if eta > 0.0 and churn > 0.0:
        if rng is None:
            raise ValueError("stochastic step (eta > 0) needs an rng")
        x_s = x_s + churn * rng.standard_normal(x_s.shape)
    return x_s


def dpmpp2m_step(x_t, alpha_t: float, alpha_s: float, predictor, previous=None):
    """One multistep exponential-integrator update in log-SNR time.

    The first call (and the final step to alpha = 1, where log-SNR is
    infinite) uses the first-order update
    x_s = (sigma_s / sigma_t) x_t + alpha_s (1 - e^(-h)) x_hat; later calls
    replace x_hat by the two-point extrapolation against the previous
    prediction.  Returns (x_s, carry) where carry feeds the next call.
    """
    _check_step(alpha_t, alpha_s)
    x_t = np.asarray(x_t, dtype=float)
    sigma_t = math.sqrt(1.0 - alpha_t * alpha_t)
    sigma_s = math.sqrt(max(1.0 - alpha_s * alpha_s, 0.0))
    x_hat = predictor.evaluate(x_t, alpha_t)
    lam_t = math.log(alpha_t / sigma_t)
    if sigma_s == 0.0:
        return x_hat, (x_hat, lam_t)
    lam_s = math.log(alpha_s / sigma_s)
    h = lam_s - lam_t
    if h <= 0.0:
        raise ValueError("log-SNR must increase along the denoising pass")
    target = x_hat
    if previous is not None:
        x_hat_prev, lam_prev = previous
        h_prev = lam_t - lam_prev
        if h_prev <= 0.0:
            raise ValueError("carried log-SNR is not monotone")
        r = h_prev / h
        target = (1.0 + 0.5 / r) * x_hat - (0.5 / r) * x_hat_prev
    x_s = (sigma_s / sigma_t) * x_t + alpha_s * (-np.expm1(-h)) * target
    return x_s, (x_hat, lam_t)


def sample(dataset_or_predictor, spec: SamplerSpec, n_samples: int, seed) -> np.ndarray:
    """Run the reverse pass from pure noise; returns (n_samples, d) samples.

    Initial states are standard normal draws treated as the marginal at the
    ladder's smallest alpha.  Deterministic given the seed.
    """
    if isinstance(dataset_or_predictor, PointDataset):
        predictor = PosteriorMeanPredictor(dataset_or_predictor)
    else:
        predictor = dataset_or_predictor
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = make_rng(seed)
    x = rng.standard_normal((n_samples, predictor.dim))
    alphas = spec.alphas
    carry = None
    for i in range(alphas.size - 1):
        if spec.kind == "ddim":
            x = ddim_step(x, alphas[i], alphas[i + 1], predictor, spec.eta, rng)
        else:
            x, carry = dpmpp2m_step(x, alphas[i], alphas[i + 1], predictor, carry)
    return x
