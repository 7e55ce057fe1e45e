"""Rate functions measuring distributional change along the forward process.

Three estimators are provided, all returning a RateTable on a decreasing
alpha simulation grid (stored in increasing order):

* ``compute_v_fid``  — Frechet distance between the Gaussian moment fits of
  consecutive diffused marginals, divided by the alpha step.
* ``compute_v_x``    — square root of the finite-difference derivative of
  the expected squared change of the data prediction along the chain.
* ``compute_v_eps``  — the same pipeline on noise predictions.
* ``compute_v_klub`` — the data-prediction rate reweighted pointwise by
  sqrt(alpha) / (sqrt(2) sigma^2), the KL-upper-bound weighting of reverse
  SDE discretization error.

Every table carries per-knot Monte Carlo standard errors in ``stderr`` so
tolerances can be stated in standard errors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .diffusion import PointDataset, iter_forward, noise_from_data
from .schedule import RateTable
from .util import make_rng

# Sub-batch count used for moment-based standard errors.
N_MOMENT_BATCHES = 8


@dataclass(frozen=True)
class MomentTrajectory:
    """Per-step mean vectors and covariance matrices of diffused data."""

    alphas: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        alphas = np.array(self.alphas, dtype=float)
        means = np.array(self.means, dtype=float)
        covs = np.array(self.covs, dtype=float)
        steps = alphas.size
        if means.shape[0] != steps or covs.shape[0] != steps:
            raise ValueError("moment arrays must align with the alpha grid")
        if covs.shape[1:] != (means.shape[1], means.shape[1]):
            raise ValueError("covariances must be square in the feature dimension")
        asym = np.max(np.abs(covs - np.swapaxes(covs, 1, 2)))
        if asym > 1e-8:
            raise ValueError("covariances must be symmetric")
        for arr in (alphas, means, covs):
            arr.setflags(write=False)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)


@dataclass(frozen=True)
class VxConfig:
    """Simulation settings for the prediction-based rate estimators."""

    steps: int = 1000
    n_samples: int = 10_000
    alpha_start: float = 1.0
    alpha_end: float = 1e-4

    def __post_init__(self):
        if self.steps < 2:
            raise ValueError("steps must be at least 2")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if not 0.0 < self.alpha_end < self.alpha_start <= 1.0:
            raise ValueError("need 0 < alpha_end < alpha_start <= 1")

    @property
    def delta_alpha(self) -> float:
        return (self.alpha_start - self.alpha_end) / self.steps

    def grid(self) -> np.ndarray:
        """Equally spaced decreasing alpha grid with steps+1 knots."""
        return np.linspace(self.alpha_start, self.alpha_end, self.steps + 1)


def _psd_sqrt_trace(mat: np.ndarray) -> float:
    eigvals = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    return float(np.sum(np.sqrt(np.clip(eigvals, 0.0, None))))


def frechet_distance(mu1, sigma1, mu2, sigma2) -> float:
    """Frechet distance between two Gaussians given their moments.

    |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)), with the matrix square
    root taken through the symmetric eigendecomposition of
    S1^(1/2) S2 S1^(1/2); negative eigenvalues are clamped at zero.
    """
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=float))
    sigma1 = np.atleast_2d(np.asarray(sigma1, dtype=float))
    sigma2 = np.atleast_2d(np.asarray(sigma2, dtype=float))
    for sig in (sigma1, sigma2):
        if np.max(np.abs(sig - sig.T)) > 1e-8:
            raise ValueError("covariance input is not symmetric")
    sigma1 = 0.5 * (sigma1 + sigma1.T)
    sigma2 = 0.5 * (sigma2 + sigma2.T)
    vals, vecs = np.linalg.eigh(sigma1)
    root1 = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    cross = _psd_sqrt_trace(root1 @ sigma2 @ root1)
    dist = float(np.sum((mu1 - mu2) ** 2) + np.trace(sigma1) + np.trace(sigma2) - 2.0 * cross)
    return max(dist, 0.0)


def _moments(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    return mu, cov


def moment_trajectory(
    dataset: PointDataset,
    alphas,
    n_samples: int,
    seed: int,
    feature_map=None,
) -> MomentTrajectory:
    """Simulate the forward chain and record per-step feature moments."""
    alphas = np.asarray(alphas, dtype=float)
    rng = make_rng(seed)
    means, covs = [], []
    for _, _, x in iter_forward(dataset, alphas, n_samples, rng):
        feats = feature_map(x) if feature_map is not None else x
        mu, cov = _moments(feats)
        means.append(mu)
        covs.append(cov)
    return MomentTrajectory(alphas, np.stack(means), np.stack(covs))


def compute_v_fid(
    dataset: PointDataset,
    alphas,
    n_samples: int,
    seed: int,
    feature_map=None,
) -> RateTable:
    """Moment-based rate: Frechet distance per unit alpha between steps.

    Simulates the forward chain once, fits Gaussian moments to every step
    (after the optional feature map; identity by default), and sets
    v_t = Frechet(step t, step t+1) / (alpha_t - alpha_{t+1}) with the last
    value copied from its neighbour.  Standard errors come from repeating
    the moment fit on disjoint sample sub-batches.
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.size < 2:
        raise ValueError("need at least 2 grid points")
    rng = make_rng(seed)
    steps = alphas.size
    means, covs = [None] * steps, [None] * steps
    batch_means, batch_covs = None, None
    batch_size = 0
    for t, _, x in iter_forward(dataset, alphas, n_samples, rng):
        feats = feature_map(x) if feature_map is not None else x
        dim = feats.shape[1]
        if t == 0:
            if n_samples < dim + 2:
                raise ValueError(f"need at least dim + 2 = {dim + 2} samples for full-rank moments")
            batch_size = n_samples // N_MOMENT_BATCHES
            if batch_size >= dim + 2:
                batch_means = np.empty((steps, N_MOMENT_BATCHES, dim))
                batch_covs = np.empty((steps, N_MOMENT_BATCHES, dim, dim))
        means[t], covs[t] = _moments(feats)
        if batch_means is not None:
            for b in range(N_MOMENT_BATCHES):
                chunk = feats[b * batch_size : (b + 1) * batch_size]
                batch_means[t, b], batch_covs[t, b] = _moments(chunk)
    gaps = -np.diff(alphas)
    values = np.empty(steps)
    for t in range(steps - 1):
        values[t] = frechet_distance(means[t], covs[t], means[t + 1], covs[t + 1]) / gaps[t]
    values[-1] = values[-2]
    stderr = np.zeros(steps)
    if batch_means is not None:
        batch_v = np.empty((steps - 1, N_MOMENT_BATCHES))
        for t in range(steps - 1):
            for b in range(N_MOMENT_BATCHES):
                batch_v[t, b] = (
                    frechet_distance(
                        batch_means[t, b], batch_covs[t, b], batch_means[t + 1, b], batch_covs[t + 1, b]
                    )
                    / gaps[t]
                )
        stderr[:-1] = batch_v.std(axis=1, ddof=1) / np.sqrt(N_MOMENT_BATCHES)
        stderr[-1] = stderr[-2]
    return RateTable(alphas[::-1], values[::-1], stderr=stderr[::-1])


def power_grid(steps: int = 1000, power: float = 2.0, alpha_max: float = 1.0, alpha_min: float = 0.0) -> np.ndarray:
    """Decreasing grid alpha_t = alpha_max - (alpha_max - alpha_min) (t/T)^p.

    p > 1 concentrates knots near alpha_max, where moment-based rates need
    the most resolution.
    """
    t = np.arange(steps + 1) / steps
    return alpha_max - (alpha_max - alpha_min) * t**power


def _prediction_rate(dataset, predictor, config: VxConfig, seed: int, use_noise: bool) -> RateTable:
    alphas = config.grid()
    delta = config.delta_alpha
    n = config.n_samples
    rng = make_rng(seed)
    steps = config.steps
    d2_mean = np.full(steps + 1, np.nan)
    d2_sqmean = np.full(steps + 1, np.nan)
    prev = None
    for t, alpha_t, x in iter_forward(dataset, alphas, n, rng):
        if t == 0 and alpha_t >= 1.0:
            pred = x.copy()  # clean data is its own prediction at alpha = 1
        else:
            pred = predictor.evaluate(x, alpha_t)
        if use_noise:
            cur = None if alpha_t >= 1.0 else noise_from_data(x, alpha_t, pred)
        else:
            cur = pred
        if prev is not None and cur is not None:
            sq = ((cur - prev) ** 2).sum(axis=-1)
            d2_mean[t] = sq.mean()
            d2_sqmean[t] = (sq * sq).mean()
        prev = cur
    valid = ~np.isnan(d2_mean)
    values = np.zeros(steps + 1)
    stderr = np.zeros(steps + 1)
    values[valid] = np.sqrt(d2_mean[valid] / delta)
    if n > 1:
        var = np.clip(d2_sqmean[valid] - d2_mean[valid] ** 2, 0.0, None) * n / (n - 1)
        se_d2 = np.sqrt(var / n)
        pos = values[valid] > 0
        se_v = np.zeros(se_d2.size)
        se_v[pos] = se_d2[pos] / (2.0 * np.sqrt(d2_mean[valid][pos] * delta))
        stderr[valid] = se_v
    first = int(np.argmax(valid))
    values[:first] = values[first]
    stderr[:first] = stderr[first]
    return RateTable(alphas[::-1], values[::-1], stderr=stderr[::-1])


def compute_v_x(dataset: PointDataset, predictor, config: VxConfig = VxConfig(), seed: int = 0) -> RateTable:
    """Rate of change of the data prediction along the forward chain.

    Along each of S simulated trajectories the squared change of the data
    prediction between adjacent steps is accumulated;
    v_t = sqrt(mean_sq_change_t / delta_alpha), with v_0 copied from v_1.
    """
    return _prediction_rate(dataset, predictor, config, seed, use_noise=False)


def compute_v_eps(dataset: PointDataset, predictor, config: VxConfig = VxConfig(), seed: int = 0) -> RateTable:
    """Identical pipeline to compute_v_x but on noise predictions.

    When the chain starts at alpha = 1 the noise prediction is undefined at
    the first step (sigma = 0), so accumulation starts one step later and
    the leading knots are filled with the first defined value.
    """
    return _prediction_rate(dataset, predictor, config, seed, use_noise=True)


def klub_weight(alpha):
    """sqrt(alpha) / (sqrt(2) sigma^2): the reverse-SDE discretization weight."""
    alpha = np.asarray(alpha, dtype=float)
    return np.sqrt(alpha) / (np.sqrt(2.0) * (1.0 - alpha * alpha))


def compute_v_klub(dataset: PointDataset, predictor, config: VxConfig = VxConfig(), seed: int = 0) -> RateTable:
    """Data-prediction rate with the KL-upper-bound weight applied pointwise.

    The weight diverges as alpha -> 1, so any alpha = 1 knot is dropped and
    the table ends at the grid's largest alpha below 1.
    """
    base = compute_v_x(dataset, predictor, config, seed)
    keep = base.alphas < 1.0
    if not np.all(keep):
        warnings.warn(
            "dropping the alpha = 1 knot: the sqrt(alpha)/(sqrt(2) sigma^2) weight diverges there",
            stacklevel=2,
        )
    alphas = base.alphas[keep]
    weight = klub_weight(alphas)
    stderr = base.stderr[keep] * weight if base.stderr is not None else None
    return RateTable(alphas, base.values[keep] * weight, stderr=stderr)
