"""Desk-scale diffusion over empirical point datasets.

The data prior is a finite set of points, so every diffused quantity has a
closed form: the diffused density is an isotropic Gaussian mixture, and the
exact posterior mean of the clean data given a noisy observation is a
softmax-weighted average of the points.  That analytic predictor stands in
for a trained network throughout the package.

A predictor is any object with an ``evaluate(x, alpha) -> x_hat`` method
(batched over leading axes) and a ``dim`` attribute.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .util import make_rng

# Below this alpha the posterior weights are numerically uniform; the
# alpha -> 0 limit (dataset mean) is returned directly.
ALPHA_FLOOR = 1e-6

_TOY3_POINTS = (-1.0, 0.2, 1.0)


@dataclass(frozen=True)
class PointDataset:
    """N points in d-dimensional space defining the empirical data prior."""

    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("points must form a nonempty (n, d) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        labels = self.labels
        if labels is not None:
            labels = np.array(labels, dtype=int)
            if labels.shape != (pts.shape[0],):
                raise ValueError("labels must be one integer per point")
            labels.setflags(write=False)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.points.mean(axis=0)

    @property
    def cov(self) -> np.ndarray:
        """Population covariance of the point mixture (ddof=0)."""
        centered = self.points - self.mean
        return centered.T @ centered / self.n

    @classmethod
    def from_csv(cls, path) -> "PointDataset":
        pts = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(pts)

    @classmethod
    def builtin(cls, name: str) -> "PointDataset":
        """Named datasets: "toy3", "two-point", "grid-mixture:<k>"."""
        if name == "toy3":
            return cls(np.array(_TOY3_POINTS))
        if name == "two-point":
            return cls(np.array([-1.0, 1.0]))
        match = re.fullmatch(r"grid-mixture:(\d+)", name)
        if match:
            k = int(match.group(1))
            if k < 1:
                raise ValueError("grid-mixture needs k >= 1")
            axis = np.linspace(-1.0, 1.0, k) if k > 1 else np.zeros(1)
            gx, gy = np.meshgrid(axis, axis)
            return cls(np.column_stack([gx.ravel(), gy.ravel()]))
        raise ValueError(f"unknown builtin dataset {name!r}")


@dataclass(frozen=True)
class DiffusionState:
    """A point in data space together with its noise level."""

    x: np.ndarray
    alpha: float

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("state must be finite")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def sigma(self) -> float:
        return float(np.sqrt(max(1.0 - self.alpha**2, 0.0)))


def _as_batch(x, dim: int) -> tuple[np.ndarray, tuple]:
    """Reshape x to (m, dim); also return the leading batch shape (() if single)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if dim != 1:
            raise ValueError("scalar input only valid for 1-D data")
        return arr.reshape(1, 1), ()
    if arr.ndim == 1:
        if arr.shape[0] == dim:
            return arr.reshape(1, dim), ()
        if dim == 1:
            return arr.reshape(-1, 1), (arr.shape[0],)
        raise ValueError(f"cannot interpret shape {arr.shape} as points of dimension {dim}")
    if arr.shape[-1] != dim:
        raise ValueError(f"last axis must have size {dim}")
    return arr.reshape(-1, dim), arr.shape[:-1]


def log_diffused_density(dataset: PointDataset, alpha: float, x):
    """Log density of data diffused to level alpha.

    The density is the N-component Gaussian mixture with means alpha * p_n
    and isotropic variance 1 - alpha^2; evaluated with log-sum-exp.  x may
    be a single point or a batch with the batch axis leading.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1); the mixture degenerates at alpha = 1")
    batch, batch_shape = _as_batch(x, dataset.dim)
    var = 1.0 - alpha * alpha
    sq = ((batch[:, None, :] - alpha * dataset.points[None, :, :]) ** 2).sum(axis=-1)
    log_comp = -0.5 * sq / var - 0.5 * dataset.dim * np.log(2.0 * np.pi * var)
    peak = log_comp.max(axis=1, keepdims=True)
    out = peak[:, 0] + np.log(np.mean(np.exp(log_comp - peak), axis=1))
    return float(out[0]) if batch_shape == () else out.reshape(batch_shape)


def diffused_density(dataset: PointDataset, alpha: float, x):
    """Density of data diffused to level alpha; see log_diffused_density."""
    return np.exp(log_diffused_density(dataset, alpha, x))


def draw_base_points(dataset: PointDataset, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n_samples starting points by cycling a seeded permutation.

    Cycling keeps the draw balanced across dataset points when n_samples
    exceeds the dataset size, and truncates otherwise.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    perm = rng.permutation(dataset.n)
    reps = -(-n_samples // dataset.n)
    idx = np.tile(perm, reps)[:n_samples]
    return dataset.points[idx].copy()


def _validate_alpha_path(alphas: np.ndarray):
    if alphas.ndim != 1 or alphas.size < 1:
        raise ValueError("alphas must be a nonempty 1-D array")
    if alphas[0] > 1.0 or alphas[-1] < 0.0:
        raise ValueError("alphas must lie within [0, 1]")
    if alphas.size > 1 and np.any(np.diff(alphas) >= 0):
        raise ValueError("alphas must be strictly decreasing")


def iter_forward(dataset: PointDataset, alphas, n_samples: int, rng: np.random.Generator):
    """Walk the forward Markov chain, yielding (step, alpha_t, x_t) in turn.

    Step 0 holds the raw data points when alphas[0] == 1 and an exact draw
    from the diffused marginal otherwise.  Later steps apply the transition
    x_t = beta_t x_{t-1} + delta_t z with beta_t = alpha_t / alpha_{t-1} and
    delta_t = sqrt(1 - beta_t^2), so every step carries the exact marginal
    N(alpha_t x_0, (1 - alpha_t^2) I).

    Only one step is kept in memory; the yielded array is reused.
    """
    alphas = np.asarray(alphas, dtype=float)
    _validate_alpha_path(alphas)
    x = draw_base_points(dataset, n_samples, rng)
    if alphas[0] < 1.0:
        sigma0 = np.sqrt(1.0 - alphas[0] ** 2)
        x = alphas[0] * x + sigma0 * rng.standard_normal(x.shape)
    yield 0, float(alphas[0]), x
    for t in range(1, alphas.size):
        beta = alphas[t] / alphas[t - 1]
        delta = np.sqrt(max(1.0 - beta * beta, 0.0))
        x = beta * x + delta * rng.standard_normal(x.shape)
        yield t, float(alphas[t]), x


def simulate_forward(dataset: PointDataset, alphas, n_samples: int, seed: int) -> np.ndarray:
    """Simulate the forward chain; returns an array (len(alphas), n_samples, d)."""
    alphas = np.asarray(alphas, dtype=float)
    rng = make_rng(seed)
    out = np.empty((alphas.size, n_samples, dataset.dim))
    for t, _, x in iter_forward(dataset, alphas, n_samples, rng):
        out[t] = x
    return out


class PosteriorMeanPredictor:
    """Exact Bayes posterior mean E[x0 | x, alpha] for the empirical prior.

    Component weights are softmax(-|x - alpha p_n|^2 / (2 sigma^2)) over the
    dataset points.  Below ALPHA_FLOOR the weights are uniform (the
    alpha -> 0 limit is the dataset mean); at alpha = 1 the prediction
    collapses to the nearest data point.
    """

    def __init__(self, dataset: PointDataset):
        if dataset.n < 1:
            raise ValueError("empty dataset")
        self.dataset = dataset

    @property
    def dim(self) -> int:
        return self.dataset.dim

    def evaluate(self, x, alpha: float):
        pts = self.dataset.points
        batch, batch_shape = _as_batch(x, self.dim)
        if alpha <= ALPHA_FLOOR:
            out = np.broadcast_to(self.dataset.mean, batch.shape).copy()
        elif alpha >= 1.0:
            sq = ((batch[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
            out = pts[np.argmin(sq, axis=1)]
        else:
            var = 1.0 - alpha * alpha
            sq = ((batch[:, None, :] - alpha * pts[None, :, :]) ** 2).sum(axis=-1)
            logw = -0.5 * sq / var
            logw -= logw.max(axis=1, keepdims=True)
            weights = np.exp(logw)
            weights /= weights.sum(axis=1, keepdims=True)
            out = weights @ pts
        if np.asarray(x).ndim == 0:
            return float(out[0, 0])
        if batch_shape == ():
            return out[0]
        if np.asarray(x).ndim == 1 and self.dim == 1:
            return out.reshape(batch_shape)
        return out.reshape(batch_shape + (self.dim,))


def posterior_mean_predictor(dataset: PointDataset, x, alpha: float):
    """Functional form of PosteriorMeanPredictor.evaluate."""
    return PosteriorMeanPredictor(dataset).evaluate(x, alpha)


def noise_from_data(x, alpha: float, x_hat):
    """Noise prediction implied by a data prediction: (x - alpha x_hat) / sigma."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1); sigma vanishes at alpha = 1")
    sigma = np.sqrt(1.0 - alpha * alpha)
    return (np.asarray(x, dtype=float) - alpha * np.asarray(x_hat, dtype=float)) / sigma
