"""Online training-schedule adaptation from binned probe statistics.

During a training loop, squared changes of the data prediction over a small
alpha offset are accumulated into evenly spaced alpha bins with an
exponential moving average.  The binned values define a rate table from
which the training schedule is re-solved at a fixed cadence.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from .diffusion import DiffusionState, PointDataset, noise_from_data
from .schedule import NoiseSchedule, RateTable, solve_schedule

logger = logging.getLogger(__name__)

D2_INIT = 1e-6


@dataclass
class BinnedRateEstimator:
    """EMA-tracked squared prediction changes over evenly spaced alpha bins.

    Bins cover [alpha_threshold, alpha_max]; probes below the threshold are
    skipped by the caller (the rate is extended flat below it).  The
    estimator is a single-writer state machine: updates mutate it in place.
    """

    n_bins: int = 100
    decay: float = 0.995
    alpha_max: float = 1.0
    alpha_min: float = 0.0
    alpha_threshold: float = 0.01
    probe_delta: float = 1e-3
    xi: float = 1.0
    d2: np.ndarray | None = None
    visits: np.ndarray | None = None

    def __post_init__(self):
        if self.n_bins < 1:
            raise ValueError("need at least 1 bin")
        if not 0.0 <= self.decay < 1.0:
            raise ValueError("decay must lie in [0, 1)")
        if not 0.0 <= self.alpha_min <= self.alpha_threshold < self.alpha_max <= 1.0:
            raise ValueError("need alpha_min <= alpha_threshold < alpha_max within [0, 1]")
        if self.probe_delta <= 0.0:
            raise ValueError("probe_delta must be positive")
        if self.xi <= 0.0:
            raise ValueError("xi must be positive")
        if self.d2 is None:
            self.d2 = np.full(self.n_bins, D2_INIT)
        else:
            self.d2 = np.asarray(self.d2, dtype=float)
            if self.d2.shape != (self.n_bins,) or np.any(self.d2 < 0):
                raise ValueError("d2 must hold one nonnegative value per bin")
        if self.visits is None:
            self.visits = np.zeros(self.n_bins, dtype=int)
        else:
            self.visits = np.asarray(self.visits, dtype=int)
            if self.visits.shape != (self.n_bins,) or np.any(self.visits < 0):
                raise ValueError("visits must hold one nonnegative count per bin")

    def bin_edges(self) -> np.ndarray:
        return self.alpha_threshold + (self.alpha_max - self.alpha_threshold) * np.arange(self.n_bins + 1) / self.n_bins

    def bin_index(self, alpha: float) -> int:
        """Bin of alpha in [alpha_threshold, alpha_max]; the top edge is clamped in."""
        if alpha < self.alpha_threshold:
            raise ValueError("alpha below the estimation threshold; skip the update")
        if alpha > self.alpha_max:
            raise ValueError("alpha above alpha_max")
        frac = (alpha - self.alpha_threshold) / (self.alpha_max - self.alpha_threshold)
        return min(int(math.floor(frac * self.n_bins)), self.n_bins - 1)

    def ema_update(self, b: int, value: float) -> "BinnedRateEstimator":
        if value < 0.0:
            raise ValueError("squared differences cannot be negative")
        self.d2[b] = self.decay * self.d2[b] + (1.0 - self.decay) * value
        self.visits[b] += 1
        return self

    def debiased_d2(self) -> np.ndarray:
        """Per-bin estimates with the initialization weight divided out.

        After k updates the EMA equals decay^k * init + (1 - decay^k) *
        (weighted mean), so sparsely visited bins are dragged toward the
        init value; removing that component makes the readout unbiased at
        any visit count.  Untouched bins keep the raw init value.
        """
        out = self.d2.copy()
        touched = self.visits > 0
        shrink = self.decay ** self.visits[touched]
        out[touched] = (self.d2[touched] - shrink * D2_INIT) / (1.0 - shrink)
        return np.clip(out, 0.0, None)

    def rate_from_bins(self) -> RateTable:
        """Rate table v_b = sqrt(debiased d2_b / probe_delta) on the bin edges.

        Bin b's value sits on its lower edge, the top edge repeats the last
        bin, and the table extends flat from the threshold down to
        alpha_min.
        """
        v = np.sqrt(self.debiased_d2() / self.probe_delta)
        alphas = self.bin_edges()
        values = np.concatenate([v, [v[-1]]])
        if self.alpha_min < self.alpha_threshold:
            alphas = np.concatenate([[self.alpha_min], alphas])
            values = np.concatenate([[v[0]], values])
        return RateTable(alphas, values)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_bins": self.n_bins,
                "decay": self.decay,
                "alpha_max": self.alpha_max,
                "alpha_min": self.alpha_min,
                "alpha_threshold": self.alpha_threshold,
                "probe_delta": self.probe_delta,
                "xi": self.xi,
                "d2": self.d2.tolist(),
                "visits": self.visits.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "BinnedRateEstimator":
        return cls(**json.loads(text))


def probe_pair(state: DiffusionState, predictor, delta_alpha: float, rng: np.random.Generator) -> float:
    """Squared change of the data prediction over one alpha offset.

    Perturbs the state to alpha' = alpha - delta_alpha with the exact
    forward transition and evaluates the predictor at both levels.  The
    probe is gradient-free bookkeeping; it never feeds the optimizer.
    """
    alpha = state.alpha
    alpha_next = alpha - delta_alpha
    if alpha_next <= 0.0:
        raise ValueError("probe would step below alpha = 0")
    beta = alpha_next / alpha
    delta = math.sqrt(max(1.0 - beta * beta, 0.0))
    x_next = beta * state.x + delta * rng.standard_normal(state.x.shape)
    pred = predictor.evaluate(state.x, alpha)
    pred_next = predictor.evaluate(x_next, alpha_next)
    return float(((pred - pred_next) ** 2).sum())


@dataclass(frozen=True)
class TrainingLoopConfig:
    """Cadence of the schedule adaptation inside the training loop."""

    warmup_steps: int = 1000
    refresh_interval: int = 100
    schedule_knots: int = 1001


def training_step(
    dataset: PointDataset,
    schedule: NoiseSchedule,
    predictor,
    estimator: BinnedRateEstimator,
    step_index: int,
    rng: np.random.Generator,
    loop: TrainingLoopConfig = TrainingLoopConfig(),
):
    """One simplified training step plus schedule bookkeeping.

    Draws t uniformly, corrupts a data point to x = alpha(t) x0 + sigma eps,
    and scores the predictor's implied noise estimate with the half squared
    error loss.  From ``warmup_steps`` on, each step also probes the
    prediction change at its alpha (when above the estimation threshold),
    and every ``refresh_interval`` steps the schedule is re-solved from the
    binned rate.  Returns (loss, estimator, schedule); the schedule object
    is new only on refresh steps.
    """
    t = rng.uniform()
    alpha = float(schedule.alpha_at(t))
    alpha = min(alpha, 1.0 - 1e-12)  # t = 0 would put sigma at exactly 0
    sigma = math.sqrt(1.0 - alpha * alpha)
    x0 = dataset.points[rng.integers(dataset.n)]
    eps = rng.standard_normal(x0.shape)
    x = alpha * x0 + sigma * eps
    eps_hat = noise_from_data(x, alpha, predictor.evaluate(x, alpha))
    loss = 0.5 * float(((eps_hat - eps) ** 2).sum())

    if step_index >= loop.warmup_steps:
        if alpha >= estimator.alpha_threshold:
            value = probe_pair(DiffusionState(x, alpha), predictor, estimator.probe_delta, rng)
            estimator.ema_update(estimator.bin_index(alpha), value)
        if step_index % loop.refresh_interval == 0:
            schedule = solve_schedule(
                estimator.rate_from_bins(),
                estimator.xi,
                estimator.alpha_max,
                estimator.alpha_min,
                loop.schedule_knots,
            )
    return loss, estimator, schedule


def run_training(
    dataset: PointDataset,
    predictor,
    n_steps: int,
    seed: int,
    estimator: BinnedRateEstimator | None = None,
    loop: TrainingLoopConfig = TrainingLoopConfig(),
    initial_schedule: NoiseSchedule | None = None,
    out_dir: str | None = None,
):
    """Drive the training loop with a frozen predictor.

    Starts from the linear ramp between the estimator bounds unless an
    initial schedule is given.  Returns (final schedule, estimator,
    refresh history) where the history holds (step, schedule) pairs; with
    ``out_dir`` each refreshed schedule is also written to CSV and the
    event logged as (step, path).
    """
    from .util import make_rng

    estimator = estimator if estimator is not None else BinnedRateEstimator()
    if initial_schedule is None:
        initial_schedule = NoiseSchedule(
            [0.0, 1.0], [estimator.alpha_max, estimator.alpha_min]
        )
    schedule = initial_schedule
    rng = make_rng(seed)
    history = []
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    for step in range(n_steps):
        _, estimator, new_schedule = training_step(
            dataset, schedule, predictor, estimator, step, rng, loop
        )
        if new_schedule is not schedule:
            history.append((step, new_schedule))
            if out_dir is not None:
                path = os.path.join(out_dir, f"schedule_{step:07d}.csv")
                with open(path, "w") as fh:
                    fh.write(new_schedule.to_csv())
                logger.info("schedule refresh: step=%d path=%s", step, path)
        schedule = new_schedule
    return schedule, estimator, history
