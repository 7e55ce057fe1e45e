"""Schedule evaluation: sample-quality metrics, report assembly, sweeps.

Sample quality is measured against the exact data prior: in one dimension
by the exact 2-Wasserstein distance between order statistics, in higher
dimensions by the Frechet distance between Gaussian moment fits.  Both are
desk-scale substitutes for feature-space evaluation metrics and every
report header says so.
"""

from __future__ import annotations

import itertools
import os
import re
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .diffusion import PointDataset, PosteriorMeanPredictor, diffused_density
from .rates import frechet_distance
from .samplers import SamplerSpec, sample
from .schedule import MetricWeight, NoiseSchedule, RateTable, combine_rates, discretize, solve_schedule
from .util import config_hash
from .zoo import EdmParams, edm_schedule, linear_schedule, shifted_cosine_schedule

METRIC_PROTOCOL = (
    "exact 1-D 2-Wasserstein on order statistics (Frechet-on-moments for d > 1); "
    "a desk-scale substitute for feature-space sample metrics"
)

# Error bars for reported sample errors come from this many disjoint chunks.
N_ERROR_CHUNKS = 10


def wasserstein_1d(samples_a, samples_b) -> float:
    """Exact 2-Wasserstein distance between two 1-D empirical distributions.

    Equal-size inputs pair sorted order statistics directly; otherwise both
    empirical quantile functions are read at a common midpoint grid.
    """
    a = np.sort(np.asarray(samples_a, dtype=float).ravel())
    b = np.sort(np.asarray(samples_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample set")
    if a.size == b.size:
        return float(np.sqrt(np.mean((a - b) ** 2)))
    m = max(a.size, b.size)
    grid = (np.arange(m) + 0.5) / m
    qa = np.quantile(a, grid)
    qb = np.quantile(b, grid)
    return float(np.sqrt(np.mean((qa - qb) ** 2)))


def reference_samples(dataset: PointDataset, n: int) -> np.ndarray:
    """Deterministic size-n draw from the discrete prior's quantile function."""
    if dataset.dim != 1:
        raise ValueError("reference samples are defined for 1-D datasets")
    pts = np.sort(dataset.points[:, 0])
    idx = np.minimum((((np.arange(n) + 0.5) / n) * pts.size).astype(int), pts.size - 1)
    return pts[idx]


def sample_error(samples: np.ndarray, dataset: PointDataset) -> float:
    """Distance between generated samples and the exact data prior."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if dataset.dim == 1:
        return wasserstein_1d(samples[:, 0], reference_samples(dataset, samples.shape[0]))
    mu = samples.mean(axis=0)
    cov = np.atleast_2d(np.cov(samples, rowvar=False, ddof=1))
    return frechet_distance(mu, cov, dataset.mean, dataset.cov)


def sample_error_with_se(samples: np.ndarray, dataset: PointDataset) -> tuple[float, float]:
    """Point estimate plus a chunked Monte Carlo standard error."""
    err = sample_error(samples, dataset)
    n = samples.shape[0]
    chunk = n // N_ERROR_CHUNKS
    if chunk < 2:
        return err, 0.0
    errs = [
        sample_error(samples[i * chunk : (i + 1) * chunk], dataset) for i in range(N_ERROR_CHUNKS)
    ]
    return err, float(np.std(errs, ddof=1) / np.sqrt(N_ERROR_CHUNKS))


def resolve_dataset(spec: str) -> PointDataset:
    """Builtin name or CSV path (one point per row)."""
    try:
        return PointDataset.builtin(spec)
    except ValueError:
        if os.path.exists(spec):
            return PointDataset.from_csv(spec)
        raise ValueError(f"unknown dataset {spec!r}: not a builtin name or existing CSV path") from None


def parse_sampler(spec: str) -> tuple[str, float]:
    """Parse "ddim:<eta>" or "dpmpp2m" into (kind, eta)."""
    if spec == "dpmpp2m":
        return "dpmpp2m", 0.0
    match = re.fullmatch(r"ddim:([0-9.eE+-]+)", spec)
    if match:
        eta = float(match.group(1))
        if not 0.0 <= eta <= 1.0:
            raise ValueError("ddim eta must lie in [0, 1]")
        return "ddim", eta
    raise ValueError(f"unknown sampler {spec!r}; use 'ddim:<eta>' or 'dpmpp2m'")


def resolve_schedule(spec: str, sampling: bool = True) -> NoiseSchedule:
    """Resolve a continuous schedule from a zoo name or a schedule file.

    Names: "linear", "shifted-cosine:<d>", "uniform:<amax>,<amin>"; anything
    else is read as a schedule CSV/JSON path.  "edm:..." has no continuous
    form and is handled by resolve_sampling_alphas.
    """
    if spec == "linear":
        return linear_schedule()
    match = re.fullmatch(r"shifted-cosine:(\d+)", spec)
    if match:
        return shifted_cosine_schedule(int(match.group(1)), sampling=sampling)
    match = re.fullmatch(r"uniform:([0-9.eE+-]+),([0-9.eE+-]+)", spec)
    if match:
        amax, amin = float(match.group(1)), float(match.group(2))
        return NoiseSchedule([0.0, 1.0], [amax, amin])
    if spec.startswith("edm:"):
        raise ValueError("edm schedules are sampling-only; they resolve to discrete ladders")
    if os.path.exists(spec):
        with open(spec) as fh:
            text = fh.read()
        if spec.endswith(".json"):
            return NoiseSchedule.from_json(text)
        return NoiseSchedule.from_csv(text)
    raise ValueError(f"unknown schedule {spec!r}: not a zoo name or existing file")


def resolve_sampling_alphas(spec: str, nfe: int) -> np.ndarray:
    """Discrete decreasing alpha ladder with nfe + 1 entries for a sampler."""
    if nfe < 1:
        raise ValueError("nfe must be at least 1")
    match = re.fullmatch(r"edm:([0-9.eE+-]+),([0-9.eE+-]+),([0-9.eE+-]+)", spec)
    if match:
        params = EdmParams(float(match.group(1)), float(match.group(2)), float(match.group(3)))
        return edm_schedule(params, nfe)
    return discretize(resolve_schedule(spec, sampling=True), nfe)


@dataclass(frozen=True)
class ExperimentConfig:
    """One evaluation run: dataset, schedules, sampler, NFE grid."""

    dataset: str
    schedules: tuple
    nfes: tuple
    sampler: str = "ddim:0"
    n_samples: int = 10_000
    seed: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        if not self.schedules:
            raise ValueError("need at least one schedule")
        if not self.nfes or any(int(n) < 1 for n in self.nfes):
            raise ValueError("NFE values must be >= 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        object.__setattr__(self, "schedules", tuple(self.schedules))
        object.__setattr__(self, "nfes", tuple(int(n) for n in self.nfes))
        parse_sampler(self.sampler)

    @classmethod
    def from_dict(cls, payload: dict, overrides: dict | None = None) -> "ExperimentConfig":
        merged = dict(payload)
        for key, value in (overrides or {}).items():
            if value is not None:
                merged[key] = value
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(merged) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**merged)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "schedules": list(self.schedules),
            "nfes": list(self.nfes),
            "sampler": self.sampler,
            "n_samples": self.n_samples,
            "seed": self.seed,
        }


def provenance(config_payload: dict, seed: int) -> dict:
    return {
        "protocol": METRIC_PROTOCOL,
        "config_hash": config_hash(config_payload),
        "seed": seed,
        "code_version": __version__,
    }


def run_evaluation(config: ExperimentConfig) -> dict:
    """Evaluate every (schedule, NFE) cell; returns the report dict.

    Cells are seeded independently from (config seed, cell index), so the
    report is reproducible and any subset of cells can be recomputed.
    """
    dataset = resolve_dataset(config.dataset)
    kind, eta = parse_sampler(config.sampler)
    predictor = PosteriorMeanPredictor(dataset)
    rows = []
    cell = 0
    for sched_name in config.schedules:
        for nfe in config.nfes:
            ladder = resolve_sampling_alphas(sched_name, nfe)
            spec = SamplerSpec(kind, ladder, eta)
            samples = sample(predictor, spec, config.n_samples, (config.seed, cell))
            err, se = sample_error_with_se(samples, dataset)
            rows.append(
                {
                    "schedule": sched_name,
                    "sampler": config.sampler,
                    "nfe": nfe,
                    "n_samples": config.n_samples,
                    "cell_seed": f"{config.seed}/{cell}",
                    "error": err,
                    "error_se": se,
                }
            )
            cell += 1
    report = provenance(config.to_dict(), config.seed)
    report["rows"] = rows
    return report


def report_to_csv(report: dict) -> str:
    header = [
        f"# protocol: {report['protocol']}",
        f"# config_hash: {report['config_hash']}",
        f"# seed: {report['seed']}",
        f"# code_version: {report['code_version']}",
    ]
    rows = report["rows"]
    if not rows:
        return "\n".join(header) + "\n"
    keys = list(rows[0].keys())
    lines = header + [",".join(keys)]
    for row in rows:
        lines.append(
            ",".join(f"{row[k]:.16e}" if isinstance(row[k], float) else str(row[k]) for k in keys)
        )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SweepGrid:
    """Two-stage hyperparameter grid for combining two rate tables.

    Stage 1 scans the weight of the first table (all exponents fixed at 1);
    stage 2 fixes the winning weights and scans exponent pairs.
    """

    stage1_weights: tuple = (0.1, 0.3, 0.5, 0.7, 0.9)
    stage2_exponents: tuple = (0.5, 1.0, 1.2, 1.4)

    def __post_init__(self):
        if not self.stage1_weights or not self.stage2_exponents:
            raise ValueError("sweep grids cannot be empty")
        if any(not 0.0 <= w <= 1.0 for w in self.stage1_weights):
            raise ValueError("stage-1 weights must lie in [0, 1]")
        if any(x <= 0.0 for x in self.stage2_exponents):
            raise ValueError("stage-2 exponents must be positive")
        object.__setattr__(self, "stage1_weights", tuple(float(w) for w in self.stage1_weights))
        object.__setattr__(self, "stage2_exponents", tuple(float(x) for x in self.stage2_exponents))


def _sweep_cell_error(tables, weights, exponents, bounds, dataset, sampler, nfe, n_samples, seed, knots):
    components = [
        (tab, MetricWeight(w, x)) for tab, w, x in zip(tables, weights, exponents)
    ]
    combined = combine_rates(components, alpha_min=bounds[0], alpha_max=bounds[1])
    schedule = solve_schedule(combined, 1.0, bounds[1], bounds[0], knots)
    kind, eta = parse_sampler(sampler)
    spec = SamplerSpec(kind, discretize(schedule, nfe), eta)
    predictor = PosteriorMeanPredictor(dataset)
    samples = sample(predictor, spec, n_samples, seed)
    return sample_error_with_se(samples, dataset)


def run_sweep(
    tables: tuple[RateTable, RateTable],
    grid: SweepGrid,
    dataset: PointDataset,
    sampler: str = "ddim:0",
    nfe: int = 5,
    n_samples: int = 10_000,
    seed: int = 0,
    alpha_max: float = 1.0,
    alpha_min: float = 0.01,
    schedule_knots: int = 1001,
) -> dict:
    """Two-stage tuning of the (weight, exponent) combination of two rates.

    Stage 2 only ever evaluates the stage-1 winning weights.  Returns a
    report with one row per evaluated cell plus the chosen setting.
    """
    if len(tables) != 2:
        raise ValueError("the sweep combines exactly two rate tables")
    bounds = (alpha_min, alpha_max)
    rows = []
    cell = 0
    stage1 = []
    for w in grid.stage1_weights:
        err, se = _sweep_cell_error(
            tables, (w, 1.0 - w), (1.0, 1.0), bounds, dataset, sampler, nfe, n_samples, (seed, cell), schedule_knots
        )
        stage1.append((err, w))
        rows.append(
            {"stage": 1, "w_a": w, "w_b": 1.0 - w, "xi_a": 1.0, "xi_b": 1.0, "error": err, "error_se": se}
        )
        cell += 1
    best_w = min(stage1)[1]
    stage2 = []
    for xi_a, xi_b in itertools.product(grid.stage2_exponents, repeat=2):
        err, se = _sweep_cell_error(
            tables, (best_w, 1.0 - best_w), (xi_a, xi_b), bounds, dataset, sampler, nfe, n_samples, (seed, cell), schedule_knots
        )
        stage2.append((err, xi_a, xi_b))
        rows.append(
            {"stage": 2, "w_a": best_w, "w_b": 1.0 - best_w, "xi_a": xi_a, "xi_b": xi_b, "error": err, "error_se": se}
        )
        cell += 1
    best_err, best_xa, best_xb = min(stage2)
    for stage in (1, 2):
        ranked = sorted((r for r in rows if r["stage"] == stage), key=lambda r: r["error"])
        for rank, row in enumerate(ranked, start=1):
            row["rank"] = rank
    payload = {
        "sampler": sampler,
        "nfe": nfe,
        "n_samples": n_samples,
        "alpha_max": alpha_max,
        "alpha_min": alpha_min,
        "stage1_weights": list(grid.stage1_weights),
        "stage2_exponents": list(grid.stage2_exponents),
    }
    report = provenance(payload, seed)
    report["rows"] = rows
    report["best"] = {"w_a": best_w, "w_b": 1.0 - best_w, "xi_a": best_xa, "xi_b": best_xb, "error": best_err}
    return report


def count_density_modes(values: np.ndarray) -> int:
    """Local maxima of a densely tabulated 1-D density.

    A mode is a maximal run of equal values that is strictly above both of
    its neighbours, so symmetric grids that straddle a peak with two equal
    samples still count it once.  Runs touching the array boundary do not
    count.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    count = 0
    i = 1
    while i < n:
        if v[i] > v[i - 1]:
            j = i
            while j + 1 < n and v[j + 1] == v[j]:
                j += 1
            if j + 1 < n and v[j + 1] < v[j]:
                count += 1
            i = j + 1
        else:
            i += 1
    return count


def density_matrix(dataset: PointDataset, alpha_grid, x_grid) -> np.ndarray:
    """Diffused density tabulated over (alpha, x); rows follow alpha_grid."""
    if dataset.dim != 1:
        raise ValueError("the density matrix is defined for 1-D datasets")
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float)
    out = np.empty((alpha_grid.size, x_grid.size))
    for i, alpha in enumerate(alpha_grid):
        out[i] = diffused_density(dataset, float(alpha), x_grid)
    return out


def assert_mode_transition(counts) -> None:
    """Check the one-to-three mode emergence pattern along increasing alpha."""
    counts = list(counts)
    if counts[0] != 1:
        raise RuntimeError(f"expected a single mode at the lowest alpha, found {counts[0]}")
    if counts[-1] != 3:
        raise RuntimeError(f"expected three modes at the highest alpha, found {counts[-1]}")
    interior = counts[1:-1]
    if not any(c in (2, 3) for c in interior):
        raise RuntimeError("no transition region with 2 or 3 modes found")
    if any(c > 3 or c < 1 for c in counts):
        raise RuntimeError("mode counts left the expected 1..3 range")
