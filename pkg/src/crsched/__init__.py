"""Constant-rate noise schedules for diffusion models.

Builds noise schedules alpha(t) that equalize the rate of change of the
diffused-data distribution across timesteps: a rate function v(alpha) is
measured (or supplied), and time is allocated in proportion to its mass.
Includes desk-scale forward-process simulation with exact posterior-mean
predictors, three rate estimators, online training-schedule adaptation,
DDIM / DPM-Solver++(2M) samplers, and evaluation tooling.
"""

__version__ = "0.1.0"

from .schedule import (
    MetricWeight,
    NoiseSchedule,
    RateTable,
    combine_rates,
    discretize,
    schedule_to_rate,
    solve_schedule,
)
from .zoo import (
    EdmParams,
    alpha_from_edm_sigma,
    edm_schedule,
    linear_schedule,
    shifted_cosine_schedule,
    sigma_from_alpha,
)
from .diffusion import (
    DiffusionState,
    PointDataset,
    PosteriorMeanPredictor,
    diffused_density,
    log_diffused_density,
    noise_from_data,
    posterior_mean_predictor,
    simulate_forward,
)
from .rates import (
    MomentTrajectory,
    VxConfig,
    compute_v_eps,
    compute_v_fid,
    compute_v_klub,
    compute_v_x,
    frechet_distance,
    moment_trajectory,
    power_grid,
)
from .adaptive import (
    BinnedRateEstimator,
    TrainingLoopConfig,
    probe_pair,
    run_training,
    training_step,
)
from .samplers import SamplerSpec, ddim_step, dpmpp2m_step, sample
from .evaluate import (
    ExperimentConfig,
    SweepGrid,
    run_evaluation,
    run_sweep,
    wasserstein_1d,
)

__all__ = [
    "__version__",
    "BinnedRateEstimator",
    "DiffusionState",
    "EdmParams",
    "ExperimentConfig",
    "MetricWeight",
    "MomentTrajectory",
    "NoiseSchedule",
    "PointDataset",
    "PosteriorMeanPredictor",
    "RateTable",
    "SamplerSpec",
    "SweepGrid",
    "TrainingLoopConfig",
    "VxConfig",
    "alpha_from_edm_sigma",
    "combine_rates",
    "compute_v_eps",
    "compute_v_fid",
    "compute_v_klub",
    "compute_v_x",
    "ddim_step",
    "diffused_density",
    "discretize",
    "dpmpp2m_step",
    "edm_schedule",
    "frechet_distance",
    "linear_schedule",
    "log_diffused_density",
    "moment_trajectory",
    "noise_from_data",
    "posterior_mean_predictor",
    "power_grid",
    "probe_pair",
    "run_evaluation",
    "run_sweep",
    "run_training",
    "sample",
    "schedule_to_rate",
    "shifted_cosine_schedule",
    "sigma_from_alpha",
    "simulate_forward",
    "solve_schedule",
    "training_step",
    "wasserstein_1d",
]
