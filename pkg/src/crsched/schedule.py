"""Rate tables, noise schedules, and the constant-rate schedule solver.

A rate table v(alpha) measures how fast the distribution of diffused data
moves per unit change of the signal coefficient alpha.  The solver turns a
rate table into a schedule alpha(t) along which that motion is constant in
t: time is allocated proportionally to the cumulative mass of v(alpha)^xi
between the schedule bounds, so equal t-intervals carry equal mass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

# Rates below this are floored before exponentiation; a rate that is exactly
# zero on a subinterval would otherwise collapse that subinterval to a single
# instant and break the inversion.
RATE_FLOOR = 1e-12

# Minimum number of quadrature intervals between the schedule bounds.
QUAD_INTERVALS = 4096


def _read_two_columns(text: str) -> np.ndarray:
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(cell) for cell in line.split(",")])
        except ValueError:
            continue  # header line
    if not rows:
        raise ValueError("no data rows found")
    return np.array(rows, dtype=float)


@dataclass(frozen=True)
class RateTable:
    """Nonnegative rate v(alpha) tabulated on an increasing alpha grid.

    Evaluation interpolates linearly between knots and clamps to the nearest
    endpoint value outside the grid.  ``stderr`` optionally carries per-knot
    Monte Carlo standard errors; it is ignored by all numerical operations.
    """

    alphas: np.ndarray
    values: np.ndarray
    stderr: np.ndarray | None = None

    def __post_init__(self):
        alphas = np.array(self.alphas, dtype=float)
        values = np.array(self.values, dtype=float)
        if alphas.ndim != 1 or alphas.size < 2:
            raise ValueError("rate table needs at least 2 grid points")
        if values.shape != alphas.shape:
            raise ValueError("alphas and values must have matching shapes")
        if not (np.all(np.isfinite(alphas)) and np.all(np.isfinite(values))):
            raise ValueError("rate table entries must be finite")
        if np.any(np.diff(alphas) <= 0):
            raise ValueError("alpha grid must be strictly increasing")
        if alphas[0] < 0.0 or alphas[-1] > 1.0:
            raise ValueError("alpha grid must lie within [0, 1]")
        if np.any(values < 0):
            raise ValueError("rate values must be nonnegative")
        stderr = self.stderr
        if stderr is not None:
            stderr = np.array(stderr, dtype=float)
            if stderr.shape != alphas.shape:
                raise ValueError("stderr must match the alpha grid")
            stderr.setflags(write=False)
        alphas.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "stderr", stderr)

    @property
    def alpha_min(self) -> float:
        return float(self.alphas[0])

    @property
    def alpha_max(self) -> float:
        return float(self.alphas[-1])

    def __call__(self, alpha):
        """Evaluate the rate at ``alpha`` (scalar or array), clamped outside."""
        return np.interp(alpha, self.alphas, self.values)

    def to_json(self) -> str:
        return json.dumps({"alphas": self.alphas.tolist(), "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "RateTable":
        obj = json.loads(text)
        return cls(obj["alphas"], obj["values"])

    def to_csv(self) -> str:
        lines = ["alpha,value"]
        lines += [f"{a:.16e},{v:.16e}" for a, v in zip(self.alphas, self.values)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "RateTable":
        data = _read_two_columns(text)
        return cls(data[:, 0], data[:, 1])


@dataclass(frozen=True)
class NoiseSchedule:
    """Monotone map t in [0, 1] -> alpha, stored as interpolation knots.

    alpha decreases strictly from alpha_max at t=0 to alpha_min at t=1, and
    sigma(t) = sqrt(1 - alpha^2) is the matched noise scale of the
    variance-preserving process.  Instances are immutable and evaluable in
    both directions.
    """

    knots_t: np.ndarray
    knots_alpha: np.ndarray

    def __post_init__(self):
        t = np.array(self.knots_t, dtype=float)
        a = np.array(self.knots_alpha, dtype=float)
        if t.ndim != 1 or t.size < 2 or a.shape != t.shape:
            raise ValueError("knot arrays must be matching 1-D arrays with >= 2 entries")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(a))):
            raise ValueError("knots must be finite")
        if t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
            raise ValueError("knots_t must increase strictly from 0 to 1")
        if np.any(np.diff(a) >= 0):
            raise ValueError("knots_alpha must be strictly decreasing")
        if a[-1] < 0.0 or a[0] > 1.0:
            raise ValueError("alpha knots must lie within [0, 1]")
        t.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "knots_t", t)
        object.__setattr__(self, "knots_alpha", a)

    @property
    def alpha_max(self) -> float:
        return float(self.knots_alpha[0])

    @property
    def alpha_min(self) -> float:
        return float(self.knots_alpha[-1])

    def alpha_at(self, t):
        """alpha(t) by linear interpolation; t is clipped to [0, 1]."""
        return np.interp(np.clip(t, 0.0, 1.0), self.knots_t, self.knots_alpha)

    def t_at(self, alpha):
        """Inverse map t(alpha); alpha is clipped to the schedule range."""
        a = np.clip(alpha, self.alpha_min, self.alpha_max)
        return np.interp(a, self.knots_alpha[::-1], self.knots_t[::-1])

    def sigma_at(self, t):
        a = self.alpha_at(t)
        return np.sqrt(np.clip(1.0 - a * a, 0.0, None))

    def to_json(self) -> str:
        return json.dumps({"alphas": self.knots_alpha.tolist(), "values": self.knots_t.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "NoiseSchedule":
        obj = json.loads(text)
        return cls(obj["values"], obj["alphas"])

    def to_csv(self) -> str:
        lines = ["alpha,t"]
        lines += [f"{a:.16e},{t:.16e}" for a, t in zip(self.knots_alpha, self.knots_t)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "NoiseSchedule":
        data = _read_two_columns(text)
        return cls(data[:, 1], data[:, 0])


@dataclass(frozen=True)
class MetricWeight:
    """Weight and exponent attached to one rate table in a combination."""

    weight: float
    exponent: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError("weight must lie in [0, 1]")
        if self.exponent <= 0.0:
            raise ValueError("exponent must be positive")


def _refined_grid(lo: float, hi: float, knot_alphas: np.ndarray) -> np.ndarray:
    base = np.linspace(lo, hi, QUAD_INTERVALS + 1)
    knots = np.asarray(knot_alphas, dtype=float)
    interior = knots[(knots > lo) & (knots < hi)]
    return np.unique(np.concatenate((base, interior)))


def solve_schedule(
    rate: RateTable,
    xi: float,
    alpha_max: float,
    alpha_min: float,
    n_knots: int = 1001,
) -> NoiseSchedule:
    """Solve for the schedule whose distributional drift is constant in t.

    The schedule satisfies -d(alpha)/dt = C * v(alpha)^(-xi) with
    C = int_{alpha_min}^{alpha_max} v^xi d(alpha), i.e.

        t(alpha) = int_alpha^alpha_max v^xi / int_alpha_min^alpha_max v^xi,

    computed by composite trapezoid quadrature on a refined alpha grid and
    inverted by monotone interpolation.  Larger xi allocates more of the
    t-interval to regions where v is large.  Boundary values are exact:
    alpha(0) = alpha_max and alpha(1) = alpha_min.
    """
    if xi <= 0.0:
        raise ValueError("xi must be positive")
    if not 0.0 <= alpha_min < alpha_max <= 1.0:
        raise ValueError("need 0 <= alpha_min < alpha_max <= 1")
    if n_knots < 2:
        raise ValueError("n_knots must be at least 2")
    grid = _refined_grid(alpha_min, alpha_max, rate.alphas)
    raw = rate(grid)
    if np.max(raw) <= RATE_FLOOR:
        raise ValueError("rate is identically zero on the requested interval")
    weighted = np.maximum(raw, RATE_FLOOR) ** xi
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (weighted[1:] + weighted[:-1]) * np.diff(grid))))
    total = cum[-1]
    knots_t = np.linspace(0.0, 1.0, n_knots)
    knots_alpha = np.interp((1.0 - knots_t) * total, cum, grid)
    knots_alpha[0] = alpha_max
    knots_alpha[-1] = alpha_min
    if np.any(np.diff(knots_alpha) >= 0):
        raise ValueError("solver produced a non-monotone schedule; rate table is too degenerate")
    return NoiseSchedule(knots_t, knots_alpha)


def schedule_to_rate(schedule: NoiseSchedule) -> RateTable:
    """Recover the rate a schedule implicitly equalizes.

    v(alpha) is proportional to 1/|d(alpha)/dt|, evaluated by finite
    differences on the knot grid (central at interior knots, one-sided at
    the ends) and normalized so that its integral over the schedule's alpha
    range is 1.
    """
    t = schedule.knots_t
    a = schedule.knots_alpha
    slope = np.empty_like(a)
    slope[0] = (a[1] - a[0]) / (t[1] - t[0])
    slope[-1] = (a[-1] - a[-2]) / (t[-1] - t[-2])
    if a.size > 2:
        slope[1:-1] = (a[2:] - a[:-2]) / (t[2:] - t[:-2])
    with np.errstate(divide="ignore", over="ignore"):
        values = -1.0 / slope
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise ValueError("schedule has a numerically flat segment; its rate is unbounded")
    alphas = a[::-1].copy()
    values = values[::-1].copy()
    mass = np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(alphas))
    return RateTable(alphas, values / mass)


def combine_rates(
    components: list[tuple[RateTable, MetricWeight]],
    alpha_min: float | None = None,
    alpha_max: float | None = None,
) -> RateTable:
    """Weighted mixture of normalized, exponentiated rate tables.

    Each component enters as w_m * v_m(alpha)^xi_m / C_m with
    C_m = int v_m^xi_m over the target range, so differently scaled metrics
    combine on equal footing.  The result is tabulated on the union of the
    component grids.  Bounds default to the span of that union; pass the
    bounds of the schedule you intend to solve for so the normalization
    constants match.
    """
    if not components:
        raise ValueError("no rate tables to combine")
    weight_sum = sum(mw.weight for _, mw in components)
    if abs(weight_sum - 1.0) > 1e-12:
        raise ValueError(f"weights must sum to 1, got {weight_sum!r}")
    lo = min(tab.alpha_min for tab, _ in components) if alpha_min is None else float(alpha_min)
    hi = max(tab.alpha_max for tab, _ in components) if alpha_max is None else float(alpha_max)
    if not lo < hi:
        raise ValueError("combination range is degenerate")
    union = np.unique(np.concatenate([tab.alphas for tab, _ in components] + [np.array([lo, hi])]))
    union = union[(union >= lo) & (union <= hi)]
    quad = _refined_grid(lo, hi, union)
    combined = np.zeros(union.size)
    for tab, mw in components:
        powered = tab(quad) ** mw.exponent
        mass = np.sum(0.5 * (powered[1:] + powered[:-1]) * np.diff(quad))
        if mass <= 0.0:
            raise ValueError("a component rate has zero mass on the combination range")
        combined += mw.weight * tab(union) ** mw.exponent / mass
    return RateTable(union, combined)


def discretize(schedule: NoiseSchedule, n_steps: int, prepend_unit_alpha: bool = False) -> np.ndarray:
    """Alpha ladder alpha(i/n_steps) for i = 0..n_steps, strictly decreasing.

    With ``prepend_unit_alpha`` the first entry is replaced by exactly 1,
    for samplers whose final state is clean data.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    alphas = np.asarray(schedule.alpha_at(np.arange(n_steps + 1) / n_steps), dtype=float)
    if prepend_unit_alpha:
        alphas[0] = 1.0
    return alphas
