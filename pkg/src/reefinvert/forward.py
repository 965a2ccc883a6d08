"""Forward model of coralgal reef accretion on a subsiding/flooding substrate.

A vertical core is grown in fixed time slices.  Within each slice the
model (1) reads water depth, wave-current speed, and sediment input from
the boundary conditions, (2) converts them to a per-assemblage environment
factor through trapezoidal tolerance curves, (3) integrates the assemblage
populations under generalized Lotka-Volterra dynamics with the environment
scaling the intrinsic growth rate, and (4) converts populations to
accreted thickness.  Sediment is deposited only when no assemblage can
grow and the surface is submerged.

The slice loop is compiled with numba; a pure-numpy reference path exists
in the test suite and must stay in agreement with the compiled kernel.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .ode import (
    A21, A31, A32, A41, A42, A43, A51, A52, A53, A54,
    A61, A62, A63, A64, A65,
    B5_1, B5_3, B5_4, B5_5, B5_6,
    E1, E3, E4, E5, E6,
    GROW_MAX, SAFETY, SHRINK_MIN,
    NonFiniteState, StepUnderflow,
)

__all__ = [
    "ThresholdCurve",
    "AssemblageSpec",
    "GLVParams",
    "Curve",
    "BoundaryConditions",
    "SimulationConfig",
    "CoreRecord",
    "eval_threshold",
    "environment_factor",
    "glv_derivative",
    "expand_aim",
    "simulate",
    "default_sea_level",
    "default_flow_profile",
    "default_sediment_profile",
    "default_boundary",
    "default_assemblages",
    "default_glv",
]


@dataclass
class ThresholdCurve:
    """Trapezoidal tolerance curve over a single environmental stressor.

    ``points`` holds the four break values (f1, f2, f3, f4), required to
    be non-decreasing.  The response is 0 at or below f1 and at or above
    f4, 1 on [f2, f3], and linear on the two ramps.  Where break points
    coincide the plateau wins, so a degenerate curve steps directly
    between lethal and optimal.
    """

    points: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        p = tuple(float(v) for v in self.points)
        if len(p) != 4:
            raise ValueError("threshold curve needs exactly four points")
        if not all(math.isfinite(v) for v in p):
            raise ValueError(f"non-finite threshold points {p}")
        if not (p[0] <= p[1] <= p[2] <= p[3]):
            raise ValueError(f"threshold points not ordered: {p}")
        self.points = p

    def factor(self, x: float) -> float:
        f1, f2, f3, f4 = self.points
        if f2 <= x <= f3:
            return 1.0
        if x <= f1 or x >= f4:
            return 0.0
        if x < f2:
            return (x - f1) / (f2 - f1)
        return (f4 - x) / (f4 - f3)


def eval_threshold(curve: ThresholdCurve, x: float) -> float:
    """Response of ``curve`` at stressor value ``x``, in [0, 1]."""
    return curve.factor(x)


@dataclass
class AssemblageSpec:
    """One coralgal assemblage: growth ceiling plus tolerance curves.

    ``max_va_rate`` is the maximum vertical accretion rate in m/kyr,
    attained only under a fully optimal environment at carrying capacity.
    """

    name: str
    max_va_rate: float
    flow: ThresholdCurve
    sediment: ThresholdCurve
    depth: ThresholdCurve

    def __post_init__(self) -> None:
        if self.max_va_rate < 0:
            raise ValueError("max_va_rate must be non-negative")


def environment_factor(
    spec: AssemblageSpec, depth: float, flow_speed: float, sed_rate: float
) -> float:
    """Limiting-factor response: the minimum of the three curve values."""
    return min(
        spec.depth.factor(depth),
        spec.flow.factor(flow_speed),
        spec.sediment.factor(sed_rate),
    )


@dataclass
class GLVParams:
    """Growth and interaction parameters shared by all assemblages.

    ``epsilon`` is the intrinsic growth rate (1/yr), ``alpha_m`` the
    self-interaction (main diagonal, negative), and ``alpha_s`` the
    neighbor interaction (first off-diagonals, negative).
    """

    epsilon: float
    alpha_m: float
    alpha_s: float


def expand_aim(alpha_m: float, alpha_s: float, k: int) -> np.ndarray:
    """Tridiagonal interaction matrix for ``k`` depth-ordered assemblages.

    Self-interaction fills the main diagonal and the neighbor coefficient
    the first off-diagonals; all other entries are structurally zero.
    """
    if k < 1:
        raise ValueError("need at least one assemblage")
    a = np.zeros((k, k))
    np.fill_diagonal(a, alpha_m)
    idx = np.arange(k - 1)
    a[idx, idx + 1] = alpha_s
    a[idx + 1, idx] = alpha_s
    return a


def glv_derivative(
    populations: np.ndarray, eps_eff: np.ndarray, interactions: np.ndarray
) -> np.ndarray:
    """dP/dt for generalized Lotka-Volterra growth.

    ``eps_eff`` is the environment-scaled intrinsic rate per assemblage.
    """
    p = np.asarray(populations, dtype=float)
    return np.asarray(eps_eff) * p + p * (np.asarray(interactions) @ p)


@dataclass
class Curve:
    """Piecewise-linear curve through (x, y) control points.

    Queries outside the covered range clamp to the end values.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 1 or self.x.shape != self.y.shape or self.x.size < 2:
            raise ValueError("curve needs matching 1-D x/y with >= 2 points")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("curve control points must be finite")
        if np.any(np.diff(self.x) <= 0):
            raise ValueError("curve x values must be strictly increasing")

    def __call__(self, x):
        return np.interp(x, self.x, self.y)

    @classmethod
    def from_csv(cls, path) -> "Curve":
        """Load a two-column (x, y) CSV with a header row."""
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        if data.ndim != 2 or data.shape[1] < 2:
            raise ValueError(f"{path}: expected two numeric columns")
        return cls(data[:, 0], data[:, 1])


def default_sea_level() -> Curve:
    """Holocene-style relative sea level for the Australian east coast.

    Rapid post-glacial rise from -5 m at 8500 yr BP onto a +1.8 m
    mid-Holocene highstand plateau ending at 4000, then a fall back to
    the present datum by 2000.
    """
    return Curve(
        np.array([0.0, 2000.0, 4000.0, 7000.0, 8500.0]),
        np.array([0.0, 0.0, 1.8, 1.8, -5.0]),
    )


def default_flow_profile() -> Curve:
    """Wave-current speed vs depth: 0.3 m/s at the surface, 0.04 at 30 m."""
    d = np.linspace(0.0, 40.0, 21)
    k = math.log(7.5) / 30.0
    return Curve(d, 0.3 * np.exp(-k * d))


def default_sediment_profile() -> Curve:
    """Sediment input vs depth (m/kyr), increasing away from the surf zone."""
    d = np.array([0.0, 4.0, 8.0, 14.0, 20.0, 26.0, 30.0, 40.0])
    v = np.array([0.00150, 0.00155, 0.00160, 0.00190, 0.00230, 0.00255, 0.00270, 0.00500])
    return Curve(d, v)


@dataclass
class BoundaryConditions:
    """Environmental forcing: sea level over time, flow and sediment over depth."""

    sea_level: Curve
    flow: Curve
    sediment: Curve

    def __post_init__(self) -> None:
        if np.any(np.diff(self.flow.y) > 0):
            raise ValueError("flow profile must be non-increasing with depth")
        if np.any(np.diff(self.sediment.y) < 0):
            raise ValueError("sediment profile must be non-decreasing with depth")
        if np.any(self.flow.y < 0) or np.any(self.sediment.y < 0):
            raise ValueError("flow and sediment profiles must be non-negative")


def default_boundary() -> BoundaryConditions:
    return BoundaryConditions(
        sea_level=default_sea_level(),
        flow=default_flow_profile(),
        sediment=default_sediment_profile(),
    )


def default_assemblages() -> list[AssemblageSpec]:
    """Shallow, moderately-deep, and deep assemblages, ordered shallow first."""
    return [
        AssemblageSpec(
            name="shallow",
            max_va_rate=11.0,
            flow=ThresholdCurve((0.055, 0.082, 0.259, 0.288)),
            sediment=ThresholdCurve((0.0009, 0.0015, 0.0016, 0.0017)),
            depth=ThresholdCurve((0.5, 1.0, 6.0, 10.0)),
        ),
        AssemblageSpec(
            name="moderate_deep",
            max_va_rate=12.0,
            flow=ThresholdCurve((0.008, 0.051, 0.172, 0.185)),
            sediment=ThresholdCurve((0.0015, 0.0017, 0.0028, 0.0031)),
            depth=ThresholdCurve((4.0, 8.0, 20.0, 26.0)),
        ),
        AssemblageSpec(
            name="deep",
            max_va_rate=9.0,
            flow=ThresholdCurve((0.0, 0.0, 0.058, 0.066)),
            sediment=ThresholdCurve((0.0023, 0.0024, 0.0027, 0.0043)),
            depth=ThresholdCurve((14.0, 20.0, 32.0, 40.0)),
        ),
    ]


def default_glv() -> GLVParams:
    return GLVParams(epsilon=0.08, alpha_m=-0.01, alpha_s=-0.03)


@dataclass
class SimulationConfig:
    """Frame and numerics for one core simulation.

    Times are years before present and run from ``t_start`` down to
    ``t_end``.  ``initial_depth`` places the starting substrate below the
    present-day sea-level datum, so the starting water depth is
    ``sea_level(t_start) + initial_depth``.
    """

    t_start: float = 8500.0
    t_end: float = 0.0
    layer_interval: float = 50.0
    initial_depth: float = 30.0
    depth_bin_size: float = 0.1
    seed_population: float = 1e-3
    tolerance: float = 1e-6
    min_step_factor: float = 1e-4
    population_cap: float = 1e9
    sediment_label: str = "sediment"

    def __post_init__(self) -> None:
        if self.t_start <= self.t_end:
            raise ValueError("t_start must exceed t_end (years before present)")
        if self.layer_interval <= 0:
            raise ValueError("layer_interval must be positive")
        span = self.t_start - self.t_end
        n = span / self.layer_interval
        if abs(n - round(n)) > 1e-9:
            raise ValueError("time span must be a whole number of layers")
        if self.depth_bin_size <= 0 or self.seed_population <= 0:
            raise ValueError("depth_bin_size and seed_population must be positive")
        if self.tolerance <= 0 or self.min_step_factor <= 0:
            raise ValueError("tolerance and min_step_factor must be positive")

    @property
    def n_layers(self) -> int:
        return int(round((self.t_start - self.t_end) / self.layer_interval))


@dataclass
class CoreRecord:
    """Simulated core: per-slice composition plus derived label sequences.

    ``proportions`` rows always sum to one; slices with no deposition are
    recorded as pure sediment with zero thickness.  ``depth_labels`` is
    ordered from the core base upward.
    """

    categories: tuple[str, ...]
    times: np.ndarray
    proportions: np.ndarray
    layer_thickness: np.ndarray
    time_labels: np.ndarray
    depth_labels: np.ndarray
    depth_bin_size: float
    populations: np.ndarray
    layer_interval: float

    @property
    def total_thickness(self) -> float:
        return float(self.layer_thickness.sum())

    def layer_amounts(self) -> np.ndarray:
        """Per-slice deposited thickness by category, shape (T, K)."""
        return self.proportions * self.layer_thickness[:, None]

    def depth_composition(self, bin_size: float) -> np.ndarray:
        """Re-bin deposited material onto a depth grid from the base up.

        Returns an (N, K) thickness matrix where N is the total thickness
        divided by ``bin_size``, rounded to the nearest whole bin; the top
        bin absorbs the rounding remainder.  Layers are treated as
        internally homogeneous mixtures.
        """
        if bin_size <= 0:
            raise ValueError("bin_size must be positive")
        amounts = self.layer_amounts()
        total = float(self.layer_thickness.sum())
        n_bins = int(round(total / bin_size))
        if n_bins <= 0:
            return np.zeros((0, len(self.categories)))
        comp = np.zeros((n_bins, len(self.categories)))
        lo = 0.0
        for t in range(amounts.shape[0]):
            h = self.layer_thickness[t]
            if h <= 0.0:
                continue
            hi = lo + h
            j0 = min(int(lo / bin_size), n_bins - 1)
            j = j0
            while True:
                b_lo = j * bin_size
                b_hi = (j + 1) * bin_size if j < n_bins - 1 else max(total, hi)
                overlap = min(hi, b_hi) - max(lo, b_lo)
                if overlap > 0.0:
                    comp[j] += amounts[t] * (overlap / h)
                if b_hi >= hi or j == n_bins - 1:
                    break
                j += 1
            lo = hi
        return comp

    def depth_label_codes(self, bin_size: float) -> np.ndarray:
        """Dominant category per depth bin (most thickness wins)."""
        comp = self.depth_composition(bin_size)
        return comp.argmax(axis=1) if comp.size else np.zeros(0, dtype=int)

    def write_proportions_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_bp"] + list(self.categories))
            for t in range(self.proportions.shape[0]):
                w.writerow(
                    [f"{self.times[t]:.9g}"]
                    + [f"{v:.9g}" for v in self.proportions[t]]
                )

    def write_time_labels_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "time_bp", "category"])
            for t, code in enumerate(self.time_labels):
                w.writerow([t, f"{self.times[t]:.9g}", self.categories[code]])

    def write_depth_labels_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin", "height_above_base_m", "category"])
            for j, code in enumerate(self.depth_labels):
                w.writerow(
                    [j, f"{j * self.depth_bin_size:.9g}", self.categories[code]]
                )


@nb.njit(cache=True)
def _trap_nb(x, f1, f2, f3, f4):
    if f2 <= x <= f3:
        return 1.0
    if x <= f1 or x >= f4:
        return 0.0
    if x < f2:
        return (x - f1) / (f2 - f1)
    return (f4 - x) / (f4 - f3)


@nb.njit(cache=True)
def _glv_rhs_nb(y, dy, eps_eff, amat, k):
    # State is (P, Q): populations followed by their running time-integrals.
    for i in range(k):
        s = 0.0
        for j in range(k):
            s += amat[i, j] * y[j]
        dy[i] = eps_eff[i] * y[i] + y[i] * s
        dy[k + i] = y[i]


@nb.njit(cache=True)
def _simulate_nb(
    n_layers,
    dt_yr,
    t_start,
    sea_x, sea_y,
    flow_x, flow_y,
    sed_x, sed_y,
    depth_thr, flow_thr, sed_thr,
    va, eps, amat,
    elev0, seed_pop,
    tol, dt_min, pop_cap,
):
    k = va.shape[0]
    n2 = 2 * k
    amounts = np.zeros((n_layers, k + 1))
    pops = np.zeros((n_layers, k))
    envs = np.zeros((n_layers, k))
    depths = np.zeros(n_layers)
    y = np.zeros(n2)
    yt = np.empty(n2)
    k1 = np.empty(n2)
    k2 = np.empty(n2)
    k3 = np.empty(n2)
    k4 = np.empty(n2)
    k5 = np.empty(n2)
    k6 = np.empty(n2)
    eps_eff = np.empty(k)
    fenv = np.empty(k)
    elev = elev0
    inv_ps = 0.0
    if eps > 0.0 and amat[0, 0] < 0.0:
        inv_ps = -amat[0, 0] / eps
    dt_ctrl = 1.0

    for step in range(n_layers):
        t_bp = t_start - step * dt_yr
        sea = np.interp(t_bp, sea_x, sea_y)
        depth = sea - elev
        d_pos = depth if depth > 0.0 else 0.0
        flow = np.interp(d_pos, flow_x, flow_y)
        sed = np.interp(d_pos, sed_x, sed_y)

        any_growth = False
        for i in range(k):
            fd = _trap_nb(depth, depth_thr[i, 0], depth_thr[i, 1], depth_thr[i, 2], depth_thr[i, 3])
            ff = _trap_nb(flow, flow_thr[i, 0], flow_thr[i, 1], flow_thr[i, 2], flow_thr[i, 3])
            fs = _trap_nb(sed, sed_thr[i, 0], sed_thr[i, 1], sed_thr[i, 2], sed_thr[i, 3])
            f = fd
            if ff < f:
                f = ff
            if fs < f:
                f = fs
            fenv[i] = f
            eps_eff[i] = eps * f
            if f > 0.0:
                any_growth = True
                if y[i] < seed_pop:
                    y[i] = seed_pop
            envs[step, i] = f
        depths[step] = depth

        # Integrate populations (and their time-integrals) across the slice.
        for i in range(k):
            y[k + i] = 0.0
        t_loc = 0.0
        while t_loc < dt_yr - 1e-12 * dt_yr:
            dt = dt_ctrl
            if dt > dt_yr - t_loc:
                dt = dt_yr - t_loc
            while True:
                _glv_rhs_nb(y, k1, eps_eff, amat, k)
                for i in range(n2):
                    yt[i] = y[i] + dt * A21 * k1[i]
                _glv_rhs_nb(yt, k2, eps_eff, amat, k)
                for i in range(n2):
                    yt[i] = y[i] + dt * (A31 * k1[i] + A32 * k2[i])
                _glv_rhs_nb(yt, k3, eps_eff, amat, k)
                for i in range(n2):
                    yt[i] = y[i] + dt * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
                _glv_rhs_nb(yt, k4, eps_eff, amat, k)
                for i in range(n2):
                    yt[i] = y[i] + dt * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
                _glv_rhs_nb(yt, k5, eps_eff, amat, k)
                for i in range(n2):
                    yt[i] = y[i] + dt * (
                        A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]
                    )
                _glv_rhs_nb(yt, k6, eps_eff, amat, k)
                err = 0.0
                for i in range(k):
                    e = dt * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i])
                    if e < 0.0:
                        e = -e
                    if e > err:
                        err = e
                ok = np.isfinite(err) and err <= tol
                if ok:
                    for i in range(n2):
                        y[i] = y[i] + dt * (
                            B5_1 * k1[i] + B5_3 * k3[i] + B5_4 * k4[i] + B5_5 * k5[i] + B5_6 * k6[i]
                        )
                    t_loc += dt
                    if err == 0.0:
                        factor = GROW_MAX
                    else:
                        factor = SAFETY * (tol / err) ** 0.2
                        if factor > GROW_MAX:
                            factor = GROW_MAX
                        elif factor < SHRINK_MIN:
                            factor = SHRINK_MIN
                    dt_ctrl = dt * factor
                    for i in range(k):
                        if y[i] < 0.0:
                            y[i] = 0.0
                        if not np.isfinite(y[i]) or y[i] > pop_cap:
                            return 2, step, amounts, pops, envs, depths
                    break
                if np.isfinite(err):
                    shrink = SAFETY * (tol / err) ** 0.2
                    if shrink > 1.0:
                        shrink = 1.0
                    elif shrink < SHRINK_MIN:
                        shrink = SHRINK_MIN
                else:
                    shrink = SHRINK_MIN
                dt = dt * shrink
                if dt < dt_min:
                    return 1, step, amounts, pops, envs, depths

        # Deposition: coral growth scaled by mean population, else sediment.
        total = 0.0
        for i in range(k):
            a = 0.0
            if fenv[i] > 0.0 and inv_ps > 0.0:
                r = (y[k + i] / dt_yr) * inv_ps
                if r > 1.0:
                    r = 1.0
                a = va[i] * fenv[i] * r * (dt_yr / 1000.0)
            amounts[step, i] = a
            total += a
        sed_dep = 0.0
        if not any_growth and depth > 0.0:
            sed_dep = sed * (dt_yr / 1000.0)
        amounts[step, k] = sed_dep
        total += sed_dep

        avail = depth if depth > 0.0 else 0.0
        if total > avail:
            scale = 0.0 if total <= 0.0 else avail / total
            for i in range(k + 1):
                amounts[step, i] *= scale
            total = avail
        elev += total
        for i in range(k):
            pops[step, i] = y[i]

    return 0, -1, amounts, pops, envs, depths


def simulate(
    glv: GLVParams,
    assemblages: list[AssemblageSpec],
    boundary: BoundaryConditions,
    config: SimulationConfig,
) -> CoreRecord:
    """Run the forward model and assemble the simulated core.

    Raises
    ------
    StepUnderflow
        If the ODE controller cannot meet the tolerance above the minimum
        step size (``layer_interval * min_step_factor``).
    NonFiniteState
        If populations blow up or stop being finite.
    """
    if not assemblages:
        raise ValueError("need at least one assemblage")
    names = [a.name for a in assemblages]
    if len(set(names)) != len(names) or config.sediment_label in names:
        raise ValueError("assemblage names must be unique and distinct from the sediment label")
    k = len(assemblages)
    depth_thr = np.array([a.depth.points for a in assemblages])
    flow_thr = np.array([a.flow.points for a in assemblages])
    sed_thr = np.array([a.sediment.points for a in assemblages])
    va = np.array([a.max_va_rate for a in assemblages], dtype=float)
    amat = expand_aim(glv.alpha_m, glv.alpha_s, k)

    status, fail_step, amounts, pops, _envs, _depths = _simulate_nb(
        config.n_layers,
        float(config.layer_interval),
        float(config.t_start),
        boundary.sea_level.x, boundary.sea_level.y,
        boundary.flow.x, boundary.flow.y,
        boundary.sediment.x, boundary.sediment.y,
        depth_thr, flow_thr, sed_thr,
        va, float(glv.epsilon), amat,
        -float(config.initial_depth), float(config.seed_population),
        float(config.tolerance),
        float(config.layer_interval * config.min_step_factor),
        float(config.population_cap),
    )
    if status == 1:
        raise StepUnderflow(f"ODE step underflow in layer {fail_step}")
    if status == 2:
        raise NonFiniteState(f"population blow-up in layer {fail_step}")

    thickness = amounts.sum(axis=1)
    proportions = np.zeros_like(amounts)
    grown = thickness > 0.0
    proportions[grown] = amounts[grown] / thickness[grown, None]
    proportions[~grown, k] = 1.0

    categories = tuple(a.name for a in assemblages) + (config.sediment_label,)
    times = config.t_start - np.arange(config.n_layers) * config.layer_interval
    record = CoreRecord(
        categories=categories,
        times=times,
        proportions=proportions,
        layer_thickness=thickness,
        time_labels=proportions.argmax(axis=1),
        depth_labels=np.zeros(0, dtype=int),
        depth_bin_size=config.depth_bin_size,
        populations=pops,
        layer_interval=config.layer_interval,
    )
    record.depth_labels = record.depth_label_codes(config.depth_bin_size)
    return record
