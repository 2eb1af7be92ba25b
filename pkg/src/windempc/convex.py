"""Convex reformulation of the turbine dynamics in energy variables.

Kinetic-energy change of variables, thrust-force linearization, the LTI
prediction model with exact zero-order-hold discretization, concave
piecewise-linear envelopes for available power and maximum thrust, and the
affine stage-constraint set consumed by the optimal control problem.

Powers and energies are SI here; the controller works on a rescaled copy
of the model (see `scale` arguments) so that a common scale factor maps
W -> MW and J -> MJ in the decision variables.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import (
    DomainError,
    EnvelopeConstructionError,
    FileFormatError,
    FitError,
    ParameterError,
)
from .tower import ModalSystem, thrust_force
from .turbine import (
    CoeffSurface,
    TurbineParams,
    available_power,
    max_thrust,
    pitch_inverse,
)

logger = logging.getLogger(__name__)

DEFAULT_WIND_GRID = np.arange(3.0, 26.0, 1.0)  # m/s
DEFAULT_N_SEGMENTS = 5
DEFAULT_K_GRID_SIZE = 200


@dataclass(frozen=True)
class EnergyState:
    """Stacked state [K, x_m, v_m] of the energy-variable model."""

    kinetic: float            # J
    displacement: np.ndarray  # modal displacement [m]
    velocity: np.ndarray      # modal velocity [m/s]

    def __post_init__(self):
        if self.kinetic < 0.0:
            raise ParameterError(f"kinetic energy must be nonnegative, got {self.kinetic}")

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([self.kinetic], self.displacement, self.velocity))


@dataclass(frozen=True)
class ControlInput:
    """Power-variable control input."""

    p_rotor: float  # W
    p_gen: float    # W

    def __post_init__(self):
        if self.p_rotor < 0.0 or self.p_gen < 0.0:
            raise ParameterError("power inputs must be nonnegative")


def kinetic_energy(omega_g: float, inertia: float) -> float:
    """Kinetic energy stored in the rotating shaft [J]."""
    if omega_g < 0.0 or inertia <= 0.0:
        raise DomainError(f"need omega_g >= 0 and J > 0, got ({omega_g}, {inertia})")
    return 0.5 * inertia * omega_g**2


def omega_from_energy(kinetic: float, inertia: float) -> float:
    """Generator speed recovered from stored kinetic energy [rad/s]."""
    if kinetic < 0.0 or inertia <= 0.0:
        raise DomainError(f"need K >= 0 and J > 0, got ({kinetic}, {inertia})")
    return math.sqrt(2.0 * kinetic / inertia)


@dataclass(frozen=True)
class ThrustLinearization:
    """Affine thrust model F ~ z1 * P_r + z2 * K + z3 around one wind speed."""

    zeta1: float        # N/W
    zeta2: float        # N/J
    zeta3: float        # N
    valid_wind: float   # m/s
    fit_residual: float  # N, RMS over the fitting samples

    def evaluate(self, p_rotor: float, kinetic: float) -> float:
        return self.zeta1 * p_rotor + self.zeta2 * kinetic + self.zeta3


def fit_thrust_linearization(v_w: float, ct: CoeffSurface, cp: CoeffSurface,
                             params: TurbineParams, k_range,
                             beta_policy=None, n_kinetic: int = 15,
                             n_power: int = 12) -> ThrustLinearization:
    """Least-squares affine fit of the thrust force over (P_r, K) at fixed wind.

    Pitch for each sample comes from the inverse pitch map unless an
    explicit beta_policy(p_rotor, v_w, kinetic) is supplied.
    """
    k_lo, k_hi = float(k_range[0]), float(k_range[-1])
    if not 0.0 < k_lo < k_hi:
        raise DomainError(f"bad kinetic-energy range ({k_lo}, {k_hi})")
    if beta_policy is None:
        beta_policy = lambda p_r, v, k: pitch_inverse(p_r, v, k, cp, params)
    rows, forces = [], []
    for k in np.linspace(k_lo, k_hi, n_kinetic):
        omega = omega_from_energy(k, params.inertia)
        p_av = available_power(v_w, k, cp, params)
        for frac in np.linspace(0.0, 0.98, n_power):
            p_r = frac * p_av
            beta = beta_policy(p_r, v_w, k)
            rows.append((p_r, k, 1.0))
            forces.append(thrust_force(omega, beta, v_w, ct, params))
    design = np.asarray(rows)
    forces = np.asarray(forces)
    if np.linalg.matrix_rank(design) < 3:
        raise FitError(f"rank-deficient thrust samples at v_w={v_w}")
    coef, *_ = np.linalg.lstsq(design, forces, rcond=None)
    resid = float(np.sqrt(np.mean((design @ coef - forces) ** 2)))
    return ThrustLinearization(zeta1=float(coef[0]), zeta2=float(coef[1]),
                               zeta3=float(coef[2]), valid_wind=float(v_w),
                               fit_residual=resid)


# ---------------------------------------------------------------------------
# Piecewise-linear concave envelopes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PwlEnvelope:
    """Concave min-of-affine underestimate of an envelope function.

    For each wind grid point the stored segments (a_i, b_i) satisfy
    min_i(a_i K + b_i) * v^exponent <= envelope(v, K) on the build grid;
    winds between grid points blend the two neighbouring evaluations.
    """

    wind_grid: np.ndarray       # ascending [m/s]
    segments: tuple             # per wind: ndarray (n_i, 2) of (a_i, b_i)
    exponent: int               # 3 for power, 2 for thrust
    k_grid: np.ndarray          # kinetic-energy grid used at build time [J]
    margins: np.ndarray         # per wind: min over K grid of (true - approx)

    def n_segments(self) -> int:
        return max(seg.shape[0] for seg in self.segments)


PwlAvailablePower = PwlEnvelope


def _upper_hull(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices of the upper concave hull vertices of (x, y), x ascending.

    Near-collinear points are dropped so an affine input yields exactly
    two vertices; any resulting overshoot is absorbed by the caller's
    conservative shift.
    """
    x_span = max(float(x[-1] - x[0]), 1e-300)
    y_span = max(float(np.max(y) - np.min(y)), 1e-12 * max(1.0, abs(float(np.max(y)))))
    tol = 1e-12 * x_span * y_span
    hull: list[int] = []
    for i in range(x.size):
        while len(hull) >= 2:
            i1, i2 = hull[-2], hull[-1]
            cross = ((x[i2] - x[i1]) * (y[i] - y[i1])
                     - (y[i2] - y[i1]) * (x[i] - x[i1]))
            if cross >= -tol:  # middle point not above the chord: drop it
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull)


def _fit_min_affine(k_grid: np.ndarray, values: np.ndarray,
                    n_segments: int) -> tuple[np.ndarray, float]:
    """Fit min-of-affine chords to values over k_grid, shifted to underestimate.

    Returns the (n, 2) segment array and the worst-case remaining margin
    min(values - approx) >= 0 on the grid.
    """
    if n_segments < 1:
        raise ParameterError(f"need at least one segment, got {n_segments}")
    hull = _upper_hull(k_grid, values)
    if hull.size == 1:
        segs = np.array([[0.0, values[hull[0]]]])
    else:
        take = min(n_segments + 1, hull.size)
        knots = hull[np.unique(np.round(np.linspace(0, hull.size - 1, take)).astype(int))]
        a = np.diff(values[knots]) / np.diff(k_grid[knots])
        b = values[knots[:-1]] - a * k_grid[knots[:-1]]
        segs = np.column_stack((a, b))
    approx = np.min(segs[:, 0][None, :] * k_grid[:, None] + segs[:, 1][None, :], axis=1)
    overshoot = float(np.max(approx - values))
    if overshoot > 0.0:
        segs = segs.copy()
        segs[:, 1] -= overshoot
        approx = approx - overshoot
    margin = float(np.min(values - approx))
    return segs, margin


def _envelope_over_k(fn, k_grid: np.ndarray) -> np.ndarray:
    return np.array([fn(k) for k in k_grid])


def build_pwl_available_power(cp: CoeffSurface, params: TurbineParams,
                              wind_grid=None, k_grid=None,
                              n_segments: int = DEFAULT_N_SEGMENTS) -> PwlEnvelope:
    """Concave PWL underestimate of available power over the operating box."""
    return _build_envelope(
        lambda v, k: available_power(v, k, cp, params),
        params, wind_grid, k_grid, n_segments, exponent=3,
    )


def build_pwl_max_thrust(ct: CoeffSurface, params: TurbineParams,
                         wind_grid=None, k_grid=None,
                         n_segments: int = DEFAULT_N_SEGMENTS) -> PwlEnvelope:
    """Concave PWL underestimate of the maximum-thrust envelope."""
    return _build_envelope(
        lambda v, k: max_thrust(v, k, ct, params),
        params, wind_grid, k_grid, n_segments, exponent=2,
    )


def _build_envelope(fn, params, wind_grid, k_grid, n_segments, exponent):
    if wind_grid is None:
        wind_grid = DEFAULT_WIND_GRID
    wind_grid = np.asarray(wind_grid, dtype=float)
    if k_grid is None:
        k_lo = kinetic_energy(params.omega_g_min, params.inertia)
        k_hi = kinetic_energy(params.omega_g_max, params.inertia)
        k_grid = np.linspace(k_lo, k_hi, DEFAULT_K_GRID_SIZE)
    k_grid = np.asarray(k_grid, dtype=float)
    segments, margins = [], []
    for v in wind_grid:
        scale = float(v) ** exponent
        g = _envelope_over_k(lambda k: fn(v, k), k_grid) / scale
        segs, margin = _fit_min_affine(k_grid, g, n_segments)
        rel = max(1.0, float(np.max(np.abs(g))))
        if margin < -1e-6 * rel:
            raise EnvelopeConstructionError(
                f"underestimation violated at v_w={v}: margin {margin * scale}"
            )
        segments.append(segs)
        margins.append(margin * scale)
    return PwlEnvelope(wind_grid=wind_grid, segments=tuple(segments),
                       exponent=exponent, k_grid=k_grid,
                       margins=np.asarray(margins))


def _wind_bracket(pwl: PwlEnvelope, v_w: float):
    grid = pwl.wind_grid
    if v_w < grid[0] or v_w > grid[-1]:
        logger.warning("wind %.3f m/s outside envelope grid [%.1f, %.1f]; clamped",
                       v_w, grid[0], grid[-1])
        v_w = min(max(v_w, grid[0]), grid[-1])
    hi = int(np.searchsorted(grid, v_w, side="left"))
    if hi == 0:
        return 0, 0, 0.0
    lo = hi - 1
    if grid[hi] == v_w:
        return hi, hi, 0.0
    theta = (v_w - grid[lo]) / (grid[hi] - grid[lo])
    return lo, hi, float(theta)


def _min_affine(segs: np.ndarray, k):
    k = np.asarray(k, dtype=float)
    vals = segs[:, 0][None, :] * k.reshape(-1, 1) + segs[:, 1][None, :]
    out = np.min(vals, axis=1)
    return out if out.size > 1 else float(out[0])


def eval_pwl(pwl: PwlEnvelope, v_w: float, kinetic):
    """Evaluate the envelope approximation at (wind, kinetic energy)."""
    lo, hi, theta = _wind_bracket(pwl, v_w)
    v_lo = pwl.wind_grid[lo] ** pwl.exponent
    lo_val = _min_affine(pwl.segments[lo], kinetic) * v_lo
    if hi == lo:
        return lo_val
    v_hi = pwl.wind_grid[hi] ** pwl.exponent
    hi_val = _min_affine(pwl.segments[hi], kinetic) * v_hi
    return (1.0 - theta) * lo_val + theta * hi_val


def pwl_cuts_at_wind(pwl: PwlEnvelope, v_w: float, k_lo: float, k_hi: float,
                     scale: float = 1.0) -> np.ndarray:
    """Exact affine cuts of the wind-blended envelope over [k_lo, k_hi].

    Returns (n, 2) rows (slope, intercept) such that
    min_n(slope * K + intercept) equals the blended envelope on the
    interval. `scale` rescales the output (and the K argument) by a
    common power/energy factor.
    """
    lo, hi, theta = _wind_bracket(pwl, v_w)
    seg_lo = pwl.segments[lo] * (pwl.wind_grid[lo] ** pwl.exponent)
    if hi == lo:
        blended = [(1.0, seg_lo)]
    else:
        seg_hi = pwl.segments[hi] * (pwl.wind_grid[hi] ** pwl.exponent)
        blended = [(1.0 - theta, seg_lo), (theta, seg_hi)]

    # Candidate breakpoints: interval ends plus all pairwise intersections
    # of segments within each list.
    candidates = [k_lo, k_hi]
    for _, segs in blended:
        a, b = segs[:, 0], segs[:, 1]
        for i in range(len(a)):
            for j in range(i + 1, len(a)):
                if a[i] != a[j]:
                    k_cross = (b[j] - b[i]) / (a[i] - a[j])
                    if k_lo < k_cross < k_hi:
                        candidates.append(float(k_cross))
    points = np.unique(np.asarray(candidates))
    cuts = []
    for k0, k1 in zip(points[:-1], points[1:]):
        mid = 0.5 * (k0 + k1)
        slope = 0.0
        intercept = 0.0
        for w, segs in blended:
            active = int(np.argmin(segs[:, 0] * mid + segs[:, 1]))
            slope += w * segs[active, 0]
            intercept += w * segs[active, 1]
        cuts.append((slope, intercept))
    uniq = sorted(set(cuts))
    out = np.asarray(uniq, dtype=float)
    # slopes are scale-invariant (power and energy share the factor)
    out[:, 1] *= scale
    return out


def save_pwl_csv(pwl: PwlEnvelope, path) -> None:
    """Write envelope segments as `v_w,i,a_i,b_i` rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("v_w,i,a_i,b_i\n")
        for v, segs in zip(pwl.wind_grid, pwl.segments):
            for i, (a, b) in enumerate(segs):
                fh.write(f"{float(v)!r},{i},{float(a)!r},{float(b)!r}\n")


def load_pwl_csv(path, exponent: int, k_grid=None) -> PwlEnvelope:
    """Rebuild an envelope from its CSV export (margins are not recomputed)."""
    per_wind: dict[float, list] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().replace(" ", "")
        if header != "v_w,i,a_i,b_i":
            raise FileFormatError(f"bad envelope header {header!r} in {path}")
        for ln, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise FileFormatError(f"{path}:{ln}: expected 4 fields")
            v = float(parts[0])
            per_wind.setdefault(v, []).append((float(parts[2]), float(parts[3])))
    winds = np.asarray(sorted(per_wind))
    segments = tuple(np.asarray(per_wind[v]) for v in winds)
    if k_grid is None:
        k_grid = np.array([0.0, 1.0])
    return PwlEnvelope(wind_grid=winds, segments=segments, exponent=exponent,
                       k_grid=np.asarray(k_grid), margins=np.full(winds.size, np.nan))


# ---------------------------------------------------------------------------
# LTI model and discretization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LtiModel:
    """Continuous affine model dx/dt = A x + B u + c in (scaled) energy variables."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    n_modes: int
    power_scale: float  # decision-variable watts = SI watts * power_scale


@dataclass(frozen=True)
class DiscreteModel:
    """Exact zero-order-hold sampling of an LtiModel."""

    a_d: np.ndarray
    b_d: np.ndarray
    c_d: np.ndarray
    dt: float
    n_modes: int
    power_scale: float

    @property
    def n_states(self) -> int:
        return self.a_d.shape[0]


def assemble_lti(system: ModalSystem, lin: ThrustLinearization,
                 params: TurbineParams, power_scale: float = 1.0) -> LtiModel:
    """State-space form of the energy and modal dynamics.

    State [K, x_m, v_m], input [P_r, P_g]. With power_scale = s the state
    and inputs are (s K, x_m, v_m) and (s P_r, s P_g); modal rows pick up
    1/s on the thrust-linearization coefficients.
    """
    n = system.n_modes
    nx = 2 * n + 1
    s = float(power_scale)
    if s <= 0.0:
        raise ParameterError(f"power_scale must be positive, got {s}")
    a = np.zeros((nx, nx))
    b = np.zeros((nx, 2))
    c = np.zeros(nx)
    xm = slice(1, 1 + n)
    vm = slice(1 + n, nx)
    a[xm, vm] = np.eye(n)
    a[vm, xm] = -np.diag(system.stiffness / system.mass)
    a[vm, vm] = -np.diag(system.damping / system.mass)
    a[vm.start:vm.stop, 0] = system.input_gain * lin.zeta2 / s
    b[0, 0] = 1.0
    b[0, 1] = -1.0 / params.generator_efficiency
    b[vm.start:vm.stop, 0] = system.input_gain * lin.zeta1 / s
    c[vm.start:vm.stop] = system.input_gain * lin.zeta3
    return LtiModel(a=a, b=b, c=c, n_modes=n, power_scale=s)


def discretize(model: LtiModel, dt: float) -> DiscreteModel:
    """Exact ZOH discretization via the augmented matrix exponential."""
    if dt <= 0.0:
        raise DomainError(f"sampling time must be positive, got {dt}")
    nx = model.a.shape[0]
    aug = np.zeros((nx + 3, nx + 3))
    aug[:nx, :nx] = model.a
    aug[:nx, nx:nx + 2] = model.b
    aug[:nx, nx + 2] = model.c
    phi = expm(aug * dt)
    return DiscreteModel(
        a_d=phi[:nx, :nx], b_d=phi[:nx, nx:nx + 2], c_d=phi[:nx, nx + 2],
        dt=dt, n_modes=model.n_modes, power_scale=model.power_scale,
    )


# ---------------------------------------------------------------------------
# Stage constraints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StageRows:
    """Affine stage constraints cx x + cu u + ce eps <= rhs (scaled units)."""

    cx: np.ndarray
    cu: np.ndarray
    ce: np.ndarray
    rhs: np.ndarray

    def violation(self, x: np.ndarray, u: np.ndarray, eps: float) -> float:
        lhs = self.cx @ x + self.cu @ u + self.ce * eps
        return float(np.max(lhs - self.rhs))


@dataclass(frozen=True)
class ConvexConstraintSet:
    """Per-step affine constraints plus the epigraph cuts of available power."""

    stages: tuple            # StageRows per horizon step
    epi_cuts: tuple          # per step: (n, 2) cuts bounding the epigraph var
    k_lo: float              # scaled kinetic-energy bounds
    k_hi: float
    k_rated: float
    with_slack: bool
    power_scale: float

    @property
    def horizon(self) -> int:
        return len(self.stages)


def generator_torque_cuts(params: TurbineParams, k_lo: float, k_hi: float,
                          n_cuts: int = 8, scale: float = 1.0) -> np.ndarray:
    """Conservative affine cuts for P_g <= eta T_max sqrt(2K/J).

    Tangents of the concave bound overestimate it; every intercept is
    shifted down by the worst tangent-vs-function gap so the admitted set
    never exceeds the true bound. Returns (slope, intercept) rows in
    scaled units.
    """
    if not 0.0 < k_lo < k_hi:
        raise DomainError(f"bad kinetic range ({k_lo}, {k_hi})")
    coef = params.generator_efficiency * params.torque_g_max * math.sqrt(2.0 / params.inertia)
    tangent_points = np.linspace(k_lo, k_hi, n_cuts)
    slopes = coef * 0.5 / np.sqrt(tangent_points)
    intercepts = coef * np.sqrt(tangent_points) - slopes * tangent_points
    # Each tangent-minus-sqrt gap is convex, so the envelope gap peaks at
    # the envelope kinks (adjacent-tangent intersections) or the ends;
    # evaluating there makes the conservative shift exact.
    kinks = (-np.diff(intercepts) / np.diff(slopes)
             if n_cuts > 1 else np.array([]))
    probe = np.concatenate(([k_lo, k_hi], np.clip(kinks, k_lo, k_hi)))
    envelope = np.min(slopes[None, :] * probe[:, None] + intercepts[None, :], axis=1)
    gap = float(np.max(envelope - coef * np.sqrt(probe)))
    intercepts = intercepts - max(gap, 0.0)
    return np.column_stack((slopes, intercepts * scale))


def build_constraints(params: TurbineParams, pwl: PwlEnvelope,
                      fmax_pwl: PwlEnvelope, lin: ThrustLinearization,
                      wind_forecast, n_modes: int, with_slack: bool = True,
                      power_scale: float = 1.0,
                      n_torque_cuts: int = 8) -> ConvexConstraintSet:
    """Assemble the per-step affine stage constraints for a wind forecast."""
    forecast = np.atleast_1d(np.asarray(wind_forecast, dtype=float))
    if forecast.size == 0:
        raise DomainError("empty wind forecast")
    s = float(power_scale)
    k_lo = kinetic_energy(params.omega_g_min, params.inertia) * s
    k_hi = kinetic_energy(params.omega_g_max, params.inertia) * s
    k_rated = kinetic_energy(params.omega_g_rated, params.inertia) * s
    nx = 2 * n_modes + 1
    tg_cuts = generator_torque_cuts(params, k_lo / s, k_hi / s,
                                    n_cuts=n_torque_cuts, scale=s)
    # Lower thrust bound: keep u = 0 feasible even if the affine fit dips
    # slightly negative along the P_r = 0 edge.
    k_dense = np.linspace(k_lo / s, k_hi / s, 200)
    f_floor = min(0.0, float(np.min(lin.zeta2 * k_dense + lin.zeta3)))

    cache: dict[float, tuple[StageRows, np.ndarray]] = {}
    stages, epi = [], []
    for v in forecast:
        key = float(v)
        if key not in cache:
            cache[key] = _stage_for_wind(
                key, params, pwl, fmax_pwl, lin, nx, s,
                k_lo, k_hi, k_rated, tg_cuts, f_floor, with_slack,
            )
        st, ec = cache[key]
        stages.append(st)
        epi.append(ec)
    return ConvexConstraintSet(
        stages=tuple(stages), epi_cuts=tuple(epi), k_lo=k_lo, k_hi=k_hi,
        k_rated=k_rated, with_slack=with_slack, power_scale=s,
    )


def _stage_for_wind(v_w, params, pwl, fmax_pwl, lin, nx, s,
                    k_lo, k_hi, k_rated, tg_cuts, f_floor, with_slack):
    pav_cuts = pwl_cuts_at_wind(pwl, v_w, k_lo / s, k_hi / s, scale=s)
    ft_cuts = pwl_cuts_at_wind(fmax_pwl, v_w, k_lo / s, k_hi / s, scale=1.0)
    z1, z2 = lin.zeta1 / s, lin.zeta2 / s
    rows_cx, rows_cu, rows_ce, rows_rhs = [], [], [], []

    def add(cx_k, cu, ce, rhs):
        cx = np.zeros(nx)
        cx[0] = cx_k
        rows_cx.append(cx)
        rows_cu.append(np.asarray(cu, dtype=float))
        rows_ce.append(float(ce))
        rows_rhs.append(float(rhs))

    add(-1.0, (0.0, 0.0), 0.0, -k_lo)               # K >= K_lo
    add(1.0, (0.0, 0.0), 0.0, k_hi)                 # K <= K_hi
    slack = -1.0 if with_slack else 0.0
    add(1.0, (0.0, 0.0), slack, k_rated)            # K <= K_rated (+ eps)
    add(0.0, (-1.0, 0.0), 0.0, 0.0)                 # P_r >= 0
    add(0.0, (0.0, -1.0), 0.0, 0.0)                 # P_g >= 0
    add(0.0, (0.0, 1.0), 0.0, params.power_g_rated * s)  # P_g <= rated
    for a, b in pav_cuts:                            # P_r <= available power
        add(-a, (1.0, 0.0), 0.0, b)
    for a, b in tg_cuts:                             # P_g <= torque bound
        add(-a, (0.0, 1.0), 0.0, b)
    # thrust model bounds: f_floor <= z1 P_r + z2 K + zeta3 <= thrust envelope
    add(-z2, (-z1, 0.0), 0.0, lin.zeta3 - f_floor)
    for a, b in ft_cuts:
        add(z2 - a / s, (z1, 0.0), 0.0, b - lin.zeta3)
    stage = StageRows(cx=np.vstack(rows_cx), cu=np.vstack(rows_cu),
                      ce=np.asarray(rows_ce), rhs=np.asarray(rows_rhs))
    return stage, pav_cuts
