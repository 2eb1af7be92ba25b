"""Nonlinear turbine plant model.

Drive-train dynamics, aerodynamic coefficient surfaces, powers, the
available-power and maximum-thrust envelopes over pitch, and the inverse
pitch map used to translate power commands back into a pitch angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    FileFormatError,
    InfeasibleTargetError,
    ParameterError,
    StallError,
)

BETZ_LIMIT = 0.593

# Classic analytic power-coefficient fit; the pitch argument of this fit is
# in degrees, so generated surfaces convert from radians before evaluating.
_HEIER_COEFFS = (0.5176, 116.0, 0.4, 5.0, 21.0, 0.0068)


@dataclass(frozen=True)
class TurbineParams:
    """Physical constants and operating limits of the turbine (SI units)."""

    air_density: float          # kg/m^3
    rotor_area: float           # m^2
    rotor_diameter: float       # m
    gearbox_ratio: float        # -, >= 1
    rotor_inertia: float        # kg m^2 (rotor side)
    generator_inertia: float    # kg m^2 (generator side)
    generator_efficiency: float  # in (0, 1]
    omega_g_min: float          # rad/s
    omega_g_max: float          # rad/s
    omega_g_rated: float        # rad/s
    torque_g_max: float         # N m
    beta_min: float             # rad
    beta_max: float             # rad
    power_g_rated: float        # W

    def __post_init__(self):
        positive = {
            "air_density": self.air_density,
            "rotor_area": self.rotor_area,
            "rotor_diameter": self.rotor_diameter,
            "rotor_inertia": self.rotor_inertia,
            "generator_inertia": self.generator_inertia,
            "omega_g_min": self.omega_g_min,
            "torque_g_max": self.torque_g_max,
            "power_g_rated": self.power_g_rated,
        }
        for name, value in positive.items():
            if not value > 0.0:
                raise ParameterError(f"{name} must be strictly positive, got {value}")
        if self.gearbox_ratio < 1.0:
            raise ParameterError(f"gearbox_ratio must be >= 1, got {self.gearbox_ratio}")
        if not 0.0 < self.generator_efficiency <= 1.0:
            raise ParameterError(
                f"generator_efficiency must be in (0, 1], got {self.generator_efficiency}"
            )
        if not self.omega_g_min < self.omega_g_rated <= self.omega_g_max:
            raise ParameterError(
                "generator speed bounds must satisfy min < rated <= max, got "
                f"({self.omega_g_min}, {self.omega_g_rated}, {self.omega_g_max})"
            )
        if not self.beta_min < self.beta_max:
            raise ParameterError(
                f"pitch bounds must satisfy min < max, got ({self.beta_min}, {self.beta_max})"
            )

    @property
    def inertia(self) -> float:
        """Equivalent inertia at the generator shaft, J = J_g + J_r/G^2 [kg m^2]."""
        return self.generator_inertia + self.rotor_inertia / self.gearbox_ratio**2


@dataclass(frozen=True)
class CoeffSurface:
    """Gridded aerodynamic coefficient map over (tip-speed ratio, pitch)."""

    lambda_grid: np.ndarray  # strictly increasing, dimensionless
    beta_grid: np.ndarray    # strictly increasing, rad
    values: np.ndarray       # shape (len(lambda_grid), len(beta_grid))
    kind: str                # "power-coefficient" | "thrust-coefficient"

    def __post_init__(self):
        object.__setattr__(self, "lambda_grid", np.asarray(self.lambda_grid, dtype=float))
        object.__setattr__(self, "beta_grid", np.asarray(self.beta_grid, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.kind not in ("power-coefficient", "thrust-coefficient"):
            raise ParameterError(f"unknown surface kind: {self.kind!r}")
        if np.any(np.diff(self.lambda_grid) <= 0) or np.any(np.diff(self.beta_grid) <= 0):
            raise ParameterError("surface grid axes must be strictly increasing")
        if self.values.shape != (self.lambda_grid.size, self.beta_grid.size):
            raise ParameterError(
                f"values shape {self.values.shape} does not match grid "
                f"({self.lambda_grid.size}, {self.beta_grid.size})"
            )
        hi = BETZ_LIMIT if self.kind == "power-coefficient" else 2.0
        if np.any(self.values < 0.0) or np.any(self.values > hi):
            raise ParameterError(f"{self.kind} values must lie in [0, {hi}]")


@dataclass(frozen=True)
class DriveTrainState:
    """Generator-shaft state; rotor speed is omega_g / G."""

    omega_g: float  # rad/s


def tip_speed_ratio(omega_g: float, v_w: float, params: TurbineParams):
    """Tip-speed ratio: blade-tip speed over wind speed."""
    if np.any(np.asarray(v_w) <= 0.0):
        raise DomainError(f"wind speed must be positive, got {v_w}")
    return omega_g * params.rotor_diameter / (2.0 * params.gearbox_ratio * v_w)


def coeff_lookup(surface: CoeffSurface, lam, beta):
    """Bilinear interpolation on the coefficient grid, clamped at the edges.

    Accepts scalars or broadcastable arrays for both query coordinates.
    """
    lg, bg, v = surface.lambda_grid, surface.beta_grid, surface.values
    lam = np.clip(np.asarray(lam, dtype=float), lg[0], lg[-1])
    beta = np.clip(np.asarray(beta, dtype=float), bg[0], bg[-1])
    i = np.clip(np.searchsorted(lg, lam, side="right") - 1, 0, lg.size - 2)
    j = np.clip(np.searchsorted(bg, beta, side="right") - 1, 0, bg.size - 2)
    tl = (lam - lg[i]) / (lg[i + 1] - lg[i])
    tb = (beta - bg[j]) / (bg[j + 1] - bg[j])
    out = (
        v[i, j] * (1 - tl) * (1 - tb)
        + v[i + 1, j] * tl * (1 - tb)
        + v[i, j + 1] * (1 - tl) * tb
        + v[i + 1, j + 1] * tl * tb
    )
    return float(out) if np.ndim(out) == 0 else out


def rotor_power(omega_g: float, beta: float, v_w: float,
                cp: CoeffSurface, params: TurbineParams) -> float:
    """Aerodynamic power extracted from the wind [W]."""
    lam = tip_speed_ratio(omega_g, v_w, params)
    c = coeff_lookup(cp, lam, beta)
    return 0.5 * params.air_density * params.rotor_area * c * v_w**3


def rotor_torque(omega_g: float, beta: float, v_w: float,
                 cp: CoeffSurface, params: TurbineParams) -> float:
    """Aerodynamic torque on the rotor shaft [N m]."""
    if omega_g <= 0.0:
        raise DomainError(f"rotor torque is singular at omega_g={omega_g}")
    omega_r = omega_g / params.gearbox_ratio
    return rotor_power(omega_g, beta, v_w, cp, params) / omega_r


def generator_power(torque_g: float, omega_g: float, params: TurbineParams) -> float:
    """Electrical power delivered by the generator [W]."""
    if torque_g < 0.0:
        raise DomainError(f"generator torque must be nonnegative, got {torque_g}")
    if omega_g <= 0.0:
        raise DomainError(f"generator speed must be positive, got {omega_g}")
    return params.generator_efficiency * torque_g * omega_g


def _beta_sweep_lambda(v_w: float, kinetic: float, params: TurbineParams) -> float:
    if v_w <= 0.0 or kinetic <= 0.0:
        raise DomainError(f"need v_w > 0 and K > 0, got v_w={v_w}, K={kinetic}")
    omega_g = math.sqrt(2.0 * kinetic / params.inertia)
    return tip_speed_ratio(omega_g, v_w, params)


def available_power(v_w: float, kinetic: float, cp: CoeffSurface,
                    params: TurbineParams) -> float:
    """Maximum rotor power over admissible pitch at the given wind and stored energy [W].

    The maximum is exact for the interpolated surface: at fixed tip-speed
    ratio the interpolant is piecewise linear in pitch, so the pitch-grid
    nodes attain the maximum.
    """
    lam = _beta_sweep_lambda(v_w, kinetic, params)
    row = coeff_lookup(cp, lam, _admissible_beta(cp, params))
    return 0.5 * params.air_density * params.rotor_area * float(np.max(row)) * v_w**3


def max_thrust(v_w: float, kinetic: float, ct: CoeffSurface,
               params: TurbineParams) -> float:
    """Maximum thrust force over admissible pitch at the given wind and stored energy [N]."""
    lam = _beta_sweep_lambda(v_w, kinetic, params)
    row = coeff_lookup(ct, lam, _admissible_beta(ct, params))
    return 0.5 * params.air_density * params.rotor_area * float(np.max(row)) * v_w**2


def _admissible_beta(surface: CoeffSurface, params: TurbineParams) -> np.ndarray:
    """Pitch-grid nodes restricted to the actuator range, bounds included."""
    bg = surface.beta_grid
    inside = bg[(bg > params.beta_min) & (bg < params.beta_max)]
    return np.concatenate(([params.beta_min], inside, [params.beta_max]))


def pitch_inverse(p_r_target: float, v_w: float, kinetic: float,
                  cp: CoeffSurface, params: TurbineParams) -> float:
    """Pitch angle realizing a rotor-power target; the largest root is returned.

    Ties toward larger pitch (feathering) reduce thrust. Targets below the
    least achievable rotor power saturate at the most-feathered minimizer.
    Raises InfeasibleTargetError for targets above the available power.
    """
    if p_r_target < 0.0:
        raise DomainError(f"rotor power target must be nonnegative, got {p_r_target}")
    lam = _beta_sweep_lambda(v_w, kinetic, params)
    betas = _admissible_beta(cp, params)
    row = np.asarray(coeff_lookup(cp, lam, betas))
    scale = 0.5 * params.air_density * params.rotor_area * v_w**3
    c_needed = p_r_target / scale
    c_max = float(np.max(row))
    if c_needed > c_max * (1.0 + 1e-12) + 1e-15:
        raise InfeasibleTargetError(
            f"rotor power target {p_r_target:.6g} W exceeds available "
            f"{c_max * scale:.6g} W at v_w={v_w}, K={kinetic:.6g}"
        )
    c_needed = min(c_needed, c_max)
    # Scan cells from the feathered end; within a cell the interpolant is
    # linear in beta, so the bracketed root is exact.
    for j in range(betas.size - 2, -1, -1):
        y0, y1 = row[j], row[j + 1]
        lo, hi = min(y0, y1), max(y0, y1)
        if lo <= c_needed <= hi:
            if y1 == y0:
                return float(betas[j + 1])
            t = (c_needed - y0) / (y1 - y0)
            return float(betas[j] + t * (betas[j + 1] - betas[j]))
    # No crossing: target below the least achievable power; feather maximally.
    j_min = int(np.flatnonzero(row == np.min(row))[-1])
    return float(betas[j_min])


def drivetrain_step(state: DriveTrainState, torque_g: float, beta: float,
                    v_w: float, dt: float, params: TurbineParams,
                    cp: CoeffSurface, substeps: int = 4) -> DriveTrainState:
    """Advance the drive train by dt under held inputs, RK4 with fixed substeps."""
    if dt <= 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    j_eq = params.inertia
    g = params.gearbox_ratio

    def deriv(omega: float) -> float:
        if omega <= 0.0:
            raise StallError(
                f"rotor stalled: omega_g={omega:.6g} rad/s with T_g={torque_g:.6g}, "
                f"beta={beta:.6g}, v_w={v_w:.6g}"
            )
        return (rotor_torque(omega, beta, v_w, cp, params) / g - torque_g) / j_eq

    omega = state.omega_g
    h = dt / substeps
    for _ in range(substeps):
        k1 = deriv(omega)
        k2 = deriv(omega + 0.5 * h * k1)
        k3 = deriv(omega + 0.5 * h * k2)
        k4 = deriv(omega + h * k3)
        omega = omega + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if omega <= 0.0:
            raise StallError(f"rotor stalled at omega_g={omega:.6g} rad/s")
    return DriveTrainState(omega_g=omega)


def _cp_analytic(lam: np.ndarray, beta_rad: np.ndarray) -> np.ndarray:
    """Analytic power-coefficient fit, clipped to the physical range."""
    c1, c2, c3, c4, c5, c6 = _HEIER_COEFFS
    beta_deg = np.degrees(beta_rad)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        inv_li = 1.0 / (lam + 0.08 * beta_deg) - 0.035 / (beta_deg**3 + 1.0)
        cp = c1 * (c2 * inv_li - c3 * beta_deg - c4) * np.exp(-c5 * inv_li) + c6 * lam
    cp = np.nan_to_num(cp, nan=0.0, posinf=BETZ_LIMIT, neginf=0.0)
    return np.clip(cp, 0.0, BETZ_LIMIT)


def _ct_from_cp(cp: np.ndarray) -> np.ndarray:
    """Thrust coefficient consistent with a power coefficient via momentum theory.

    Solves cp = 4 a (1-a)^2 for the induction factor on the physical branch
    a in [0, 1/3], then ct = 4 a (1-a).
    """
    cp = np.clip(cp, 0.0, 16.0 / 27.0)
    lo = np.zeros_like(cp)
    hi = np.full_like(cp, 1.0 / 3.0)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        f = 4.0 * mid * (1.0 - mid) ** 2
        take_hi = f < cp
        lo = np.where(take_hi, mid, lo)
        hi = np.where(take_hi, hi, mid)
    a = 0.5 * (lo + hi)
    return np.clip(4.0 * a * (1.0 - a), 0.0, 2.0)


def default_cp_surface(lambda_grid: np.ndarray | None = None,
                       beta_grid: np.ndarray | None = None) -> CoeffSurface:
    """Power-coefficient surface from the analytic fit on a default grid."""
    if lambda_grid is None:
        lambda_grid = np.linspace(0.5, 33.0, 131)
    if beta_grid is None:
        beta_grid = np.radians(np.linspace(0.0, 90.0, 61))
    lam, beta = np.meshgrid(lambda_grid, beta_grid, indexing="ij")
    return CoeffSurface(lambda_grid, beta_grid, _cp_analytic(lam, beta),
                        kind="power-coefficient")


def default_ct_surface(lambda_grid: np.ndarray | None = None,
                       beta_grid: np.ndarray | None = None) -> CoeffSurface:
    """Thrust-coefficient surface consistent with the default power surface."""
    cp = default_cp_surface(lambda_grid, beta_grid)
    return CoeffSurface(cp.lambda_grid, cp.beta_grid, _ct_from_cp(cp.values),
                        kind="thrust-coefficient")


def save_surface_csv(surface: CoeffSurface, path) -> None:
    """Write a coefficient surface as `lambda,beta,value` rows, lambda-major."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("lambda,beta,value\n")
        for i, lam in enumerate(surface.lambda_grid):
            for j, beta in enumerate(surface.beta_grid):
                fh.write(f"{float(lam)!r},{float(beta)!r},{float(surface.values[i, j])!r}\n")


def load_surface_csv(path, kind: str) -> CoeffSurface:
    """Parse a `lambda,beta,value` CSV and validate grid completeness."""
    lams, betas, vals = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != "lambda,beta,value":
            raise FileFormatError(f"bad surface header {header!r} in {path}")
        for ln, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise FileFormatError(f"{path}:{ln}: expected 3 fields, got {len(parts)}")
            try:
                lams.append(float(parts[0]))
                betas.append(float(parts[1]))
                vals.append(float(parts[2]))
            except ValueError as exc:
                raise FileFormatError(f"{path}:{ln}: {exc}") from exc
    lam_axis = np.unique(lams)
    beta_axis = np.unique(betas)
    if len(vals) != lam_axis.size * beta_axis.size:
        raise FileFormatError(
            f"{path}: incomplete grid, {len(vals)} rows for "
            f"{lam_axis.size}x{beta_axis.size} axes"
        )
    expect_lam = np.repeat(lam_axis, beta_axis.size)
    expect_beta = np.tile(beta_axis, lam_axis.size)
    if not (np.array_equal(lams, expect_lam) and np.array_equal(betas, expect_beta)):
        raise FileFormatError(f"{path}: rows are not in lambda-major grid order")
    values = np.asarray(vals).reshape(lam_axis.size, beta_axis.size)
    return CoeffSurface(lam_axis, beta_axis, values, kind=kind)


_PARAM_FILE_KEYS = {
    "air_density", "rotor_area", "rotor_diameter", "gearbox_ratio",
    "rotor_inertia", "generator_inertia", "generator_efficiency",
    "omega_g_min", "omega_g_max", "omega_g_rated", "torque_g_max",
    "beta_min", "beta_max", "power_g_rated",
}


def load_turbine_params(path) -> TurbineParams:
    """Read a flat `name = value` parameter file (SI units)."""
    found: dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FileFormatError(f"{path}:{ln}: expected `name = value`")
            name, _, value = line.partition("=")
            name = name.strip()
            if name not in _PARAM_FILE_KEYS:
                raise FileFormatError(f"{path}:{ln}: unknown parameter {name!r}")
            if name in found:
                raise FileFormatError(f"{path}:{ln}: duplicate parameter {name!r}")
            try:
                found[name] = float(value.strip())
            except ValueError as exc:
                raise FileFormatError(f"{path}:{ln}: {exc}") from exc
    missing = _PARAM_FILE_KEYS - found.keys()
    if missing:
        raise FileFormatError(f"{path}: missing parameters {sorted(missing)}")
    return TurbineParams(**found)
