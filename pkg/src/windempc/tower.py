"""Multi-mode fore-aft tower vibration model.

Polynomial mode shapes over normalized height, the shape matrix mapping
modal to physical coordinates, modal mass/stiffness/damping construction,
time stepping, thrust force, and the fore-aft-moment-rate load metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FileFormatError, ParameterError
from .turbine import CoeffSurface, TurbineParams, coeff_lookup, tip_speed_ratio

# First two clamped-free beam eigenvalue roots and their shape constants.
_BEAM_ROOTS = (1.8751040687119611, 4.694091132974175)


@dataclass(frozen=True)
class ModeShapeSet:
    """Polynomial mode shapes over normalized height z in [0, 1].

    Column i of `coefficients` holds the ascending-degree polynomial
    coefficients of mode i; shapes are 0 at the base and 1 at the tip.
    """

    coefficients: np.ndarray  # (n_dof, n_modes)

    def __post_init__(self):
        coeffs = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        object.__setattr__(self, "coefficients", coeffs)
        tips = np.polynomial.polynomial.polyval(1.0, coeffs)
        bases = coeffs[0, :]
        if np.any(np.abs(tips - 1.0) > 1e-9):
            raise ParameterError(f"mode shapes must equal 1 at the tip, got {tips}")
        if np.any(np.abs(bases) > 1e-9):
            raise ParameterError(f"mode shapes must vanish at the base, got {bases}")

    @property
    def n_dof(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n_modes(self) -> int:
        return self.coefficients.shape[1]


@dataclass(frozen=True)
class LocationSet:
    """Normalized tower heights of interest, tip first."""

    heights: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.heights, dtype=float)
        object.__setattr__(self, "heights", z)
        if z.size == 0 or z[0] != 1.0:
            raise ParameterError("first location must be the tower top z=1")
        if np.any(z < 0.0) or np.any(z > 1.0):
            raise ParameterError("locations must lie in [0, 1]")
        if np.any(np.diff(z) >= 0.0):
            raise ParameterError("locations must be strictly decreasing from z=1")

    @property
    def n_locations(self) -> int:
        return self.heights.size

    def with_base(self) -> "LocationSet":
        """Return a copy with the tower base appended (no-op if present)."""
        if self.heights[-1] == 0.0:
            return self
        return LocationSet(np.append(self.heights, 0.0))


@dataclass(frozen=True)
class ModalState:
    displacement: np.ndarray  # modal displacement [m]
    velocity: np.ndarray      # modal velocity [m/s]

    def __post_init__(self):
        object.__setattr__(self, "displacement", np.asarray(self.displacement, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        if not (np.all(np.isfinite(self.displacement)) and np.all(np.isfinite(self.velocity))):
            raise ParameterError("modal state entries must be finite")

    @classmethod
    def zero(cls, n_modes: int) -> "ModalState":
        return cls(np.zeros(n_modes), np.zeros(n_modes))


@dataclass(frozen=True)
class ModalSystem:
    """Immutable modal model: diagonal matrices, shape matrix, and metadata."""

    shapes: ModeShapeSet
    locations: LocationSet
    mass: np.ndarray           # diagonal entries of M_m [kg]
    stiffness: np.ndarray      # diagonal entries of K_m [N/m]
    damping: np.ndarray        # diagonal entries of D_m [N s/m]
    input_gain: np.ndarray     # B_m [1/kg]
    shape_matrix: np.ndarray   # S, (n_modes, n_locations)
    tower_height: float        # H_t [m]
    density_profile: np.ndarray  # rho(z_l) per node [kg/m]
    node_grid: np.ndarray      # modal-mass quadrature nodes
    frequencies: np.ndarray    # natural frequencies [Hz]
    damping_ratios: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.mass.size


def shape_at(shapes: ModeShapeSet, mode_index: int, z: float) -> float:
    """Evaluate one mode-shape polynomial at normalized height z (Horner)."""
    if not 0.0 <= z <= 1.0:
        raise DomainError(f"normalized height must be in [0, 1], got {z}")
    acc = 0.0
    for c in shapes.coefficients[::-1, mode_index]:
        acc = acc * z + c
    return acc


def build_shape_matrix(shapes: ModeShapeSet, locations: LocationSet) -> np.ndarray:
    """S[i, l] = value of mode i at location z_l."""
    out = np.empty((shapes.n_modes, locations.n_locations))
    for i in range(shapes.n_modes):
        for l, z in enumerate(locations.heights):
            out[i, l] = shape_at(shapes, i, z)
    return out


def modal_mass(shapes: ModeShapeSet, density_profile: np.ndarray,
               tower_height: float, node_grid: np.ndarray) -> np.ndarray:
    """Per-mode generalized mass from the discrete density-weighted shape sum."""
    z = np.asarray(node_grid, dtype=float)
    rho = np.asarray(density_profile, dtype=float)
    if z.size != rho.size:
        raise ParameterError("density profile length must match the node grid")
    dz = np.diff(np.concatenate(([0.0], z)))
    if np.any(dz <= 0.0):
        raise ParameterError("node grid must be strictly increasing from 0")
    out = np.empty(shapes.n_modes)
    for i in range(shapes.n_modes):
        s = np.array([shape_at(shapes, i, zl) for zl in z])
        out[i] = float(np.sum(rho * s**2 * dz) * tower_height)
    return out


def build_modal_system(shapes: ModeShapeSet, locations: LocationSet,
                       density_profile: np.ndarray, tower_height: float,
                       frequencies: np.ndarray, damping_ratios: np.ndarray,
                       node_grid: np.ndarray | None = None) -> ModalSystem:
    """Assemble the modal system from shapes, geometry, and target frequencies.

    Stiffness and damping follow from the modal mass and the configured
    natural frequencies and damping ratios; the force enters at the tip.
    """
    freqs = np.asarray(frequencies, dtype=float)
    zetas = np.asarray(damping_ratios, dtype=float)
    if freqs.size != shapes.n_modes or zetas.size != shapes.n_modes:
        raise ParameterError("need one frequency and damping ratio per mode")
    if np.any(freqs <= 0.0):
        raise ParameterError("natural frequencies must be positive")
    if np.any(zetas < 0.0) or np.any(zetas >= 1.0):
        raise ParameterError("damping ratios must lie in [0, 1)")
    if node_grid is None:
        n = shapes.n_dof
        node_grid = np.arange(1, n + 1) / n
    node_grid = np.asarray(node_grid, dtype=float)
    rho = np.asarray(density_profile, dtype=float)
    if rho.size == 1:
        rho = np.full(node_grid.size, rho.reshape(-1)[0])

    mass = modal_mass(shapes, rho, tower_height, node_grid)
    if np.any(mass <= 0.0):
        raise ParameterError(f"singular modal mass: {mass}")
    omega_n = 2.0 * math.pi * freqs
    stiffness = mass * omega_n**2
    damping = 2.0 * zetas * mass * omega_n
    # Thrust acts at the tower top: the modal force vector is the mode
    # values at z=1 (unity for tip-normalized shapes).
    tip = np.array([shape_at(shapes, i, 1.0) for i in range(shapes.n_modes)])
    input_gain = tip / mass
    shape_matrix = build_shape_matrix(shapes, locations)
    return ModalSystem(
        shapes=shapes, locations=locations, mass=mass, stiffness=stiffness,
        damping=damping, input_gain=input_gain, shape_matrix=shape_matrix,
        tower_height=tower_height, density_profile=rho, node_grid=node_grid,
        frequencies=freqs, damping_ratios=zetas,
    )


def modal_acceleration(system: ModalSystem, state: ModalState,
                       thrust: float) -> np.ndarray:
    """Modal acceleration from the equations of motion [m/s^2]."""
    return (system.input_gain * thrust
            - (system.damping / system.mass) * state.velocity
            - (system.stiffness / system.mass) * state.displacement)


def modal_step(system: ModalSystem, state: ModalState, thrust: float,
               dt: float, substeps: int = 4) -> ModalState:
    """Advance the modal system by dt under a held thrust force, RK4."""
    if dt <= 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    x = state.displacement.copy()
    v = state.velocity.copy()
    inv_m_d = system.damping / system.mass
    inv_m_k = system.stiffness / system.mass
    force = system.input_gain * thrust

    def acc(xx, vv):
        return force - inv_m_d * vv - inv_m_k * xx

    h = dt / substeps
    for _ in range(substeps):
        k1x, k1v = v, acc(x, v)
        k2x, k2v = v + 0.5 * h * k1v, acc(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = v + 0.5 * h * k2v, acc(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = v + h * k3v, acc(x + h * k3x, v + h * k3v)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
    return ModalState(x, v)


def project_to_physical(system: ModalSystem, state: ModalState):
    """Physical displacement and velocity at the configured locations."""
    s_t = system.shape_matrix.T
    return s_t @ state.displacement, s_t @ state.velocity


def thrust_force(omega_g: float, beta: float, v_w: float, ct: CoeffSurface,
                 params: TurbineParams) -> float:
    """Aerodynamic thrust on the rotor [N]."""
    if omega_g <= 0.0:
        raise DomainError(f"generator speed must be positive, got {omega_g}")
    lam = tip_speed_ratio(omega_g, v_w, params)
    c = coeff_lookup(ct, lam, beta)
    return 0.5 * params.air_density * params.rotor_area * c * v_w**2


def tfam_rate(system: ModalSystem, v_top: float, a_top: float, v_loc: float,
              a_loc: float, z_loc: float, d_coeff: float, k_coeff: float) -> float:
    """Rate of change of the fore-aft moment at a tower location [N m/s].

    Diagnostic load proxy; the lever arm is H_t (1 - z). Never used by the
    controller.
    """
    if not 0.0 <= z_loc < 1.0:
        raise DomainError(f"location must lie in [0, 1), got {z_loc}")
    arm = system.tower_height * (1.0 - z_loc)
    return arm * (d_coeff * (a_top - a_loc) + k_coeff * (v_top - v_loc))


def default_tfam_coefficients(system: ModalSystem):
    """Per-location damping/stiffness coefficients from the modal construction."""
    s2 = system.shape_matrix**2
    k = s2.T @ system.stiffness
    d = s2.T @ system.damping
    return d, k


def _cantilever_shape(root: float, z: np.ndarray) -> np.ndarray:
    sigma = (math.cosh(root) + math.cos(root)) / (math.sinh(root) + math.sin(root))
    raw = (np.cosh(root * z) - np.cos(root * z)
           - sigma * (np.sinh(root * z) - np.sin(root * z)))
    tip = (math.cosh(root) - math.cos(root)
           - sigma * (math.sinh(root) - math.sin(root)))
    return raw / tip


def fit_mode_polynomial(target, degree: int) -> np.ndarray:
    """Least-squares polynomial fit of a shape function on [0, 1].

    The fit is constrained to zero value and slope at the base (no z^0 or
    z^1 terms) and exactly 1 at the tip.
    """
    if degree < 2:
        raise ParameterError("polynomial degree must be at least 2")
    z = np.linspace(0.0, 1.0, 400)
    y = np.asarray(target(z), dtype=float)
    powers = np.arange(2, degree + 1)
    basis = z[:, None] ** powers[None, :]
    # Eliminate the tip equality sum(a) = 1 through the last coefficient.
    last = basis[:, -1]
    reduced = basis[:, :-1] - last[:, None]
    coef, *_ = np.linalg.lstsq(reduced, y - last, rcond=None)
    full = np.zeros(degree + 1)
    full[2:degree] = coef
    full[degree] = 1.0 - coef.sum()
    return full


def default_mode_shapes(n_modes: int = 2, n_dof: int = 6) -> ModeShapeSet:
    """Uniform-cantilever mode shapes fitted to degree n_dof - 1 polynomials."""
    if n_modes > len(_BEAM_ROOTS):
        raise ParameterError(f"only {len(_BEAM_ROOTS)} default modes available")
    cols = []
    for root in _BEAM_ROOTS[:n_modes]:
        cols.append(fit_mode_polynomial(lambda z, r=root: _cantilever_shape(r, z),
                                        degree=n_dof - 1))
    return ModeShapeSet(np.column_stack(cols))


def load_mode_shapes(path) -> ModeShapeSet:
    """Read mode shapes: one line per mode, ascending polynomial coefficients."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split()])
            except ValueError as exc:
                raise FileFormatError(f"{path}:{ln}: {exc}") from exc
    if not rows:
        raise FileFormatError(f"{path}: no mode shapes found")
    width = max(len(r) for r in rows)
    coeffs = np.zeros((width, len(rows)))
    for i, r in enumerate(rows):
        coeffs[: len(r), i] = r
    return ModeShapeSet(coeffs)


def load_density_profile(path):
    """Read a `z,rho_per_length` CSV; returns (node_grid, densities)."""
    zs, rhos = [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().replace(" ", "")
        if header != "z,rho_per_length":
            raise FileFormatError(f"bad density header {header!r} in {path}")
        for ln, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise FileFormatError(f"{path}:{ln}: expected 2 fields")
            zs.append(float(parts[0]))
            rhos.append(float(parts[1]))
    return np.asarray(zs), np.asarray(rhos)
