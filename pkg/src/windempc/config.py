"""Default configuration and run-configuration file parsing."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import FileFormatError
from .tower import (
    LocationSet,
    ModalSystem,
    build_modal_system,
    default_mode_shapes,
    load_mode_shapes,
)
from .turbine import (
    CoeffSurface,
    TurbineParams,
    default_cp_surface,
    default_ct_surface,
    load_surface_csv,
    load_turbine_params,
)

DEFAULT_TOWER_HEIGHT = 87.6        # m
DEFAULT_TOWER_MASS = 347460.0      # kg
DEFAULT_FREQUENCIES = (0.3240, 2.9003)  # Hz
DEFAULT_DAMPING_RATIO = 0.01
DEFAULT_LOCATIONS = (1.0, 0.72)    # normalized measurement heights
DEFAULT_CUT_IN_WIND = 3.0          # m/s


def default_turbine_params() -> TurbineParams:
    """Shipped 5MW-class reference parameters."""
    ref = resources.files("windempc.data") / "turbine_nrel5mw.txt"
    with resources.as_file(ref) as path:
        return load_turbine_params(path)


def default_tower_system(n_modes: int = 2, n_dof: int = 6,
                         locations=DEFAULT_LOCATIONS,
                         tower_height: float = DEFAULT_TOWER_HEIGHT,
                         tower_mass: float = DEFAULT_TOWER_MASS,
                         frequencies=None,
                         damping_ratios=None) -> ModalSystem:
    """Two-mode tower with uniform density and the configured frequencies.

    Locations always include the tower base, whose shape row is zero.
    """
    shapes = default_mode_shapes(n_modes=n_modes, n_dof=n_dof)
    locset = LocationSet(np.asarray(locations, dtype=float)).with_base()
    if frequencies is None:
        frequencies = DEFAULT_FREQUENCIES[:n_modes]
    if damping_ratios is None:
        damping_ratios = [DEFAULT_DAMPING_RATIO] * n_modes
    rho = tower_mass / tower_height
    return build_modal_system(
        shapes, locset, np.array([rho]), tower_height,
        np.asarray(frequencies, dtype=float),
        np.asarray(damping_ratios, dtype=float),
    )
