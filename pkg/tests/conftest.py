import numpy as np
import pytest

from windempc import turbine as tb


@pytest.fixture(scope="session")
def params():
    from windempc.config import default_turbine_params
    return default_turbine_params()


@pytest.fixture(scope="session")
def cp_surface():
    return tb.default_cp_surface()


@pytest.fixture(scope="session")
def ct_surface():
    return tb.default_ct_surface()


def toy_params(rho=1.225, area=1.0, diameter=2.0, gearbox=1.0, j_rotor=1.0,
               j_gen=1.0, eta=1.0, w_min=0.1, w_max=1000.0, w_rated=500.0,
               tg_max=1e6, beta_min=0.0, beta_max=1.0, pg_rated=1e6):
    return tb.TurbineParams(
        air_density=rho, rotor_area=area, rotor_diameter=diameter,
        gearbox_ratio=gearbox, rotor_inertia=j_rotor, generator_inertia=j_gen,
        generator_efficiency=eta, omega_g_min=w_min, omega_g_max=w_max,
        omega_g_rated=w_rated, torque_g_max=tg_max, beta_min=beta_min,
        beta_max=beta_max, power_g_rated=pg_rated,
    )


def constant_surface(value, kind, lam_max=40.0, beta_max=1.5):
    lg = np.linspace(0.0, lam_max, 9)
    bg = np.linspace(0.0, beta_max, 7)
    vals = np.full((lg.size, bg.size), float(value))
    return tb.CoeffSurface(lg, bg, vals, kind=kind)
