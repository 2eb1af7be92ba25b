import math

import numpy as np
import pytest

from windempc import convex as cx
from windempc import tower as tw
from windempc import turbine as tb
from windempc.config import default_tower_system
from windempc.errors import DomainError, EnvelopeConstructionError, ParameterError

from conftest import constant_surface


@pytest.fixture(scope="module")
def k_bounds(params):
    lo = cx.kinetic_energy(params.omega_g_min, params.inertia)
    hi = cx.kinetic_energy(params.omega_g_max, params.inertia)
    return lo, hi


@pytest.fixture(scope="module")
def pav_envelope(cp_surface, params):
    return cx.build_pwl_available_power(cp_surface, params)


@pytest.fixture(scope="module")
def thrust_envelope(ct_surface, params):
    return cx.build_pwl_max_thrust(ct_surface, params)


@pytest.fixture(scope="module")
def thrust_fit(ct_surface, cp_surface, params, k_bounds):
    return cx.fit_thrust_linearization(11.0, ct_surface, cp_surface, params, k_bounds)


class TestEnergy:
    def test_simple_value(self):
        assert cx.kinetic_energy(3.0, 2.0) == pytest.approx(9.0)

    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            omega = rng.uniform(1.0, 200.0)
            j = rng.uniform(10.0, 1e4)
            back = cx.omega_from_energy(cx.kinetic_energy(omega, j), j)
            assert back == pytest.approx(omega, rel=1e-12)

    def test_rated_energy_value(self, params):
        k = cx.kinetic_energy(params.omega_g_rated, params.inertia)
        assert k == pytest.approx(0.5 * params.inertia * 122.9096**2, rel=1e-12)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            cx.kinetic_energy(-1.0, 2.0)
        with pytest.raises(DomainError):
            cx.omega_from_energy(-1.0, 2.0)


class TestThrustFit:
    def test_affine_field_recovered_exactly(self, ct_surface, cp_surface, params,
                                            k_bounds, monkeypatch):
        def fake_thrust(omega_g, beta, v_w, ct, p):
            k = cx.kinetic_energy(omega_g, p.inertia)
            return 0.02 * k + 5.0e4  # affine in K, independent of P_r

        monkeypatch.setattr(cx, "thrust_force", fake_thrust)
        lin = cx.fit_thrust_linearization(10.0, ct_surface, cp_surface, params, k_bounds)
        assert lin.fit_residual <= 1e-6
        assert lin.zeta1 == pytest.approx(0.0, abs=1e-9)
        assert lin.zeta2 == pytest.approx(0.02, rel=1e-6)
        assert lin.zeta3 == pytest.approx(5.0e4, rel=1e-6)

    def test_constant_field(self, ct_surface, cp_surface, params, k_bounds,
                            monkeypatch):
        monkeypatch.setattr(cx, "thrust_force", lambda *a: 1.0e5)
        lin = cx.fit_thrust_linearization(10.0, ct_surface, cp_surface, params, k_bounds)
        assert lin.zeta1 == pytest.approx(0.0, abs=1e-12)
        assert lin.zeta2 == pytest.approx(0.0, abs=1e-12)
        assert lin.zeta3 == pytest.approx(1.0e5, rel=1e-9)

    def test_residual_shrinks_with_range(self, ct_surface, cp_surface, params,
                                         monkeypatch):
        # On a smooth field with quadratic curvature in K, the affine-fit
        # residual decays with the square of the window width.
        k_rated = cx.kinetic_energy(122.9096, 4653.49)

        def curved(omega_g, beta, v_w, ct, p):
            k = cx.kinetic_energy(omega_g, p.inertia)
            return 1.0e5 + 1e-9 * (k - k_rated) ** 2

        monkeypatch.setattr(cx, "thrust_force", curved)
        wide = cx.fit_thrust_linearization(11.0, ct_surface, cp_surface, params,
                                           (0.5 * k_rated, 1.4 * k_rated))
        narrow = cx.fit_thrust_linearization(11.0, ct_surface, cp_surface, params,
                                             (0.9 * k_rated, 1.1 * k_rated))
        assert narrow.fit_residual <= wide.fit_residual + 1e-9

    def test_custom_beta_policy(self, ct_surface, cp_surface, params, k_bounds):
        # A fully feathered policy collapses thrust (and so the fit) to ~0.
        feathered = cx.fit_thrust_linearization(
            11.0, ct_surface, cp_surface, params, k_bounds,
            beta_policy=lambda p, v, k: params.beta_max)
        default = cx.fit_thrust_linearization(11.0, ct_surface, cp_surface,
                                              params, k_bounds)
        probe = feathered.evaluate(2.0e6, k_bounds[0])
        assert abs(probe) < 0.01 * abs(default.evaluate(2.0e6, k_bounds[0]))

    def test_bad_range_rejected(self, ct_surface, cp_surface, params):
        with pytest.raises(DomainError):
            cx.fit_thrust_linearization(11.0, ct_surface, cp_surface, params, (0.0, 1.0))


class TestLtiModel:
    def test_energy_row_structure(self, thrust_fit, params):
        system = default_tower_system()
        model = cx.assemble_lti(system, thrust_fit, params)
        np.testing.assert_array_equal(model.a[0], 0.0)
        assert model.b[0, 0] == 1.0
        assert model.b[0, 1] == pytest.approx(-1.0 / params.generator_efficiency)
        assert model.c[0] == 0.0

    def test_zero_linearization_decouples_tower(self, params):
        system = default_tower_system()
        lin0 = cx.ThrustLinearization(0.0, 0.0, 0.0, 11.0, 0.0)
        model = cx.assemble_lti(system, lin0, params)
        n = system.n_modes
        np.testing.assert_array_equal(model.a[1:, 0], 0.0)
        np.testing.assert_array_equal(model.b[1:], 0.0)
        np.testing.assert_array_equal(model.c, 0.0)

    def test_tower_eigenvalues(self, thrust_fit, params):
        system = default_tower_system()
        model = cx.assemble_lti(system, thrust_fit, params)
        eigs = np.linalg.eigvals(model.a[1:, 1:])
        for f, z in zip(system.frequencies, system.damping_ratios):
            w = 2.0 * math.pi * f
            target = complex(-z * w, w * math.sqrt(1 - z * z))
            dist = np.min(np.abs(eigs - target))
            assert dist < 1e-9 * w

    def test_power_scaling_similarity(self, thrust_fit, params):
        system = default_tower_system()
        si = cx.assemble_lti(system, thrust_fit, params)
        sc = cx.assemble_lti(system, thrust_fit, params, power_scale=1e-6)
        t = np.eye(si.a.shape[0])
        t[0, 0] = 1e-6
        np.testing.assert_allclose(sc.a, t @ si.a @ np.linalg.inv(t), rtol=1e-12)
        np.testing.assert_allclose(sc.b, t @ si.b / 1e-6, rtol=1e-12)
        np.testing.assert_allclose(sc.c, t @ si.c, rtol=1e-12)


class TestDiscretize:
    def test_zero_a_matrix(self):
        model = cx.LtiModel(a=np.zeros((3, 3)), b=np.arange(6.0).reshape(3, 2),
                            c=np.array([1.0, 0.0, 2.0]), n_modes=1, power_scale=1.0)
        d = cx.discretize(model, 0.5)
        np.testing.assert_allclose(d.a_d, np.eye(3), atol=1e-14)
        np.testing.assert_allclose(d.b_d, 0.5 * model.b, rtol=1e-12)
        np.testing.assert_allclose(d.c_d, 0.5 * model.c, rtol=1e-12)

    def test_scalar_exponential(self):
        model = cx.LtiModel(a=np.array([[-2.0]]), b=np.zeros((1, 2)),
                            c=np.zeros(1), n_modes=0, power_scale=1.0)
        d = cx.discretize(model, 0.3)
        assert d.a_d[0, 0] == pytest.approx(math.exp(-0.6), rel=1e-12)

    def test_semigroup_property(self, thrust_fit, params):
        system = default_tower_system()
        model = cx.assemble_lti(system, thrust_fit, params, power_scale=1e-6)
        full = cx.discretize(model, 0.2)
        half = cx.discretize(model, 0.1)
        np.testing.assert_allclose(full.a_d, half.a_d @ half.a_d,
                                   rtol=1e-10, atol=1e-12)

    def test_matches_fine_rk4(self, thrust_fit, params):
        # ZOH against 1000-substep RK4 over one sample, 1e-8 relative.
        system = default_tower_system()
        model = cx.assemble_lti(system, thrust_fit, params, power_scale=1e-6)
        d = cx.discretize(model, 0.2)
        rng = np.random.default_rng(12)
        x = rng.standard_normal(model.a.shape[0])
        u = rng.uniform(0.0, 5.0, size=2)
        f = lambda xx: model.a @ xx + model.b @ u + model.c
        h = 0.2 / 1000
        xr = x.copy()
        for _ in range(1000):
            k1 = f(xr)
            k2 = f(xr + 0.5 * h * k1)
            k3 = f(xr + 0.5 * h * k2)
            k4 = f(xr + h * k3)
            xr = xr + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        xd = d.a_d @ x + d.b_d @ u + d.c_d
        np.testing.assert_allclose(xd, xr, rtol=1e-8, atol=1e-10)

    def test_bad_dt(self, thrust_fit, params):
        model = cx.assemble_lti(default_tower_system(), thrust_fit, params)
        with pytest.raises(DomainError):
            cx.discretize(model, 0.0)


class TestMinAffineFit:
    def test_affine_target_exact(self):
        k = np.linspace(1.0, 5.0, 50)
        g = 2.0 * k + 3.0
        segs, margin = cx._fit_min_affine(k, g, 4)
        assert segs.shape[0] == 1
        assert margin == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(segs[0], [2.0, 3.0], rtol=1e-12)

    def test_single_segment_underestimates(self):
        k = np.linspace(0.0, 1.0, 100)
        g = np.sqrt(k)  # concave
        segs, margin = cx._fit_min_affine(k, g, 1)
        assert segs.shape[0] == 1
        approx = segs[0, 0] * k + segs[0, 1]
        assert np.all(approx <= g + 1e-12)
        assert margin >= 0.0

    def test_nonconcave_target_still_underestimated(self):
        k = np.linspace(0.0, 2.0, 200)
        g = np.sin(3.0 * k) + 0.2 * k  # wiggly
        segs, margin = cx._fit_min_affine(k, g, 5)
        approx = np.min(segs[:, 0][None, :] * k[:, None] + segs[:, 1][None, :], axis=1)
        assert np.all(approx <= g + 1e-12)
        assert margin >= -1e-12


class TestPwlEnvelope:
    def test_underestimation_everywhere(self, pav_envelope, cp_surface, params):
        # The defining oracle: brute-force sweep of the grid.
        for v in pav_envelope.wind_grid:
            truth = np.array([tb.available_power(v, k, cp_surface, params)
                              for k in pav_envelope.k_grid])
            approx = np.array([cx.eval_pwl(pav_envelope, v, k)
                               for k in pav_envelope.k_grid])
            rel = max(1.0, truth.max())
            assert np.all(approx <= truth + 1e-6 * rel)

    def test_margins_nonnegative(self, pav_envelope, thrust_envelope):
        assert np.all(pav_envelope.margins >= -1e-9)
        assert np.all(thrust_envelope.margins >= -1e-9)

    def test_single_segment_envelope(self, cp_surface, params):
        pwl = cx.build_pwl_available_power(cp_surface, params, n_segments=1)
        assert pwl.n_segments() == 1
        for v in pwl.wind_grid[::5]:
            truth = np.array([tb.available_power(v, k, cp_surface, params)
                              for k in pwl.k_grid])
            approx = np.array([cx.eval_pwl(pwl, v, k) for k in pwl.k_grid])
            assert np.all(approx <= truth + 1e-6 * max(1.0, truth.max()))

    def test_on_grid_wind_reduces_to_single_evaluation(self, pav_envelope):
        v = float(pav_envelope.wind_grid[4])
        k = float(pav_envelope.k_grid[37])
        direct = cx._min_affine(pav_envelope.segments[4], k) * v**3
        assert cx.eval_pwl(pav_envelope, v, k) == pytest.approx(direct, rel=1e-14)

    def test_midpoint_blend_with_identical_segments(self):
        segs = np.array([[0.5, 1.0], [0.1, 3.0]])
        pwl = cx.PwlEnvelope(wind_grid=np.array([4.0, 6.0]),
                             segments=(segs, segs), exponent=3,
                             k_grid=np.linspace(0.0, 10.0, 5),
                             margins=np.zeros(2))
        k = 4.0
        mid = cx.eval_pwl(pwl, 5.0, k)
        lo = cx.eval_pwl(pwl, 4.0, k)
        hi = cx.eval_pwl(pwl, 6.0, k)
        assert mid == pytest.approx(0.5 * (lo + hi), rel=1e-12)

    def test_continuity_at_segment_tie(self):
        segs = np.array([[1.0, 0.0], [-1.0, 4.0]])  # tie at K = 2
        pwl = cx.PwlEnvelope(wind_grid=np.array([5.0]), segments=(segs,),
                             exponent=3, k_grid=np.linspace(0.0, 4.0, 5),
                             margins=np.zeros(1))
        tie = cx.eval_pwl(pwl, 5.0, 2.0)
        assert tie == pytest.approx(2.0 * 125.0, rel=1e-12)
        eps = 1e-9
        left = cx.eval_pwl(pwl, 5.0, 2.0 - eps)
        right = cx.eval_pwl(pwl, 5.0, 2.0 + eps)
        assert left == pytest.approx(tie, abs=1e-3)
        assert right == pytest.approx(tie, abs=1e-3)

    def test_midpoint_concavity(self, pav_envelope, k_bounds):
        rng = np.random.default_rng(21)
        lo, hi = k_bounds
        for _ in range(50):
            v = rng.uniform(3.0, 25.0)
            k1, k2 = rng.uniform(lo, hi, size=2)
            f1 = cx.eval_pwl(pav_envelope, v, k1)
            f2 = cx.eval_pwl(pav_envelope, v, k2)
            fm = cx.eval_pwl(pav_envelope, v, 0.5 * (k1 + k2))
            assert fm >= 0.5 * (f1 + f2) - 1e-9 * max(1.0, abs(f1) + abs(f2))

    def test_cuts_match_blended_eval(self, pav_envelope, k_bounds):
        lo, hi = k_bounds
        for v in (7.3, 11.0, 16.85):
            cuts = cx.pwl_cuts_at_wind(pav_envelope, v, lo, hi)
            kk = np.linspace(lo, hi, 300)
            via_cuts = np.min(cuts[:, 0][None, :] * kk[:, None]
                              + cuts[:, 1][None, :], axis=1)
            via_eval = np.array([cx.eval_pwl(pav_envelope, v, k) for k in kk])
            np.testing.assert_allclose(via_cuts, via_eval, rtol=1e-9, atol=1e-6)

    def test_cut_scaling(self, pav_envelope, k_bounds):
        lo, hi = k_bounds
        plain = cx.pwl_cuts_at_wind(pav_envelope, 9.0, lo, hi, scale=1.0)
        scaled = cx.pwl_cuts_at_wind(pav_envelope, 9.0, lo, hi, scale=1e-6)
        np.testing.assert_allclose(scaled[:, 0], plain[:, 0], rtol=1e-12)
        np.testing.assert_allclose(scaled[:, 1], plain[:, 1] * 1e-6, rtol=1e-12)

    def test_csv_roundtrip(self, pav_envelope, tmp_path):
        path = tmp_path / "pwl.csv"
        cx.save_pwl_csv(pav_envelope, path)
        loaded = cx.load_pwl_csv(path, exponent=3)
        np.testing.assert_allclose(loaded.wind_grid, pav_envelope.wind_grid)
        for a, b in zip(loaded.segments, pav_envelope.segments):
            np.testing.assert_allclose(np.sort(a, axis=0), np.sort(b, axis=0))

    def test_construction_rejects_bad_segment_count(self, cp_surface, params):
        with pytest.raises(ParameterError):
            cx.build_pwl_available_power(cp_surface, params, n_segments=0)


class TestConstraints:
    @pytest.fixture(scope="class")
    def cset(self, params, pav_envelope, thrust_envelope, thrust_fit):
        return cx.build_constraints(params, pav_envelope, thrust_envelope,
                                    thrust_fit, [11.0] * 5, n_modes=2,
                                    power_scale=1e-6)

    def test_zero_input_feasible(self, cset):
        x = np.zeros(5)
        x[0] = 0.5 * (cset.k_lo + cset.k_hi)
        for stage in cset.stages:
            assert stage.violation(x, np.zeros(2), 0.0) <= 1e-9

    def test_overspeed_slack_algebra(self, cset):
        x = np.zeros(5)
        excess = 0.07 * cset.k_rated
        x[0] = cset.k_rated + excess
        stage = cset.stages[0]
        lhs = stage.cx @ x + stage.cu @ np.zeros(2) + stage.ce * excess
        overspeed_rows = np.flatnonzero(stage.ce != 0.0)
        assert overspeed_rows.size == 1
        r = overspeed_rows[0]
        assert lhs[r] - stage.rhs[r] == pytest.approx(0.0, abs=1e-9)

    def test_pav_cut_violation_implies_true_violation(self, cset, params,
                                                      cp_surface, pav_envelope):
        # a point violating every PWL cut must exceed the true envelope
        rng = np.random.default_rng(31)
        s = cset.power_scale
        for _ in range(30):
            k_s = rng.uniform(cset.k_lo, cset.k_hi)
            cuts = cset.epi_cuts[0]
            p_hat = np.min(cuts[:, 0] * k_s + cuts[:, 1])
            p_above = p_hat * 1.01 + 1e-4
            truth = tb.available_power(11.0, k_s / s, cp_surface, params) * s
            if p_above > truth:
                continue  # cannot violate all cuts without exceeding truth
            assert p_above <= truth

    def test_torque_cuts_conservative(self, params, k_bounds):
        lo, hi = k_bounds
        cuts = cx.generator_torque_cuts(params, lo, hi, n_cuts=8)
        coef = (params.generator_efficiency * params.torque_g_max
                * math.sqrt(2.0 / params.inertia))
        kk = np.linspace(lo, hi, 5000)
        envelope = np.min(cuts[:, 0][None, :] * kk[:, None]
                          + cuts[:, 1][None, :], axis=1)
        truth = coef * np.sqrt(kk)
        assert np.all(envelope <= truth + 1e-6)
        # and tight: within 0.1% of the true bound somewhere
        assert np.min(truth - envelope) <= 1e-3 * truth.max()

    def test_rows_are_finite_and_affine(self, cset):
        for stage in cset.stages:
            assert np.all(np.isfinite(stage.cx))
            assert np.all(np.isfinite(stage.cu))
            assert np.all(np.isfinite(stage.ce))
            assert np.all(np.isfinite(stage.rhs))
            assert stage.cx.shape[1] == 5
            assert stage.cu.shape[1] == 2

    def test_forecast_length_checked(self, params, pav_envelope, thrust_envelope,
                                     thrust_fit):
        with pytest.raises(DomainError):
            cx.build_constraints(params, pav_envelope, thrust_envelope,
                                 thrust_fit, [], n_modes=2)

    def test_horizon_matches_forecast(self, cset):
        assert cset.horizon == 5
