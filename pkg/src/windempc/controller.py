"""Receding-horizon economic controller.

Condensed finite-horizon optimal control problem over the power inputs,
overspeed slack, and available-power epigraph variables; terminal
equality pinning the predicted endpoint to the optimal steady state;
state reconstruction from physical measurements; and the inverse actuator
mapping back to generator torque and pitch.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import convex as cvx
from . import qp as qps
from .errors import DomainError, InfeasibleTargetError, ParameterError
from .tower import ModalSystem
from .turbine import CoeffSurface, TurbineParams, available_power, pitch_inverse

logger = logging.getLogger(__name__)

VARIANT_MULTI = "multi-mode"
VARIANT_SINGLE = "single-mode"
VARIANT_NO_DAMPING = "no-damping"
VARIANTS = (VARIANT_NO_DAMPING, VARIANT_SINGLE, VARIANT_MULTI)

POWER_SCALE = 1e-6  # decision variables carry MW / MJ


@dataclass(frozen=True)
class EmpcConfig:
    """Controller tuning; defaults follow the reference study."""

    horizon: int = 100            # prediction steps
    dt: float = 0.2               # controller sampling time [s]
    alpha_power: float = 1.0          # generated-power reward
    alpha_available: float = 1.0      # available-power reward
    alpha_pg_rate: float = 1.0        # generator-power rate penalty
    alpha_pr_rate: float = 0.01       # rotor-power rate penalty
    alpha_overspeed: float = 100.0    # overspeed-slack penalty
    location_weights: tuple = (100.0, 20.0, 0.0)  # per location, base last
    variant: str = VARIANT_MULTI
    terminal_constraint: bool = True
    wind_refit_threshold: float = 0.5     # m/s; thrust-fit validity band
    steady_state_threshold: float = 0.1   # m/s; steady-state cache band
    n_torque_cuts: int = 8
    check_recursive_feasibility: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ParameterError(f"horizon must be >= 1, got {self.horizon}")
        if self.dt <= 0.0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        weights = (self.alpha_power, self.alpha_available, self.alpha_pg_rate,
                   self.alpha_pr_rate, self.alpha_overspeed)
        if any(w < 0.0 for w in weights) or any(w < 0.0 for w in self.location_weights):
            raise ParameterError("objective weights must be nonnegative")
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown variant {self.variant!r}")


@dataclass(frozen=True)
class ControlCommand:
    torque_g: float      # N m
    beta: float          # rad
    p_rotor: float       # commanded rotor power [W]
    p_gen: float         # commanded generator power [W]
    k_predicted: float   # one-step-ahead kinetic energy [J]


def velocity_objective(v_m: np.ndarray, shape_matrix: np.ndarray,
                       weights: np.ndarray) -> float:
    """Weighted squared physical velocity over the tower locations."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0.0):
        raise ParameterError("location weights must be nonnegative")
    q = velocity_penalty_matrix(shape_matrix, w)
    v = np.asarray(v_m, dtype=float)
    return float(v @ q @ v)


def velocity_penalty_matrix(shape_matrix: np.ndarray, weights) -> np.ndarray:
    q = shape_matrix @ np.diag(np.asarray(weights, dtype=float)) @ shape_matrix.T
    return 0.5 * (q + q.T)


@dataclass
class CondensedFhocp:
    """States eliminated through the dynamics; decisions are (U, eps, t).

    U stacks the horizon inputs (rotor power, generator power) in model
    units; eps is the scalar overspeed slack; t(q) is the epigraph of the
    available-power term at step q.
    """

    model: cvx.DiscreteModel
    constraints: cvx.ConvexConstraintSet
    config: EmpcConfig
    velocity_penalty: np.ndarray
    terminal: bool

    def __post_init__(self):
        np_h = self.constraints.horizon
        nx = self.model.n_states
        nu = 2
        self.n_u = nu * np_h
        self.n = self.n_u + 1 + np_h  # + eps + epigraph block
        self.idx_eps = self.n_u
        self.idx_t = self.n_u + 1
        a_d, b_d, c_d = self.model.a_d, self.model.b_d, self.model.c_d

        # prediction: X = F x0 + G U + h, X stacks x(0..Np)
        powers = [np.eye(nx)]
        for _ in range(np_h):
            powers.append(a_d @ powers[-1])
        self.f_mat = np.vstack(powers)
        g_mat = np.zeros(((np_h + 1) * nx, self.n_u))
        h_vec = np.zeros((np_h + 1) * nx)
        acc = np.zeros(nx)
        for q in range(1, np_h + 1):
            acc = a_d @ acc + c_d
            h_vec[q * nx:(q + 1) * nx] = acc
            for j in range(q):
                g_mat[q * nx:(q + 1) * nx, nu * j:nu * (j + 1)] = \
                    powers[q - 1 - j] @ b_d
        self.g_mat = g_mat
        self.h_vec = h_vec
        self.nx = nx

        self._build_objective()
        self._build_rows()

    # -- objective ----------------------------------------------------------

    def _build_objective(self):
        cfg = self.config
        np_h = self.constraints.horizon
        nx, nu = self.nx, 2
        n_modes = self.model.n_modes
        vm = slice(nx - n_modes, nx)
        # quadratic: velocity penalty through the predictions (stages 1..Np-1;
        # stage 0 is data) plus input-rate terms
        quad = np.zeros((self.n, self.n))
        lin_const = np.zeros(self.n)
        self._lin_x0 = np.zeros((self.n, nx))
        for q in range(1, np_h):
            g_q = self.g_mat[q * nx:(q + 1) * nx][vm]
            f_q = self.f_mat[q * nx:(q + 1) * nx][vm]
            h_q = self.h_vec[q * nx:(q + 1) * nx][vm]
            quad[: self.n_u, : self.n_u] += g_q.T @ self.velocity_penalty @ g_q
            cross = 2.0 * g_q.T @ self.velocity_penalty
            self._lin_x0[: self.n_u] += cross @ f_q
            lin_const[: self.n_u] += cross @ h_q
        # one difference term per step: (u(q) - u(q-1)), u(-1) = applied input
        rate = np.array([cfg.alpha_pr_rate, cfg.alpha_pg_rate]) / cfg.dt**2
        for q in range(np_h):
            s = slice(nu * q, nu * (q + 1))
            quad[s, s] += np.diag(rate)
            if q >= 1:
                sp = slice(nu * (q - 1), nu * q)
                quad[sp, sp] += np.diag(rate)
                quad[s, sp] -= np.diag(rate)
                quad[sp, s] -= np.diag(rate)
        self._rate = rate
        self.hessian = 2.0 * quad
        # linear: power rewards, slack penalty, epigraph rewards
        for q in range(np_h):
            lin_const[nu * q + 1] += -cfg.alpha_power
        lin_const[self.idx_eps] = cfg.alpha_overspeed
        lin_const[self.idx_t:] = -cfg.alpha_available
        self._lin_const = lin_const

    def gradient_for(self, x0: np.ndarray, u_prev: np.ndarray) -> np.ndarray:
        g = self._lin_const + self._lin_x0 @ x0
        g[0:2] += -2.0 * self._rate * u_prev
        return g

    # -- constraints ---------------------------------------------------------

    def _build_rows(self):
        np_h = self.constraints.horizon
        nx, nu = self.nx, 2
        rows, rhs_base, rhs_x0 = [], [], []
        for q in range(np_h):
            stage = self.constraints.stages[q]
            g_q = self.g_mat[q * nx:(q + 1) * nx]
            f_q = self.f_mat[q * nx:(q + 1) * nx]
            h_q = self.h_vec[q * nx:(q + 1) * nx]
            m_q = stage.rhs.size
            block = np.zeros((m_q, self.n))
            block[:, : self.n_u] = stage.cx @ g_q
            block[:, nu * q:nu * (q + 1)] += stage.cu
            block[:, self.idx_eps] = stage.ce
            rows.append(block)
            rhs_base.append(stage.rhs - stage.cx @ h_q)
            rhs_x0.append(stage.cx @ f_q)
            cuts = self.constraints.epi_cuts[q]
            k_row_g = g_q[0]
            k_f = f_q[0]
            k_h = h_q[0]
            eb = np.zeros((cuts.shape[0], self.n))
            eb[:, self.idx_t + q] = 1.0
            eb[:, : self.n_u] = -np.outer(cuts[:, 0], k_row_g)
            rows.append(eb)
            rhs_base.append(cuts[:, 1] + cuts[:, 0] * k_h)
            rhs_x0.append(np.outer(-cuts[:, 0], k_f))
        self.a_in = np.vstack(rows)
        self._b_base = np.concatenate(rhs_base)
        self._b_x0 = np.vstack(rhs_x0)
        lb = np.full(self.n, -np.inf)
        ub = np.full(self.n, np.inf)
        lb[self.idx_eps] = 0.0
        self.lb, self.ub = lb, ub
        if self.terminal:
            q = np_h
            self.a_eq = self.g_mat[q * nx:(q + 1) * nx]
            self._f_term = self.f_mat[q * nx:(q + 1) * nx]
            self._h_term = self.h_vec[q * nx:(q + 1) * nx]
        else:
            self.a_eq = np.zeros((0, self.n_u))
            self._f_term = None
            self._h_term = None

    def b_in_for(self, x0: np.ndarray) -> np.ndarray:
        return self._b_base - self._b_x0 @ x0

    def b_eq_for(self, x0: np.ndarray, x_s: np.ndarray) -> np.ndarray:
        if not self.terminal:
            return np.zeros(0)
        return x_s - self._f_term @ x0 - self._h_term

    def qp_for(self, x0: np.ndarray, u_prev: np.ndarray,
               x_s: np.ndarray | None) -> qps.QuadraticProgram:
        a_eq = None
        b_eq = None
        if self.terminal:
            a_eq = np.zeros((self.nx, self.n))
            a_eq[:, : self.n_u] = self.a_eq
            b_eq = self.b_eq_for(x0, x_s)
        return qps.QuadraticProgram(
            h=self.hessian, g=self.gradient_for(x0, u_prev),
            a_eq=a_eq, b_eq=b_eq, a_in=self.a_in, b_in=self.b_in_for(x0),
            lb=self.lb, ub=self.ub,
        )

    def predict(self, x0: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Stacked predicted states for a decision vector."""
        x_stack = self.f_mat @ x0 + self.g_mat @ z[: self.n_u] + self.h_vec
        return x_stack.reshape(-1, self.nx)


def assemble_fhocp(config: EmpcConfig, model: cvx.DiscreteModel,
                   constraints: cvx.ConvexConstraintSet, x0: np.ndarray,
                   x_s: np.ndarray | None, u_prev: np.ndarray,
                   velocity_penalty: np.ndarray) -> qps.QuadraticProgram:
    """One-shot condensed FHOCP assembly (terminal equality when x_s given)."""
    cond = CondensedFhocp(model=model, constraints=constraints, config=config,
                          velocity_penalty=velocity_penalty,
                          terminal=x_s is not None and config.terminal_constraint)
    return cond.qp_for(np.asarray(x0, dtype=float), np.asarray(u_prev, dtype=float),
                       None if x_s is None else np.asarray(x_s, dtype=float))


@dataclass
class StepDiagnostics:
    status: str
    iterations: int
    solve_time: float
    kkt_max: float
    eps: float
    terminal_gap: float
    tail_distance: float
    steady_state_residual: float
    fallback: str               # "", "no-terminal", "hold"
    shifted_feasible: bool | None
    k_state: float              # measured kinetic energy, model units
    x_s: np.ndarray
    u_s: np.ndarray
    predicted: np.ndarray | None


class EmpcController:
    """Single-owner receding-horizon controller instance."""

    def __init__(self, params: TurbineParams, system: ModalSystem,
                 cp: CoeffSurface, ct: CoeffSurface,
                 config: EmpcConfig | None = None,
                 pwl: cvx.PwlEnvelope | None = None,
                 fmax: cvx.PwlEnvelope | None = None,
                 debug_log=None):
        self.params = params
        self.system = system
        self.cp = cp
        self.ct = ct
        self.config = config or EmpcConfig()
        self.scale = POWER_SCALE
        self.pwl = pwl if pwl is not None else cvx.build_pwl_available_power(cp, params)
        self.fmax = fmax if fmax is not None else cvx.build_pwl_max_thrust(ct, params)
        w = np.asarray(self.config.location_weights, dtype=float)
        n_loc = system.locations.n_locations
        if w.size != n_loc:
            raise ParameterError(
                f"need one location weight per location ({n_loc}), got {w.size}")
        self.velocity_penalty = velocity_penalty_matrix(system.shape_matrix, w)
        self._k_band = (cvx.kinetic_energy(params.omega_g_min, params.inertia),
                        cvx.kinetic_energy(params.omega_g_max, params.inertia))
        s_t = system.shape_matrix.T
        self._recon = np.linalg.pinv(s_t)
        cond = np.linalg.cond(s_t[:-1] if n_loc > system.n_modes else s_t)
        if cond > 1e6:
            logger.warning("shape-matrix conditioning %.2e; state reconstruction "
                           "may be inaccurate", cond)
        self._debug_log = debug_log

        self.lin: cvx.ThrustLinearization | None = None
        self.model: cvx.DiscreteModel | None = None
        self.constraints: cvx.ConvexConstraintSet | None = None
        self._rows_wind: float | None = None
        self.condensed: CondensedFhocp | None = None
        self._solver: qps.DenseQpSolver | None = None
        self._fallback_condensed: CondensedFhocp | None = None
        self._ss: qps.SteadyState | None = None
        self._ss_wind: float | None = None
        self.u_prev: np.ndarray | None = None
        self._warm_z: np.ndarray | None = None
        self._warm_y: np.ndarray | None = None
        self._last_command: ControlCommand | None = None
        self.last_diagnostics: StepDiagnostics | None = None
        self._time = 0.0

    # -- model refresh -------------------------------------------------------

    def _refresh(self, v_w: float):
        cfg = self.config
        need_fit = (self.lin is None
                    or abs(v_w - self.lin.valid_wind) > cfg.wind_refit_threshold)
        need_rows = (need_fit or self._rows_wind is None
                     or abs(v_w - self._rows_wind) > 1e-12)
        if need_fit:
            self.lin = cvx.fit_thrust_linearization(
                v_w, self.ct, self.cp, self.params, self._k_band)
            lti = cvx.assemble_lti(self.system, self.lin, self.params,
                                   power_scale=self.scale)
            self.model = cvx.discretize(lti, cfg.dt)
        if need_rows:
            forecast = np.full(cfg.horizon, v_w)
            self.constraints = cvx.build_constraints(
                self.params, self.pwl, self.fmax, self.lin, forecast,
                n_modes=self.system.n_modes, power_scale=self.scale,
                n_torque_cuts=cfg.n_torque_cuts)
            self._rows_wind = v_w
            self.condensed = CondensedFhocp(
                model=self.model, constraints=self.constraints, config=cfg,
                velocity_penalty=self.velocity_penalty,
                terminal=cfg.terminal_constraint)
            self._solver = None
            self._fallback_condensed = None
            self._warm_z = None
            self._warm_y = None
        need_ss = (self._ss is None
                   or abs(v_w - self._ss_wind) > cfg.steady_state_threshold
                   or need_rows)
        if need_ss:
            objective = qps.SteadyStateObjective(
                alpha_power=cfg.alpha_power, alpha_available=cfg.alpha_available,
                alpha_overspeed=cfg.alpha_overspeed,
                velocity_penalty=self.velocity_penalty)
            self._ss = qps.solve_steady_state(self.model, self.constraints, objective)
            self._ss_wind = v_w
            if self._ss.solution.status != qps.STATUS_OPTIMAL:
                logger.warning("steady-state problem %s at v_w=%.2f; terminal "
                               "constraint disabled for this wind",
                               self._ss.solution.status, v_w)

    @property
    def steady_state(self) -> qps.SteadyState:
        return self._ss

    # -- measurements --------------------------------------------------------

    def reconstruct_state(self, omega_g: float, x_p: np.ndarray,
                          v_p: np.ndarray) -> np.ndarray:
        """Model state from measured speed and physical tower motion."""
        k = cvx.kinetic_energy(omega_g, self.params.inertia) * self.scale
        x_m = self._recon @ np.asarray(x_p, dtype=float)
        v_m = self._recon @ np.asarray(v_p, dtype=float)
        return np.concatenate(([k], x_m, v_m))

    # -- main step ------------------------------------------------------------

    def control_step(self, omega_g: float, x_p: np.ndarray, v_p: np.ndarray,
                     v_w: float) -> ControlCommand:
        if not (np.isfinite(omega_g) and np.all(np.isfinite(x_p))
                and np.all(np.isfinite(v_p))):
            raise DomainError("measurements must be finite")
        if v_w <= 0.0:
            raise DomainError(f"wind speed must be positive, got {v_w}")
        cfg = self.config
        self._refresh(v_w)
        x0 = self.reconstruct_state(omega_g, x_p, v_p)
        ss_ok = self._ss.solution.status == qps.STATUS_OPTIMAL
        use_terminal = cfg.terminal_constraint and ss_ok
        if self.u_prev is None:
            self.u_prev = self._ss.u.copy()

        shifted_feasible = None
        if cfg.check_recursive_feasibility and self._warm_z is not None and use_terminal:
            shifted_feasible = self._shifted_candidate_feasible(x0)

        sol, used_terminal = self._solve_fhocp(x0, use_terminal)
        predicted = None
        terminal_gap = math.nan
        tail = math.nan
        if sol is not None and sol.status == qps.STATUS_OPTIMAL:
            cond = self.condensed if used_terminal == self.condensed.terminal \
                else self._fallback_condensed
            z = sol.x
            u0 = z[0:2]
            predicted = cond.predict(x0, z)
            diff = np.abs(predicted - self._ss.x[None, :])
            tail = float(np.max(diff[predicted.shape[0] // 2:]))
            terminal_gap = float(np.max(np.abs(predicted[-1] - self._ss.x)))
            eps_val = float(z[cond.idx_eps])
            self.u_prev = u0.copy()
            self._store_warm(z, sol, used_terminal)
            command = self._to_actuators(u0, x0, v_w)
            self._last_command = command
            fb = "no-terminal" if (use_terminal and not used_terminal) else ""
        elif self._last_command is not None:
            logger.warning("FHOCP %s at t=%.1f s; holding previous command",
                           "failed" if sol is None else sol.status, self._time)
            command = self._last_command
            eps_val = math.nan
            fb = "hold"
        else:
            raise DomainError(
                "FHOCP infeasible at the first control step; check scenario")
        self.last_diagnostics = StepDiagnostics(
            status="held" if fb == "hold" else sol.status,
            iterations=0 if fb == "hold" else sol.iterations,
            solve_time=0.0 if fb == "hold" else sol.solve_time,
            kkt_max=math.nan if fb == "hold" else sol.kkt.max(),
            eps=eps_val, terminal_gap=terminal_gap, tail_distance=tail,
            steady_state_residual=self._ss.fixed_point_residual,
            fallback=fb, shifted_feasible=shifted_feasible,
            k_state=float(x0[0]), x_s=self._ss.x.copy(), u_s=self._ss.u.copy(),
            predicted=predicted)
        self._emit_debug()
        self._time += cfg.dt
        return command

    def _seed_from_steady_state(self):
        """Primal/dual warm start replicating the steady-state solution.

        The per-stage constraint rows equal the steady-state problem's rows
        at this wind, so its multipliers tile across the horizon.
        """
        ss = self._ss
        cond = self.condensed
        np_h = self.config.horizon
        z = np.concatenate([np.tile(ss.u, np_h), [max(ss.eps, 0.0)],
                            np.full(np_h, ss.available_power)])
        y_in = np.tile(ss.solution.y_in, np_h)
        y_eq = np.zeros(self.model.n_states) if cond.terminal else np.zeros(0)
        y_b = np.zeros(cond.n)
        y_b[cond.idx_eps] = ss.solution.y_bounds[self.model.n_states + 2]
        return z, np.concatenate([y_eq, y_in, y_b])

    def _update_and_solve(self, x0, u_prev, use_terminal, **solve_kw):
        kw = {"g": self.condensed.gradient_for(x0, u_prev),
              "b_in": self.condensed.b_in_for(x0)}
        if use_terminal:
            kw["b_eq"] = self.condensed.b_eq_for(x0, self._ss.x)
        self._solver.update_vectors(**kw)
        sol = self._solver.solve(warm_x=self._warm_z, warm_y=self._warm_y,
                                 **solve_kw)
        if sol.status == qps.STATUS_OPTIMAL:
            self._warm_z = sol.x.copy()
            self._warm_y = np.concatenate([sol.y_eq, sol.y_in, sol.y_bounds])
        return sol

    def _solve_continuation(self, x0, use_terminal):
        """Walk the initial state from the steady state to the measurement.

        The tiled steady-state plan is exactly optimal at x0 = x_s; each
        blend differs only in constraint vectors, so warm-started re-solves
        track the drifting active set cheaply. Failed blends are cheap
        (small budget) and simply shrink the step.
        """
        anchor = self._ss.x
        self._warm_z, self._warm_y = self._seed_from_steady_state()
        tau = 0.0
        step = 0.125
        sol = None
        cand = None
        for _ in range(40):
            target = min(1.0, tau + step)
            blend = (1.0 - target) * anchor + target * x0
            final = target >= 1.0
            cand = self._update_and_solve(blend, self.u_prev, use_terminal,
                                          max_iter=None if final else 450)
            if cand.status == qps.STATUS_OPTIMAL:
                sol = cand
                tau = target
                if tau >= 1.0:
                    return sol
                step = min(2.0 * step, 1.0 - tau)
            else:
                step *= 0.25
                if step < 1e-3:
                    return cand
        return sol if sol is not None and tau >= 1.0 else cand

    def _solve_fhocp(self, x0, use_terminal):
        """Returns (solution, used_terminal)."""
        cfg = self.config
        if use_terminal == self.condensed.terminal:
            fresh = self._solver is None
            if fresh:
                qp = self.condensed.qp_for(
                    x0, self.u_prev, self._ss.x if use_terminal else None)
                self._solver = qps.DenseQpSolver(
                    qp, qps.SolverSettings(max_iter=4000))
            if fresh or self._warm_z is None:
                sol = self._solve_continuation(x0, use_terminal)
            else:
                sol = self._update_and_solve(x0, self.u_prev, use_terminal)
                if sol.status != qps.STATUS_OPTIMAL:
                    sol = self._solve_continuation(x0, use_terminal)
            if sol is not None and (sol.status == qps.STATUS_OPTIMAL
                                    or not use_terminal):
                return sol, use_terminal
            logger.warning("terminal-constrained FHOCP %s; retrying without "
                           "terminal equality",
                           "failed" if sol is None else sol.status)
        # relaxed problem (no terminal rows)
        if self._fallback_condensed is None:
            self._fallback_condensed = CondensedFhocp(
                model=self.model, constraints=self.constraints, config=cfg,
                velocity_penalty=self.velocity_penalty, terminal=False)
        qp = self._fallback_condensed.qp_for(x0, self.u_prev, None)
        sol = qps.DenseQpSolver(qp, qps.SolverSettings(max_iter=3000)).solve(
            warm_x=self._warm_z)
        return sol, False

    def _store_warm(self, z, sol, used_terminal):
        cond = self.condensed if used_terminal == self.condensed.terminal \
            else self._fallback_condensed
        nu = 2
        n_u = cond.n_u
        np_h = self.config.horizon
        u = z[:n_u].reshape(np_h, nu)
        u_shift = np.vstack([u[1:], self._ss.u[None, :]])
        t = z[cond.idx_t:]
        t_shift = np.concatenate([t[1:], t[-1:]])
        warm = np.concatenate([u_shift.ravel(), [z[cond.idx_eps]], t_shift])
        self._warm_z = warm
        if used_terminal == self.condensed.terminal:
            self._warm_y = np.concatenate([sol.y_eq, sol.y_in, sol.y_bounds])
        else:
            self._warm_y = None

    def _shifted_candidate_feasible(self, x0, tol: float = 1e-6) -> bool:
        """Check the shifted previous plan appended with u_s against the rows."""
        cond = self.condensed
        z = self._warm_z
        b_in = cond.b_in_for(x0)
        viol = float(np.max(self.condensed.a_in @ z - b_in, initial=0.0))
        scale = 1.0 + float(np.max(np.abs(b_in), initial=0.0))
        return viol <= tol * scale

    # -- actuator mapping ------------------------------------------------------

    def _to_actuators(self, u0_scaled, x0, v_w) -> ControlCommand:
        params = self.params
        p_r = float(u0_scaled[0] / self.scale)
        p_g = float(u0_scaled[1] / self.scale)
        x1 = self.model.a_d @ x0 + self.model.b_d @ u0_scaled + self.model.c_d
        k_pred = float(x1[0] / self.scale)
        k_pred = max(k_pred, 1e-9)
        omega_pred = cvx.omega_from_energy(k_pred, params.inertia)
        torque = p_g / (params.generator_efficiency * omega_pred)
        if torque > params.torque_g_max * (1.0 + 1e-9):
            logger.warning("torque command %.1f clipped to limit %.1f",
                           torque, params.torque_g_max)
        torque = float(np.clip(torque, 0.0, params.torque_g_max))
        p_av = available_power(v_w, k_pred, self.cp, params)
        p_r_clamped = min(max(p_r, 0.0), p_av)
        if p_r_clamped < p_r - 1e-6 * max(1.0, p_r):
            logger.debug("rotor-power target clamped from %.1f to %.1f W",
                         p_r, p_r_clamped)
        beta = pitch_inverse(p_r_clamped, v_w, k_pred, self.cp, params)
        return ControlCommand(torque_g=torque, beta=float(beta), p_rotor=p_r,
                              p_gen=p_g, k_predicted=k_pred)

    def _emit_debug(self):
        if self._debug_log is None or self.last_diagnostics is None:
            return
        d = self.last_diagnostics
        rec = {
            "t": round(self._time, 6), "status": d.status,
            "iterations": d.iterations, "solve_time": d.solve_time,
            "kkt_max": d.kkt_max, "eps": d.eps,
            "terminal_gap": d.terminal_gap, "tail_distance": d.tail_distance,
            "fallback": d.fallback,
        }
        self._debug_log.write(json.dumps(rec) + "\n")


def make_controller(variant: str, params: TurbineParams, cp: CoeffSurface,
                    ct: CoeffSurface, config: EmpcConfig | None = None,
                    tower_kwargs: dict | None = None, **kwargs) -> EmpcController:
    """Build a controller variant sharing the plant configuration.

    The controller-side tower model carries two modes for the multi-mode
    and no-damping variants (the latter zeroes the velocity weights) and a
    single mode for the single-mode baseline.
    """
    from .config import default_tower_system

    cfg = config or EmpcConfig()
    tower_kwargs = dict(tower_kwargs or {})
    if variant == VARIANT_MULTI:
        cfg = replace(cfg, variant=variant)
        system = default_tower_system(n_modes=2, **tower_kwargs)
    elif variant == VARIANT_NO_DAMPING:
        cfg = replace(cfg, variant=variant,
                      location_weights=tuple(0.0 for _ in cfg.location_weights))
        system = default_tower_system(n_modes=2, **tower_kwargs)
    elif variant == VARIANT_SINGLE:
        w = list(cfg.location_weights)
        for i in range(1, len(w)):
            w[i] = 0.0
        cfg = replace(cfg, variant=variant, location_weights=tuple(w))
        system = default_tower_system(n_modes=1, **tower_kwargs)
    else:
        raise ParameterError(f"unknown variant {variant!r}")
    return EmpcController(params, system, cp, ct, config=cfg, **kwargs)
