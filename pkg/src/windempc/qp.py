"""Dense convex quadratic programming.

An operator-splitting (ADMM) solver in the OSQP formulation, with Ruiz
equilibration, per-row step sizes, warm starting, infeasibility
certificates, and an active-set polishing step that pushes KKT residuals
to near machine precision. Also hosts the optimal-steady-state solve used
by the receding-horizon controller.

Problems are posed as

    minimize    0.5 x' H x + g' x
    subject to  A_eq x = b_eq,   A_in x <= b_in,   lb <= x <= ub,

and solved internally over stacked two-sided rows l <= A x <= u.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

from .convex import ConvexConstraintSet, DiscreteModel
from .errors import ParameterError

INF = np.inf

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_MAX_ITER = "max-iterations"


@dataclass(frozen=True)
class KktResiduals:
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementarity)


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    y_eq: np.ndarray
    y_in: np.ndarray
    y_bounds: np.ndarray
    status: str
    kkt: KktResiduals
    iterations: int
    solve_time: float
    objective: float


@dataclass
class QuadraticProgram:
    """Dense QP data; omitted blocks default to empty / unbounded."""

    h: np.ndarray
    g: np.ndarray
    a_eq: np.ndarray = None
    b_eq: np.ndarray = None
    a_in: np.ndarray = None
    b_in: np.ndarray = None
    lb: np.ndarray = None
    ub: np.ndarray = None

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        n = self.g.size
        if self.h.shape != (n, n):
            raise ParameterError(f"H shape {self.h.shape} does not match g ({n})")
        if np.max(np.abs(self.h - self.h.T), initial=0.0) > 1e-12 * max(
                1.0, float(np.max(np.abs(self.h), initial=0.0))):
            raise ParameterError("H must be symmetric")
        self.h = 0.5 * (self.h + self.h.T)
        if self.a_eq is None:
            self.a_eq = np.zeros((0, n))
            self.b_eq = np.zeros(0)
        else:
            self.a_eq = np.atleast_2d(np.asarray(self.a_eq, dtype=float))
            self.b_eq = np.atleast_1d(np.asarray(self.b_eq, dtype=float))
        if self.a_in is None:
            self.a_in = np.zeros((0, n))
            self.b_in = np.zeros(0)
        else:
            self.a_in = np.atleast_2d(np.asarray(self.a_in, dtype=float))
            self.b_in = np.atleast_1d(np.asarray(self.b_in, dtype=float))
        self.lb = np.full(n, -INF) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(n, INF) if self.ub is None else np.asarray(self.ub, dtype=float)
        for name, arr, rows in (("b_eq", self.b_eq, self.a_eq),
                                ("b_in", self.b_in, self.a_in)):
            if arr.size != rows.shape[0]:
                raise ParameterError(f"{name} length {arr.size} != rows {rows.shape[0]}")
        # PSD check: factorization of the regularized matrix must succeed.
        probe = self.h + np.eye(n) * 1e-10 * max(1.0, float(np.trace(self.h)) / max(n, 1))
        try:
            np.linalg.cholesky(probe)
        except np.linalg.LinAlgError as exc:
            raise ParameterError("H is not positive semidefinite") from exc

    @property
    def n(self) -> int:
        return self.g.size


@dataclass
class SolverSettings:
    tolerance: float = 1e-6       # KKT tolerance defining "optimal"
    eps_abs: float = 1e-6         # ADMM termination before the first polish
    eps_rel: float = 1e-6
    eps_infeasible: float = 1e-12
    max_iter: int = 20000
    polish_interval: int = 150   # iterations between polish attempts
    polish_rounds: int = 40
    rho: float = 0.1
    rho_eq_scale: float = 1e3
    sigma: float = 1e-6
    alpha: float = 1.6
    check_every: int = 25
    adaptive_rho: bool = True
    polish: bool = True
    polish_delta: float = 1e-9


class DenseQpSolver:
    """Reusable solver: factorizations persist across vector updates.

    One instance owns mutable workspace and must not be shared across
    threads; distinct instances are independent.
    """

    def __init__(self, qp: QuadraticProgram, settings: SolverSettings | None = None):
        self.settings = settings or SolverSettings()
        self.qp = qp
        n = qp.n
        self.m_eq = qp.a_eq.shape[0]
        self.m_in = qp.a_in.shape[0]
        # stacked rows: equalities, inequalities, variable bounds
        self.a = np.vstack([qp.a_eq, qp.a_in, np.eye(n)])
        self.m = self.a.shape[0]
        self._assemble_bounds()
        self._equilibrate()
        self._update_rho_vector(self.settings.rho)
        self._factorize()
        self.x = np.zeros(n)
        self.z = np.zeros(self.m)
        self.y = np.zeros(self.m)
        self._polish_key = None
        self._polish_lu = None

    # -- data plumbing ------------------------------------------------------

    def _assemble_bounds(self):
        qp = self.qp
        self.l = np.concatenate([qp.b_eq, np.full(self.m_in, -INF), qp.lb])
        self.u = np.concatenate([qp.b_eq, qp.b_in, qp.ub])

    def update_vectors(self, g=None, b_eq=None, b_in=None, lb=None, ub=None):
        """Replace cost/bound vectors without refactorizing."""
        qp = self.qp
        if g is not None:
            qp.g = np.asarray(g, dtype=float)
        if b_eq is not None:
            qp.b_eq = np.asarray(b_eq, dtype=float)
        if b_in is not None:
            qp.b_in = np.asarray(b_in, dtype=float)
        if lb is not None:
            qp.lb = np.asarray(lb, dtype=float)
        if ub is not None:
            qp.ub = np.asarray(ub, dtype=float)
        self._assemble_bounds()
        self._scale_vectors()

    def _equilibrate(self, passes: int = 10):
        """Modified Ruiz scaling of the stacked KKT blocks plus cost scaling."""
        n, m = self.qp.n, self.m
        d = np.ones(n)
        e = np.ones(m)
        h = self.qp.h.copy()
        a = self.a.copy()
        for _ in range(passes):
            col_h = np.max(np.abs(h), axis=0, initial=0.0)
            col_a = np.max(np.abs(a), axis=0, initial=0.0)
            dn = np.sqrt(np.maximum(np.maximum(col_h, col_a), 1e-12))
            row_a = np.max(np.abs(a), axis=1, initial=0.0)
            en = np.sqrt(np.maximum(row_a, 1e-12))
            h = h / dn[:, None] / dn[None, :]
            a = a / en[:, None] / dn[None, :]
            d /= dn
            e /= en
        # cost scaling, OSQP style
        gd = self.qp.g * d
        cost_norm = max(np.max(np.mean(np.abs(h), axis=0), initial=0.0),
                        float(np.max(np.abs(gd), initial=0.0)))
        c = 1.0 / max(cost_norm, 1e-6)
        self.d = d
        self.e = e
        self.c = c
        self.h_s = h * c
        self.a_s = a
        self.at_s = np.ascontiguousarray(a.T)
        self._scale_vectors()

    def _scale_vectors(self):
        self.g_s = self.c * self.qp.g * self.d
        self.l_s = self.e * self.l
        self.u_s = self.e * self.u

    def _update_rho_vector(self, rho: float):
        self.rho_bar = rho
        rho_vec = np.full(self.m, rho)
        rho_vec[: self.m_eq] = rho * self.settings.rho_eq_scale
        # bound rows with both sides infinite are inert
        loose = np.isinf(self.l_s) & np.isinf(self.u_s)
        rho_vec[loose] = min(rho, 1e-6)
        self.rho_vec = rho_vec

    def _factorize(self):
        n = self.qp.n
        mat = self.h_s + self.settings.sigma * np.eye(n)
        mat += (self.a_s * self.rho_vec[:, None]).T @ self.a_s
        self._chol = cho_factor(mat, lower=True)

    # -- main loop ----------------------------------------------------------

    def solve(self, warm_x: np.ndarray | None = None,
              warm_y: np.ndarray | None = None,
              max_iter: int | None = None) -> QpSolution:
        t0 = time.perf_counter()
        st = self.settings
        iter_cap = st.max_iter if max_iter is None else max_iter
        if warm_x is not None:
            self.x = warm_x / self.d
            self.z = self.a_s @ self.x
        if warm_y is not None:
            self.y = self.c * warm_y / self.e
            # A shifted previous solution often already satisfies the KKT
            # conditions (steady operation); skip the iteration entirely.
            if warm_x is not None:
                kkt0 = self._kkt(warm_x, warm_y)
                if kkt0.max() <= st.tolerance:
                    return self._package(warm_x.copy(), warm_y.copy(),
                                         STATUS_OPTIMAL, kkt0, 0, t0)
        total = 0
        eps_scale = 1.0
        x_un = self.d * self.x
        y_un = self.y * self.e / self.c
        kkt = None
        # Interleave short iteration bursts with active-set polish attempts;
        # polished duals are injected back so large multipliers need not be
        # built up in step-size increments.
        while True:
            budget = min(st.polish_interval, iter_cap - total)
            if budget > 0:
                outcome, used = self._iterate(eps_scale, budget)
                total += used
            else:
                outcome = "exhausted"
            x_un = self.d * self.x
            y_un = self.y * self.e / self.c
            if outcome == "infeasible":
                kkt = self._kkt(x_un, y_un)
                return self._package(x_un, y_un, STATUS_INFEASIBLE, kkt, total, t0)
            if st.polish:
                polished = self._polish(x_un, y_un)
                if polished is not None:
                    x_un, y_un = polished
                    self.x = x_un / self.d
                    self.z = np.clip(self.a_s @ self.x, self.l_s, self.u_s)
                    self.y = self.c * y_un / self.e
            kkt = self._kkt(x_un, y_un)
            if kkt.max() <= st.tolerance:
                return self._package(x_un, y_un, STATUS_OPTIMAL, kkt, total, t0)
            if outcome == "exhausted" or total >= iter_cap:
                break
            if outcome == "converged":
                eps_scale *= 1e-2
        return self._package(x_un, y_un, STATUS_MAX_ITER, kkt, total, t0)

    def _iterate(self, eps_scale: float, budget: int):
        st = self.settings
        x, z, y = self.x, self.z, self.y
        x_prev = x.copy()
        y_prev = y.copy()
        rho_updates = 0
        outcome = "exhausted"
        used = budget
        dual_history: list[float] = []
        for k in range(1, budget + 1):
            rhs = st.sigma * x - self.g_s + self.at_s @ (self.rho_vec * z - y)
            x_t = cho_solve(self._chol, rhs)
            z_t = self.a_s @ x_t
            x = st.alpha * x_t + (1.0 - st.alpha) * x
            z_mix = st.alpha * z_t + (1.0 - st.alpha) * z
            z_new = np.clip(z_mix + y / self.rho_vec, self.l_s, self.u_s)
            y = y + self.rho_vec * (z_mix - z_new)
            z = z_new
            if k % st.check_every == 0 or k == budget or k == 5:
                r_prim, r_dual, p_lim, d_lim = self._residuals(x, z, y)
                if r_prim <= p_lim * eps_scale and r_dual <= d_lim * eps_scale:
                    outcome = "converged"
                    used = k
                    break
                # Dual ramps (large multipliers built in rho-sized steps)
                # stagnate the dual residual while the primal is already
                # tight; hand over to the active-set polish instead.
                dual_history.append(r_dual)
                if (r_prim <= p_lim and len(dual_history) >= 5
                        and r_dual > 0.95 * dual_history[-5]):
                    outcome = "stalled"
                    used = k
                    break
                if self._primal_infeasible(y - y_prev) or self._dual_infeasible(x - x_prev):
                    outcome = "infeasible"
                    used = k
                    break
                if st.adaptive_rho and k % (st.check_every * 4) == 0 and rho_updates < 10:
                    scale = np.sqrt((r_prim / max(p_lim, 1e-30))
                                    / max(r_dual / max(d_lim, 1e-30), 1e-30))
                    if scale > 5.0 or scale < 0.2:
                        self._update_rho_vector(float(np.clip(self.rho_bar * scale,
                                                              1e-3, 1e3)))
                        self._factorize()
                        rho_updates += 1
                x_prev = x.copy()
                y_prev = y.copy()
        self.x, self.z, self.y = x, z, y
        return outcome, used

    def _package(self, x, y, status, kkt, iterations, t0):
        obj = float(0.5 * x @ self.qp.h @ x + self.qp.g @ x)
        me, mi = self.m_eq, self.m_in
        sol = QpSolution(
            x=x, y_eq=y[:me], y_in=y[me:me + mi], y_bounds=y[me + mi:],
            status=status, kkt=kkt, iterations=iterations,
            solve_time=time.perf_counter() - t0, objective=obj,
        )
        return sol

    # -- diagnostics --------------------------------------------------------

    def _residuals(self, x, z, y):
        st = self.settings
        ax = self.a_s @ x
        r_prim_s = ax - z
        r_prim = float(np.max(np.abs(r_prim_s / self.e), initial=0.0))
        p_lim = st.eps_abs + st.eps_rel * max(
            float(np.max(np.abs(ax / self.e), initial=0.0)),
            float(np.max(np.abs(z / self.e), initial=0.0)))
        hx = self.h_s @ x
        aty = self.at_s @ y
        r_dual_s = hx + self.g_s + aty
        r_dual = float(np.max(np.abs(r_dual_s / self.d), initial=0.0)) / self.c
        d_lim = st.eps_abs + st.eps_rel * max(
            float(np.max(np.abs(hx / self.d), initial=0.0)),
            float(np.max(np.abs(aty / self.d), initial=0.0)),
            float(np.max(np.abs(self.g_s / self.d), initial=0.0))) / self.c
        return r_prim, r_dual, p_lim, d_lim

    def _primal_infeasible(self, dy) -> bool:
        eps = self.settings.eps_infeasible
        dy_un = dy * self.e / self.c
        norm = float(np.max(np.abs(dy_un), initial=0.0))
        if norm <= 1e-14:
            return False
        dy_n = dy_un / norm
        if float(np.max(np.abs(self.a.T @ dy_n), initial=0.0)) > eps ** 0.5:
            return False
        up = np.maximum(dy_n, 0.0)
        lo = np.minimum(dy_n, 0.0)
        if np.any(up[np.isinf(self.u)] > 1e-12) or np.any(-lo[np.isinf(self.l)] > 1e-12):
            return False
        support = float(np.sum(self.u[np.isfinite(self.u)] * up[np.isfinite(self.u)])
                        + np.sum(self.l[np.isfinite(self.l)] * lo[np.isfinite(self.l)]))
        return support < -eps ** 0.5

    def _dual_infeasible(self, dx) -> bool:
        eps = self.settings.eps_infeasible
        dx_un = self.d * dx
        norm = float(np.max(np.abs(dx_un), initial=0.0))
        if norm <= 1e-14:
            return False
        dx_n = dx_un / norm
        if float(np.max(np.abs(self.qp.h @ dx_n), initial=0.0)) > eps ** 0.5:
            return False
        if float(self.qp.g @ dx_n) > -(eps ** 0.5):
            return False
        adx = self.a @ dx_n
        ok_up = adx <= eps ** 0.5
        ok_lo = adx >= -(eps ** 0.5)
        return bool(np.all(ok_up | np.isinf(self.u))
                    and np.all(ok_lo | np.isinf(self.l)))

    def _kkt(self, x, y) -> KktResiduals:
        qp = self.qp
        ax = self.a @ x
        stat = float(np.max(np.abs(qp.h @ x + qp.g + self.a.T @ y), initial=0.0))
        viol_up = np.maximum(ax - self.u, 0.0)  # inf bounds give -inf -> 0
        viol_lo = np.maximum(self.l - ax, 0.0)
        prim = float(max(np.max(viol_up, initial=0.0), np.max(viol_lo, initial=0.0)))
        ineq = np.ones(self.m, dtype=bool)
        ineq[: self.m_eq] = False
        sign_up = np.where(np.isinf(self.u), np.maximum(y, 0.0), 0.0)
        sign_lo = np.where(np.isinf(self.l), np.maximum(-y, 0.0), 0.0)
        dual = float(np.max(np.where(ineq, np.maximum(sign_up, sign_lo), 0.0),
                            initial=0.0))
        slack_up = np.where(np.isfinite(self.u), self.u - ax, 0.0)
        slack_lo = np.where(np.isfinite(self.l), ax - self.l, 0.0)
        comp_up = np.where(ineq & (y > 0.0) & np.isfinite(self.u), y * slack_up, 0.0)
        comp_lo = np.where(ineq & (y < 0.0) & np.isfinite(self.l), -y * slack_lo, 0.0)
        comp = float(max(np.max(np.abs(comp_up), initial=0.0),
                         np.max(np.abs(comp_lo), initial=0.0)))
        return KktResiduals(stationarity=stat, primal=prim, dual=dual,
                            complementarity=comp)

    # -- polishing ----------------------------------------------------------

    def _solve_active_kkt(self, rows, sides):
        """Regularized KKT solve on an active set, with iterative refinement."""
        st = self.settings
        n, na = self.qp.n, rows.size
        a_act = self.a[rows]
        b_act = np.where(sides > 0, self.u[rows], self.l[rows])
        key = (rows.tobytes(), sides.tobytes())
        if key != self._polish_key:
            kkt = np.zeros((n + na, n + na))
            kkt[:n, :n] = self.qp.h + st.polish_delta * np.eye(n)
            kkt[:n, n:] = a_act.T
            kkt[n:, :n] = a_act
            kkt[n:, n:] = -st.polish_delta * np.eye(na)
            try:
                self._polish_lu = lu_factor(kkt)
            except Exception:
                self._polish_key = None
                return None
            self._polish_key = key
        rhs = np.concatenate([-self.qp.g, b_act])
        try:
            sol = lu_solve(self._polish_lu, rhs)
            prev = np.inf
            for _ in range(3):
                rx = -self.qp.g - self.qp.h @ sol[:n] - a_act.T @ sol[n:]
                ra = b_act - a_act @ sol[:n]
                corr = lu_solve(self._polish_lu, np.concatenate([rx, ra]))
                size = float(np.max(np.abs(corr), initial=0.0))
                if size >= prev:  # refinement diverges on singular systems
                    break
                sol = sol + corr
                prev = size
        except Exception:
            return None
        return sol[:n], sol[n:]

    def _polish(self, x, y):
        """Primal active-set cleanup seeded by the ADMM point.

        Actives are identified from primal slacks (which converge fast even
        when duals lag). Each round solves the equality-constrained KKT on
        the current set; a ratio test walks toward that point, admitting
        the blocking row, and wrong-signed duals leave the set. On LP-flat
        directions the regularized KKT point acts as a ray target and the
        ratio test still finds the blocking vertex.
        """
        eq = np.zeros(self.m, dtype=bool)
        eq[: self.m_eq] = True
        fin_u = np.isfinite(self.u)
        fin_l = np.isfinite(self.l)
        scale_u = 1.0 + np.abs(np.where(fin_u, self.u, 0.0))
        scale_l = 1.0 + np.abs(np.where(fin_l, self.l, 0.0))
        tol_act = 1e-7
        ax = self.a @ x
        near_up = (~eq) & fin_u & (self.u - ax <= tol_act * scale_u)
        near_lo = (~eq) & fin_l & (ax - self.l <= tol_act * scale_l)
        ytol = 1e-9 * max(1.0, float(np.max(np.abs(y), initial=0.0)))
        near_up |= (~eq) & (y > ytol) & fin_u
        near_lo |= (~eq) & (y < -ytol) & fin_l
        sides = np.zeros(self.m, dtype=np.int8)
        sides[near_up] = 1
        sides[near_lo & ~near_up] = -1
        sides[eq] = 1
        best = None
        best_kkt = self._kkt(x, y).max()
        x_cur = x.copy()
        seen = set()
        for _ in range(self.settings.polish_rounds):
            key = sides.tobytes()
            if key in seen:
                break
            seen.add(key)
            rows = np.flatnonzero(sides != 0)
            out = self._solve_active_kkt(rows, sides[rows])
            if out is None:
                break
            x_kkt, lam = out
            step = x_kkt - x_cur
            step_norm = float(np.max(np.abs(step), initial=0.0))
            x_scale = 1.0 + float(np.max(np.abs(x_cur), initial=0.0))
            if step_norm > 1e-11 * x_scale:
                ad = self.a @ step
                ax_cur = self.a @ x_cur
                with np.errstate(divide="ignore", invalid="ignore"):
                    g_up = np.where((sides == 0) & fin_u & (ad > 1e-12),
                                    (self.u - ax_cur) / ad, np.inf)
                    g_lo = np.where((sides == 0) & fin_l & (ad < -1e-12),
                                    (self.l - ax_cur) / ad, np.inf)
                gamma = 1.0
                block = -1
                block_side = 0
                i_up = int(np.argmin(g_up))
                if g_up[i_up] < gamma:
                    gamma, block, block_side = max(float(g_up[i_up]), 0.0), i_up, 1
                i_lo = int(np.argmin(g_lo))
                if g_lo[i_lo] < gamma:
                    gamma, block, block_side = max(float(g_lo[i_lo]), 0.0), i_lo, -1
                if block >= 0:
                    x_cur = x_cur + gamma * step
                    sides[block] = block_side
                    # admit the whole wavefront: rows whose blocking ratio is
                    # comparable to the winner would each cost one more
                    # round; wrong admissions are dropped by the dual signs
                    lim = min(1.0, max(1.5 * gamma, gamma + 1e-9))
                    grab_up = g_up <= lim
                    grab_lo = g_lo <= lim
                    sides[grab_up] = 1
                    sides[grab_lo & ~grab_up] = -1
                    continue
                x_cur = x_kkt
            else:
                x_cur = x_kkt
            # on the manifold optimum: record, then handle wrong-signed
            # multipliers. With a degenerate (redundant) active set the
            # primal is right but the LU dual is sign-ambiguous; recover a
            # valid dual at fixed x by nonnegative least squares before
            # resorting to drops.
            y_p = np.zeros(self.m)
            y_p[rows] = lam
            kk = self._kkt(x_cur, y_p)
            if kk.max() < best_kkt:
                best = (x_cur.copy(), y_p)
                best_kkt = kk.max()
            wrong = np.where(
                (~eq[rows]) & (((sides[rows] > 0) & (lam < -ytol))
                               | ((sides[rows] < 0) & (lam > ytol))),
                np.abs(lam), 0.0)
            if np.max(wrong, initial=0.0) <= 0.0:
                break
            # An over-determined active set leaves the primal right but the
            # multipliers sign-ambiguous (and large, leaking through the
            # regularization). Re-select the set as the support of a
            # sign-constrained least-squares dual and re-solve on it.
            if kk.stationarity <= max(1e-4, 1e2 * self.settings.tolerance):
                y_fix = self._dual_nnls(rows, sides[rows], x_cur)
                if y_fix is not None:
                    kk_fix = self._kkt(x_cur, y_fix)
                    if kk_fix.max() < best_kkt:
                        best = (x_cur.copy(), y_fix.copy())
                        best_kkt = kk_fix.max()
                    if kk_fix.max() <= self.settings.tolerance:
                        break
                    support = np.abs(y_fix) > ytol
                    support[: self.m_eq] = True
                    new_sides = np.where(support, sides, 0).astype(np.int8)
                    new_sides[: self.m_eq] = 1
                    if (new_sides != sides).any() and new_sides.tobytes() not in seen:
                        sides = new_sides
                        continue
            trial = sides.copy()
            trial[rows[wrong > 0.0]] = 0
            if trial.tobytes() in seen:
                sides[rows[int(np.argmax(wrong))]] = 0
            else:
                sides = trial
        return best

    def _dual_nnls(self, rows, sides, x):
        """Sign-feasible duals on an active set at fixed x, or None.

        Solves min || sum_i lam_i s_i a_i + (H x + g) || with lam >= 0;
        equality rows enter with both orientations (free sign).
        """
        from scipy.optimize import nnls

        b = -(self.qp.h @ x + self.qp.g)
        eq_rows = rows < self.m_eq
        a_act = self.a[rows]
        cols = [(a_act[~eq_rows] * sides[~eq_rows, None]).T]
        n_free = int(np.sum(eq_rows))
        if n_free:
            cols.append(a_act[eq_rows].T)
            cols.append(-a_act[eq_rows].T)
        mat = np.hstack(cols)
        try:
            lam, _ = nnls(mat, b, maxiter=10 * mat.shape[1])
        except Exception:
            return None
        y = np.zeros(self.m)
        ni = int(np.sum(~eq_rows))
        y[rows[~eq_rows]] = sides[~eq_rows] * lam[:ni]
        if n_free:
            y[rows[eq_rows]] = lam[ni:ni + n_free] - lam[ni + n_free:]
        return y


def solve_qp(qp: QuadraticProgram, tolerance: float = 1e-6,
             max_iter: int = 20000, **kwargs) -> QpSolution:
    """One-shot solve with fresh workspace."""
    settings = SolverSettings(tolerance=tolerance, max_iter=max_iter, **kwargs)
    return DenseQpSolver(qp, settings).solve()


# ---------------------------------------------------------------------------
# Optimal steady state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SteadyStateObjective:
    """Weights of the economic objective evaluated at a steady state.

    Rate-of-change terms vanish at steady state and are omitted. The
    velocity penalty matrix acts on the modal-velocity block.
    """

    alpha_power: float
    alpha_available: float
    alpha_overspeed: float
    velocity_penalty: np.ndarray  # (n_modes, n_modes)


@dataclass(frozen=True)
class SteadyState:
    x: np.ndarray        # scaled state fixed point
    u: np.ndarray        # scaled input
    eps: float
    available_power: float  # epigraph value at the optimum (scaled)
    fixed_point_residual: float
    solution: QpSolution


def solve_steady_state(model: DiscreteModel, constraints: ConvexConstraintSet,
                       objective: SteadyStateObjective,
                       settings: SolverSettings | None = None) -> SteadyState:
    """Best steady state of the discrete model under the stage constraints.

    Decision variables are (x_s, u_s, eps_s, t_s) with t_s the epigraph of
    the available-power term. Raises nothing on infeasibility; callers
    inspect the returned status.
    """
    nx = model.n_states
    n = nx + 4
    stage = constraints.stages[0]
    cuts = constraints.epi_cuts[0]
    n_modes = model.n_modes
    vm = slice(nx - n_modes, nx)

    h = np.zeros((n, n))
    h[vm, vm] = 2.0 * objective.velocity_penalty
    g = np.zeros(n)
    g[nx + 1] = -objective.alpha_power       # maximize P_g
    g[nx + 3] = -objective.alpha_available   # maximize epigraph of P_av
    g[nx + 2] = objective.alpha_overspeed    # penalize overspeed slack

    a_eq = np.zeros((nx, n))
    a_eq[:, :nx] = np.eye(nx) - model.a_d
    a_eq[:, nx:nx + 2] = -model.b_d
    b_eq = model.c_d.copy()

    m_stage = stage.rhs.size
    a_in = np.zeros((m_stage + cuts.shape[0], n))
    b_in = np.zeros(m_stage + cuts.shape[0])
    a_in[:m_stage, :nx] = stage.cx
    a_in[:m_stage, nx:nx + 2] = stage.cu
    a_in[:m_stage, nx + 2] = stage.ce
    b_in[:m_stage] = stage.rhs
    a_in[m_stage:, nx + 3] = 1.0
    a_in[m_stage:, 0] = -cuts[:, 0]
    b_in[m_stage:] = cuts[:, 1]

    lb = np.full(n, -INF)
    ub = np.full(n, INF)
    lb[nx + 2] = 0.0  # eps >= 0

    qp = QuadraticProgram(h=h, g=g, a_eq=a_eq, b_eq=b_eq, a_in=a_in, b_in=b_in,
                          lb=lb, ub=ub)
    sol = DenseQpSolver(qp, settings or SolverSettings()).solve()
    x_s = sol.x[:nx]
    u_s = sol.x[nx:nx + 2]
    resid = float(np.max(np.abs(x_s - model.a_d @ x_s - model.b_d @ u_s - model.c_d)))
    return SteadyState(x=x_s, u=u_s, eps=float(sol.x[nx + 2]),
                       available_power=float(sol.x[nx + 3]),
                       fixed_point_residual=resid, solution=sol)
