"""Mathematical programs over occupancy polytopes.

Every problem here is posed over the same feasible set: the discounted flow
equalities, an optional lower bound on the expected visitation of goal
states, and nonnegativity. Linear programs go to HiGHS (via scipy), concave
quadratic programs to Clarabel. KKT residuals are recomputed here from the
returned primal/dual pair rather than trusted from the backend.

Internally every problem is written in minimisation form::

    minimise    1/2 x'Px + q'x
    subject to  A x = b,   G x <= h,   x >= 0

with multipliers ``y`` (free), ``mu >= 0`` and ``z >= 0``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .mdp import MDPSpec, OccupancyMeasure

log = logging.getLogger(__name__)

KKT_TOL = 1e-6
FEAS_TOL = 1e-8
PHASE1_TOL = 1e-7
MAX_ITER = 10_000

OPTIMAL = "optimal"
LOCAL_OPTIMUM = "local_optimum"
INFEASIBLE = "infeasible"
MAX_ITER_STATUS = "max_iter"

_HIGHS_OPTIONS = {"primal_feasibility_tolerance": 1e-10,
                  "dual_feasibility_tolerance": 1e-10}


@dataclass(frozen=True, eq=False)
class OccupancyPolytope:
    """Feasible occupancy measures of an MDP with a goal-reach requirement.

    Attributes
    ----------
    flow_matrix : sparse (S, S*A)
        Row ``j`` encodes ``sum_a x(j,a) - gamma sum_{s,a} T(s,a,j) x(s,a)``.
    alpha : array (S,)
        Right-hand side of the flow equalities.
    reach_row : array (S*A,)
        ``sum_{q in goal} T(s,a,q)`` for each pair.
    v_reach : float
    extra_eq, extra_rhs : optional additional equality rows
    extra_ge, extra_lower : optional additional rows with ``rows @ x >= lower``
    """

    flow_matrix: sp.csr_matrix
    alpha: np.ndarray
    reach_row: np.ndarray
    v_reach: float
    gamma: float
    shape: tuple
    extra_eq: sp.csr_matrix | None = None
    extra_rhs: np.ndarray | None = None
    extra_ge: sp.csr_matrix | None = None
    extra_lower: np.ndarray | None = None

    @classmethod
    def from_mdp(cls, mdp: MDPSpec, v_reach=0.0, goal_states=None):
        S, A = mdp.shape
        goals = list(mdp.goal_states if goal_states is None else goal_states)
        out = sp.kron(sp.identity(S, format="csr"), np.ones((1, A)), format="csr")
        flow = (out - mdp.gamma * mdp.P.T).tocsr()
        if goals:
            reach = mdp.transition[:, :, goals].sum(axis=2).ravel()
        else:
            reach = np.zeros(S * A)
        if v_reach < 0:
            raise ValueError("v_reach must be nonnegative")
        if v_reach > 0 and not goals:
            raise ValueError("a positive v_reach needs goal states")
        return cls(flow, np.asarray(mdp.alpha, dtype=float), reach, float(v_reach),
                   mdp.gamma, (S, A))

    @property
    def n(self):
        return self.shape[0] * self.shape[1]

    def with_equalities(self, rows, rhs):
        rows = sp.csr_matrix(np.atleast_2d(rows) if not sp.issparse(rows) else rows)
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        if self.extra_eq is not None:
            rows = sp.vstack([self.extra_eq, rows]).tocsr()
            rhs = np.concatenate([self.extra_rhs, rhs])
        return OccupancyPolytope(self.flow_matrix, self.alpha, self.reach_row, self.v_reach,
                                 self.gamma, self.shape, rows, rhs, self.extra_ge,
                                 self.extra_lower)

    def with_lower_bounds(self, rows, lower):
        """Add rows ``rows @ x >= lower`` (e.g. a second goal-reach requirement)."""
        rows = sp.csr_matrix(np.atleast_2d(rows) if not sp.issparse(rows) else rows)
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        if self.extra_ge is not None:
            rows = sp.vstack([self.extra_ge, rows]).tocsr()
            lower = np.concatenate([self.extra_lower, lower])
        return OccupancyPolytope(self.flow_matrix, self.alpha, self.reach_row, self.v_reach,
                                 self.gamma, self.shape, self.extra_eq, self.extra_rhs, rows,
                                 lower)

    def inequality_system(self):
        """All ``>=`` rows written as ``G x <= h`` (None, None when there are none)."""
        rows, rhs = [], []
        if self.v_reach > 0 or self.reach_row.any():
            rows.append(sp.csr_matrix(-self.reach_row[None, :]))
            rhs.append([-self.v_reach])
        if self.extra_ge is not None:
            rows.append(-self.extra_ge)
            rhs.append(-self.extra_lower)
        if not rows:
            return None, None
        return sp.vstack(rows).tocsr(), np.concatenate(rhs)

    def equality_system(self):
        if self.extra_eq is None:
            return self.flow_matrix, self.alpha
        return (sp.vstack([self.flow_matrix, self.extra_eq]).tocsr(),
                np.concatenate([self.alpha, self.extra_rhs]))

    def violations(self, x):
        """Constraint violations of a flat or tabular point."""
        x = np.asarray(x, dtype=float).ravel()
        A, b = self.equality_system()
        G, h = self.inequality_system()
        reach = 0.0 if G is None else float(max(0.0, (G @ x - h).max()))
        return {"flow": float(np.max(np.abs(A @ x - b))),
                "reach": reach,
                "nonneg": float(max(0.0, -x.min()))}

    def contains(self, x, flow_tol=KKT_TOL, reach_tol=FEAS_TOL, neg_tol=1e-9):
        v = self.violations(x)
        return v["flow"] <= flow_tol and v["reach"] <= reach_tol and v["nonneg"] <= neg_tol


@dataclass(eq=False)
class SolveReport:
    """Outcome of a solve. ``solution`` is None unless a point was found."""

    solution: OccupancyMeasure | None
    objective_value: float
    status: str
    kkt_residuals: dict = field(default_factory=dict)
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status in (OPTIMAL, LOCAL_OPTIMUM)

    def summary(self):
        return {"status": self.status, "objective_value": self.objective_value,
                "iterations": self.iterations, "kkt_residuals": self.kkt_residuals,
                **{k: v for k, v in self.info.items() if np.isscalar(v) or v is None}}


@dataclass(frozen=True, eq=False)
class QuadraticPenalty:
    """The term ``weight * ||M x - center||^2``; ``matrix=None`` means identity."""

    weight: float
    center: np.ndarray | float = 0.0
    matrix: sp.spmatrix | np.ndarray | None = None

    def residual(self, x):
        x = np.asarray(x, dtype=float).ravel()
        mx = x if self.matrix is None else self.matrix @ x
        return mx - self.center

    def value(self, x):
        d = self.residual(x)
        return float(self.weight * (d @ d))

    def gradient(self, x):
        d = self.residual(x)
        g = d if self.matrix is None else self.matrix.T @ d
        return 2.0 * self.weight * np.asarray(g).ravel()

    def scaled(self, factor):
        return QuadraticPenalty(self.weight * factor, self.center, self.matrix)


def _kkt(x, P, q, A, b, G, h, y, mu, z):
    grad = q.copy() if P is None else P @ x + q
    stat = grad + A.T @ y + (G.T @ mu if G is not None else 0.0) - z
    primal = [np.max(np.abs(A @ x - b)), max(0.0, -x.min())]
    comp = [np.max(np.abs(z * x))] if len(x) else [0.0]
    if G is not None:
        slack = G @ x - h
        primal.append(max(0.0, slack.max()))
        comp.append(np.max(np.abs(mu * slack)))
    return {"primal": float(max(primal)), "dual": float(np.max(np.abs(stat))),
            "complementarity": float(max(comp))}


def _ineq(polytope):
    return polytope.inequality_system()


def _to_measure(x, polytope):
    x = np.where(x < 0, 0.0, x)
    return OccupancyMeasure(x.reshape(polytope.shape), polytope.gamma)


def _linprog(c, polytope):
    A, b = polytope.equality_system()
    G, h = _ineq(polytope)
    return linprog(c, A_ub=G, b_ub=h, A_eq=A, b_eq=b, bounds=(0, None), method="highs",
                   options=_HIGHS_OPTIONS)


def phase_one(polytope):
    """Minimum total constraint violation of the polytope (0 when nonempty)."""
    A, b = polytope.equality_system()
    m, n = A.shape
    G, h = polytope.inequality_system()
    k = 0 if G is None else G.shape[0]
    I = sp.identity(m, format="csr")
    A1 = sp.hstack([A, I, -I, sp.csr_matrix((m, k))]).tocsr()
    c = np.concatenate([np.zeros(n), np.ones(2 * m + k)])
    G1 = h1 = None
    if k:
        G1 = sp.hstack([G, sp.csr_matrix((k, 2 * m)), -sp.identity(k)]).tocsr()
        h1 = h
    res = linprog(c, A_ub=G1, b_ub=h1, A_eq=A1, b_eq=b, bounds=(0, None),
                  method="highs", options=_HIGHS_OPTIONS)
    return float(res.fun)


def max_reach(polytope):
    """Largest attainable goal-reach value over the flow polytope (extra
    equalities kept, all lower-bound rows dropped)."""
    free = OccupancyPolytope(polytope.flow_matrix, polytope.alpha, polytope.reach_row, 0.0,
                             polytope.gamma, polytope.shape, polytope.extra_eq,
                             polytope.extra_rhs)
    res = _linprog(-polytope.reach_row, free)
    return float(-res.fun) if res.status == 0 else float("nan")


def _infeasible_report(polytope, iterations=0):
    violation = phase_one(polytope)
    info = {"phase1_violation": violation, "max_reach": max_reach(polytope),
            "v_reach": polytope.v_reach}
    return SolveReport(None, float("nan"), INFEASIBLE, {}, iterations, info)


def solve_lp(polytope, c):
    """Minimise ``c'x`` over the polytope; returns (x, kkt, res) or None if infeasible."""
    res = _linprog(c, polytope)
    if res.status == 2:
        return None
    if res.status != 0:
        raise RuntimeError(f"HiGHS failed: {res.message}")
    A, b = polytope.equality_system()
    G, h = _ineq(polytope)
    x = res.x
    y = -res.eqlin.marginals
    mu = -res.ineqlin.marginals if G is not None else None
    z = res.lower.marginals
    return x, _kkt(x, None, c, A, b, G, h, y, mu, z), res


def solve_optimal(polytope: OccupancyPolytope, reward_table) -> SolveReport:
    """Maximise ``sum r(s,a) x(s,a)`` over the polytope."""
    r = np.asarray(reward_table, dtype=float).ravel()
    if r.shape != (polytope.n,):
        raise ValueError(f"reward has {r.size} entries, polytope has {polytope.n}")
    out = solve_lp(polytope, -r)
    if out is None:
        return _infeasible_report(polytope)
    x, kkt, res = out
    sol = _to_measure(x, polytope)
    return SolveReport(sol, float(r @ sol.values.ravel()), OPTIMAL, kkt,
                       int(getattr(res, "nit", 0) or 0))


def _quadratic_matrix(quadratic, n):
    if isinstance(quadratic, QuadraticPenalty):
        return None
    Q = quadratic.toarray() if sp.issparse(quadratic) else np.asarray(quadratic, dtype=float)
    if Q.shape != (n, n):
        raise ValueError(f"quadratic form must be {n}x{n}")
    return 0.5 * (Q + Q.T)


def concave_objective(linear, quadratic):
    """Callable for ``r'x - penalty`` (or ``r'x + x'Qx`` for a matrix form)."""
    r = np.asarray(linear, dtype=float).ravel()
    if quadratic is None:
        return lambda x: float(r @ np.ravel(x))
    if isinstance(quadratic, QuadraticPenalty):
        return lambda x: float(r @ np.ravel(x)) - quadratic.value(x)
    Q = _quadratic_matrix(quadratic, r.size)
    return lambda x: float(r @ np.ravel(x) + np.ravel(x) @ Q @ np.ravel(x))


def solve_concave_qp(polytope, linear_coeffs, quadratic_form=None) -> SolveReport:
    """Globally maximise a concave quadratic over the polytope.

    Parameters
    ----------
    linear_coeffs : array, one entry per state-action pair
    quadratic_form : QuadraticPenalty, array (n, n) or None
        A `QuadraticPenalty` is subtracted from the objective and must have
        a nonnegative weight; a matrix ``Q`` is added as ``x'Qx`` and must be
        negative semidefinite.
    """
    r = np.asarray(linear_coeffs, dtype=float).ravel()
    n = polytope.n
    if r.shape != (n,):
        raise ValueError(f"linear term has {r.size} entries, polytope has {n}")
    if quadratic_form is None or (isinstance(quadratic_form, QuadraticPenalty)
                                  and quadratic_form.weight == 0):
        report = solve_optimal(polytope, r)
        if report.ok:
            report.objective_value = concave_objective(r, quadratic_form)(report.solution.values)
        return report

    A, b = polytope.equality_system()
    G, h = _ineq(polytope)
    k = 0
    if isinstance(quadratic_form, QuadraticPenalty):
        w = float(quadratic_form.weight)
        if w < 0:
            raise ValueError("penalty weight must be nonnegative for a concave objective")
        if quadratic_form.matrix is None:
            P = 2.0 * w * sp.identity(n, format="csc")
            q = -r - 2.0 * w * np.broadcast_to(quadratic_form.center, (n,))
        else:
            # lift u = M x - c so the Hessian stays sparse
            M = sp.csr_matrix(quadratic_form.matrix)
            k = M.shape[0]
            P = sp.block_diag([sp.csc_matrix((n, n)), 2.0 * w * sp.identity(k)], format="csc")
            q = np.concatenate([-r, np.zeros(k)])
            A = sp.vstack([sp.hstack([A, sp.csr_matrix((A.shape[0], k))]),
                           sp.hstack([M, -sp.identity(k)])]).tocsr()
            b = np.concatenate([b, np.broadcast_to(quadratic_form.center, (k,))])
            if G is not None:
                G = sp.hstack([G, sp.csr_matrix((G.shape[0], k))]).tocsr()
    else:
        Q = _quadratic_matrix(quadratic_form, n)
        if np.linalg.eigvalsh(Q).max() > 1e-10 * max(1.0, np.abs(Q).max()):
            raise ValueError("quadratic form is not negative semidefinite")
        P = sp.csc_matrix(-2.0 * Q)
        q = -r
    N = n + k

    m_eq = A.shape[0]
    rows = [A]
    rhs = [b]
    n_ineq = 0
    if G is not None:
        rows.append(G)
        rhs.append(h)
        n_ineq = G.shape[0]
    # x >= 0 only; lifted variables are free
    bound_rows = sp.hstack([-sp.identity(n), sp.csr_matrix((n, k))]).tocsr()
    rows.append(bound_rows)
    rhs.append(np.zeros(n))
    Acl = sp.vstack(rows).tocsc()
    bcl = np.concatenate(rhs)
    cones = [clarabel.ZeroConeT(m_eq), clarabel.NonnegativeConeT(n_ineq + n)]

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = 200
    settings.tol_gap_abs = 1e-10
    settings.tol_gap_rel = 1e-10
    settings.tol_feas = 1e-10
    settings.tol_ktratio = 1e-8
    settings.max_threads = 1
    solver = clarabel.DefaultSolver(sp.triu(P, format="csc"), q, Acl, bcl, cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    if "Infeasible" in status:
        return _infeasible_report(polytope, sol.iterations)
    xa = np.asarray(sol.x)
    za = np.asarray(sol.z)
    y = za[:m_eq]
    mu = za[m_eq:m_eq + n_ineq] if n_ineq else None
    zb = np.concatenate([za[m_eq + n_ineq:], np.zeros(k)])
    kkt = _kkt_bounded(xa, P, q, A, b, G, h, y, mu, zb, n)
    x = xa[:n]
    measure = _to_measure(x, polytope)
    obj = concave_objective(r, quadratic_form)(measure.values)
    if "Solved" not in status:
        st = MAX_ITER_STATUS if "MaxIter" in status else status
        log.warning("Clarabel returned %s", status)
    else:
        st = OPTIMAL
    return SolveReport(measure, obj, st, kkt, int(sol.iterations), {"backend": "clarabel"})


def _kkt_bounded(xa, P, q, A, b, G, h, y, mu, z, n):
    # stationarity over all variables, bounds only on the first n
    grad = P @ xa + q
    stat = grad + A.T @ y - z
    if G is not None:
        stat = stat + G.T @ mu
    x = xa[:n]
    primal = [np.max(np.abs(A @ xa - b)), max(0.0, -x.min())]
    comp = [np.max(np.abs(z[:n] * x))]
    if G is not None:
        slack = G @ xa - h
        primal.append(max(0.0, slack.max()))
        comp.append(np.max(np.abs(mu * slack)))
    return {"primal": float(max(primal)), "dual": float(np.max(np.abs(stat))),
            "complementarity": float(max(comp))}


def _start_points(polytope, r, starts, seed):
    scale = max(1.0, float(np.abs(r).max()))
    for k in range(1, starts):
        rng = np.random.default_rng([seed, k])
        yield k, r + scale * rng.standard_normal(r.size)


def maximize_convex_quadratic(polytope, linear_coeffs, convex_quadratic: QuadraticPenalty,
                              starts=8, seed=0, max_iter=MAX_ITER) -> SolveReport:
    """Local maximiser of ``r'x + penalty(x)`` by iterated linearisation.

    Each step maximises the gradient of the objective at the incumbent over
    the polytope (an LP, so every iterate is a vertex) and is accepted only
    if it improves the objective. Start 0 is the maximiser of the linear term
    alone; the others maximise randomly perturbed linear terms. The best local
    optimum wins, ties going to the lowest start index.
    """
    r = np.asarray(linear_coeffs, dtype=float).ravel()
    if convex_quadratic.weight < 0:
        raise ValueError("penalty weight must be nonnegative for a convex objective")
    base = solve_optimal(polytope, r)
    if not base.ok:
        return base

    def f(x):
        return float(r @ x) + convex_quadratic.value(x)

    if convex_quadratic.weight == 0:
        base.status = LOCAL_OPTIMUM
        base.info.update(starts=1, start_objectives=[base.objective_value], best_start=0)
        return base

    candidates = [(0, base.solution.values.ravel().copy())]
    for k, rk in _start_points(polytope, r, starts, seed):
        out = solve_lp(polytope, -rk)
        candidates.append((k, out[0] if out is not None else None))

    best = None
    total_iter = 0
    objectives = []
    history = {}
    for k, x in candidates:
        if x is None:
            continue
        x = np.where(x < 0, 0.0, x)
        fx = f(x)
        trace = [fx]
        kkt = {}
        for it in range(max_iter):
            g = r + convex_quadratic.gradient(x)
            out = solve_lp(polytope, -g)
            total_iter += 1
            x_new, kkt, _ = out
            x_new = np.where(x_new < 0, 0.0, x_new)
            f_new = f(x_new)
            if f_new <= fx + 1e-12 * max(1.0, abs(fx)):
                break
            x, fx = x_new, f_new
            trace.append(fx)
        objectives.append(fx)
        history[k] = trace
        if best is None or fx > best[1]:
            best = (k, fx, x, kkt)

    k, fx, x, kkt = best
    sol = _to_measure(x, polytope)
    info = {"starts": len(objectives), "start_objectives": objectives, "best_start": k,
            "traces": history, "baseline_objective": f(base.solution.values.ravel())}
    return SolveReport(sol, f(sol.values.ravel()), LOCAL_OPTIMUM, kkt, total_iter, info)
