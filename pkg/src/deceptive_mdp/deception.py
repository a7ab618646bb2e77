"""Deceptive policy synthesis and revenue-loss bounds.

Three regularised versions of the goal-reach LP:

* diversionary: reward plus ``beta * ||x - x_star||^2`` (convex, solved
  locally by multistart linearisation),
* targeted: reward minus ``beta * ||x - x_tar||^2`` (concave QP),
* equivocal: reward minus ``beta * gap(x)^2`` where ``gap`` is the goal
  visitation minus the decoy visitation (concave QP); the exact variant
  imposes ``gap(x) = 0`` as a constraint instead.

Each comes with a closed-form upper bound on the fractional revenue loss
that is linear in ``beta``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import InfeasibleError, SpecError
from .mdp import (MDPSpec, OccupancyMeasure, occupancy_of_policy, policy_of_occupancy,
                  revenue, revenue_loss)
from .solver import (OccupancyPolytope, QuadraticPenalty, SolveReport, maximize_convex_quadratic,
                     solve_concave_qp, solve_optimal)

KINDS = ("diversionary", "targeted", "equivocal_exact", "equivocal_soft")
BOUND_SLACK = 1e-9


@dataclass
class DeceptionConfig:
    """What to synthesise. ``kind="equivocal"`` is read as the soft problem."""

    kind: str
    beta: float = 0.0
    v_reach: float = 0.0
    x_tar: np.ndarray | None = None
    decoy_states: tuple | None = None
    goal_states: tuple | None = None
    starts: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.kind == "equivocal":
            self.kind = "equivocal_soft"
        if self.kind not in KINDS:
            raise SpecError(f"unknown deception kind {self.kind!r}; expected one of {KINDS}")
        if self.beta < 0:
            raise SpecError("beta must be nonnegative")
        if self.kind == "targeted":
            if self.x_tar is None:
                raise SpecError("targeted deception needs x_tar")
            xt = _values(self.x_tar)
            if (xt < 0).any():
                raise SpecError("x_tar must be nonnegative")
        if self.kind.startswith("equivocal"):
            if not self.decoy_states:
                raise SpecError("equivocal deception needs decoy_states")
            if self.goal_states is not None and set(self.goal_states) & set(self.decoy_states):
                raise SpecError("decoy states must be disjoint from goal states")


def _values(x):
    return x.values if isinstance(x, OccupancyMeasure) else np.asarray(x, dtype=float)


def visitation_gap(x, goal_states, decoy_states):
    """Total visitation of goal states minus that of decoy states."""
    v = _values(x)
    return float(v[list(goal_states)].sum() - v[list(decoy_states)].sum())


def gap_row(shape, goal_states, decoy_states):
    S, A = shape
    row = np.zeros((S, A))
    row[list(goal_states)] += 1.0
    row[list(decoy_states)] -= 1.0
    return sp.csr_matrix(row.reshape(1, -1))


def _polytope(mdp, config):
    return OccupancyPolytope.from_mdp(mdp, config.v_reach)


def _raise_if_infeasible(report, what):
    if not report.ok:
        raise InfeasibleError(f"{what} is infeasible (phase-1 violation "
                              f"{report.info.get('phase1_violation', float('nan')):.3g}, "
                              f"max attainable reach "
                              f"{report.info.get('max_reach', float('nan')):.6g})", report)
    return report


def solve_baseline(mdp: MDPSpec, v_reach=0.0) -> SolveReport:
    """Non-deceptive optimum of the goal-reach LP."""
    report = solve_optimal(OccupancyPolytope.from_mdp(mdp, v_reach), mdp.reward)
    return _raise_if_infeasible(report, "goal-reach LP")


def synthesize_diversionary(mmdp, x_star, config: DeceptionConfig) -> SolveReport:
    """Push the occupancy away from ``x_star`` (local optimum, see solver)."""
    pen = QuadraticPenalty(config.beta, _values(x_star).ravel())
    report = maximize_convex_quadratic(_polytope(mmdp, config), mmdp.reward, pen,
                                       starts=config.starts, seed=config.seed)
    return _raise_if_infeasible(report, "diversionary problem")


def synthesize_targeted(mmdp, x_tar, config: DeceptionConfig) -> SolveReport:
    """Pull the occupancy towards ``x_tar``; unique global optimum."""
    xt = _values(x_tar)
    if xt.shape != mmdp.shape:
        raise SpecError(f"x_tar shape {xt.shape} does not match {mmdp.shape}")
    if (xt < 0).any():
        raise SpecError("x_tar must be nonnegative")
    pen = QuadraticPenalty(config.beta, xt.ravel())
    report = solve_concave_qp(_polytope(mmdp, config), mmdp.reward, pen)
    return _raise_if_infeasible(report, "targeted problem")


def synthesize_equivocal(mmdp, s_goal, s_decoy, config: DeceptionConfig) -> SolveReport:
    """Balance visitation between ``s_goal`` and ``s_decoy``.

    The soft problem penalises the squared gap; the exact problem requires a
    zero gap and raises `InfeasibleError` when that cannot be met.
    """
    s_goal, s_decoy = tuple(s_goal), tuple(s_decoy)
    if not s_goal or not s_decoy:
        raise SpecError("goal and decoy state sets must be nonempty")
    if set(s_goal) & set(s_decoy):
        raise SpecError("goal and decoy state sets must be disjoint")
    poly = _polytope(mmdp, config)
    row = gap_row(mmdp.shape, s_goal, s_decoy)
    if config.kind == "equivocal_exact":
        report = solve_optimal(poly.with_equalities(row, [0.0]), mmdp.reward)
        if not report.ok:
            raise InfeasibleError(
                "exact equivocal problem is infeasible (phase-1 violation "
                f"{report.info['phase1_violation']:.3g}); use kind='equivocal_soft'", report)
        return report
    pen = QuadraticPenalty(config.beta, 0.0, row)
    report = solve_concave_qp(poly, mmdp.reward, pen)
    return _raise_if_infeasible(report, "equivocal problem")


def _check_rstar(r_star):
    if r_star <= 0:
        raise ValueError(f"bounds need a positive optimal revenue, got {r_star}")


def bound_diversionary(x_star, r_star, beta, gamma):
    """``beta / R* * (sum x*^2 + (1 - gamma)^-2)``."""
    _check_rstar(r_star)
    xs = _values(x_star)
    return beta / r_star * (float(np.sum(xs ** 2)) + (1.0 - gamma) ** -2)


def bound_targeted(x_star, x_tar, r_star, beta, gamma, dims=None):
    """``beta / R* * [sum(x*^2 - 2 x_tar x*) - (1-gamma)^-2/(|S||A|) + 2 (1-gamma)^-1 max x_tar]``."""
    _check_rstar(r_star)
    xs, xt = _values(x_star), _values(x_tar)
    if xs.shape != xt.shape:
        raise SpecError("x_star and x_tar shapes differ")
    n = int(np.prod(dims)) if dims is not None else xs.size
    h = 1.0 / (1.0 - gamma)
    return beta / r_star * (float(np.sum(xs ** 2 - 2.0 * xt * xs)) - h ** 2 / n
                            + 2.0 * h * float(xt.max()))


def bound_equivocal(x_star, s_goal, s_decoy, r_star, beta):
    """``beta / R* * gap(x*)^2``."""
    _check_rstar(r_star)
    return beta / r_star * visitation_gap(x_star, s_goal, s_decoy) ** 2


def target_occupancy(mdp, fake_reward, v_reach=0.0, fake_goal_states=None, fake_v_reach=0.0):
    """Occupancy of the optimal policy for a fake reward (and fake goals).

    The fake problem keeps the real requirement (``mdp.goal_states`` visited
    at least ``v_reach``) and, when ``fake_goal_states`` is given, also asks
    for ``fake_v_reach`` visits to the fake goals. The returned measure is
    recomputed exactly from the extracted policy, so it satisfies the flow
    equalities of ``mdp`` and the real reach requirement.
    """
    fake = MDPSpec(mdp.transition, fake_reward, mdp.gamma, mdp.alpha, mdp.goal_states,
                   check_goals=False)
    poly = OccupancyPolytope.from_mdp(fake, v_reach)
    if fake_goal_states is not None and fake_v_reach > 0:
        row = mdp.transition[:, :, list(fake_goal_states)].sum(axis=2).ravel()
        poly = poly.with_lower_bounds(row[None, :], [fake_v_reach])
    report = _raise_if_infeasible(solve_optimal(poly, fake_reward), "fake-goal problem")
    return occupancy_of_policy(mdp, policy_of_occupancy(report.solution))


@dataclass
class BoundReport:
    theoretical_bound: float
    empirical_loss: float
    beta: float
    satisfied: bool
    kind: str = ""
    revenue: float = float("nan")
    optimal_revenue: float = float("nan")
    solver_status: str = ""
    notes: str = ""


def deception_bound(kind, x_star, r_star, beta, gamma, x_tar=None, goal_states=None,
                    decoy_states=None):
    if kind == "diversionary":
        return bound_diversionary(x_star, r_star, beta, gamma)
    if kind == "targeted":
        return bound_targeted(x_star, x_tar, r_star, beta, gamma)
    if kind == "equivocal_soft":
        return bound_equivocal(x_star, goal_states, decoy_states, r_star, beta)
    # the exact problem has no beta; its loss is not covered by a bound
    return float("inf")


def synthesize(mdp, config: DeceptionConfig, baseline: SolveReport | None = None):
    """Dispatch on ``config.kind``; returns ``(report, baseline)``."""
    baseline = baseline or solve_baseline(mdp, config.v_reach)
    if config.kind == "diversionary":
        return synthesize_diversionary(mdp, baseline.solution, config), baseline
    if config.kind == "targeted":
        return synthesize_targeted(mdp, config.x_tar, config), baseline
    goals = config.goal_states if config.goal_states is not None else mdp.goal_states
    return synthesize_equivocal(mdp, goals, config.decoy_states, config), baseline


def verify_bound(mdp, config: DeceptionConfig, baseline=None) -> BoundReport:
    """Solve the baseline and the deceptive problem, and compare loss with the bound."""
    report, baseline = synthesize(mdp, config, baseline)
    x_star = baseline.solution
    r_star = revenue(mdp, x_star)
    r_d = revenue(mdp, report.solution)
    loss = revenue_loss(r_star, r_d)
    goals = config.goal_states if config.goal_states is not None else mdp.goal_states
    bound = deception_bound(config.kind, x_star, r_star, config.beta, mdp.gamma,
                            config.x_tar, goals, config.decoy_states)
    notes = ""
    if config.kind == "diversionary":
        notes = ("local optimum; the bound only needs the regularised objective at the "
                 "returned point to dominate its value at x*, which holds because x* is "
                 "one of the starts")
    return BoundReport(bound, loss, config.beta, bool(loss <= bound + BOUND_SLACK), config.kind,
                       r_d, r_star, report.status, notes)


class DeceptivePolicy(BaseEstimator):
    """Estimator wrapper around the synthesis problems.

    ``fit(mdp)`` solves the baseline and the deceptive problem and exposes
    ``occupancy_``, ``policy_``, ``revenue_``, ``baseline_``, ``loss_``,
    ``bound_`` and ``report_``.

    Parameters
    ----------
    kind : {"diversionary", "targeted", "equivocal_soft", "equivocal_exact"}
    beta : float
    v_reach : float
    x_tar : array, optional
        Target occupancy (targeted only).
    decoy_states, goal_states : sequences of int, optional
        Equivocal only; goal states default to the MDP's.
    starts, seed : multistart settings for the diversionary solver
    """

    def __init__(self, kind="diversionary", beta=0.0, v_reach=0.0, x_tar=None,
                 decoy_states=None, goal_states=None, starts=8, seed=0):
        self.kind = kind
        self.beta = beta
        self.v_reach = v_reach
        self.x_tar = x_tar
        self.decoy_states = decoy_states
        self.goal_states = goal_states
        self.starts = starts
        self.seed = seed

    def _config(self):
        return DeceptionConfig(self.kind, self.beta, self.v_reach, self.x_tar,
                               None if self.decoy_states is None else tuple(self.decoy_states),
                               None if self.goal_states is None else tuple(self.goal_states),
                               self.starts, self.seed)

    def fit(self, mdp, y=None, baseline=None):
        config = self._config()
        report, base = synthesize(mdp, config, baseline)
        self.report_ = report
        self.baseline_ = base
        self.occupancy_ = report.solution
        self.policy_ = policy_of_occupancy(report.solution)
        self.optimal_revenue_ = revenue(mdp, base.solution)
        self.revenue_ = revenue(mdp, report.solution)
        self.loss_ = revenue_loss(self.optimal_revenue_, self.revenue_)
        goals = config.goal_states if config.goal_states is not None else mdp.goal_states
        self.bound_ = (deception_bound(config.kind, base.solution, self.optimal_revenue_,
                                       config.beta, mdp.gamma, config.x_tar, goals,
                                       config.decoy_states)
                       if self.optimal_revenue_ > 0 else float("nan"))
        return self

    def predict_proba(self, states):
        """Action distributions for the given state indices."""
        check_is_fitted(self, "policy_")
        return self.policy_.values[np.asarray(states)]

    def predict(self, states):
        """Most probable action in each state."""
        return self.predict_proba(states).argmax(axis=-1)
