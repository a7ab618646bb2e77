import numpy as np
import pytest

from deceptive_mdp import InfeasibleError, SpecError
from deceptive_mdp.deception import (DeceptionConfig, DeceptivePolicy, bound_diversionary,
                                     bound_equivocal, bound_targeted, deception_bound,
                                     solve_baseline, synthesize, synthesize_diversionary,
                                     synthesize_equivocal, synthesize_targeted,
                                     target_occupancy, verify_bound, visitation_gap)
from deceptive_mdp.mdp import MDPSpec, StochasticPolicy, occupancy_of_policy, revenue
from deceptive_mdp.solver import INFEASIBLE

import oracles


def _mdp(seed, S=3, A=2, gamma=0.9):
    rng = np.random.default_rng(seed)
    T, r, g, alpha, goals = oracles.random_mdp(rng, S, A, gamma)
    return MDPSpec(T, r, g, alpha, goals)


def _random_target(m, seed):
    rng = np.random.default_rng(seed)
    pi = rng.random(m.shape)
    pi /= pi.sum(axis=1, keepdims=True)
    return occupancy_of_policy(m, StochasticPolicy(pi)).values


@pytest.mark.parametrize("kind", ["diversionary", "targeted", "equivocal_soft"])
def test_zero_beta_returns_baseline(kind):
    m = _mdp(0)
    x_star = solve_baseline(m).solution
    cfg = DeceptionConfig(kind, 0.0, x_tar=_random_target(m, 0), decoy_states=(0,))
    rep, _ = synthesize(m, cfg)
    np.testing.assert_allclose(rep.solution.values, x_star.values, atol=1e-6)


def test_targeted_at_baseline_is_fixed_point():
    m = _mdp(1)
    x_star = solve_baseline(m).solution.values
    for beta in (0.1, 1.0, 100.0):
        rep = synthesize_targeted(m, x_star, DeceptionConfig("targeted", beta, x_tar=x_star))
        np.testing.assert_allclose(rep.solution.values, x_star, atol=1e-6)


def test_large_beta_diversionary_reaches_farthest_vertex():
    m = _mdp(2, S=2, A=2)
    x_star = solve_baseline(m).solution
    rep = synthesize_diversionary(m, x_star, DeceptionConfig("diversionary", 1e6))
    verts = oracles.polytope_vertices(m.transition, m.alpha, m.gamma)
    far = max(np.linalg.norm(v - x_star.values.ravel()) for v in verts)
    got = np.linalg.norm(rep.solution.values - x_star.values)
    assert got > 1e-3
    assert got == pytest.approx(far, rel=1e-9)


def test_equivocal_with_zero_gap_is_free():
    # goal and decoy are mirror images reached with equal probability
    T = np.zeros((3, 1, 3))
    T[0, 0] = [0.0, 0.5, 0.5]
    T[1, 0, 1] = T[2, 0, 2] = 1.0
    r = np.array([[0.0], [1.0], [1.0]])
    m = MDPSpec(T, r, 0.9, [1, 0, 0], (1, 2))
    x_star = solve_baseline(m).solution
    assert visitation_gap(x_star, (1,), (2,)) == pytest.approx(0.0, abs=1e-12)
    for beta in (1.0, 100.0):
        rep = synthesize_equivocal(m, (1,), (2,), DeceptionConfig("equivocal_soft", beta,
                                                                 decoy_states=(2,)))
        assert revenue(m, rep.solution) == pytest.approx(revenue(m, x_star), abs=1e-7)
        assert bound_equivocal(x_star, (1,), (2,), revenue(m, x_star), beta) == 0.0


def test_unreachable_decoy_exact_infeasible_soft_solves():
    T = np.zeros((3, 2, 3))
    T[0, 0, 0] = T[0, 1, 1] = 1.0
    T[1, :, 1] = 1.0
    T[2, :, 2] = 1.0  # no pair leads into s2 except s2 itself, and alpha(s2) = 0
    r = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]])
    m = MDPSpec(T, r, 0.9, [1, 0, 0], (1,))
    exact = DeceptionConfig("equivocal_exact", 0.0, v_reach=1.0, decoy_states=(2,))
    with pytest.raises(InfeasibleError) as err:
        synthesize(m, exact)
    assert err.value.report.status == INFEASIBLE
    assert err.value.report.info["phase1_violation"] > 0
    soft = DeceptionConfig("equivocal_soft", 10.0, v_reach=1.0, decoy_states=(2,))
    rep, _ = synthesize(m, soft)
    assert rep.ok


def test_config_validation():
    with pytest.raises(SpecError):
        DeceptionConfig("sideways")
    with pytest.raises(SpecError):
        DeceptionConfig("targeted", 1.0)
    with pytest.raises(SpecError):
        DeceptionConfig("equivocal", 1.0, decoy_states=(1,), goal_states=(1,))
    with pytest.raises(SpecError):
        DeceptionConfig("diversionary", -1.0)
    assert DeceptionConfig("equivocal", 1.0, decoy_states=(1,)).kind == "equivocal_soft"


def test_singleton_diversionary_bound(singleton):
    m = singleton(0.5)
    x_star = solve_baseline(m).solution
    assert x_star.values[0, 0] == pytest.approx(2.0)
    for beta in (0.0, 0.5, 3.0):
        assert bound_diversionary(x_star, 2.0, beta, 0.5) == pytest.approx(4 * beta)
        b = verify_bound(m, DeceptionConfig("diversionary", beta))
        assert b.empirical_loss == pytest.approx(0.0, abs=1e-12) and b.satisfied


def test_bounds_are_linear_in_beta():
    m = _mdp(3)
    x_star = solve_baseline(m).solution
    R = revenue(m, x_star)
    xt = _random_target(m, 3)
    for f in (lambda b: bound_diversionary(x_star, R, b, m.gamma),
              lambda b: bound_targeted(x_star, xt, R, b, m.gamma),
              lambda b: bound_equivocal(x_star, (2,), (0,), R, b)):
        assert f(0.0) == 0.0
        assert f(2.0) == pytest.approx(2 * f(1.0))
    assert deception_bound("equivocal_exact", x_star, R, 1.0, m.gamma) == float("inf")


@pytest.mark.parametrize("seed", range(4))
def test_random_targeted_bound_grid(seed):
    m = _mdp(10 + seed)
    xt = _random_target(m, seed)
    for beta in (0.1, 0.3, 1.0, 3.0, 10.0):
        b = verify_bound(m, DeceptionConfig("targeted", beta, x_tar=xt))
        assert b.satisfied, (beta, b)


def _grid_solutions(m, cfg_for, betas):
    base = solve_baseline(m)
    return [synthesize(m, cfg_for(b), base)[0].solution for b in betas]


@pytest.mark.parametrize("seed", range(4))
def test_targeted_monotone_in_beta(seed):
    m = _mdp(20 + seed)
    xt = _random_target(m, seed)
    betas = [0.0, 0.05, 0.2, 1.0, 5.0, 50.0]
    xs = _grid_solutions(m, lambda b: DeceptionConfig("targeted", b, x_tar=xt), betas)
    dist = [float(np.sum((x.values - xt) ** 2)) for x in xs]
    rev = [revenue(m, x) for x in xs]
    assert all(d2 <= d1 + 1e-8 for d1, d2 in zip(dist, dist[1:]))
    assert all(r2 <= r1 + 1e-8 for r1, r2 in zip(rev, rev[1:]))


@pytest.mark.parametrize("seed", range(4))
def test_equivocal_gap_monotone_in_beta(seed):
    m = _mdp(30 + seed, S=4)
    betas = [0.0, 0.01, 0.1, 1.0, 10.0, 100.0]
    xs = _grid_solutions(m, lambda b: DeceptionConfig("equivocal_soft", b, decoy_states=(0,)),
                         betas)
    gap = [visitation_gap(x, m.goal_states, (0,)) ** 2 for x in xs]
    rev = [revenue(m, x) for x in xs]
    assert all(g2 <= g1 + 1e-8 for g1, g2 in zip(gap, gap[1:]))
    assert all(r2 <= r1 + 1e-8 for r1, r2 in zip(rev, rev[1:]))


def test_target_occupancy_honours_fake_goal_reach():
    m = _mdp(4, S=4)
    fake = m.reward[:, ::-1].copy()
    x = target_occupancy(m, fake, 0.0, fake_goal_states=(1,), fake_v_reach=2.0)
    x.check_mass()
    reach = float(m.transition[:, :, 1].ravel() @ x.values.ravel())
    assert reach >= 2.0 - 1e-6


def test_estimator_wrapper():
    m = _mdp(5)
    est = DeceptivePolicy("targeted", 1.0, x_tar=_random_target(m, 5)).fit(m)
    assert 0.0 <= est.loss_ <= est.bound_ + 1e-9
    probs = est.predict_proba([0, 1, 2])
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)
    assert est.predict([0]).shape == (1,)
    assert est.get_params()["kind"] == "targeted"
