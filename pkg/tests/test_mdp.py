import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deceptive_mdp import SpecError
from deceptive_mdp.mdp import (MDPSpec, OccupancyMeasure, StochasticPolicy, build_product,
                               occupancy_of_policy, policy_evaluation, policy_of_occupancy,
                               revenue, revenue_loss, sample_trajectories, value_iteration)
from deceptive_mdp.mtd import build_mtd
from deceptive_mdp.solver import OccupancyPolytope, solve_optimal

import oracles


def test_spec_validation_names_offending_row():
    T = np.zeros((2, 1, 2))
    T[0, 0, 0] = 0.9
    T[1, 0, 1] = 1.0
    with pytest.raises(SpecError, match="state s0"):
        MDPSpec(T, np.zeros((2, 1)), 0.9, [1, 0], (), ("s0", "s1"))


@pytest.mark.parametrize("gamma", [1.0, -0.1])
def test_spec_rejects_bad_gamma(gamma):
    with pytest.raises(SpecError):
        MDPSpec(np.ones((1, 1, 1)), [[1.0]], gamma, [1.0])


def test_spec_rejects_misordered_goals():
    T = np.tile(np.eye(2)[:, None, :], (1, 1, 1))
    with pytest.raises(SpecError, match="goal state"):
        MDPSpec(T, [[0.0], [1.0]], 0.9, [1, 0], (0,))
    MDPSpec(T, [[0.0], [1.0]], 0.9, [1, 0], (0,), check_goals=False)


def test_product_of_singletons():
    one = MDPSpec(np.ones((1, 1, 1)), [[1.0]], 0.9, [1.0])
    mm = build_product([one, one])
    assert mm.shape == (1, 1)
    assert mm.transition[0, 0, 0] == 1.0
    assert mm.reward[0, 0] == 2.0


def test_product_sizes_for_four_mtd_agents():
    mm = build_mtd()
    assert mm.n_states == 256 and mm.n_actions == 81
    assert mm.n_states * mm.n_actions == 20_736
    assert mm.state_names[0] == "N|N|N|N"


def test_product_transition_matches_enumeration():
    def det_chain(n, shift):
        T = np.zeros((n, 2, n))
        for s in range(n):
            T[s, 0, s] = 1.0
            T[s, 1, (s + shift) % n] = 1.0
        return MDPSpec(T, np.zeros((n, 2)), 0.9, np.eye(n)[0])

    a, b = det_chain(3, 1), det_chain(2, 1)
    mm = build_product([a, b])
    for (s1, s2), (a1, a2), (y1, y2) in itertools.product(
            itertools.product(range(3), range(2)), itertools.product(range(2), range(2)),
            itertools.product(range(3), range(2))):
        s = mm.joint_state((s1, s2))
        act = mm.joint_action((a1, a2))
        y = mm.joint_state((y1, y2))
        assert mm.transition[s, act, y] == a.transition[s1, a1, y1] * b.transition[s2, a2, y2]


@pytest.mark.parametrize("gamma,total", [(0.5, 2.0), (0.9, 10.0)])
def test_singleton_occupancy(singleton, gamma, total):
    m = singleton(gamma)
    x = occupancy_of_policy(m, StochasticPolicy.uniform(1, 1))
    assert x.values[0, 0] == pytest.approx(total, abs=1e-12)


def test_occupancy_matches_monte_carlo(chain):
    # uniform policy on the two-state chain, 10^5 rollouts truncated where gamma^t < 1e-7
    pi = StochasticPolicy.uniform(2, 2)
    x = occupancy_of_policy(chain, pi).values
    rng = np.random.default_rng(0)
    n, horizon = 100_000, 160
    est = np.zeros((2, 2))
    s = np.zeros(n, dtype=int)
    disc = 1.0
    for _ in range(horizon):
        a = rng.integers(0, 2, n)
        np.add.at(est, (s, a), disc)
        s = np.where((s == 0) & (a == 1), 1, s)
        disc *= chain.gamma
    est /= n
    assert np.abs(est - x).max() < 1e-2


def test_occupancy_matches_power_series():
    rng = np.random.default_rng(1)
    T, r, g, alpha, goals = oracles.random_mdp(rng, 4, 3, 0.8)
    m = MDPSpec(T, r, g, alpha, goals)
    pi = rng.random((4, 3))
    pi /= pi.sum(axis=1, keepdims=True)
    x = occupancy_of_policy(m, StochasticPolicy(pi)).values
    np.testing.assert_allclose(x, oracles.occupancy_by_series(T, alpha, g, pi), atol=1e-10)


@pytest.mark.parametrize("values,expected", [([[3.0, 1.0]], [0.75, 0.25]),
                                             ([[1.0, 1.0]], [0.5, 0.5])])
def test_policy_of_occupancy_ratios(values, expected):
    np.testing.assert_allclose(policy_of_occupancy(np.array(values)).values[0], expected)


def test_unvisited_state_gets_uniform_policy():
    pi = policy_of_occupancy(np.array([[2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))
    np.testing.assert_allclose(pi.values[1], 1 / 3)


def test_roundtrip_of_solver_output():
    rng = np.random.default_rng(2)
    for _ in range(5):
        T, r, g, alpha, goals = oracles.random_mdp(rng, 5, 3, 0.9)
        m = MDPSpec(T, r, g, alpha, goals)
        x = solve_optimal(OccupancyPolytope.from_mdp(m, 0.5), r).solution
        back = occupancy_of_policy(m, policy_of_occupancy(x))
        np.testing.assert_allclose(back.values, x.values, atol=1e-6)


def test_revenue_examples(singleton, chain):
    ones = singleton(0.9)
    x = occupancy_of_policy(ones, StochasticPolicy.uniform(1, 1))
    assert revenue(ones, x) == pytest.approx(10.0)
    assert revenue(np.zeros((1, 1)), x) == 0.0
    # going immediately to s1 collects gamma / (1 - gamma) = 9
    go = occupancy_of_policy(chain, StochasticPolicy.deterministic([1, 1], 2))
    assert revenue(chain, go) == pytest.approx(9.0)
    v = oracles.plain_value_iteration(chain.transition, chain.reward, chain.gamma)
    assert revenue(chain, go) == pytest.approx(chain.alpha @ v)


def test_revenue_loss_examples():
    assert revenue_loss(10, 10) == 0
    assert revenue_loss(10, 5) == 0.5
    with pytest.raises(ValueError):
        revenue_loss(0, 1)


def test_value_iteration_matches_policy_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(5):
        T, r, g, alpha, goals = oracles.random_mdp(rng, 4, 2, 0.9)
        m = MDPSpec(T, r, g, alpha, goals)
        v, greedy = value_iteration(m)
        assert alpha @ v == pytest.approx(oracles.best_deterministic_value(T, r, g, alpha),
                                          abs=1e-9)
        np.testing.assert_allclose(policy_evaluation(
            m, StochasticPolicy.deterministic(greedy, 2)), v, atol=1e-9)


def test_deterministic_sampling_is_exact(chain):
    pi = StochasticPolicy.deterministic([1, 0], 2)
    d = sample_trajectories(chain, pi, 5, 4, seed=0)
    np.testing.assert_array_equal(d.states, [[0, 1, 1, 1]] * 5)
    np.testing.assert_array_equal(d.actions, [[1, 0, 0, 0]] * 5)


def test_sampling_is_seeded_and_splittable():
    rng = np.random.default_rng(4)
    T, r, g, alpha, goals = oracles.random_mdp(rng, 4, 3, 0.9)
    m = MDPSpec(T, r, g, alpha, goals)
    pi = StochasticPolicy.uniform(4, 3)
    a = sample_trajectories(m, pi, 20, 7, seed=11)
    b = sample_trajectories(m, pi, 20, 7, seed=11)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.actions, b.actions)
    parts = [sample_trajectories(m, pi, 5, 7, seed=11, start=k) for k in (0, 5, 10, 15)]
    joined = type(a).concatenate(parts)
    np.testing.assert_array_equal(joined.states, a.states)


def test_sampled_discounted_visitation_approximates_occupancy():
    rng = np.random.default_rng(5)
    T, r, _, alpha, goals = oracles.random_mdp(rng, 3, 2, 0.5)
    m = MDPSpec(T, r, 0.5, alpha, goals)
    pi = StochasticPolicy(np.array([[0.3, 0.7], [0.5, 0.5], [0.9, 0.1]]))
    horizon = 30  # 0.5^30 is negligible
    d = sample_trajectories(m, pi, 100_000, horizon, seed=0)
    disc = m.gamma ** np.arange(horizon)
    est = np.zeros((3, 2))
    np.add.at(est, (d.states, d.actions), np.broadcast_to(disc, d.states.shape))
    est /= d.n_trajectories
    assert np.abs(est - occupancy_of_policy(m, pi).values).max() < 1e-2


@st.composite
def mdp_and_policy(draw):
    S = draw(st.integers(1, 4))
    A = draw(st.integers(1, 3))
    gamma = draw(st.sampled_from([0.0, 0.5, 0.9, 0.99]))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    T, r, _, alpha, goals = oracles.random_mdp(rng, S, A, gamma)
    pi = rng.random((S, A))
    pi /= pi.sum(axis=1, keepdims=True)
    return MDPSpec(T, r, gamma, alpha, goals), StochasticPolicy(pi)


@settings(max_examples=60, deadline=None)
@given(mdp_and_policy())
def test_mass_identities_hold_for_every_policy(case):
    m, pi = case
    x = occupancy_of_policy(m, pi)
    x.check_mass(1e-6)
    v = policy_evaluation(m, pi)
    assert revenue(m, x) == pytest.approx(float(m.alpha @ v), rel=1e-9, abs=1e-9)


def test_check_mass_rejects_wrong_total():
    with pytest.raises(AssertionError):
        OccupancyMeasure(np.array([[1.0, 1.0]]), 0.9).check_mass()
