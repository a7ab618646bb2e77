"""Finite MDPs, product (multi-agent) MDPs and occupancy measures.

Transition kernels are stored as dense ``(S, A, S)`` arrays; a CSR view of
shape ``(S*A, S)`` is cached for the matrix-vector products used by the
solvers and learners. Joint states and actions of a product MDP are indexed
row-major over agents, agent 0 being the most significant digit.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import SpecError

ROW_TOL = 1e-9
DENSE_LIMIT = 20_000
NEG_TOL = 1e-9


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def check_goal_states(reward, goal_states):
    """Return the pairs ``(goal, other)`` that break the goal-state ordering.

    A goal set is valid when the best action reward of every goal state is at
    least the best action reward of every non-goal state.
    """
    reward = np.asarray(reward)
    best = reward.max(axis=1)
    goals = np.zeros(len(best), dtype=bool)
    goals[list(goal_states)] = True
    if not goals.any() or goals.all():
        return []
    worst_goal = np.flatnonzero(goals)[np.argmin(best[goals])]
    bad = np.flatnonzero(~goals & (best > best[worst_goal] + ROW_TOL))
    return [(int(worst_goal), int(s)) for s in bad]


@dataclass(frozen=True, eq=False)
class MDPSpec:
    """A discounted finite MDP.

    Parameters
    ----------
    transition : array (S, A, S)
        ``transition[s, a, y]`` is the probability of moving to ``y``.
    reward : array (S, A)
    gamma : float in [0, 1)
    alpha : array (S,)
        Initial state distribution.
    goal_states : sequence of int
    state_names, action_names : optional sequences of str
    check_goals : bool
        Enforce the goal-state ordering on construction.
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    alpha: np.ndarray
    goal_states: tuple = ()
    state_names: tuple | None = None
    action_names: tuple | None = None
    check_goals: bool = field(default=True, repr=False)

    def __post_init__(self):
        T = _frozen(self.transition)
        r = _frozen(self.reward)
        alpha = _frozen(self.alpha)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "goal_states", tuple(int(g) for g in self.goal_states))
        if self.state_names is not None:
            object.__setattr__(self, "state_names", tuple(self.state_names))
        if self.action_names is not None:
            object.__setattr__(self, "action_names", tuple(self.action_names))
        self._validate()

    def _validate(self):
        T, r, alpha = self.transition, self.reward, self.alpha
        if T.ndim != 3 or T.shape[0] != T.shape[2]:
            raise SpecError(f"transition must have shape (S, A, S), got {T.shape}")
        S, A = T.shape[:2]
        if S == 0 or A == 0:
            raise SpecError("MDP needs at least one state and one action")
        if r.shape != (S, A):
            raise SpecError(f"reward must have shape {(S, A)}, got {r.shape}")
        if alpha.shape != (S,):
            raise SpecError(f"alpha must have shape {(S,)}, got {alpha.shape}")
        if not (0.0 <= self.gamma < 1.0):
            raise SpecError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not np.all(np.isfinite(r)):
            raise SpecError("reward contains non-finite entries")
        if (T < 0).any():
            s, a, _ = np.argwhere(T < 0)[0]
            raise SpecError(f"negative transition probability at state {self._sname(s)}, "
                            f"action {self._aname(a)}")
        sums = T.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > ROW_TOL)
        if len(bad):
            s, a = bad[0]
            raise SpecError(f"transition row for state {self._sname(s)}, action "
                            f"{self._aname(a)} sums to {sums[s, a]:.12g}, expected 1")
        if (alpha < 0).any() or abs(alpha.sum() - 1.0) > ROW_TOL:
            raise SpecError(f"alpha must be a probability vector (sum={alpha.sum():.12g})")
        for g in self.goal_states:
            if not 0 <= g < S:
                raise SpecError(f"goal state index {g} out of range")
        if self.check_goals:
            bad = check_goal_states(r, self.goal_states)
            if bad:
                g, s = bad[0]
                raise SpecError(f"goal state {self._sname(g)} has lower best reward than "
                                f"non-goal state {self._sname(s)}")

    def _sname(self, s):
        return self.state_names[s] if self.state_names else str(int(s))

    def _aname(self, a):
        return self.action_names[a] if self.action_names else str(int(a))

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]

    @property
    def shape(self):
        return self.transition.shape[:2]

    @cached_property
    def P(self):
        """Transition kernel as a CSR matrix of shape (S*A, S)."""
        S, A = self.shape
        return sp.csr_matrix(self.transition.reshape(S * A, S))

    @cached_property
    def kernel(self):
        """(S*A, S) kernel for matrix-vector products: dense when small, else `P`."""
        S, A = self.shape
        if S * A * S <= DENSE_LIMIT:
            return self.transition.reshape(S * A, S)
        return self.P

    @cached_property
    def transition_cdf(self):
        """Cumulative transition probabilities along the next-state axis."""
        return np.cumsum(self.transition, axis=2)

    def with_reward(self, reward, goal_states=None, check_goals=False):
        """Copy of this MDP with a different reward table."""
        return MDPSpec(self.transition, reward, self.gamma, self.alpha,
                       self.goal_states if goal_states is None else goal_states,
                       self.state_names, self.action_names, check_goals=check_goals)


@dataclass(frozen=True, eq=False)
class MMDPSpec(MDPSpec):
    """Product of per-agent MDPs. The joint fields are inherited from `MDPSpec`."""

    agents: tuple = ()

    @property
    def n_agents(self):
        return len(self.agents)

    @property
    def local_states(self):
        return tuple(a.n_states for a in self.agents)

    @property
    def local_actions(self):
        return tuple(a.n_actions for a in self.agents)

    def joint_state(self, local):
        return int(np.ravel_multi_index(tuple(local), self.local_states))

    def joint_action(self, local):
        return int(np.ravel_multi_index(tuple(local), self.local_actions))

    def with_reward(self, reward, goal_states=None, check_goals=False):
        """Copy with a different joint reward; the agents keep their own tables."""
        return MMDPSpec(self.transition, reward, self.gamma, self.alpha,
                        self.goal_states if goal_states is None else goal_states,
                        self.state_names, self.action_names, check_goals=check_goals,
                        agents=self.agents)

    @cached_property
    def state_index(self):
        """Array (S, M) of local state indices for each joint state."""
        return np.stack(np.unravel_index(np.arange(self.n_states), self.local_states), axis=1)

    @cached_property
    def action_index(self):
        """Array (A, M) of local action indices for each joint action."""
        return np.stack(np.unravel_index(np.arange(self.n_actions), self.local_actions), axis=1)


def _product_kernel(T1, T2):
    S1, A1 = T1.shape[:2]
    S2, A2 = T2.shape[:2]
    return np.einsum("abc,def->adbecf", T1, T2).reshape(S1 * S2, A1 * A2, S1 * S2)


def build_product(agent_specs: Sequence[MDPSpec], joint_reward_rule="sum",
                  goal_states=(), gamma=None, check_goals=False) -> MMDPSpec:
    """Compose per-agent MDPs into a product MDP.

    Parameters
    ----------
    agent_specs : sequence of MDPSpec
    joint_reward_rule : "sum" or array (S, A)
        ``"sum"`` adds the local rewards of all agents; an array is used as
        the joint reward table directly.
    goal_states : joint goal state indices
    gamma : float, optional
        Joint discount. Defaults to the (common) discount of the agents.
    """
    agents = tuple(agent_specs)
    if not agents:
        raise SpecError("build_product needs at least one agent")
    if gamma is None:
        gammas = {a.gamma for a in agents}
        if len(gammas) != 1:
            raise SpecError(f"agents disagree on gamma: {sorted(gammas)}")
        gamma = gammas.pop()

    T = agents[0].transition
    alpha = agents[0].alpha
    for a in agents[1:]:
        T = _product_kernel(T, a.transition)
        alpha = np.kron(alpha, a.alpha)
    S, A = T.shape[:2]

    if isinstance(joint_reward_rule, str):
        if joint_reward_rule != "sum":
            raise SpecError(f"unknown joint reward rule {joint_reward_rule!r}")
        sidx = np.unravel_index(np.arange(S), [a.n_states for a in agents])
        aidx = np.unravel_index(np.arange(A), [a.n_actions for a in agents])
        reward = np.zeros((S, A))
        for i, a in enumerate(agents):
            reward += a.reward[np.ix_(sidx[i], aidx[i])]
    else:
        reward = np.asarray(joint_reward_rule, dtype=float)
        if reward.shape != (S, A):
            raise SpecError(f"joint reward table must have shape {(S, A)}, got {reward.shape}")

    state_names = action_names = None
    if all(a.state_names for a in agents):
        state_names = tuple("|".join(p) for p in
                            itertools.product(*[a.state_names for a in agents]))
    if all(a.action_names for a in agents):
        action_names = tuple("|".join(p) for p in
                             itertools.product(*[a.action_names for a in agents]))
    return MMDPSpec(T, reward, gamma, alpha, tuple(goal_states), state_names, action_names,
                    check_goals=check_goals, agents=agents)


@dataclass(frozen=True, eq=False)
class OccupancyMeasure:
    """Discounted state-action visitation table ``x(s, a)``.

    Entries within ``NEG_TOL`` below zero are clamped to zero.
    """

    values: np.ndarray
    gamma: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError(f"occupancy table must be 2-D, got shape {v.shape}")
        if (v < -NEG_TOL).any():
            raise ValueError(f"occupancy has negative entry {v.min():.3g}")
        v[v < 0] = 0.0
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def shape(self):
        return self.values.shape

    def total(self):
        return float(self.values.sum())

    def sum_squares(self):
        return float(np.sum(self.values ** 2))

    def state_visitation(self):
        return self.values.sum(axis=1)

    def check_mass(self, tol=1e-6):
        """Raise if the occupancy violates the total-mass identities."""
        n = self.values.size
        horizon = 1.0 / (1.0 - self.gamma)
        total = self.total()
        if abs(total - horizon) > tol:
            raise AssertionError(f"occupancy mass {total!r} != 1/(1-gamma) = {horizon!r}")
        sq = self.sum_squares()
        if not horizon ** 2 / n - tol <= sq <= horizon ** 2 + tol:
            raise AssertionError(f"sum of squares {sq!r} outside [{horizon ** 2 / n!r}, "
                                 f"{horizon ** 2!r}]")


@dataclass(frozen=True, eq=False)
class StochasticPolicy:
    """Per-state action distribution, shape (S, A)."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2:
            raise ValueError("policy table must be 2-D")
        if (v < 0).any() or np.abs(v.sum(axis=1) - 1.0).max() > ROW_TOL:
            raise ValueError("policy rows must be probability distributions")
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, n_states, n_actions):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions, n_actions):
        actions = np.asarray(actions)
        v = np.zeros((len(actions), n_actions))
        v[np.arange(len(actions)), actions] = 1.0
        return cls(v)


def _check_policy(mdp, policy):
    pi = policy.values if isinstance(policy, StochasticPolicy) else StochasticPolicy(policy).values
    if pi.shape != mdp.shape:
        raise SpecError(f"policy shape {pi.shape} does not match MDP {mdp.shape}")
    return pi


def state_transition_matrix(mdp, policy):
    """Markov chain ``P_pi[s, y]`` induced by a policy."""
    pi = _check_policy(mdp, policy)
    return np.einsum("sa,say->sy", pi, mdp.transition)


def occupancy_of_policy(mdp: MDPSpec, policy) -> OccupancyMeasure:
    """Exact occupancy measure of a stationary policy.

    Solves the flow equations ``nu - gamma * P_pi^T nu = alpha`` for the
    discounted state visitation ``nu`` and returns ``x(s, a) = nu(s) pi(a|s)``.
    """
    pi = _check_policy(mdp, policy)
    P_pi = state_transition_matrix(mdp, pi)
    M = np.eye(mdp.n_states) - mdp.gamma * P_pi.T
    nu = np.linalg.solve(M, mdp.alpha)
    x = nu[:, None] * pi
    x[np.abs(x) < 1e-15] = 0.0
    return OccupancyMeasure(np.clip(x, 0.0, None), mdp.gamma)


def policy_of_occupancy(x) -> StochasticPolicy:
    """Policy ``pi(a|s) = x(s,a) / sum_a' x(s,a')``; unvisited states get the uniform policy."""
    v = x.values if isinstance(x, OccupancyMeasure) else np.asarray(x, dtype=float)
    if (v < -NEG_TOL).any():
        raise ValueError("occupancy has negative entries")
    v = np.clip(v, 0.0, None)
    tot = v.sum(axis=1, keepdims=True)
    visited = tot[:, 0] > 0
    pi = np.full(v.shape, 1.0 / v.shape[1])
    pi[visited] = v[visited] / tot[visited]
    return StochasticPolicy(pi)


def revenue(mdp, x) -> float:
    """Total expected discounted reward ``sum r(s,a) x(s,a)``."""
    v = x.values if isinstance(x, OccupancyMeasure) else np.asarray(x, dtype=float)
    r = mdp.reward if isinstance(mdp, MDPSpec) else np.asarray(mdp, dtype=float)
    if v.shape != r.shape:
        raise SpecError(f"occupancy shape {v.shape} does not match reward shape {r.shape}")
    return float(np.sum(r * v))


def revenue_loss(r_opt: float, r_pol: float) -> float:
    """Fractional revenue shortfall ``(r_opt - r_pol) / r_opt``."""
    if r_opt == 0:
        raise ValueError("revenue loss is undefined for a zero optimal revenue")
    return (r_opt - r_pol) / r_opt


def value_iteration(mdp, reward=None, tol=1e-12, max_iter=100_000):
    """Optimal state values and a greedy deterministic policy.

    Returns
    -------
    v : array (S,)
    greedy : array (S,) of int
    """
    r = mdp.reward if reward is None else np.asarray(reward, dtype=float)
    S, A = mdp.shape
    P = mdp.kernel
    v = np.zeros(S)
    for _ in range(max_iter):
        q = r + mdp.gamma * (P @ v).reshape(S, A)
        v_new = q.max(axis=1)
        if np.max(np.abs(v_new - v)) < tol * (1 - mdp.gamma):
            v = v_new
            break
        v = v_new
    q = r + mdp.gamma * (P @ v).reshape(S, A)
    return v, q.argmax(axis=1)


def policy_evaluation(mdp, policy, reward=None):
    """Exact discounted values ``v_pi(s)`` (first reward undiscounted)."""
    pi = _check_policy(mdp, policy)
    r = mdp.reward if reward is None else np.asarray(reward, dtype=float)
    P_pi = state_transition_matrix(mdp, pi)
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_pi, (pi * r).sum(axis=1))


@dataclass(frozen=True, eq=False)
class TrajectoryDataset:
    """``N`` state-action trajectories of a common length ``T``.

    ``states`` and ``actions`` are integer arrays of shape (N, T).
    """

    states: np.ndarray
    actions: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        s = _frozen(self.states, dtype=np.int64)
        a = _frozen(self.actions, dtype=np.int64)
        if s.ndim != 2 or s.shape != a.shape:
            raise ValueError("states and actions must be equal-shape (N, T) arrays")
        if s.shape[0] == 0:
            raise ValueError("dataset is empty")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)

    @property
    def n_trajectories(self):
        return self.states.shape[0]

    @property
    def horizon(self):
        return self.states.shape[1]

    def __len__(self):
        return self.n_trajectories

    def __iter__(self):
        for s, a in zip(self.states, self.actions):
            yield list(zip(s.tolist(), a.tolist()))

    def pair_counts(self, shape):
        """Average per-trajectory visitation counts of each state-action pair."""
        counts = np.zeros(shape)
        np.add.at(counts, (self.states.ravel(), self.actions.ravel()), 1.0)
        return counts / self.n_trajectories

    def check_against(self, mdp):
        S, A = mdp.shape
        if self.states.min() < 0 or self.states.max() >= S:
            raise ValueError("dataset state index out of range")
        if self.actions.min() < 0 or self.actions.max() >= A:
            raise ValueError("dataset action index out of range")

    @classmethod
    def concatenate(cls, parts):
        parts = list(parts)
        return cls(np.concatenate([p.states for p in parts]),
                   np.concatenate([p.actions for p in parts]), parts[0].seed)


def _draw(cdf, u):
    # inverse-CDF sampling, one row of cdf per uniform draw
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, cdf.shape[1] - 1)


def sample_trajectories(mdp, policy, n, t, seed, start=0) -> TrajectoryDataset:
    """Sample ``n`` trajectories of length ``t``.

    Trajectory ``j`` (counting from ``start``) draws all of its randomness
    from ``np.random.default_rng([seed, j])``, so any split of the index
    range across workers reproduces the same dataset.
    """
    if n < 1 or t < 1:
        raise ValueError("need n >= 1 and t >= 1")
    pi = _check_policy(mdp, policy)
    U = np.stack([np.random.default_rng([seed, j]).random(2 * t)
                  for j in range(start, start + n)])
    alpha_cdf = np.cumsum(mdp.alpha)[None, :]
    pi_cdf = np.cumsum(pi, axis=1)
    T_cdf = mdp.transition_cdf
    states = np.empty((n, t), dtype=np.int64)
    actions = np.empty((n, t), dtype=np.int64)
    s = _draw(np.broadcast_to(alpha_cdf, (n, mdp.n_states)), U[:, 0])
    for k in range(t):
        a = _draw(pi_cdf[s], U[:, 2 * k + 1])
        states[:, k] = s
        actions[:, k] = a
        if k + 1 < t:
            s = _draw(T_cdf[s, a], U[:, 2 * k + 2])
    return TrajectoryDataset(states, actions, seed)
