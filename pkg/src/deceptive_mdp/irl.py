"""Inverse reinforcement learning adversaries.

Three learners recover a reward table from observed trajectories:

* `ApprenticeshipLearning` - projection method on feature expectations,
* `MaxEntIRL` - linear reward, maximum-entropy likelihood, gradient ascent,
* `DeepMaxEntIRL` - the same likelihood with a small tanh network as reward.

All of them follow the scikit-learn estimator protocol: hyperparameters go
to ``__init__``, ``fit(dataset)`` learns, and fitted attributes end in an
underscore. The dynamics (transition kernel, discount, initial
distribution) are known to the adversary; the reward is not.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DivergenceError
from .mdp import MDPSpec, MMDPSpec, StochasticPolicy, TrajectoryDataset, sample_trajectories

log = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e6


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Features ``phi(s, a)``, an array of shape (S, A, p).

    ``local`` optionally holds one (S_i, A_i, p_i) table per agent of a
    product MDP when the joint features are the concatenation of per-agent
    features. Rewards linear in such features are sums of per-agent rewards,
    which lets planning factor over agents.
    """

    table: np.ndarray
    local: tuple | None = None

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 3:
            raise ValueError("feature table must have shape (S, A, p)")
        if not np.all(np.isfinite(t)):
            raise ValueError("feature table has non-finite entries")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def dimension(self):
        return self.table.shape[2]

    @property
    def shape(self):
        return self.table.shape[:2]

    def reward(self, weights):
        return self.table @ np.asarray(weights, dtype=float)

    def flat(self):
        S, A, p = self.table.shape
        return self.table.reshape(S * A, p)

    @classmethod
    def one_hot_pairs(cls, n_states, n_actions):
        return cls(np.eye(n_states * n_actions).reshape(n_states, n_actions, -1))

    @classmethod
    def one_hot_states(cls, n_states, n_actions):
        return cls(np.repeat(np.eye(n_states)[:, None, :], n_actions, axis=1))

    @classmethod
    def agent_states(cls, mmdp: MMDPSpec):
        """One-hot of each agent's local state, concatenated over agents."""
        local = tuple(cls.one_hot_states(a.n_states, a.n_actions).table for a in mmdp.agents)
        return cls._concat(mmdp, local)

    @classmethod
    def agent_pairs(cls, mmdp: MMDPSpec):
        """One-hot of each agent's local state-action pair, concatenated."""
        local = tuple(cls.one_hot_pairs(a.n_states, a.n_actions).table for a in mmdp.agents)
        return cls._concat(mmdp, local)

    @classmethod
    def _concat(cls, mmdp, local):
        si, ai = mmdp.state_index, mmdp.action_index
        parts = [loc[si[:, i][:, None], ai[:, i][None, :]] for i, loc in enumerate(local)]
        return cls(np.concatenate(parts, axis=2), local)

    def split(self, weights):
        """Per-agent slices of a weight vector (requires ``local``)."""
        out, k = [], 0
        for loc in self.local:
            out.append(weights[k:k + loc.shape[2]])
            k += loc.shape[2]
        return out


@dataclass
class RewardEstimate:
    """A learned reward, always materialised as a table over (state, action)."""

    table: np.ndarray
    provenance: str
    kind: str = "table"
    weights: np.ndarray | None = None
    iterations: int = 0
    final_error: float = float("nan")
    status: str = "converged"
    seed: int | None = None
    history: list = field(default_factory=list)

    def header(self):
        return {"algorithm": self.provenance, "kind": self.kind, "iterations": self.iterations,
                "final_error": self.final_error, "status": self.status, "seed": self.seed}


def empirical_feature_expectation(dataset: TrajectoryDataset, phi: FeatureMap):
    """Average over trajectories of the summed (undiscounted) features."""
    if dataset.n_trajectories == 0:
        raise ValueError("empty dataset")
    return np.einsum("sa,sap->p", dataset.pair_counts(phi.shape), phi.table)


def _soft_backward(mdp, reward, horizon):
    """Soft values and policies, indexed by the number of steps left.

    Returns ``pis``, ``Vs`` and ``lnev`` where ``Vs[h]`` is the soft value with
    ``h`` steps left (``Vs[0] = 0``), ``pis[h-1]`` the policy acting with ``h``
    steps left and ``lnev[h-1] = log sum_y T(s,a,y) exp(Vs[h-1](y))``.
    """
    S, A = mdp.shape
    P = mdp.kernel
    V = np.zeros(S)
    pis, Vs, lnev = [], [V], []
    for _ in range(horizon):
        m = V.max()
        ev = (np.log(np.maximum(P @ np.exp(V - m), 1e-300)) + m).reshape(S, A)
        Q = reward + ev
        V = logsumexp(Q, axis=1)
        pis.append(np.exp(Q - V[:, None]))
        lnev.append(ev)
        Vs.append(V)
    return pis, Vs, lnev


def log_partition(mdp, reward_table, horizon):
    """Log of the sum over all length-``horizon`` trajectories of
    ``alpha(s_1) prod T(s_t, a_t, s_t+1) exp(sum r(s_t, a_t))``."""
    _, Vs, _ = _soft_backward(mdp, np.asarray(reward_table, dtype=float), horizon)
    mask = mdp.alpha > 0
    return float(logsumexp(np.log(mdp.alpha[mask]) + Vs[-1][mask]))


def _start_distribution(alpha, V):
    # P(s_1 = s) under the trajectory distribution is proportional to alpha(s) exp(V(s))
    with np.errstate(divide="ignore"):
        la = np.log(alpha) + V
    return np.exp(la - logsumexp(la, axis=-1, keepdims=True))


def expected_visitation(mdp: MDPSpec, reward_table, horizon):
    """Expected state-action visitation counts over ``horizon`` steps under
    the maximum-entropy trajectory distribution
    ``P(tau) ~ alpha(s_1) prod T(s_t, a_t, s_t+1) exp(sum r(s_t, a_t))``.

    Backward pass in log space for the soft values, then forward propagation
    of the exact state marginals. Under that distribution the first state is
    reweighted by ``exp(V)`` and each transition by ``exp(V)`` of the next
    state, so stochastic dynamics are tilted toward high-value successors.
    The result sums to ``horizon``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    r = np.asarray(reward_table, dtype=float)
    pis, Vs, lnev = _soft_backward(mdp, r, horizon)
    PT = mdp.P.T.tocsr()
    D = _start_distribution(np.asarray(mdp.alpha, dtype=float), Vs[horizon])
    d = np.zeros(mdp.shape)
    for t in range(horizon):
        h = horizon - t
        dsa = D[:, None] * pis[h - 1]
        d += dsa
        if h > 1:
            nxt = Vs[h - 1]
            c = nxt.max()
            D = np.exp(nxt - c) * (PT @ (dsa * np.exp(c - lnev[h - 1])).ravel())
    return d


def trajectory_log_likelihood(mdp, reward_table, dataset):
    """Mean log-probability of the dataset's trajectories (reward-dependent part
    plus the known initial/transition terms)."""
    r = np.asarray(reward_table, dtype=float)
    s, a = dataset.states, dataset.actions
    ret = r[s, a].sum(axis=1)
    logdyn = np.log(mdp.alpha[s[:, 0]])
    if s.shape[1] > 1:
        logdyn = logdyn + np.log(mdp.transition[s[:, :-1], a[:, :-1], s[:, 1:]]).sum(axis=1)
    return float(np.mean(ret + logdyn) - log_partition(mdp, r, dataset.horizon))


def _dense_visitation(T, alpha, rewards, horizon):
    """Batched `expected_visitation` for small dense kernels.

    ``T`` is (S, A, S), ``rewards`` is (K, S, A); returns (K, S, A).
    """
    K, S, A = rewards.shape
    V = np.zeros((K, S))
    pis, Vs, lnev = [], [V], []
    for _ in range(horizon):
        m = V.max(axis=1, keepdims=True)
        ev = np.log(np.maximum(np.einsum("sat,kt->ksa", T, np.exp(V - m)), 1e-300)) \
            + m[:, :, None]
        Q = rewards + ev
        V = logsumexp(Q, axis=2)
        pis.append(np.exp(Q - V[:, :, None]))
        lnev.append(ev)
        Vs.append(V)
    D = _start_distribution(np.broadcast_to(alpha, (K, S)), Vs[horizon])
    d = np.zeros((K, S, A))
    for t in range(horizon):
        h = horizon - t
        dsa = D[:, :, None] * pis[h - 1]
        d += dsa
        if h > 1:
            nxt = Vs[h - 1]
            c = nxt.max(axis=1, keepdims=True)
            w = dsa * np.exp(c[:, :, None] - lnev[h - 1])
            D = np.exp(nxt - c) * np.einsum("ksa,sat->kt", w, T)
    return d


def _dynamics_groups(agents):
    groups = []
    for i, a in enumerate(agents):
        for g in groups:
            b = agents[g[0]]
            if (a.shape == b.shape and np.array_equal(a.transition, b.transition)
                    and np.array_equal(a.alpha, b.alpha)):
                g.append(i)
                break
        else:
            groups.append([i])
    return groups


def _factored(mdp, phi):
    return (isinstance(mdp, MMDPSpec) and phi.local is not None
            and len(phi.local) == mdp.n_agents)


def expected_feature_counts(mdp, phi: FeatureMap, weights, horizon):
    """``sum_{s,a} d(s,a) phi(s,a)`` for the linear reward ``phi @ weights``.

    On a product MDP with per-agent features the max-ent distribution is a
    product of per-agent max-ent distributions, so the counts are computed
    agent by agent; the result is identical to the joint computation.
    """
    weights = np.asarray(weights, dtype=float)
    if _factored(mdp, phi):
        rewards = [loc @ w for loc, w in zip(phi.local, phi.split(weights))]
        out = [None] * mdp.n_agents
        # agents with the same dynamics are solved in one batch
        for group in _dynamics_groups(mdp.agents):
            agent = mdp.agents[group[0]]
            d = _dense_visitation(agent.transition, agent.alpha,
                                  np.stack([rewards[i] for i in group]), horizon)
            for k, i in enumerate(group):
                out[i] = np.einsum("sa,sap->p", d[k], phi.local[i])
        return np.concatenate(out)
    d = expected_visitation(mdp, phi.reward(weights), horizon)
    return np.einsum("sa,sap->p", d, phi.table)


def greedy_policy(mdp, phi: FeatureMap, weights, tol=1e-10):
    """Deterministic optimal (discounted) policy for the reward ``phi @ weights``."""
    from .mdp import value_iteration

    weights = np.asarray(weights, dtype=float)
    if _factored(mdp, phi):
        local = [value_iteration(agent, loc @ w, tol=tol)[1]
                 for agent, loc, w in zip(mdp.agents, phi.local, phi.split(weights))]
        si = mdp.state_index
        joint = np.ravel_multi_index(tuple(local[i][si[:, i]] for i in range(mdp.n_agents)),
                                     mdp.local_actions)
        return StochasticPolicy.deterministic(joint, mdp.n_actions)
    _, greedy = value_iteration(mdp, phi.reward(weights), tol=tol)
    return StochasticPolicy.deterministic(greedy, mdp.n_actions)


def monte_carlo_feature_expectation(mdp, policy, phi, n_rollouts, horizon, seed, discount=1.0):
    """Average of ``sum_t discount^t phi(s_t, a_t)`` over sampled rollouts."""
    data = sample_trajectories(mdp, policy, n_rollouts, horizon, seed)
    w = discount ** np.arange(horizon)
    feats = phi.table[data.states, data.actions]          # (N, T, p)
    return np.einsum("t,ntp->p", w, feats) / n_rollouts


def _check_dataset(dataset, mdp):
    if not isinstance(dataset, TrajectoryDataset):
        raise TypeError("fit expects a TrajectoryDataset")
    dataset.check_against(mdp)


class ApprenticeshipLearning(BaseEstimator):
    """Projection method of apprenticeship learning.

    Parameters
    ----------
    mdp : MDPSpec
        Dynamics known to the adversary.
    features : FeatureMap
    epsilon : float
        Stop once the projection residual drops to ``epsilon``.
    max_iter : int
    n_rollouts : int
        Monte Carlo rollouts per feature-expectation estimate.
    feature_discount : float, optional
        Per-step weight of the Monte Carlo estimate of ``mu(pi)``. The default
        ``None`` uses ``mdp.gamma`` (discounted feature expectations, while the
        expert statistic stays undiscounted); 1.0 makes both sides undiscounted.
    initial_policy : StochasticPolicy, optional
        Defaults to the uniform policy.
    weight_norm : float
        Euclidean norm of the reported ``w``; only its direction is learned.
    random_state : int
    """

    def __init__(self, mdp=None, features=None, epsilon=0.1, max_iter=50, n_rollouts=200,
                 feature_discount=None, initial_policy=None, weight_norm=1.0, random_state=0):
        self.mdp = mdp
        self.features = features
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.n_rollouts = n_rollouts
        self.feature_discount = feature_discount
        self.initial_policy = initial_policy
        self.weight_norm = weight_norm
        self.random_state = random_state

    def _mu(self, policy, horizon, i):
        disc = self.mdp.gamma if self.feature_discount is None else self.feature_discount
        return monte_carlo_feature_expectation(self.mdp, policy, self.features, self.n_rollouts,
                                               horizon, [self.random_state, i], disc)

    def fit(self, dataset, y=None):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        mdp, phi = self.mdp, self.features
        _check_dataset(dataset, mdp)
        horizon = dataset.horizon
        mu_E = empirical_feature_expectation(dataset, phi)
        pi = self.initial_policy or StochasticPolicy.uniform(*mdp.shape)
        mu_bar = self._mu(pi, horizon, 0)
        errors, ws = [], []
        w = mu_E - mu_bar
        converged = False
        n_iter = 0
        for i in range(1, self.max_iter + 1):
            n_iter = i
            w = mu_E - mu_bar
            t = float(np.linalg.norm(w))
            errors.append(t)
            ws.append(w)
            if t <= self.epsilon:
                converged = True
                break
            pi = greedy_policy(mdp, phi, w)
            mu = self._mu(pi, horizon, i)
            step = mu - mu_bar
            denom = float(step @ step)
            if denom > 0:
                # orthogonal projection of mu_E onto the line through mu_bar and mu
                mu_bar = mu_bar + (step @ (mu_E - mu_bar)) / denom * step
        if not converged:
            log.info("apprenticeship learning stopped at max_iter=%d (t=%.4g)", self.max_iter,
                     errors[-1])
        if not np.any(w):
            # an exact match leaves w = 0; keep the last direction that was planned against
            w = next((v for v in reversed(ws) if np.any(v)), w)
        norm = float(np.linalg.norm(w))
        # only the direction of w is identified; report it on the unit sphere
        w = self.weight_norm * w / norm if norm > 0 else w
        self.weights_ = w
        self.errors_ = errors
        self.weights_history_ = np.array(ws)
        self.n_iter_ = n_iter
        self.converged_ = converged
        self.policy_ = pi
        self.expert_features_ = mu_E
        self.reward_ = RewardEstimate(phi.reward(w), "AL", "linear_weights", w, n_iter,
                                      errors[-1], "converged" if converged else "max_iter",
                                      self.random_state, errors)
        return self

    def predict(self, states, actions):
        """Estimated reward of the given pairs."""
        check_is_fitted(self, "reward_")
        return self.reward_.table[np.asarray(states), np.asarray(actions)]


class MaxEntIRL(BaseEstimator):
    """Maximum-entropy IRL with a linear reward ``theta @ phi``.

    Gradient ascent from ``theta = 0`` with step ``learning_rate`` on the
    mean trajectory log-likelihood, whose gradient is the expert feature
    expectation minus the model's expected feature counts.

    Parameters
    ----------
    mdp, features : dynamics and feature map
    learning_rate : float
    n_iter : int
    tol : float, optional
        Stop early once the gradient norm falls below ``tol``.
    random_state : int
        Recorded for provenance; the learner itself is deterministic.
    """

    def __init__(self, mdp=None, features=None, learning_rate=0.01, n_iter=200, tol=None,
                 random_state=0):
        self.mdp = mdp
        self.features = features
        self.learning_rate = learning_rate
        self.n_iter = n_iter
        self.tol = tol
        self.random_state = random_state

    def gradient(self, theta, mu_E, horizon):
        return mu_E - expected_feature_counts(self.mdp, self.features, theta, horizon)

    def fit(self, dataset, y=None):
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        _check_dataset(dataset, self.mdp)
        horizon = dataset.horizon
        mu_E = empirical_feature_expectation(dataset, self.features)
        theta = np.zeros(self.features.dimension)
        norms = []
        status = "max_iter"
        for it in range(self.n_iter):
            g = self.gradient(theta, mu_E, horizon)
            gn = float(np.linalg.norm(g))
            norms.append(gn)
            if not np.isfinite(gn) or gn > DIVERGENCE_NORM:
                raise DivergenceError(f"MaxEnt gradient norm {gn:.3g} at iteration {it}")
            if self.tol is not None and gn <= self.tol:
                status = "converged"
                break
            theta = theta + self.learning_rate * g
            if np.linalg.norm(theta) > DIVERGENCE_NORM:
                raise DivergenceError(f"MaxEnt weights left the ball of radius "
                                      f"{DIVERGENCE_NORM:.0e} at iteration {it}")
        self.theta_ = theta
        self.grad_norms_ = norms
        self.n_iter_ = len(norms)
        self.expert_features_ = mu_E
        self.reward_ = RewardEstimate(self.features.reward(theta), "MaxEnt", "linear_weights",
                                      theta, self.n_iter_, norms[-1], status, self.random_state,
                                      norms)
        return self

    def predict(self, states, actions):
        check_is_fitted(self, "reward_")
        return self.reward_.table[np.asarray(states), np.asarray(actions)]


def _orthogonal(rng, n, m):
    """An n x m matrix with orthonormal rows (n <= m) or columns (n > m)."""
    q, r = np.linalg.qr(rng.standard_normal((max(n, m), min(n, m))))
    q = q * np.sign(np.diag(r))
    return q.T if n <= m else q


class SmallNetwork:
    """Dense network ``p -> hidden... -> 1`` with tanh hidden units.

    Parameters live in one flat vector ``params``; ``forward`` returns the
    outputs and a cache for ``backward``, which maps output gradients to a
    parameter gradient of the same layout.
    """

    def __init__(self, sizes=(1, 32, 32, 1), params=None, seed=0, final_scale=1.0,
                 init="orthogonal"):
        self.sizes = tuple(int(s) for s in sizes)
        if init not in ("orthogonal", "normal"):
            raise ValueError(f"unknown init {init!r}")
        if self.sizes[-1] != 1:
            raise ValueError("the network must have a single output")
        self._shapes = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            self._shapes += [(fan_in, fan_out), (fan_out,)]
        if params is None:
            rng = np.random.default_rng(seed)
            chunks = []
            n_layers = len(self.sizes) - 1
            for k, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
                if k == n_layers - 1:
                    W = final_scale * np.sqrt(1.0 / fan_in) * rng.standard_normal((fan_in, fan_out))
                elif init == "orthogonal":
                    W = _orthogonal(rng, fan_in, fan_out)
                else:
                    W = np.sqrt(1.0 / fan_in) * rng.standard_normal((fan_in, fan_out))
                chunks += [W.ravel(), np.zeros(fan_out)]
            params = np.concatenate(chunks)
        params = np.asarray(params, dtype=float)
        if params.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {params.size}")
        self.params = params.copy()

    @property
    def n_params(self):
        return int(sum(np.prod(s) for s in self._shapes))

    def _unpack(self, params):
        out, k = [], 0
        for s in self._shapes:
            n = int(np.prod(s))
            out.append(params[k:k + n].reshape(s))
            k += n
        return out

    def forward(self, X, params=None):
        ws = self._unpack(self.params if params is None else params)
        h = np.asarray(X, dtype=float)
        acts = [h]
        n_layers = len(ws) // 2
        for k in range(n_layers):
            z = h @ ws[2 * k] + ws[2 * k + 1]
            h = np.tanh(z) if k < n_layers - 1 else z
            acts.append(h)
        return h[:, 0], acts

    def backward(self, acts, grad_out, params=None):
        """Gradient of ``sum_i grad_out[i] * output[i]`` with respect to the parameters."""
        ws = self._unpack(self.params if params is None else params)
        n_layers = len(ws) // 2
        delta = np.asarray(grad_out, dtype=float)[:, None]
        grads = [None] * len(ws)
        for k in reversed(range(n_layers)):
            grads[2 * k] = acts[k].T @ delta
            grads[2 * k + 1] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ ws[2 * k].T) * (1.0 - acts[k] ** 2)
        return np.concatenate([g.ravel() for g in grads])

    def __call__(self, X):
        return self.forward(X)[0]


class DeepMaxEntIRL(BaseEstimator):
    """Maximum-entropy IRL with a neural reward ``g(phi(s,a), omega)``.

    Each iteration evaluates the network on all pairs, computes the expected
    visitation under that reward, and backpropagates the difference between
    the empirical and expected visitation counts through the network.

    Parameters
    ----------
    mdp, features : dynamics and feature map
    hidden : tuple of int
        Hidden layer widths.
    learning_rate : float
    n_iter : int
    random_state : int
        Seeds the network initialisation.
    final_scale : float
        Multiplier on the initial output-layer weights (0 gives a constant
        initial reward).
    init : {"orthogonal", "normal"}
        Hidden-layer initialisation. Orthogonal weights keep the network's
        initial sensitivity equal across input features.
    """

    def __init__(self, mdp=None, features=None, hidden=(32, 32), learning_rate=0.01, n_iter=100,
                 random_state=0, final_scale=0.0, init="orthogonal"):
        self.mdp = mdp
        self.features = features
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.n_iter = n_iter
        self.random_state = random_state
        self.final_scale = final_scale
        self.init = init

    def _network(self):
        sizes = (self.features.dimension, *self.hidden, 1)
        return SmallNetwork(sizes, seed=self.random_state, final_scale=self.final_scale,
                            init=self.init)

    def fit(self, dataset, y=None):
        mdp, phi = self.mdp, self.features
        _check_dataset(dataset, mdp)
        horizon = dataset.horizon
        S, A = mdp.shape
        # pairs sharing a feature vector share a reward; evaluate each once
        X, inverse = np.unique(phi.flat(), axis=0, return_inverse=True)
        inverse = inverse.ravel()
        counts_E = dataset.pair_counts(mdp.shape)
        net = self._network()
        norms = []
        for it in range(self.n_iter):
            out, acts = net.forward(X)
            r = out[inverse].reshape(S, A)
            d = expected_visitation(mdp, r, horizon)
            g_pairs = (counts_E - d).ravel()
            g_unique = np.bincount(inverse, weights=g_pairs, minlength=len(X))
            grad = net.backward(acts, g_unique)
            gn = float(np.linalg.norm(grad))
            norms.append(gn)
            if not np.isfinite(gn) or gn > DIVERGENCE_NORM:
                raise DivergenceError(f"deep MaxEnt gradient norm {gn:.3g} at iteration {it}")
            net.params = net.params + self.learning_rate * grad
            if not np.all(np.isfinite(net.params)) or np.linalg.norm(net.params) > DIVERGENCE_NORM:
                raise DivergenceError(f"deep MaxEnt parameters diverged at iteration {it}")
        out, _ = net.forward(X)
        self.network_ = net
        self.grad_norms_ = norms
        self.n_iter_ = len(norms)
        self.reward_ = RewardEstimate(out[inverse].reshape(S, A), "DeepMaxEnt", "table", None,
                                      self.n_iter_, norms[-1] if norms else float("nan"),
                                      "max_iter", self.random_state, norms)
        return self

    def predict(self, states, actions):
        check_is_fitted(self, "reward_")
        return self.reward_.table[np.asarray(states), np.asarray(actions)]


LEARNERS = {"al": ApprenticeshipLearning, "maxent": MaxEntIRL, "deep": DeepMaxEntIRL}
LEARNER_NAMES = {"al": "AL", "maxent": "MaxEnt", "deep": "DeepMaxEnt"}


def make_learner(name, mdp, features, **params):
    key = name.lower().replace("-", "").replace("_", "")
    aliases = {"apprenticeship": "al", "maxentirl": "maxent", "deepmaxent": "deep",
               "deepirl": "deep", "deepmaxentirl": "deep"}
    key = aliases.get(key, key)
    if key not in LEARNERS:
        raise ValueError(f"unknown IRL learner {name!r}; expected one of {sorted(LEARNERS)}")
    return LEARNERS[key](mdp=mdp, features=features, **params)


def apprenticeship_learn(mdp, dataset, phi, epsilon=0.1, max_iter=50, seed=0, **kw):
    return ApprenticeshipLearning(mdp, phi, epsilon, max_iter, random_state=seed,
                                  **kw).fit(dataset).reward_


def maxent_learn(mdp, dataset, phi, learning_rate=0.01, iters=200, seed=0, **kw):
    return MaxEntIRL(mdp, phi, learning_rate, iters, random_state=seed, **kw).fit(dataset).reward_


def deep_maxent_learn(mdp, dataset, phi, hidden=(32, 32), learning_rate=0.01, iters=100, seed=0,
                      **kw):
    return DeepMaxEntIRL(mdp, phi, hidden, learning_rate, iters, random_state=seed,
                         **kw).fit(dataset).reward_
