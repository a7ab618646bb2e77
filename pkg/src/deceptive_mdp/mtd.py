"""Moving-target-defense benchmark: one real agent hidden among decoys.

Each agent has local states ``N, T, E, B`` (normal, targeted, exploited,
breached) and actions ``wait, defend, reset``. The real agent earns the
reward table below; decoy agents earn ``decoy_scale`` times the same table.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .exceptions import SpecError
from .mdp import MDPSpec, MMDPSpec, build_product

LOCAL_STATES = ("N", "T", "E", "B")
LOCAL_ACTIONS = ("wait", "defend", "reset")

# Stand-in transition table; supply measured values through
# ``MTDParams.transitions``. Rows are (state, action), columns the next
# state N, T, E, B.
DEFAULT_TRANSITIONS = np.array([
    # wait: the attacker advances one stage at a time
    [[0.60, 0.40, 0.00, 0.00],
     [0.00, 0.80, 0.20, 0.00],
     [0.00, 0.00, 0.70, 0.30],
     [0.00, 0.00, 0.00, 1.00]],
    # defend: push the agent back towards N
    [[1.00, 0.00, 0.00, 0.00],
     [0.80, 0.20, 0.00, 0.00],
     [0.00, 0.60, 0.40, 0.00],
     [0.00, 0.00, 0.50, 0.50]],
    # reset: deterministic return to N
    [[1.00, 0.00, 0.00, 0.00],
     [1.00, 0.00, 0.00, 0.00],
     [1.00, 0.00, 0.00, 0.00],
     [1.00, 0.00, 0.00, 0.00]],
]).transpose(1, 0, 2)


@dataclass
class MTDParams:
    """Benchmark parameters.

    ``transitions`` overrides the per-agent kernel, shape (4, 3, 4) indexed
    ``[state, action, next_state]``; ``None`` selects `DEFAULT_TRANSITIONS`.
    """

    R: float = 10.0
    C_T: float = 0.1
    C_E: float = 3.0
    C_B: float = 4.0
    C_D: float = 5.0
    C_R: float = 20.0
    decoy_scale: float = 0.01
    n_real: int = 1
    m_decoy: int = 3
    gamma: float = 0.9
    v_reach: float = 7.0
    transitions: list | np.ndarray | None = None
    transition_source: str | None = None

    def __post_init__(self):
        costs = dict(C_T=self.C_T, C_E=self.C_E, C_B=self.C_B, C_D=self.C_D, C_R=self.C_R)
        for k, v in costs.items():
            if v < 0:
                raise SpecError(f"{k} must be nonnegative, got {v}")
        if not 0 < self.decoy_scale <= 1:
            raise SpecError(f"decoy_scale must lie in (0, 1], got {self.decoy_scale}")
        if self.n_real < 1 or self.m_decoy < 0:
            raise SpecError("need at least one real agent and a nonnegative decoy count")

    @property
    def n_agents(self):
        return self.n_real + self.m_decoy

    def transition_table(self):
        T = DEFAULT_TRANSITIONS if self.transitions is None else self.transitions
        T = np.asarray(T, dtype=float)
        if T.shape != (4, 3, 4):
            raise SpecError(f"MTD transition table must have shape (4, 3, 4), got {T.shape}")
        sums = T.sum(axis=2)
        bad = np.argwhere((np.abs(sums - 1) > 1e-9) | (T < 0).any(axis=2))
        if len(bad):
            s, a = bad[0]
            raise SpecError(f"MTD transition row ({LOCAL_STATES[s]}, {LOCAL_ACTIONS[a]}) "
                            f"is not a distribution (sum={sums[s, a]:.12g})")
        return T

    def to_dict(self):
        d = asdict(self)
        if d["transitions"] is not None:
            d["transitions"] = np.asarray(d["transitions"]).tolist()
        return d


def reward_table(params: MTDParams, scale=1.0):
    """Real-agent rewards by (local state, action), optionally scaled."""
    R, C_T, C_E, C_B, C_D, C_R = (params.R, params.C_T, params.C_E, params.C_B,
                                  params.C_D, params.C_R)
    state_cost = np.array([0.0, C_T, C_E, C_B])
    table = np.empty((4, 3))
    table[:, 0] = R - state_cost
    table[:, 1] = R - C_D - state_cost
    table[:, 2] = R - C_R
    return scale * table


def agent_spec(params: MTDParams, real: bool) -> MDPSpec:
    alpha = np.array([1.0, 0.0, 0.0, 0.0])
    r = reward_table(params, 1.0 if real else params.decoy_scale)
    return MDPSpec(params.transition_table(), r, params.gamma, alpha, goal_states=(0,),
                   state_names=LOCAL_STATES, action_names=LOCAL_ACTIONS)


def real_goal_states(mmdp: MMDPSpec, agents=(0,)):
    """Joint states in which every listed agent is in N."""
    idx = mmdp.state_index
    mask = np.all(idx[:, list(agents)] == 0, axis=1)
    return tuple(np.flatnonzero(mask).tolist())


def build_mtd(params: MTDParams | None = None) -> MMDPSpec:
    """Product MMDP with the real agents first and decoys after them.

    Goal states are the joint states where the real agents are all in N.
    The joint reward is the sum of the agents' rewards.
    """
    params = params or MTDParams()
    specs = [agent_spec(params, True)] * params.n_real + \
            [agent_spec(params, False)] * params.m_decoy
    mmdp = build_product(specs, "sum", gamma=params.gamma)
    goals = real_goal_states(mmdp, range(params.n_real))
    return MMDPSpec(mmdp.transition, mmdp.reward, mmdp.gamma, mmdp.alpha, goals,
                    mmdp.state_names, mmdp.action_names, check_goals=False,
                    agents=mmdp.agents)


def swapped_reward_mmdp(mmdp: MMDPSpec, params: MTDParams, target_agent=1):
    """Same dynamics, with the reward roles of agent 0 and ``target_agent`` exchanged.

    The optimal policy of this MMDP treats the target decoy as the real agent;
    its occupancy measure is the default target for targeted deception.
    """
    roles = [True] * params.n_real + [False] * params.m_decoy
    roles[0], roles[target_agent] = roles[target_agent], roles[0]
    specs = [agent_spec(params, real) for real in roles]
    fake = build_product(specs, "sum", gamma=params.gamma)
    return mmdp.with_reward(fake.reward)


@dataclass
class MetricWeights:
    """Local-state weights and softmax temperature for the deception metric."""

    w: dict = field(default_factory=lambda: {"N": 1.0, "T": 0.75, "E": 0.5, "B": 0.25})
    lam: float = 1000.0

    def __post_init__(self):
        if any(v < 0 for v in self.w.values()):
            raise SpecError("metric weights must be nonnegative")
        if self.lam <= 0:
            raise SpecError("softmax temperature must be positive")

    def vector(self, names=LOCAL_STATES):
        return np.array([self.w[n] for n in names], dtype=float)


def marginal_reward(reward_table, mmdp: MMDPSpec, agent_index):
    """Estimated reward summed over all joint pairs with agent ``i`` in each local state."""
    if not 0 <= agent_index < mmdp.n_agents:
        raise IndexError(f"agent index {agent_index} out of range")
    table = np.asarray(reward_table, dtype=float)
    if table.shape != mmdp.shape:
        raise SpecError(f"reward estimate shape {table.shape} != joint shape {mmdp.shape}")
    per_state = table.sum(axis=1).reshape(mmdp.local_states)
    other = tuple(j for j in range(mmdp.n_agents) if j != agent_index)
    return per_state.sum(axis=other)


def deception_metric(reward_estimate, weights: MetricWeights, agent_index, mmdp: MMDPSpec):
    """Weighted sum of agent ``i``'s estimated marginal reward."""
    table = getattr(reward_estimate, "table", reward_estimate)
    marg = marginal_reward(table, mmdp, agent_index)
    n_local = mmdp.local_states[agent_index]
    names = LOCAL_STATES if n_local == len(LOCAL_STATES) else tuple(weights.w)[:n_local]
    return float(weights.vector(names) @ marg)


def likelihoods(d_values, lam=1000.0):
    """Softmax of the metric values at temperature ``lam``."""
    if lam <= 0:
        raise ValueError("temperature must be positive")
    d = np.asarray(d_values, dtype=float) / lam
    e = np.exp(d - d.max())
    return e / e.sum()


def equivocal_sets(mmdp: MMDPSpec, real=0, other=1):
    """Goal and decoy state sets for balancing agent ``real`` against ``other``.

    Goal: ``real`` in N and ``other`` not in N; decoy: the reverse. The sets
    are disjoint and their visitation gap equals the difference of the two
    agents' N visitation.
    """
    idx = mmdp.state_index
    goal = np.flatnonzero((idx[:, real] == 0) & (idx[:, other] != 0))
    decoy = np.flatnonzero((idx[:, other] == 0) & (idx[:, real] != 0))
    return tuple(goal.tolist()), tuple(decoy.tolist())


def mtd_target(mmdp: MMDPSpec, params: MTDParams, target_agent=1, target_reach=8.5):
    """Target occupancy for targeted deception towards ``target_agent``.

    Optimal policy of the MMDP whose reward treats ``target_agent`` as the
    real agent, under the real reach requirement plus ``target_reach``
    expected visits to states with ``target_agent`` in N.
    """
    from .deception import target_occupancy

    fake = swapped_reward_mmdp(mmdp, params, target_agent)
    return target_occupancy(mmdp, fake.reward, params.v_reach,
                            real_goal_states(mmdp, (target_agent,)), target_reach)


KIND_IDS = {"diversionary": 0, "targeted": 1, "equivocal_soft": 2, "equivocal_exact": 3}
ALGO_IDS = {"al": 0, "maxent": 1, "deep": 2}

DEFAULT_IRL = {
    "al": {"epsilon": 0.1, "max_iter": 30, "n_rollouts": 200, "weight_norm": 6.0},
    "maxent": {"learning_rate": 0.002, "n_iter": 90},
    "deep": {"learning_rate": 0.002, "n_iter": 40, "hidden": [32, 32]},
}
DEFAULT_GRIDS = {"diversionary": [0.0, 0.1, 0.3], "targeted": [0.0, 0.2, 1.0],
                 "equivocal_soft": [0.0, 30.0, 300.0]}


def derive_seed(master, *key):
    """Integer seed for the task identified by ``key``.

    ``SeedSequence(master, spawn_key=key)`` gives a stream that depends only
    on the master seed and the task key, never on scheduling.
    """
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def canonical_kind(kind):
    return "equivocal_soft" if kind == "equivocal" else kind


@dataclass
class ExperimentConfig:
    """Everything `run_experiment` needs; loadable from a config document."""

    params: MTDParams = field(default_factory=MTDParams)
    weights: MetricWeights = field(default_factory=MetricWeights)
    grids: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_GRIDS.items()})
    irl: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_IRL.items()})
    runs: int = 50
    n_trajectories: int = 50
    horizon: int = 30
    seed: int = 0
    target_agent: int = 1
    target_reach: float = 8.5
    equivocal_agent: int = 1
    starts: int = 8

    def __post_init__(self):
        self.grids = {canonical_kind(k): [float(b) for b in v] for k, v in self.grids.items()}
        for k, v in self.grids.items():
            if k not in KIND_IDS:
                raise SpecError(f"unknown deception kind {k!r}")
            if not v:
                raise SpecError(f"empty beta grid for {k}")
            if any(b < 0 for b in v):
                raise SpecError(f"negative beta in the {k} grid")
        if not self.grids:
            raise SpecError("no deception kinds selected")
        for name in self.irl:
            if name not in ALGO_IDS:
                raise SpecError(f"unknown IRL learner {name!r}; expected one of {sorted(ALGO_IDS)}")
        if not self.irl:
            raise SpecError("no IRL learners selected")
        if self.runs < 1 or self.n_trajectories < 1 or self.horizon < 1:
            raise SpecError("runs, n_trajectories and horizon must be positive")
        n = self.params.n_agents
        for a in (self.target_agent, self.equivocal_agent):
            if not 0 < a < n:
                raise SpecError(f"agent index {a} must name a decoy (1..{n - 1})")

    def to_dict(self):
        return {"mtd": self.params.to_dict(), "weights": {"w": dict(self.weights.w),
                                                          "lambda": self.weights.lam},
                "grids": self.grids, "irl": self.irl, "runs": self.runs,
                "n_trajectories": self.n_trajectories, "horizon": self.horizon,
                "seed": self.seed, "target_agent": self.target_agent,
                "target_reach": self.target_reach, "equivocal_agent": self.equivocal_agent,
                "starts": self.starts}


@dataclass
class CellResult:
    """Solved deceptive policy for one (kind, beta) cell."""

    kind: str
    beta: float
    beta_index: int
    occupancy: object = None
    revenue: float = float("nan")
    revenue_fraction: float = float("nan")
    loss: float = float("nan")
    bound: float = float("nan")
    status: str = "ok"
    message: str = ""
    seconds: float = 0.0


@dataclass
class ExperimentReport:
    """Rows per (kind, beta, learner, run) plus per-cell solver outcomes."""

    rows: list
    cells: list
    n_agents: int
    optimal_revenue: float
    config: dict

    CSV_FIXED = ("kind", "beta", "irl", "run")
    CSV_TAIL = ("inferred_agent", "revenue", "revenue_fraction", "bound", "status")

    def columns(self):
        return (list(self.CSV_FIXED) + [f"L{i}" for i in range(self.n_agents)]
                + list(self.CSV_TAIL))

    def summary(self):
        """Per (kind, beta, learner): mean likelihoods and the inferred agent."""
        out = []
        cells = {(c.kind, c.beta): c for c in self.cells}
        groups = {}
        for r in self.rows:
            groups.setdefault((r["kind"], r["beta"], r["irl"]), []).append(r)
        for (kind, beta, irl), rows in groups.items():
            ok = [r for r in rows if r["status"] == "ok"]
            cell = cells[(kind, beta)]
            entry = {"kind": kind, "beta": beta, "irl": irl, "runs": len(rows),
                     "runs_ok": len(ok), "revenue": cell.revenue,
                     "revenue_fraction": cell.revenue_fraction, "loss": cell.loss,
                     "bound": cell.bound, "status": cell.status}
            if ok:
                L = np.array([r["L"] for r in ok])
                mean = L.mean(axis=0)
                entry["mean_L"] = mean.tolist()
                entry["inferred_agent"] = int(np.argmax(mean))
                entry["inferred_counts"] = np.bincount(L.argmax(axis=1),
                                                       minlength=self.n_agents).tolist()
            out.append(entry)
        return out

    def lookup(self, kind, beta, irl):
        for e in self.summary():
            if e["kind"] == kind and e["beta"] == beta and e["irl"] == irl:
                return e
        raise KeyError((kind, beta, irl))


def _solve_cell(mmdp, params, cfg, kind, beta, bidx, baseline, x_tar, eq_sets):
    import time

    from .deception import DeceptionConfig, deception_bound, synthesize
    from .exceptions import InfeasibleError
    from .mdp import revenue, revenue_loss

    t0 = time.perf_counter()
    cell = CellResult(kind, beta, bidx)
    goal, decoy = eq_sets
    try:
        if kind == "targeted" and isinstance(x_tar, Exception):
            raise x_tar
        dc = DeceptionConfig(kind, beta, params.v_reach,
                             x_tar if kind == "targeted" else None,
                             decoy if kind.startswith("equivocal") else None,
                             goal if kind.startswith("equivocal") else None,
                             cfg.starts, derive_seed(cfg.seed, KIND_IDS[kind], bidx, 0, 99))
        report, _ = synthesize(mmdp, dc, baseline)
        r_star = revenue(mmdp, baseline.solution)
        cell.occupancy = report.solution
        cell.revenue = revenue(mmdp, report.solution)
        cell.revenue_fraction = cell.revenue / r_star
        cell.loss = revenue_loss(r_star, cell.revenue)
        cell.bound = deception_bound(kind, baseline.solution, r_star, beta, mmdp.gamma,
                                     dc.x_tar, goal, decoy)
    except InfeasibleError as e:
        cell.status, cell.message = "infeasible", str(e)
    except Exception as e:  # noqa: BLE001 - one failed cell must not stop the sweep
        cell.status, cell.message = "error", f"{type(e).__name__}: {e}"
    cell.seconds = time.perf_counter() - t0
    return cell


def _attack_run(mmdp, phi, cfg, cell, run):
    """Sample one dataset for a cell and attack it with every configured learner."""
    from .exceptions import DivergenceError
    from .irl import make_learner
    from .mdp import policy_of_occupancy, sample_trajectories

    n = mmdp.n_agents
    kid = KIND_IDS[cell.kind]
    rows = []
    if cell.status != "ok":
        for name in cfg.irl:
            rows.append(_row(cell, name, run, [float("nan")] * n, -1, cell.status))
        return rows
    data_seed = derive_seed(cfg.seed, kid, cell.beta_index, run)
    dataset = sample_trajectories(mmdp, policy_of_occupancy(cell.occupancy),
                                  cfg.n_trajectories, cfg.horizon, data_seed)
    for name, hp in cfg.irl.items():
        hp = dict(hp)
        if "hidden" in hp:
            hp["hidden"] = tuple(hp["hidden"])
        seed = derive_seed(cfg.seed, kid, cell.beta_index, run, ALGO_IDS[name])
        try:
            est = make_learner(name, mmdp, phi, random_state=seed, **hp).fit(dataset)
            D = [deception_metric(est.reward_, cfg.weights, i, mmdp) for i in range(n)]
            L = likelihoods(D, cfg.weights.lam)
            rows.append(_row(cell, name, run, L.tolist(), int(np.argmax(L)), "ok"))
        except DivergenceError:
            rows.append(_row(cell, name, run, [float("nan")] * n, -1, "diverged"))
    return rows


def _row(cell, irl, run, L, inferred, status):
    return {"kind": cell.kind, "beta": cell.beta, "irl": irl, "run": run, "L": L,
            "inferred_agent": inferred, "revenue": cell.revenue,
            "revenue_fraction": cell.revenue_fraction, "bound": cell.bound, "status": status}


def run_experiment(params: MTDParams | None = None, weights: MetricWeights | None = None,
                   deception_kinds=None, beta_grid=None, irl_algorithms=None, runs=None,
                   seed=None, threads=1, config: ExperimentConfig | None = None,
                   progress=None) -> ExperimentReport:
    """Sweep deception kinds and beta values against IRL adversaries.

    For every (kind, beta) the deceptive policy is solved once; for every run
    a dataset is sampled from it and attacked by each learner. Seeds derive
    from the master seed and the task key only, and results are merged by
    key, so the report does not depend on ``threads``.

    Explicit arguments override the corresponding fields of ``config``;
    ``beta_grid`` may be a list shared by all kinds or a mapping per kind.
    """
    from concurrent.futures import ThreadPoolExecutor

    from .deception import solve_baseline
    from .exceptions import InfeasibleError
    from .irl import FeatureMap
    from .mdp import revenue

    cfg = config or ExperimentConfig()
    over = {}
    if params is not None:
        over["params"] = params
    if weights is not None:
        over["weights"] = weights
    if deception_kinds is not None or beta_grid is not None:
        kinds = [canonical_kind(k) for k in (deception_kinds or list(cfg.grids))]
        if beta_grid is None:
            grids = {k: cfg.grids.get(k, DEFAULT_GRIDS.get(k, [0.0])) for k in kinds}
        elif isinstance(beta_grid, dict):
            grids = {canonical_kind(k): v for k, v in beta_grid.items()
                     if canonical_kind(k) in kinds}
        else:
            grids = {k: list(beta_grid) for k in kinds}
        over["grids"] = grids
    if irl_algorithms is not None:
        over["irl"] = {a: cfg.irl.get(a, DEFAULT_IRL.get(a, {})) for a in irl_algorithms}
    if runs is not None:
        over["runs"] = runs
    if seed is not None:
        over["seed"] = seed
    if over:
        cfg = ExperimentConfig(**{**cfg.__dict__, **over})

    p = cfg.params
    mmdp = build_mtd(p)
    phi = FeatureMap.agent_states(mmdp)
    baseline = solve_baseline(mmdp, p.v_reach)
    r_star = revenue(mmdp, baseline.solution)
    x_tar = None
    if "targeted" in cfg.grids:
        try:
            x_tar = mtd_target(mmdp, p, cfg.target_agent, cfg.target_reach)
        except InfeasibleError as e:
            x_tar = e  # every targeted cell reports it
    eq_sets = equivocal_sets(mmdp, 0, cfg.equivocal_agent)

    jobs = [(k, b, i) for k in cfg.grids for i, b in enumerate(cfg.grids[k])]
    threads = max(1, int(threads))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        cells = list(pool.map(lambda j: _solve_cell(mmdp, p, cfg, j[0], j[1], j[2], baseline,
                                                    x_tar, eq_sets), jobs))
        tasks = [(c, r) for c in cells for r in range(cfg.runs)]

        def work(task):
            rows = _attack_run(mmdp, phi, cfg, *task)
            if progress is not None:
                progress(task)
            return rows

        results = list(pool.map(work, tasks))
    order = {k: i for i, k in enumerate(cfg.grids)}
    algo_order = {a: i for i, a in enumerate(cfg.irl)}
    rows = sorted((r for rs in results for r in rs),
                  key=lambda r: (order[r["kind"]], r["beta"], algo_order[r["irl"]], r["run"]))
    return ExperimentReport(rows, cells, mmdp.n_agents, r_star, cfg.to_dict())
