"""Reading and writing specs, occupancy measures, policies, datasets and rewards.

Spec documents are YAML (JSON is accepted as a subset)::

    states: [s0, s1]                # names, or a count
    actions: [stay, go]             # names, or a count
    gamma: 0.9
    alpha: [1.0, 0.0]               # list, or {state: probability}
    rewards: [[1, 0], [0, 2]]       # row-major state x action, or {state: {action: r}}
    transitions:                    # state -> action -> distribution
      s0: {stay: [1, 0], go: {s1: 1.0}}
      s1: {stay: [0, 1], go: [1, 0]}
    goal_states: [s1]

``transitions`` may also be a nested list indexed ``[state][action][next]``.
A document with an ``mtd`` key instead builds the moving-target-defense
benchmark from those parameters; one with ``agents`` (a list of per-agent
documents) builds their product.

Tabular outputs are CSV with floats written to 12 significant digits, so
identical inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import os
from pathlib import Path

import numpy as np
import yaml

from .exceptions import SpecError
from .mdp import (MDPSpec, MMDPSpec, OccupancyMeasure, StochasticPolicy, TrajectoryDataset,
                  build_product)

FLOAT_FMT = "%.12g"


def fmt(v):
    return FLOAT_FMT % v


# -- documents -------------------------------------------------------------

def read_document(path):
    """Parse a YAML/JSON file into a mapping, reporting the line of syntax errors."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise SpecError(f"{path}: cannot read ({e.strerror})") from e
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise SpecError(f"{path}: parse error at {where}: {getattr(e, 'problem', e)}") from e
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: expected a mapping at the top level")
    return doc


def _names(value, field):
    if isinstance(value, int) and not isinstance(value, bool):
        if value < 1:
            raise SpecError(f"field '{field}': need at least one entry")
        return tuple(str(i) for i in range(value))
    if isinstance(value, list) and value:
        names = tuple(str(v) for v in value)
        if len(set(names)) != len(names):
            raise SpecError(f"field '{field}': duplicate names")
        return names
    raise SpecError(f"field '{field}': expected a nonempty list of names or a count")


def _index(name, names, field):
    if isinstance(name, int) and not isinstance(name, bool):
        if not 0 <= name < len(names):
            raise SpecError(f"field '{field}': index {name} out of range")
        return name
    try:
        return names.index(str(name))
    except ValueError:
        raise SpecError(f"field '{field}': unknown name {name!r}") from None


def _number(v, field):
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise SpecError(f"field '{field}': expected a number, got {v!r}") from None
    if not np.isfinite(x):
        raise SpecError(f"field '{field}': non-finite value")
    return x


def _vector(value, names, field):
    """A list in name order, or a mapping name -> number (missing entries are 0)."""
    out = np.zeros(len(names))
    if isinstance(value, dict):
        for k, v in value.items():
            out[_index(k, names, field)] = _number(v, f"{field}.{k}")
    elif isinstance(value, list):
        if len(value) != len(names):
            raise SpecError(f"field '{field}': expected {len(names)} entries, got {len(value)}")
        for i, v in enumerate(value):
            out[i] = _number(v, f"{field}[{i}]")
    else:
        raise SpecError(f"field '{field}': expected a list or mapping")
    return out


def _entries(value, names, field):
    """Iterate ``(index, label, item)`` over a list or a name-keyed mapping."""
    if isinstance(value, dict):
        seen = set()
        for k, v in value.items():
            i = _index(k, names, field)
            seen.add(i)
            yield i, f"{field}.{k}", v
        missing = [names[i] for i in range(len(names)) if i not in seen]
        if missing:
            raise SpecError(f"field '{field}': missing entries for {missing}")
    elif isinstance(value, list):
        if len(value) != len(names):
            raise SpecError(f"field '{field}': expected {len(names)} entries, got {len(value)}")
        for i, v in enumerate(value):
            yield i, f"{field}[{names[i]}]", v
    else:
        raise SpecError(f"field '{field}': expected a list or mapping")


def _require(doc, key, where="spec"):
    if key not in doc:
        raise SpecError(f"{where}: missing required field '{key}'")
    return doc[key]


def mdp_from_document(doc, check_goals=True) -> MDPSpec:
    """Build an `MDPSpec` (or `MMDPSpec`) from a parsed spec document."""
    if "mtd" in doc:
        from .mtd import MTDParams, build_mtd
        return build_mtd(mtd_params_from_document(doc["mtd"] or {}))
    if "agents" in doc:
        return _mmdp_from_document(doc)
    states = _names(_require(doc, "states"), "states")
    actions = _names(_require(doc, "actions"), "actions")
    S, A = len(states), len(actions)
    gamma = _number(_require(doc, "gamma"), "gamma")
    alpha = _vector(_require(doc, "alpha"), states, "alpha")
    reward = np.zeros((S, A))
    for s, lab, row in _entries(_require(doc, "rewards"), states, "rewards"):
        reward[s] = _vector(row, actions, lab)
    T = np.zeros((S, A, S))
    for s, lab, row in _entries(_require(doc, "transitions"), states, "transitions"):
        for a, lab2, dist in _entries(row, actions, lab):
            T[s, a] = _vector(dist, states, lab2)
    goals = tuple(_index(g, states, "goal_states") for g in doc.get("goal_states", []) or [])
    return MDPSpec(T, reward, gamma, alpha, goals, states, actions,
                   check_goals=bool(doc.get("check_goals", check_goals)))


def _mmdp_from_document(doc):
    agents_doc = doc["agents"]
    if not isinstance(agents_doc, list) or not agents_doc:
        raise SpecError("field 'agents': expected a nonempty list of agent specs")
    agents = []
    for i, a in enumerate(agents_doc):
        if not isinstance(a, dict):
            raise SpecError(f"field 'agents[{i}]': expected a mapping")
        try:
            agents.append(mdp_from_document({**a, "check_goals": False}))
        except SpecError as e:
            raise SpecError(f"agents[{i}]: {e}") from None
    mm = build_product(agents, "sum", gamma=doc.get("gamma"))
    goals = []
    for g in doc.get("goal_states", []) or []:
        if isinstance(g, str) and "|" in g:
            goals.append(_index(g, mm.state_names, "goal_states"))
        elif isinstance(g, list):
            if len(g) != len(agents):
                raise SpecError("field 'goal_states': local tuples need one entry per agent")
            local = [_index(x, ag.state_names, "goal_states") for x, ag in zip(g, agents)]
            goals.append(mm.joint_state(local))
        else:
            goals.append(_index(g, mm.state_names, "goal_states"))
    return MMDPSpec(mm.transition, mm.reward, mm.gamma, mm.alpha, tuple(goals), mm.state_names,
                    mm.action_names, check_goals=False, agents=mm.agents)


def load_mdp(path, check_goals=True) -> MDPSpec:
    doc = read_document(path)
    try:
        return mdp_from_document(doc, check_goals)
    except SpecError as e:
        raise SpecError(f"{path}: {e}") from None


def mdp_to_document(mdp: MDPSpec):
    states = list(mdp.state_names or [str(i) for i in range(mdp.n_states)])
    actions = list(mdp.action_names or [str(i) for i in range(mdp.n_actions)])
    return {
        "states": states,
        "actions": actions,
        "gamma": mdp.gamma,
        "alpha": mdp.alpha.tolist(),
        "rewards": mdp.reward.tolist(),
        "transitions": {s: {a: mdp.transition[i, j].tolist() for j, a in enumerate(actions)}
                        for i, s in enumerate(states)},
        "goal_states": [states[g] for g in mdp.goal_states],
    }


def save_mdp(mdp, path):
    Path(path).write_text(yaml.safe_dump(mdp_to_document(mdp), sort_keys=False))


def mtd_params_from_document(doc):
    from .mtd import MTDParams

    if not isinstance(doc, dict):
        raise SpecError("field 'mtd': expected a mapping")
    known = set(MTDParams.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise SpecError(f"field 'mtd': unknown keys {sorted(unknown)}")
    kw = dict(doc)
    src = kw.get("transition_source")
    if src and kw.get("transitions") is None:
        tdoc = read_document(src)
        kw["transitions"] = _require(tdoc, "transitions", str(src))
    return MTDParams(**kw)


# -- tables ----------------------------------------------------------------

def _labels(mdp):
    states = mdp.state_names or tuple(str(i) for i in range(mdp.n_states))
    actions = mdp.action_names or tuple(str(i) for i in range(mdp.n_actions))
    return states, actions


def write_table(path, mdp, table, value_name="value"):
    """One row per (state, action): ``state, action, <value_name>``."""
    table = np.asarray(table, dtype=float)
    states, actions = _labels(mdp)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["state", "action", value_name])
        for s in range(table.shape[0]):
            for a in range(table.shape[1]):
                w.writerow([states[s], actions[a], fmt(table[s, a])])


def read_table(path, mdp):
    states, actions = _labels(mdp)
    si = {n: i for i, n in enumerate(states)}
    ai = {n: i for i, n in enumerate(actions)}
    out = np.zeros(mdp.shape)
    seen = np.zeros(mdp.shape, dtype=bool)
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r, None)
        if header is None or len(header) != 3:
            raise SpecError(f"{path}: expected a 3-column header state,action,value")
        for line, row in enumerate(r, start=2):
            if len(row) != 3:
                raise SpecError(f"{path}: line {line}: expected 3 columns")
            s, a, v = row
            if s not in si or a not in ai:
                raise SpecError(f"{path}: line {line}: unknown state/action {s!r}/{a!r}")
            out[si[s], ai[a]] = _number(v, f"line {line}")
            seen[si[s], ai[a]] = True
    if not seen.all():
        raise SpecError(f"{path}: {int((~seen).sum())} state-action pairs missing")
    return out


def save_occupancy(path, mdp, x: OccupancyMeasure):
    write_table(path, mdp, x.values, "occupancy")


def load_occupancy(path, mdp) -> OccupancyMeasure:
    return OccupancyMeasure(read_table(path, mdp), mdp.gamma)


def save_policy(path, mdp, policy: StochasticPolicy):
    write_table(path, mdp, policy.values, "probability")


def load_policy(path, mdp) -> StochasticPolicy:
    try:
        return StochasticPolicy(read_table(path, mdp))
    except ValueError as e:
        raise SpecError(f"{path}: {e}") from None


def save_trajectories(path, dataset: TrajectoryDataset):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["traj_id", "t", "state_index", "action_index"])
        for j in range(dataset.n_trajectories):
            for t in range(dataset.horizon):
                w.writerow([j, t, int(dataset.states[j, t]), int(dataset.actions[j, t])])


def load_trajectories(path, seed=None) -> TrajectoryDataset:
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    if data.size == 0:
        raise SpecError(f"{path}: no trajectories")
    n, t = data[:, 0].max() + 1, data[:, 1].max() + 1
    if len(data) != n * t:
        raise SpecError(f"{path}: trajectories must all have the same length")
    states = np.zeros((n, t), dtype=np.int64)
    actions = np.zeros((n, t), dtype=np.int64)
    states[data[:, 0], data[:, 1]] = data[:, 2]
    actions[data[:, 0], data[:, 1]] = data[:, 3]
    return TrajectoryDataset(states, actions, seed)


def save_reward_estimate(path, mdp, estimate):
    """Reward table in spec-document layout plus a ``provenance`` header."""
    states, actions = _labels(mdp)
    doc = {"provenance": estimate.header(),
           "states": list(states), "actions": list(actions),
           "rewards": [[float(fmt(v)) for v in row] for row in estimate.table]}
    if estimate.weights is not None:
        doc["weights"] = [float(fmt(v)) for v in estimate.weights]
    write_json(path, doc)


def write_json(path, obj):
    with open(path, "w") as f:
        json.dump(_jsonable(obj), f, indent=2, sort_keys=False)
        f.write("\n")


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        v = float(o)
        return v if np.isfinite(v) else str(v)
    return o


# -- manifests -------------------------------------------------------------

def write_manifest(out_dir, command, inputs, seed, extra=None):
    """Record what produced ``out_dir``. Volatile fields live only here."""
    from . import __version__

    manifest = {"command": command,
                "inputs": {k: (str(v) if v is not None else None) for k, v in inputs.items()},
                "output_dir": str(out_dir),
                "seed": seed,
                "version": __version__,
                "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}
    if extra:
        manifest.update(extra)
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest
