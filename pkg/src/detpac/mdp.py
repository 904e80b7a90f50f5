"""Deterministic episodic MDPs stored as a layered arc graph.

A node is a (stage, state) pair; an arc is a (stage, state, action) triplet.
Stages are 1-based in every user-facing key ("h/state/action") and 0-based in
arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels as K

SINK = None  # next_state of stage-H actions
GAP_TOL = 1e-12


@dataclass(frozen=True)
class ActionSpec:
    label: str
    next_state: str | None
    mean_reward: float


class DeterministicMdp:
    """Immutable layered MDP.

    stages[h] maps state id -> list of ActionSpec; insertion order fixes the
    node and action order (and thereby tie-breaking).
    """

    def __init__(self, stages: Sequence[Mapping[str, Sequence[ActionSpec]]],
                 reward_kind: str = "bernoulli", sigma2: float = 1.0):
        if len(stages) == 0:
            raise ValueError("horizon must be positive")
        if reward_kind not in ("bernoulli", "gaussian"):
            raise ValueError(f"unknown reward kind {reward_kind!r}")
        if reward_kind == "gaussian" and not sigma2 > 0:
            raise ValueError("gaussian rewards need sigma2 > 0")
        H = len(stages)
        if len(stages[0]) != 1:
            raise ValueError("stage 1 must contain exactly one state")
        self.horizon = H
        self.reward_kind = reward_kind
        self.sigma2 = float(sigma2) if reward_kind == "gaussian" else 0.25

        state_ids, node_of = [], {}
        for h, layer in enumerate(stages):
            ids = []
            for s in layer:
                s = str(s)
                if (h, s) in node_of:
                    raise ValueError(f"duplicate state {s!r} at stage {h + 1}")
                node_of[(h, s)] = len(node_of)
                ids.append(s)
            state_ids.append(tuple(ids))
        M = len(node_of)

        labels, src, dst, means, node_arc_start = [], [], [], [], [0]
        for h, layer in enumerate(stages):
            for s, acts in layer.items():
                if len(acts) == 0:
                    raise ValueError(f"state {s!r} at stage {h + 1} has no action")
                u = node_of[(h, str(s))]
                seen = set()
                for act in acts:
                    act = act if isinstance(act, ActionSpec) else ActionSpec(*act)
                    if act.label in seen:
                        raise ValueError(f"duplicate action {act.label!r} at {h + 1}/{s}")
                    seen.add(act.label)
                    if h == H - 1:
                        if act.next_state is not None:
                            raise ValueError("stage-H actions must lead to the sink")
                        v = M
                    else:
                        key = (h + 1, str(act.next_state))
                        if key not in node_of:
                            raise ValueError(
                                f"{h + 1}/{s}/{act.label} leads to unknown state {act.next_state!r}")
                        v = node_of[key]
                    r = float(act.mean_reward)
                    if not (0.0 <= r <= 1.0):
                        raise ValueError(f"mean reward {r} outside [0, 1]")
                    labels.append(str(act.label))
                    src.append(u)
                    dst.append(v)
                    means.append(r)
                node_arc_start.append(len(src))

        self.state_ids = tuple(state_ids)
        self._node_of = node_of
        self.n_nodes = M
        self.n_arcs = len(src)
        self.action_labels = tuple(labels)
        self.node_arc_start = np.asarray(node_arc_start, dtype=np.int64)
        self.arc_src = np.asarray(src, dtype=np.int64)
        self.arc_dst = np.asarray(dst, dtype=np.int64)
        self.means = np.asarray(means, dtype=np.float64)
        self.node_stage = np.repeat(np.arange(H, dtype=np.int64),
                                    [len(ids) for ids in state_ids])
        self.node_state = tuple(s for ids in state_ids for s in ids)
        self.arc_stage = self.node_stage[self.arc_src]
        self.stage_node_start = np.concatenate([[0], np.cumsum([len(i) for i in state_ids])]).astype(np.int64)
        self.stage_arc_start = self.node_arc_start[self.stage_node_start]

        order = np.argsort(self.arc_dst, kind="stable")
        self.in_arcs = order.astype(np.int64)
        counts = np.bincount(self.arc_dst, minlength=M + 1)
        self.in_start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        if np.any(counts[1:M] == 0):
            u = int(np.flatnonzero(counts[1:M] == 0)[0]) + 1
            raise ValueError(f"state {self.node_state[u]!r} at stage "
                             f"{self.node_stage[u] + 1} has no incoming arc")
        self._arc_of = {self.arc_key(a): a for a in range(self.n_arcs)}
        for arr in (self.node_arc_start, self.arc_src, self.arc_dst, self.means,
                    self.node_stage, self.arc_stage, self.stage_node_start,
                    self.stage_arc_start, self.in_arcs, self.in_start):
            arr.setflags(write=False)

    # indexing helpers

    @property
    def H(self) -> int:
        return self.horizon

    def n_actions(self, node: int) -> int:
        return int(self.node_arc_start[node + 1] - self.node_arc_start[node])

    def node_index(self, h: int, s: str) -> int:
        """Node of state s at 1-based stage h."""
        return self._node_of[(h - 1, str(s))]

    def arc_key(self, a: int) -> str:
        u = self.arc_src[a]
        return f"{self.node_stage[u] + 1}/{self.node_state[u]}/{self.action_labels[a]}"

    def arc_index(self, key_or_h, s: str | None = None, a: str | None = None) -> int:
        key = key_or_h if s is None else f"{key_or_h}/{s}/{a}"
        return self._arc_of[key]

    def stage_arcs(self, h: int) -> range:
        """Arc indices at 1-based stage h."""
        return range(int(self.stage_arc_start[h - 1]), int(self.stage_arc_start[h]))

    def next_state(self, a: int) -> str | None:
        v = self.arc_dst[a]
        return None if v == self.n_nodes else self.node_state[v]

    def with_means(self, means) -> "DeterministicMdp":
        means = np.asarray(means, dtype=float)
        return DeterministicMdp(self._stage_specs(means), self.reward_kind, self.sigma2)

    def _stage_specs(self, means=None):
        means = self.means if means is None else means
        stages = []
        for h in range(self.horizon):
            layer = {}
            for u in range(self.stage_node_start[h], self.stage_node_start[h + 1]):
                layer[self.node_state[u]] = [
                    ActionSpec(self.action_labels[a], self.next_state(a), float(means[a]))
                    for a in range(self.node_arc_start[u], self.node_arc_start[u + 1])]
            stages.append(layer)
        return stages

    # serialization

    def to_dict(self) -> dict:
        kind = "bernoulli" if self.reward_kind == "bernoulli" else {"gaussian": self.sigma2}
        stages = []
        for layer in self._stage_specs():
            stages.append({"states": [
                {"id": s, "actions": [{"label": x.label, "next_state": x.next_state,
                                       "mean_reward": x.mean_reward} for x in acts]}
                for s, acts in layer.items()]})
        return {"horizon": self.horizon, "stages": stages, "reward_kind": kind}

    @classmethod
    def from_dict(cls, d: dict) -> "DeterministicMdp":
        kind = d.get("reward_kind", "bernoulli")
        if isinstance(kind, dict):
            if set(kind) != {"gaussian"}:
                raise ValueError(f"bad reward_kind {kind!r}")
            reward_kind, sigma2 = "gaussian", float(kind["gaussian"])
        elif kind == "bernoulli":
            reward_kind, sigma2 = "bernoulli", 1.0
        else:
            raise ValueError(f"bad reward_kind {kind!r}")
        stages = []
        for layer in d["stages"]:
            stages.append({str(st["id"]): [
                ActionSpec(str(x["label"]), None if x["next_state"] is None else str(x["next_state"]),
                           float(x["mean_reward"])) for x in st["actions"]]
                for st in layer["states"]})
        if len(stages) != int(d["horizon"]):
            raise ValueError("horizon does not match the number of stages")
        return cls(stages, reward_kind, sigma2)

    def __repr__(self) -> str:
        return (f"DeterministicMdp(H={self.horizon}, nodes={self.n_nodes}, "
                f"arcs={self.n_arcs}, rewards={self.reward_kind})")


@dataclass(frozen=True)
class Policy:
    """Action index (into the node's action list) for every node."""
    actions: tuple

    @classmethod
    def from_arcs(cls, mdp: DeterministicMdp, choice) -> "Policy":
        choice = np.asarray(choice)
        return cls(tuple(int(c - mdp.node_arc_start[u]) for u, c in enumerate(choice)))

    @classmethod
    def first_actions(cls, mdp: DeterministicMdp) -> "Policy":
        return cls((0,) * mdp.n_nodes)

    def arcs(self, mdp: DeterministicMdp) -> np.ndarray:
        act = np.asarray(self.actions, dtype=np.int64)
        if act.shape != (mdp.n_nodes,):
            raise ValueError("policy size does not match the MDP")
        n = np.diff(mdp.node_arc_start)
        if np.any(act < 0) or np.any(act >= n):
            raise ValueError("policy picks an unavailable action")
        return mdp.node_arc_start[:-1] + act

    def to_dict(self, mdp: DeterministicMdp) -> dict:
        out = {}
        for u, c in enumerate(self.arcs(mdp)):
            out[f"{mdp.node_stage[u] + 1}/{mdp.node_state[u]}"] = mdp.action_labels[c]
        return out


def all_policies(mdp: DeterministicMdp) -> Iterable[Policy]:
    """Every policy over reachable nodes (exponential, for small instances)."""
    ranges = [range(mdp.n_actions(u)) for u in range(mdp.n_nodes)]
    for acts in product(*ranges):
        yield Policy(acts)


def rollout_arcs(mdp: DeterministicMdp, policy: Policy) -> np.ndarray:
    return K.rollout_arcs(policy.arcs(mdp), mdp.arc_dst, mdp.horizon)


def rollout(mdp: DeterministicMdp, policy: Policy) -> list[tuple[str, str]]:
    """(state, action) labels visited at stages 1..H."""
    return [(mdp.node_state[mdp.arc_src[a]], mdp.action_labels[a])
            for a in rollout_arcs(mdp, policy)]


@dataclass(frozen=True)
class ValueTable:
    """V over nodes (index M is the sink, value 0) and Q over arcs."""
    V: np.ndarray
    Q: np.ndarray
    choice: np.ndarray

    @property
    def initial(self) -> float:
        return float(self.V[0])


def optimal_values(mdp: DeterministicMdp, rewards=None) -> ValueTable:
    r = mdp.means if rewards is None else np.asarray(rewards, dtype=float)
    everything = np.ones(mdp.n_arcs, dtype=np.bool_)
    V, choice = K.best_suffix(r, everything, mdp.node_arc_start, mdp.arc_dst, mdp.n_nodes)
    return ValueTable(V, r + V[mdp.arc_dst], choice)


def policy_values(mdp: DeterministicMdp, policy: Policy, rewards=None) -> ValueTable:
    r = mdp.means if rewards is None else np.asarray(rewards, dtype=float)
    choice = policy.arcs(mdp)
    V = np.zeros(mdp.n_nodes + 1)
    for u in range(mdp.n_nodes - 1, -1, -1):
        a = choice[u]
        V[u] = r[a] + V[mdp.arc_dst[a]]
    return ValueTable(V, r + V[mdp.arc_dst], choice)


def optimal_policy(mdp: DeterministicMdp, rewards=None) -> Policy:
    return Policy.from_arcs(mdp, optimal_values(mdp, rewards).choice)


def _mask_or_all(mdp, action_mask):
    if action_mask is None:
        return np.ones(mdp.n_arcs, dtype=np.bool_)
    mask = np.asarray(action_mask, dtype=np.bool_)
    return K.effective_mask(mask, mdp.node_arc_start, mdp.n_nodes)


def forced_returns(mdp: DeterministicMdp, rewards=None, action_mask=None) -> np.ndarray:
    """Best return of a policy forced through each arc, for all arcs at once."""
    r = mdp.means if rewards is None else np.asarray(rewards, dtype=float)
    allowed = _mask_or_all(mdp, action_mask)
    return K.through_arc_values(r, allowed, mdp.arc_src, mdp.node_arc_start,
                                mdp.arc_dst, mdp.n_nodes)


def constrained_best_return(mdp: DeterministicMdp, h: int, s: str, a: str,
                            action_mask=None, rewards=None) -> float:
    """Max return over masked policies visiting (s, a) at stage h; -inf if none.

    A node whose mask is empty is treated as allowing all of its actions.
    """
    arc = mdp.arc_index(h, s, a)
    return float(forced_returns(mdp, rewards, action_mask)[arc])


@dataclass(frozen=True)
class GapTable:
    value_gap: np.ndarray        # V*_h(s) - Q*_h(s, a)
    return_gap: np.ndarray       # V*_1(s_1) - best return through the arc
    optimal_value: float
    unique_optimal: bool
    min_gap: float               # global, 0 unless the optimal trajectory is unique
    eps: float
    stage_min_gap: np.ndarray    # per stage, with the |Z| = 1 convention at level eps
    horizon: int

    @property
    def normalized_return_gap(self) -> np.ndarray:
        return self.return_gap / self.horizon


def compute_gaps(mdp: DeterministicMdp, eps: float = 0.0) -> GapTable:
    vt = optimal_values(mdp)
    vstar = vt.initial
    tol = GAP_TOL * (1 + mdp.horizon)
    value_gap = vt.V[mdp.arc_src] - vt.Q
    value_gap[value_gap < tol] = 0.0
    ret_gap = vstar - forced_returns(mdp)
    ret_gap[ret_gap < tol] = 0.0

    zero_per_stage = [int(np.sum(ret_gap[mdp.stage_arcs(h)] == 0.0))
                      for h in range(1, mdp.horizon + 1)]
    unique = all(z == 1 for z in zero_per_stage)
    positive = ret_gap[ret_gap > 0]
    min_gap = float(positive.min()) if unique and positive.size else 0.0

    stage_min = np.zeros(mdp.horizon)
    for h in range(1, mdp.horizon + 1):
        g = ret_gap[mdp.stage_arcs(h)]
        if np.sum(g <= eps) == 1:
            pos = g[g > 0]
            # no positive gap at this stage: the bound is vacuous (c = 0)
            stage_min[h - 1] = pos.min() if pos.size else np.inf
    for arr in (value_gap, ret_gap, stage_min):
        arr.setflags(write=False)
    return GapTable(value_gap, ret_gap, vstar, unique, min_gap, float(eps),
                    stage_min, mdp.horizon)


def policy_gap(mdp: DeterministicMdp, policy: Policy) -> float:
    """Suboptimality V*_1(s_1) - V^pi_1(s_1)."""
    return optimal_values(mdp).initial - policy_values(mdp, policy).initial


def is_tree_based(mdp: DeterministicMdp) -> bool:
    indeg = np.diff(mdp.in_start)[1:mdp.n_nodes]
    return bool(np.all(indeg == 1))

