"""Minimum flows with lower-bound demands and unbounded capacities.

Demands and flows are arrays indexed by arc. The solver starts from a
feasible flow and cancels shortest decreasing paths in the residual graph;
the nodes still reachable from the source at the end form a maximum cut.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .mdp import DeterministicMdp, Policy, rollout_arcs


@dataclass(frozen=True)
class Flow:
    values: np.ndarray
    value: float  # outflow of the source, i.e. the sum over stage-1 arcs

    @classmethod
    def of(cls, mdp: DeterministicMdp, values) -> "Flow":
        values = np.asarray(values, dtype=float)
        return cls(values, float(values[mdp.node_arc_start[0]:mdp.node_arc_start[1]].sum()))

    def is_integral(self) -> bool:
        return bool(np.all(self.values == np.round(self.values)))


@dataclass(frozen=True)
class Cut:
    """Source-side node set (boolean over nodes, sink excluded)."""
    nodes: np.ndarray

    def forward_arcs(self, mdp: DeterministicMdp) -> np.ndarray:
        inside = np.append(self.nodes, False)
        return np.flatnonzero(inside[mdp.arc_src] & ~inside[mdp.arc_dst])

    def backward_arcs(self, mdp: DeterministicMdp) -> np.ndarray:
        inside = np.append(self.nodes, False)
        return np.flatnonzero(~inside[mdp.arc_src] & inside[mdp.arc_dst])

    def is_valid(self, mdp: DeterministicMdp) -> bool:
        return bool(self.nodes[0]) and self.backward_arcs(mdp).size == 0


def check_demand(mdp: DeterministicMdp, demand) -> np.ndarray:
    c = np.asarray(demand, dtype=float)
    if c.shape != (mdp.n_arcs,):
        raise ValueError(f"demand has shape {c.shape}, expected ({mdp.n_arcs},)")
    if not np.all(np.isfinite(c)) or np.any(c < 0):
        raise ValueError("demands must be finite and nonnegative")
    return c


def demand_from_keys(mdp: DeterministicMdp, mapping: dict) -> np.ndarray:
    c = np.zeros(mdp.n_arcs)
    for key, val in mapping.items():
        try:
            c[mdp.arc_index(key)] = float(val)
        except KeyError:
            raise ValueError(f"unknown arc {key!r}") from None
    return check_demand(mdp, c)


def conservation_error(mdp: DeterministicMdp, flow: Flow) -> float:
    f = flow.values
    inflow = np.bincount(mdp.arc_dst, weights=f, minlength=mdp.n_nodes + 1)[:mdp.n_nodes]
    outflow = np.bincount(mdp.arc_src, weights=f, minlength=mdp.n_nodes)
    return float(np.max(np.abs(inflow[1:] - outflow[1:]), initial=0.0))


def is_feasible(mdp: DeterministicMdp, flow: Flow, demand, tol: float = 1e-9) -> bool:
    c = check_demand(mdp, demand)
    return bool(np.all(flow.values >= c - tol)) and conservation_error(mdp, flow) <= tol


def initial_feasible_flow(mdp: DeterministicMdp, demand) -> Flow:
    c = check_demand(mdp, demand)
    f = K.initial_flow(c, mdp.arc_src, mdp.node_arc_start, mdp.arc_dst,
                       mdp.in_start, mdp.in_arcs, mdp.n_nodes)
    return Flow.of(mdp, f)


def _tolerance(c: np.ndarray) -> float:
    if np.all(c == np.round(c)):
        return 0.5  # integer residuals are either 0 or >= 1
    return 1e-12 * max(1.0, float(c.sum()))


def min_flow(mdp: DeterministicMdp, demand) -> tuple[Flow, Cut]:
    """Minimum feasible flow together with a certifying maximum cut."""
    c = check_demand(mdp, demand)
    f, cut = K.min_flow_kernel(c, mdp.arc_src, mdp.node_arc_start, mdp.arc_dst,
                               mdp.in_start, mdp.in_arcs, mdp.n_nodes, _tolerance(c))
    return Flow.of(mdp, f), Cut(cut)


def flow_value_of(mdp: DeterministicMdp, demand) -> float:
    return min_flow(mdp, demand)[0].value


def cut_value(mdp: DeterministicMdp, cut: Cut, demand) -> float:
    c = check_demand(mdp, demand)
    return float(c[cut.forward_arcs(mdp)].sum())


def layer_cut(mdp: DeterministicMdp, h: int) -> Cut:
    """Nodes at stages 1..h; its forward arcs are exactly the stage-h arcs."""
    return Cut(mdp.node_stage < h)


def extract_policy_cover(mdp: DeterministicMdp, flow: Flow) -> list[Policy]:
    if not flow.is_integral():
        raise ValueError("policy covers need an integer flow")
    f = np.round(flow.values).astype(np.int64)
    rows = K.extract_cover_kernel(f, mdp.node_arc_start, mdp.arc_dst, mdp.horizon, mdp.n_nodes)
    return [Policy.from_arcs(mdp, row) for row in rows]


def covered_arcs(mdp: DeterministicMdp, policies) -> np.ndarray:
    hit = np.zeros(mdp.n_arcs, dtype=bool)
    for pi in policies:
        hit[rollout_arcs(mdp, pi)] = True
    return hit


def minimum_policy_cover(mdp: DeterministicMdp, arcs) -> list[Policy]:
    """Smallest set of policies visiting every arc in the given set."""
    c = np.zeros(mdp.n_arcs)
    c[np.asarray(arcs, dtype=np.int64)] = 1.0
    return extract_policy_cover(mdp, min_flow(mdp, c)[0])
