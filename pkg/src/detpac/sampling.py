"""Exploration rules and the period machinery of the coverage samplers.

A period k collects the episodes during which k_t = 1 + min n over active arcs
equals k. MaxCoverage plays a minimum policy cover of the under-visited arcs on
odd episodes; AdaptiveMaxCoverage greedily picks the policy visiting the most
under-visited arcs. Even episodes always play the max-diameter policy.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .flow import min_flow
from .mdp import DeterministicMdp, Policy


@dataclass
class PeriodRecord:
    k: int
    t_start: int
    d: int                 # duration in episodes, 0 for skipped periods
    n_demand: int          # N_k, active arcs still below k visits at the start
    phi_star: int          # minimum flow of the 0/1 demand of the period
    cover_size: int        # policies played by the coverage branch
    min_count: int         # min visits over active arcs at the start
    active_last_stage: int  # active stage-H arcs at the start

    def to_dict(self) -> dict:
        return {"k": self.k, "t_start": self.t_start, "d_k": self.d, "N_k": self.n_demand,
                "phi_star": self.phi_star, "cover_size": self.cover_size,
                "min_count": self.min_count, "active_last_stage": self.active_last_stage}


@dataclass
class PeriodState:
    k: int = 0
    t_start: int = 0
    snapshot: np.ndarray | None = None   # active arcs at the episode before t_start
    queue: deque = field(default_factory=deque)
    log: list = field(default_factory=list)

    def demand(self, counts: np.ndarray) -> np.ndarray:
        """0/1 indicator of the arcs the current period still has to visit."""
        return (self.snapshot & (counts < self.k)).astype(float)


def max_diameter_policy(state) -> np.ndarray:
    """Per-node arc choice maximizing the summed bonus over active policies."""
    m = state.mdp
    _, choice = K.best_suffix(state.bonus, state.effective_mask(), m.node_arc_start,
                              m.arc_dst, m.n_nodes)
    return choice


def target_visits(state) -> int:
    """k_t = 1 + min visits over the currently active arcs."""
    return 1 + int(state.counts[state.active].min())


def advance_period(state, period: PeriodState, t: int, solve_cover: bool) -> bool:
    """Open a new period if k_t has grown; returns True when it did.

    Skipped values of k are logged with zero duration. The cover of the new
    period is computed when solve_cover is set, otherwise only its size.
    """
    kt = target_visits(state)
    if kt <= period.k:
        return False
    if period.log:
        period.log[-1].d = t - period.t_start
    m = state.mdp
    snap = state.active.copy()
    min_count = int(state.counts[snap].min())
    leaves = int(snap[m.stage_arcs(m.horizon)].sum())
    for k in range(period.k + 1, kt):
        period.log.append(PeriodRecord(k, t, 0, 0, 0, 0, min_count, leaves))
    period.k, period.t_start, period.snapshot = kt, t, snap
    state.k = kt
    c = period.demand(state.counts)
    flow, _ = min_flow(m, c)
    phi = int(round(flow.value))
    period.queue.clear()
    cover_size = 0
    if solve_cover:
        f = np.round(flow.values).astype(np.int64)
        rows = K.extract_cover_kernel(f, m.node_arc_start, m.arc_dst, m.horizon, m.n_nodes)
        period.queue.extend(rows)
        cover_size = len(rows)
    period.log.append(PeriodRecord(kt, t, 0, int(c.sum()), phi, cover_size, min_count, leaves))
    return True


def close_periods(period: PeriodState, tau: int) -> None:
    if period.log:
        period.log[-1].d = tau - period.t_start + 1


def max_coverage_policy(state, period: PeriodState, t: int) -> np.ndarray:
    """Next cover policy on odd episodes, max-diameter otherwise or once the cover is used up."""
    if t % 2 == 1 and period.queue:
        return period.queue.popleft()
    return max_diameter_policy(state)


def adaptive_max_coverage_policy(state, period: PeriodState, t: int) -> np.ndarray:
    """On odd episodes, the policy visiting the most arcs still below k visits."""
    if t % 2 == 0:
        return max_diameter_policy(state)
    m = state.mdp
    w = period.demand(state.counts)
    _, choice = K.best_suffix(w, np.ones(m.n_arcs, dtype=np.bool_), m.node_arc_start,
                              m.arc_dst, m.n_nodes)
    return choice


def coverage_function(mdp: DeterministicMdp, demanded, policies) -> int:
    """Number of demanded arcs visited by at least one of the policies."""
    demanded = np.asarray(demanded, dtype=bool)
    hit = np.zeros(mdp.n_arcs, dtype=bool)
    for pi in policies:
        choice = pi.arcs(mdp) if isinstance(pi, Policy) else pi
        hit[K.rollout_arcs(choice, mdp.arc_dst, mdp.horizon)] = True
    return int(np.sum(hit & demanded))


def greedy_coverage_trace(mdp: DeterministicMdp, demanded, steps: int) -> list[int]:
    """Coverage values after each greedy pick, the greedy step being the
    adaptive rule on the arcs not yet covered."""
    left = np.asarray(demanded, dtype=bool).copy()
    total = int(left.sum())
    everything = np.ones(mdp.n_arcs, dtype=np.bool_)
    trace = []
    for _ in range(steps):
        _, choice = K.best_suffix(left.astype(float), everything, mdp.node_arc_start,
                                  mdp.arc_dst, mdp.n_nodes)
        left[K.rollout_arcs(choice, mdp.arc_dst, mdp.horizon)] = False
        trace.append(total - int(left.sum()))
    return trace


class MaxDiameterSampler:
    def __init__(self, mdp):
        self.log = []

    def next_policy(self, state, t):
        return max_diameter_policy(state)

    def finish(self, tau):
        pass


class MaxCoverageSampler:
    adaptive = False

    def __init__(self, mdp):
        self.period = PeriodState()
        self.log = self.period.log
        self.played = 0

    def next_policy(self, state, t):
        if advance_period(state, self.period, t, solve_cover=not self.adaptive):
            self.played = 0
        if t % 2 == 1 and (self.adaptive or self.period.queue):
            self.played += 1
        if self.adaptive:
            self.period.log[-1].cover_size = self.played
            return adaptive_max_coverage_policy(state, self.period, t)
        return max_coverage_policy(state, self.period, t)

    def finish(self, tau):
        close_periods(self.period, tau)


class AdaptiveMaxCoverageSampler(MaxCoverageSampler):
    adaptive = True


def make_sampler(rule: str, mdp: DeterministicMdp):
    return {"max-diameter": MaxDiameterSampler,
            "max-coverage": MaxCoverageSampler,
            "adaptive-max-coverage": AdaptiveMaxCoverageSampler}[rule](mdp)
