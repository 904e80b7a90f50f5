"""Elimination-based PAC learner for deterministic MDPs.

The learner keeps per-arc counts, empirical means and confidence bonuses,
removes arcs whose optimistic forced return falls below the best pessimistic
return, and stops once every remaining policy has a narrow confidence interval
or a single action is left in every state.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .mdp import DeterministicMdp, Policy, policy_gap

RULES = ("max-diameter", "max-coverage", "adaptive-max-coverage")
STOP_REASONS = ("width", "unique-active")
DEFAULT_BUDGET = 10_000_000


class BudgetExceeded(RuntimeError):
    """Raised when a run reaches max_episodes without stopping; carries the partial result."""

    def __init__(self, result: "RunResult"):
        super().__init__(f"no stop after {result.tau} episodes")
        self.result = result


@dataclass
class LearnerState:
    mdp: DeterministicMdp
    eps: float
    delta: float
    confidence: str = "bounded"      # or "subgaussian"
    sigma2: float = 0.25
    counts: np.ndarray = None
    sums: np.ndarray = None
    means: np.ndarray = None
    bonus: np.ndarray = None
    active: np.ndarray = None
    t: int = 0
    k: int = 0                       # current period, 0 when periods are not tracked
    elim_episode: np.ndarray = None  # -1 while active
    elim_period: np.ndarray = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.confidence not in ("bounded", "subgaussian"):
            raise ValueError(f"unknown confidence kind {self.confidence!r}")
        N = self.mdp.n_arcs
        if self.counts is None:
            self.counts = np.zeros(N, dtype=np.int64)
            self.sums = np.zeros(N)
            self.means = np.zeros(N)
            self.bonus = np.ones(N)
            self.active = np.ones(N, dtype=np.bool_)
            self.elim_episode = np.full(N, -1, dtype=np.int64)
            self.elim_period = np.full(N, -1, dtype=np.int64)

    @classmethod
    def initial(cls, mdp: DeterministicMdp, eps: float, delta: float,
                confidence: str | None = None) -> "LearnerState":
        """Bounded bonuses for Bernoulli rewards, subgaussian ones for Gaussian rewards."""
        if confidence is None:
            confidence = "subgaussian" if mdp.reward_kind == "gaussian" else "bounded"
        return cls(mdp, eps, delta, confidence, mdp.sigma2)

    def bonus_of(self, n: int) -> float:
        N = self.mdp.n_arcs
        if self.confidence == "bounded":
            return K.bonus_bounded(n, self.delta, N)
        return K.bonus_subgaussian(n, self.delta, N, self.sigma2)

    def effective_mask(self) -> np.ndarray:
        m = self.mdp
        return K.effective_mask(self.active, m.node_arc_start, m.n_nodes)

    def active_count_per_node(self) -> np.ndarray:
        m = self.mdp
        return np.add.reduceat(self.active.astype(np.int64), m.node_arc_start[:-1])


def update_statistics(state: LearnerState, arcs, rewards) -> None:
    """Record one episode: the visited arcs (one per stage) and observed rewards."""
    arcs = np.asarray(arcs, dtype=np.int64)
    if arcs.shape != (state.mdp.horizon,):
        raise ValueError("an episode visits exactly one arc per stage")
    for a, y in zip(arcs, rewards):
        state.counts[a] += 1
        state.sums[a] += y
        state.means[a] = state.sums[a] / state.counts[a]
        state.bonus[a] = state.bonus_of(int(state.counts[a]))
    state.t += 1


@dataclass(frozen=True)
class ConfidenceTables:
    upper_suffix: np.ndarray   # best optimistic return-to-go over active policies
    upper_prefix: np.ndarray   # best optimistic return from the source over active policies
    upper_choice: np.ndarray   # argmax arc per node of the optimistic suffix
    lower_suffix: np.ndarray   # best pessimistic return-to-go over all policies
    forced_upper: np.ndarray   # best optimistic return through each arc, active policies

    @property
    def upper_best(self) -> float:
        return float(self.upper_suffix[0])

    @property
    def lower_best(self) -> float:
        return float(self.lower_suffix[0])


def confidence_values(state: LearnerState) -> ConfidenceTables:
    m = state.mdp
    eff = state.effective_mask()
    upper = state.means + state.bonus
    lower = state.means - state.bonus
    Vu, choice = K.best_suffix(upper, eff, m.node_arc_start, m.arc_dst, m.n_nodes)
    Pu = K.best_prefix(upper, eff, m.node_arc_start, m.arc_dst, m.n_nodes)
    Vl, _ = K.best_suffix(lower, np.ones(m.n_arcs, dtype=np.bool_),
                          m.node_arc_start, m.arc_dst, m.n_nodes)
    forced = K.through_arc_values(upper, eff, m.arc_src, m.node_arc_start, m.arc_dst, m.n_nodes)
    return ConfidenceTables(Vu, Pu, choice, Vl, forced)


def eliminate(state: LearnerState) -> list[int]:
    """Deactivate arcs that no active policy through them can make optimal.

    Returns the newly eliminated arc indices.
    """
    m = state.mdp
    drop = K.elimination_sweep(state.active, state.means, state.bonus, m.arc_src,
                               m.node_arc_start, m.arc_dst, m.n_nodes)
    idx = np.flatnonzero(drop)
    state.active[idx] = False
    state.elim_episode[idx] = state.t
    state.elim_period[idx] = state.k
    return [int(a) for a in idx]


def max_diameter(state: LearnerState) -> tuple[float, np.ndarray]:
    """Largest summed bonus over active policies and the per-node argmax arcs."""
    m = state.mdp
    V, choice = K.best_suffix(state.bonus, state.effective_mask(), m.node_arc_start,
                              m.arc_dst, m.n_nodes)
    return float(V[0]), choice


def check_stopping(state: LearnerState) -> str | None:
    width, _ = max_diameter(state)
    if 2.0 * width <= state.eps:
        return "width"
    if np.all(state.active_count_per_node() <= 1):
        return "unique-active"
    return None


def recommend(state: LearnerState) -> Policy:
    """Optimistic greedy policy over the active sets."""
    return Policy.from_arcs(state.mdp, confidence_values(state).upper_choice)


@dataclass
class RunResult:
    tau: int
    policy: Policy
    stop_rule: str                  # width | unique-active | budget
    counts: np.ndarray
    elim_episode: np.ndarray        # -1 when never eliminated
    elim_period: np.ndarray
    good_event: bool
    subopt: float
    rule: str
    eps: float
    delta: float
    seed: int
    periods: list = field(default_factory=list)

    def to_dict(self, mdp: DeterministicMdp) -> dict:
        keys = [mdp.arc_key(a) for a in range(mdp.n_arcs)]
        return {
            "tau": int(self.tau),
            "stop_rule": self.stop_rule,
            "rule": self.rule,
            "eps": self.eps,
            "delta": self.delta,
            "seed": int(self.seed),
            "subopt": float(self.subopt),
            "good_event": bool(self.good_event),
            "policy": self.policy.to_dict(mdp),
            "counts": {k: int(n) for k, n in zip(keys, self.counts)},
            "elimination_episode": {k: (int(e) if e >= 0 else None)
                                    for k, e in zip(keys, self.elim_episode)},
            "elimination_period": {k: (int(e) if e >= 0 else None)
                                   for k, e in zip(keys, self.elim_period)},
            "periods": [p.to_dict() for p in self.periods],
        }


def run_eprl(mdp: DeterministicMdp, rule: str = "max-diameter", eps: float = 0.1,
             delta: float = 0.1, seed: int = 0, max_episodes: int = DEFAULT_BUDGET,
             elim_period: int = 1, engine: str = "compiled",
             confidence: str | None = None) -> RunResult:
    """Run the learner until it stops.

    engine="python" runs the readable reference loop built from the functions of
    this module and of detpac.sampling; engine="compiled" runs the same loop in
    numba. Both consume an identical Mersenne Twister stream seeded with `seed`
    and return identical results.
    """
    if rule not in RULES:
        raise ValueError(f"unknown sampling rule {rule!r}")
    if max_episodes < 1 or elim_period < 1:
        raise ValueError("max_episodes and elim_period must be positive")
    if engine == "compiled":
        from ._engine import run_compiled
        result = run_compiled(mdp, rule, eps, delta, seed, max_episodes, elim_period, confidence)
    elif engine == "python":
        result = _run_python(mdp, rule, eps, delta, seed, max_episodes, elim_period, confidence)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    if result.stop_rule == "budget":
        raise BudgetExceeded(result)
    return result


def _run_python(mdp, rule, eps, delta, seed, max_episodes, elim_period, confidence):
    from .sampling import make_sampler

    state = LearnerState.initial(mdp, eps, delta, confidence)
    sampler = make_sampler(rule, mdp)
    rs = np.random.RandomState(seed)
    noise = np.sqrt(mdp.sigma2) if mdp.reward_kind == "gaussian" else 0.0
    good = True
    stop = None
    while state.t < max_episodes:
        t = state.t + 1
        arcs = K.rollout_arcs(sampler.next_policy(state, t), mdp.arc_dst, mdp.horizon)
        rewards = np.empty(mdp.horizon)
        for h, a in enumerate(arcs):
            r = mdp.means[a]
            if mdp.reward_kind == "bernoulli":
                rewards[h] = 1.0 if rs.random_sample() < r else 0.0
            else:
                rewards[h] = r + noise * rs.normal(0.0, 1.0)
        update_statistics(state, arcs, rewards)
        # instrumentation only, never read by the learner
        good = good and bool(np.all(np.abs(state.means[arcs] - mdp.means[arcs]) <= state.bonus[arcs]))
        if t % elim_period == 0:
            eliminate(state)
        stop = check_stopping(state)
        if stop is not None:
            break
    sampler.finish(state.t)
    policy = recommend(state)
    return RunResult(state.t, policy, stop or "budget", state.counts.copy(),
                     state.elim_episode.copy(), state.elim_period.copy(), good,
                     policy_gap(mdp, policy), rule, eps, delta, seed, sampler.log)
