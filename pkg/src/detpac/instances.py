"""Instance generators and instance-dependent lower-bound calculators."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .flow import min_flow
from .mdp import ActionSpec, DeterministicMdp, compute_gaps, is_tree_based

KINDS = ("hard-worst-case", "visits-vs-gap", "regret-vs-bpi", "random-layered",
         "random-tree", "bandit", "chain", "cover-elimination")
ALIASES = {"hard": "hard-worst-case"}


def _perturbed(mdp: DeterministicMdp, means: dict | None) -> DeterministicMdp:
    if not means:
        return mdp
    r = mdp.means.copy()
    for key, val in means.items():
        r[mdp.arc_index(key)] = val
    return mdp.with_means(r)


def _unroll(start: str, horizon: int, actions_at, reward_kind="bernoulli", sigma2=1.0):
    """Build the layered MDP reachable from `start`.

    actions_at(h, s) lists (label, next_state, mean) at the 1-based stage h;
    next_state is ignored at stage H.
    """
    stages = []
    layer = [start]
    for h in range(1, horizon + 1):
        specs, nxt = {}, []
        for s in layer:
            acts = []
            for label, s2, r in actions_at(h, s):
                if h == horizon:
                    s2 = None
                elif s2 not in nxt:
                    nxt.append(s2)
                acts.append(ActionSpec(label, s2, r))
            specs[s] = acts
        stages.append(specs)
        layer = nxt
    return DeterministicMdp(stages, reward_kind, sigma2)


def gen_hard_worst_case(S: int, A: int, H: int, means: dict | None = None,
                        reward_kind: str = "bernoulli", sigma2: float = 1.0) -> DeterministicMdp:
    """Waiting state s1 feeding a full binary tree whose leaves loop on A actions.

    s1 may wait (action a2) until stage Hbar - 1 = H // 3 - 1, then must enter
    the tree root s2 (action a1). Tree state s_{j+1} has children s_{2j+1},
    s_{2j+2}. All rewards are 0 unless overridden through `means`, keyed by
    "h/state/action".
    """
    d = int(round(math.log2(S))) if S >= 2 else 0
    if S < 2 or 2 ** d != S:
        raise ValueError("S must be a power of two, at least 2")
    if A < 2:
        raise ValueError("A must be at least 2")
    if H < 3 * d:
        raise ValueError("H must be at least 3 log2(S)")
    hbar = H // 3
    first_leaf = 2 ** (d - 1)

    def actions_at(h, s):
        if s == "s1":
            acts = [("a1", "s2", 0.0)]
            if h <= hbar - 1:
                acts.append(("a2", "s1", 0.0))
            return acts
        j = int(s[1:]) - 1
        if j < first_leaf:
            return [("a1", f"s{2 * j + 1}", 0.0), ("a2", f"s{2 * j + 2}", 0.0)]
        return [(f"a{i + 1}", s, 0.0) for i in range(A)]

    return _perturbed(_unroll("s1", H, actions_at, reward_kind, sigma2), means)


def _partial_tree_children(n_tree: int):
    """Left-filled binary tree on nodes 1..n_tree in heap order."""
    return {j: [c for c in (2 * j, 2 * j + 1) if c <= n_tree] for j in range(1, n_tree + 1)}


def gen_visits_vs_gap(S: int, A: int, H: int, gap: float,
                      reward_kind: str = "bernoulli", sigma2: float = 1.0) -> DeterministicMdp:
    """s1 either enters a tree of S - 1 zero-reward states (a1) or stays put (a2)
    until stage H, where staying pays `gap`. Tree states without children loop
    on A actions."""
    if S < 4 or A < 2 or H < math.ceil(math.log2(S)) + 1:
        raise ValueError("need S >= 4, A >= 2 and H >= ceil(log2 S) + 1")
    if not 0 <= gap <= 1:
        raise ValueError("gap must lie in [0, 1]")
    children = _partial_tree_children(S - 1)

    def actions_at(h, s):
        if s == "s1":
            stay = ("a2", "s1", gap if h == H else 0.0)
            return [("a1", "s2", 0.0), stay] if h == 1 else [stay]
        j = int(s[1:]) - 1
        kids = children[j]
        if kids:
            return [(f"a{i + 1}", f"s{c + 1}", 0.0) for i, c in enumerate(kids)]
        return [(f"a{i + 1}", s, 0.0) for i in range(A)]

    return _unroll("s1", H, actions_at, reward_kind, sigma2)


def gen_regret_vs_bpi(S: int, A: int, H: int, gap: float,
                      reward_kind: str = "bernoulli", sigma2: float = 1.0) -> DeterministicMdp:
    """Tree of S - 1 zero-reward states rooted at s1; at stage H - 1 every action
    leads to s_S, whose action a1 pays `gap` and a2 pays 0. Every policy
    through the tree is optimal up to the last stage."""
    if S < 4 or A < 2 or H < math.ceil(math.log2(S)) + 1:
        raise ValueError("need S >= 4, A >= 2 and H >= ceil(log2 S) + 1")
    if not 0 <= gap <= 1:
        raise ValueError("gap must lie in [0, 1]")
    children = _partial_tree_children(S - 1)
    funnel = f"s{S}"

    def actions_at(h, s):
        if s == funnel:
            return [("a1", None, gap), ("a2", None, 0.0)]
        j = int(s[1:])
        kids = children[j]
        if h == H - 1:
            n = len(kids) if kids else A
            return [(f"a{i + 1}", funnel, 0.0) for i in range(n)]
        if kids:
            return [(f"a{i + 1}", f"s{c}", 0.0) for i, c in enumerate(kids)]
        return [(f"a{i + 1}", s, 0.0) for i in range(A)]

    return _unroll("s1", H, actions_at, reward_kind, sigma2)


def gen_random_layered(states_per_stage: int, A: int, H: int, density: float = 1.0,
                       seed: int = 0, reward_kind: str = "bernoulli",
                       sigma2: float = 1.0) -> DeterministicMdp:
    """Random layered MDP: up to `states_per_stage` states per stage, A actions
    each. A fraction `density` of arcs carries a uniform mean reward, the
    others 0. Every next-stage state receives at least one arc."""
    if states_per_stage < 1 or A < 1 or H < 1:
        raise ValueError("sizes must be positive")
    rng = np.random.default_rng(seed)
    stages = []
    layer = ["s0"]
    for h in range(H):
        n_arcs = len(layer) * A
        n_next = min(states_per_stage, n_arcs)
        targets = np.concatenate([rng.permutation(n_next),
                                  rng.integers(0, n_next, size=n_arcs - n_next)])
        targets = targets[rng.permutation(n_arcs)]
        rewards = np.where(rng.random(n_arcs) < density, rng.random(n_arcs), 0.0)
        specs = {}
        for i, s in enumerate(layer):
            specs[s] = [ActionSpec(f"a{j}", None if h == H - 1 else f"s{targets[i * A + j]}",
                                   float(rewards[i * A + j])) for j in range(A)]
        stages.append(specs)
        layer = [f"s{i}" for i in range(n_next)]
    return DeterministicMdp(stages, reward_kind, sigma2)


def gen_random_tree(branching: int, H: int, seed: int = 0, density: float = 1.0,
                    reward_kind: str = "bernoulli", sigma2: float = 1.0) -> DeterministicMdp:
    """Random tree: each state has 1..branching actions, each to a fresh child."""
    if branching < 1 or H < 1:
        raise ValueError("sizes must be positive")
    rng = np.random.default_rng(seed)
    stages = []
    layer = ["n"]
    for h in range(H):
        specs, nxt = {}, []
        for s in layer:
            acts = []
            for j in range(int(rng.integers(1, branching + 1))):
                r = float(rng.random()) if rng.random() < density else 0.0
                child = None if h == H - 1 else f"{s}{j}"
                if child is not None:
                    nxt.append(child)
                acts.append(ActionSpec(f"a{j}", child, r))
            specs[s] = acts
        stages.append(specs)
        layer = nxt
    return DeterministicMdp(stages, reward_kind, sigma2)


def gen_bandit(means, reward_kind: str = "bernoulli", sigma2: float = 1.0) -> DeterministicMdp:
    return DeterministicMdp([{"s1": [ActionSpec(f"a{i + 1}", None, float(m))
                                     for i, m in enumerate(means)]}], reward_kind, sigma2)


def gen_chain(H: int, best: float = 0.8, gap: float = 0.3,
              reward_kind: str = "bernoulli", sigma2: float = 1.0) -> DeterministicMdp:
    """One state per stage with actions a1 (mean best) and a2 (mean best - gap)."""
    if not 0 <= best - gap <= best <= 1:
        raise ValueError("need 0 <= best - gap <= best <= 1")
    stages = []
    for h in range(H):
        nxt = None if h == H - 1 else f"x{h + 2}"
        stages.append({f"x{h + 1}": [ActionSpec("a1", nxt, best), ActionSpec("a2", nxt, best - gap)]})
    return DeterministicMdp(stages, reward_kind, sigma2)


def gen_cover_elimination(m: int, keep_bar: bool = True):
    """Four-stage graph where removing one arc (a_bar) raises the minimum cover
    from m + 1 to 2m.

    s1 -> u (m parallel actions) -> x, s1 -> v -> y3; x has a_bar -> y4 and
    c -> t4; y3 -> y4; y4 has m actions and t4 one action to the sink. The
    returned demand is 1 on every arc except a_bar (0 when present).
    """
    if m < 1:
        raise ValueError("m must be positive")
    x_acts = [ActionSpec("abar", "y4", 0.0)] if keep_bar else []
    x_acts.append(ActionSpec("c", "t4", 0.0))
    stages = [
        {"s1": [ActionSpec("a", "u", 0.0), ActionSpec("b", "v", 0.0)]},
        {"u": [ActionSpec(f"e{i + 1}", "x", 0.0) for i in range(m)],
         "v": [ActionSpec("e", "y3", 0.0)]},
        {"x": x_acts, "y3": [ActionSpec("d", "y4", 0.0)]},
        {"y4": [ActionSpec(f"g{i + 1}", None, 0.0) for i in range(m)],
         "t4": [ActionSpec("g", None, 0.0)]},
    ]
    mdp = DeterministicMdp(stages)
    demand = np.ones(mdp.n_arcs)
    if keep_bar:
        demand[mdp.arc_index("3/x/abar")] = 0.0
    return mdp, demand


def generate(kind: str, **p) -> DeterministicMdp:
    """Dispatch by kind tag; unknown parameters raise TypeError."""
    kind = ALIASES.get(kind, kind)
    if kind == "hard-worst-case":
        return gen_hard_worst_case(p.pop("S"), p.pop("A"), p.pop("H"), **p)
    if kind == "visits-vs-gap":
        return gen_visits_vs_gap(p.pop("S"), p.pop("A"), p.pop("H"), p.pop("gap"), **p)
    if kind == "regret-vs-bpi":
        return gen_regret_vs_bpi(p.pop("S"), p.pop("A"), p.pop("H"), p.pop("gap"), **p)
    if kind == "random-layered":
        return gen_random_layered(p.pop("S"), p.pop("A"), p.pop("H"), **p)
    if kind == "random-tree":
        return gen_random_tree(p.pop("branching"), p.pop("H"), **p)
    if kind == "bandit":
        return gen_bandit(p.pop("means"), **p)
    if kind == "chain":
        return gen_chain(p.pop("H"), **p)
    if kind == "cover-elimination":
        return gen_cover_elimination(p.pop("m"), **p)[0]
    raise ValueError(f"unknown instance kind {kind!r}")


# lower bounds


def _scale(delta: float) -> float:
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    # vacuous (clamped to 0) once delta >= 1/4
    return max(math.log(1.0 / (4.0 * delta)), 0.0)


def _gap_floor(mdp: DeterministicMdp, eps: float) -> np.ndarray:
    """max(return gap, stage minimum gap, eps) per arc."""
    g = compute_gaps(mdp, eps)
    stage_min = g.stage_min_gap[mdp.arc_stage]
    return np.maximum(np.maximum(g.return_gap, stage_min), eps)


def local_lower_bounds(mdp: DeterministicMdp, eps: float, delta: float,
                       sigma2: float = 1.0) -> np.ndarray:
    if not eps > 0:
        raise ValueError("eps must be positive")
    return sigma2 * _scale(delta) / (4.0 * _gap_floor(mdp, eps) ** 2)


@dataclass
class LowerBoundReport:
    demand: np.ndarray          # per-arc local bounds
    phi_star: float             # minimum flow of the local bounds
    stage_max: float            # largest per-stage sum (lower end of the sandwich)
    total: float                # sum over all arcs (upper end of the sandwich)
    tree_bound: float | None
    eps: float
    delta: float
    sigma2: float

    def sandwich_holds(self, tol: float = 1e-9) -> bool:
        scale = tol * max(1.0, self.total)
        return self.stage_max - scale <= self.phi_star <= self.total + scale

    def to_dict(self, mdp: DeterministicMdp) -> dict:
        return {"eps": self.eps, "delta": self.delta, "sigma2": self.sigma2,
                "phi_star": self.phi_star, "stage_max": self.stage_max, "total": self.total,
                "tree_bound": self.tree_bound,
                "local": {mdp.arc_key(a): float(c) for a, c in enumerate(self.demand)}}


def theorem1_lower_bound(mdp: DeterministicMdp, eps: float, delta: float,
                         sigma2: float = 1.0) -> LowerBoundReport:
    c = local_lower_bounds(mdp, eps, delta, sigma2)
    phi = min_flow(mdp, c)[0].value
    stage_sums = [float(c[mdp.stage_arcs(h)].sum()) for h in range(1, mdp.horizon + 1)]
    tree = tree_lower_bound(mdp, eps, delta, sigma2) if is_tree_based(mdp) else None
    return LowerBoundReport(c, phi, max(stage_sums), float(c.sum()), tree, eps, delta, sigma2)


def tree_lower_bound(mdp: DeterministicMdp, eps: float, delta: float,
                     sigma2: float = 1.0) -> float:
    """Largest over stages of the stage sum with weights H - h + 1."""
    if not is_tree_based(mdp):
        raise ValueError("tree bound needs a tree-based MDP")
    c = local_lower_bounds(mdp, eps, delta, sigma2)
    H = mdp.horizon
    return max((H - h + 1) * float(c[mdp.stage_arcs(h)].sum()) for h in range(1, H + 1))


def kappa_bound(mdp: DeterministicMdp, eps: float, delta: float) -> np.ndarray:
    """Per-arc bound on the period at which an arc is eliminated (or the run stops)."""
    g = compute_gaps(mdp, eps)
    H, N = mdp.horizon, mdp.n_arcs
    m = np.maximum(np.maximum(g.return_gap, g.min_gap), eps)
    log_term = math.log(math.e * N * N / delta)
    extra = math.log(2.0) + 4.0 * np.log(4.0 * H / m) + math.log(log_term)
    return 8.0 * H * H / m ** 2 * (log_term + extra) + 1.0


def tree_census(mdp: DeterministicMdp) -> list[int]:
    """Number of arcs at each stage."""
    return [len(mdp.stage_arcs(h)) for h in range(1, mdp.horizon + 1)]


def reachable_nodes(mdp: DeterministicMdp) -> int:
    """Nodes reached by breadth-first search from the source (sink excluded)."""
    seen = {0}
    q = deque([0])
    while q:
        u = q.popleft()
        for a in range(mdp.node_arc_start[u], mdp.node_arc_start[u + 1]):
            v = int(mdp.arc_dst[a])
            if v < mdp.n_nodes and v not in seen:
                seen.add(v)
                q.append(v)
    return len(seen)
