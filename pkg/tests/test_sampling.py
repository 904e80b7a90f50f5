import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from builders import greedy_run, play
from detpac import _kernels as K
from detpac.flow import flow_value_of
from detpac.instances import (gen_chain, gen_cover_elimination, gen_random_layered,
                              gen_random_tree, gen_visits_vs_gap)
from detpac.learner import LearnerState, run_eprl
from detpac.mdp import all_policies, rollout_arcs
from detpac.sampling import (PeriodState, adaptive_max_coverage_policy, advance_period,
                             coverage_function, greedy_coverage_trace, max_coverage_policy,
                             max_diameter_policy, target_visits)


def test_max_diameter_prefers_undervisited_arc():
    mdp = gen_random_layered(3, 2, 4, seed=3)
    s = LearnerState.initial(mdp, 0.1, 0.1)
    s.bonus[:] = 0.01
    target = mdp.stage_arcs(3)[1]
    s.bonus[target] = 1.0
    assert target in K.rollout_arcs(max_diameter_policy(s), mdp.arc_dst, 4)


@given(st.integers(0, 1 << 30), st.integers(0, 1 << 30))
@settings(max_examples=30, deadline=None)
def test_max_diameter_matches_enumeration(seed, bseed):
    mdp = gen_random_layered(2, 2, 3, seed=seed)
    s = LearnerState.initial(mdp, 0.1, 0.1)
    rng = np.random.default_rng(bseed)
    s.bonus[:] = rng.random(mdp.n_arcs)
    s.active[:] = rng.random(mdp.n_arcs) < 0.7
    eff = s.effective_mask()
    best = max(s.bonus[rollout_arcs(mdp, p)].sum() for p in all_policies(mdp)
               if eff[rollout_arcs(mdp, p)].all())
    got = s.bonus[K.rollout_arcs(max_diameter_policy(s), mdp.arc_dst, 3)].sum()
    assert got == pytest.approx(best)


def test_first_period_cover_visits_every_arc():
    mdp = gen_random_layered(3, 3, 4, seed=1)
    s = LearnerState.initial(mdp, 0.1, 0.1)
    period = PeriodState()
    assert advance_period(s, period, 1, solve_cover=True)
    assert period.k == 1 and len(period.queue) == flow_value_of(mdp, np.ones(mdp.n_arcs))
    t = 1
    while target_visits(s) == 1:
        play(s, max_coverage_policy(s, period, t))
        t += 1
    assert np.all(s.counts >= 1)
    assert t - 1 <= 2 * period.log[-1].phi_star


def test_all_arcs_at_target_gives_empty_demand():
    mdp = gen_chain(3)
    s = LearnerState.initial(mdp, 0.1, 0.1)
    s.counts[:] = 2
    period = PeriodState(k=2, snapshot=s.active.copy())
    assert period.demand(s.counts).sum() == 0
    assert flow_value_of(mdp, period.demand(s.counts)) == 0


def test_advance_skips_and_logs_zero_length_periods():
    mdp = gen_chain(2)
    s = LearnerState.initial(mdp, 0.1, 0.1)
    period = PeriodState()
    advance_period(s, period, 1, solve_cover=True)
    s.counts[:] = 3
    assert advance_period(s, period, 5, solve_cover=True)
    ks = [p.k for p in period.log]
    assert ks == [1, 2, 3, 4]
    assert [p.d for p in period.log] == [4, 0, 0, 0]
    assert period.log[1].n_demand == 0 and period.log[1].phi_star == 0


@pytest.mark.parametrize("m", [2, 3, 5])
def test_cover_with_eliminated_arc(m):
    mdp, _ = gen_cover_elimination(m)
    s = LearnerState.initial(mdp, 0.1, 0.1)
    s.active[mdp.arc_index("3/x/abar")] = False
    period = PeriodState()
    advance_period(s, period, 1, solve_cover=True)
    assert len(period.queue) == m + 1


def test_eliminating_last_undervisited_arc_turns_period():
    mdp = gen_chain(3)
    s = LearnerState.initial(mdp, 0.1, 0.1)
    s.counts[:] = 1
    lagging = mdp.arc_index("2/x2/a2")
    s.counts[lagging] = 0
    period = PeriodState()
    advance_period(s, period, 10, solve_cover=True)
    assert period.k == 1 and len(period.queue) == 1
    s.active[lagging] = False
    assert advance_period(s, period, 11, solve_cover=True)
    assert period.k == 2 and period.log[0].d == 1
    # fresh cover for the new demand, the old one was discarded
    assert len(period.queue) == flow_value_of(mdp, period.demand(s.counts))


def test_empty_queue_falls_back_to_max_diameter():
    mdp = gen_chain(2)
    s = LearnerState.initial(mdp, 0.1, 0.1)
    period = PeriodState()
    advance_period(s, period, 1, solve_cover=True)
    period.queue.clear()
    assert np.array_equal(max_coverage_policy(s, period, 3), max_diameter_policy(s))


def test_alternation():
    mdp = gen_random_layered(3, 2, 3, seed=4)
    s = LearnerState.initial(mdp, 0.1, 0.1)
    s.bonus[:] = np.linspace(0.1, 1.0, mdp.n_arcs)
    period = PeriodState()
    advance_period(s, period, 1, solve_cover=False)
    assert np.array_equal(adaptive_max_coverage_policy(s, period, 2), max_diameter_policy(s))
    period = PeriodState()
    advance_period(s, period, 1, solve_cover=True)
    first = period.queue[0]
    assert np.array_equal(max_coverage_policy(s, period, 2), max_diameter_policy(s))
    assert np.array_equal(max_coverage_policy(s, period, 1), first)


def test_adaptive_first_pick_covers_horizon_arcs():
    mdp = gen_random_layered(3, 3, 5, seed=2)
    s = LearnerState.initial(mdp, 0.1, 0.1)
    period = PeriodState()
    advance_period(s, period, 1, solve_cover=False)
    choice = adaptive_max_coverage_policy(s, period, 1)
    assert coverage_function(mdp, period.demand(s.counts), [choice]) == 5


def test_adaptive_single_undervisited_arc():
    mdp = gen_random_layered(3, 3, 4, seed=2)
    s = LearnerState.initial(mdp, 0.1, 0.1)
    s.counts[:] = 1
    target = mdp.stage_arcs(3)[2]
    s.counts[target] = 0
    period = PeriodState()
    advance_period(s, period, 1, solve_cover=False)
    choice = adaptive_max_coverage_policy(s, period, 1)
    assert target in K.rollout_arcs(choice, mdp.arc_dst, 4)
    demand = period.demand(s.counts)
    assert demand.sum() == 1 and coverage_function(mdp, demand, [choice]) == 1


def test_coverage_function_basics():
    mdp = gen_random_layered(2, 2, 3, seed=3)
    demand = np.ones(mdp.n_arcs, dtype=bool)
    assert coverage_function(mdp, demand, []) == 0
    assert coverage_function(mdp, demand, list(all_policies(mdp))) == mdp.n_arcs


@given(st.integers(0, 1 << 30), st.integers(0, 1 << 30))
@settings(max_examples=30, deadline=None)
def test_coverage_function_direct_count(seed, pseed):
    mdp = gen_random_layered(2, 2, 3, seed=seed)
    rng = np.random.default_rng(pseed)
    pols = list(all_policies(mdp))
    subset = [pols[i] for i in rng.choice(len(pols), size=min(3, len(pols)), replace=False)]
    demand = rng.random(mdp.n_arcs) < 0.6
    count = 0
    for a in range(mdp.n_arcs):
        if demand[a] and any(a in rollout_arcs(mdp, p) for p in subset):
            count += 1
    assert coverage_function(mdp, demand, subset) == count


@pytest.mark.parametrize("seed", range(10))
def test_greedy_bound(seed):
    mdp = gen_random_layered(3, 3, 4, seed=seed)
    trace, total, v = greedy_run(mdp, seed, 40)
    for i, c in enumerate(trace, start=1):
        assert c >= (1 - math.exp(-((i + 1) // 2) / v)) * total - 1e-9
    pure = greedy_coverage_trace(mdp, np.ones(mdp.n_arcs, dtype=bool), 20)
    for j, c in enumerate(pure, start=1):
        assert c >= (1 - math.exp(-j / v)) * total - 1e-9


def test_logged_cover_property_and_durations():
    mdp = gen_visits_vs_gap(8, 2, 5, 0.3)
    for rule in ("max-coverage", "adaptive-max-coverage"):
        r = run_eprl(mdp, rule, 0.1, 0.1, seed=2)
        H = mdp.horizon
        for p in r.periods:
            assert p.min_count >= p.k - 1
            if p.d:
                bound = 2 * p.phi_star * (1 if rule == "max-coverage" else math.log(H) + 1)
                assert p.d <= bound
        assert sum(p.d for p in r.periods) == r.tau


def test_tree_periods_bounded_by_active_leaves():
    mdp = gen_random_tree(3, 4, seed=1)
    r = run_eprl(mdp, "max-coverage", 0.1, 0.1, seed=0)
    for p in r.periods:
        assert p.d <= 2 * p.active_last_stage
