import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from detpac.flow import flow_value_of
from detpac.instances import (gen_bandit, gen_chain, gen_hard_worst_case, gen_random_layered,
                              gen_random_tree, gen_regret_vs_bpi, gen_visits_vs_gap, generate,
                              kappa_bound, local_lower_bounds, reachable_nodes,
                              theorem1_lower_bound, tree_census, tree_lower_bound)
from detpac.learner import run_eprl
from detpac.mdp import compute_gaps, is_tree_based, optimal_values


def test_hard_instance_census():
    # stage by stage: s1 {a1,a2}; s1 {a1,a2} + s2 {2}; s1 {a1} + s2..s4 {2 each};
    # s2 + s3,s4 {2 each} + four leaves {3 each}; s3,s4 + leaves; then four leaves {3 each}
    mdp = gen_hard_worst_case(8, 3, 9)
    assert tree_census(mdp) == [2, 4, 7, 18, 16, 12, 12, 12, 12]
    assert mdp.n_arcs == 95
    assert gen_hard_worst_case(8, 2, 9).n_arcs == 71
    assert not is_tree_based(mdp)


def test_hard_instance_smallest():
    mdp = gen_hard_worst_case(2, 2, 3)
    assert tree_census(mdp) == [1, 2, 2]
    assert mdp.state_ids == (("s1",), ("s2",), ("s2",))


@given(st.integers(1, 4), st.integers(2, 4), st.integers(0, 4))
@settings(max_examples=30, deadline=None)
def test_hard_instance_reachability(d, A, extra):
    S, H = 2 ** d, 3 * d + extra
    mdp = gen_hard_worst_case(S, A, H)
    assert reachable_nodes(mdp) == mdp.n_nodes
    leaves = {f"s{j + 1}" for j in range(2 ** (d - 1), S)}
    assert set(mdp.state_ids[-1]) <= leaves


@pytest.mark.parametrize("args", [(6, 2, 9), (8, 1, 9), (8, 2, 8), (1, 2, 3)])
def test_hard_instance_preconditions(args):
    with pytest.raises(ValueError):
        gen_hard_worst_case(*args)


def test_hard_instance_perturbation():
    mdp = gen_hard_worst_case(4, 2, 6, means={"6/s3/a2": 0.5})
    assert optimal_values(mdp).initial == 0.5
    g = compute_gaps(mdp)
    assert g.return_gap[mdp.arc_index("6/s3/a2")] == 0
    assert g.return_gap[mdp.arc_index("6/s3/a1")] == pytest.approx(0.5)


@pytest.mark.parametrize("S", [4, 5, 6, 7, 8, 11, 16])
def test_visits_vs_gap_structure(S):
    gap = 0.2
    H = math.ceil(math.log2(S)) + 2
    mdp = gen_visits_vs_gap(S, 3, H, gap)
    assert reachable_nodes(mdp) == mdp.n_nodes
    tree_states = {s for ids in mdp.state_ids for s in ids} - {"s1"}
    assert tree_states == {f"s{j}" for j in range(2, S + 1)}
    g = compute_gaps(mdp)
    assert g.optimal_value == pytest.approx(gap)
    assert g.min_gap == pytest.approx(gap)


@pytest.mark.parametrize("S", [4, 5, 8, 9])
def test_regret_vs_bpi_structure(S):
    gap = 0.3
    H = math.ceil(math.log2(S)) + 1
    mdp = gen_regret_vs_bpi(S, 2, H, gap)
    assert mdp.state_ids[-1] == (f"s{S}",)
    g = compute_gaps(mdp)
    for a in mdp.stage_arcs(H - 1):
        assert g.return_gap[a] == 0
    last = list(mdp.stage_arcs(H))
    assert g.return_gap[last[0]] == 0 and g.return_gap[last[1]] == pytest.approx(gap)
    assert g.min_gap == 0 and not g.unique_optimal


@pytest.mark.parametrize("maker", [gen_visits_vs_gap, gen_regret_vs_bpi])
def test_tree_instance_preconditions(maker):
    with pytest.raises(ValueError):
        maker(3, 2, 5, 0.1)
    with pytest.raises(ValueError):
        maker(8, 1, 5, 0.1)
    with pytest.raises(ValueError):
        maker(8, 2, 3, 0.1)


def test_random_generators_deterministic():
    a = gen_random_layered(4, 3, 5, density=0.5, seed=12)
    assert a.to_dict() == gen_random_layered(4, 3, 5, density=0.5, seed=12).to_dict()
    assert a.to_dict() != gen_random_layered(4, 3, 5, density=0.5, seed=13).to_dict()
    t = gen_random_tree(3, 4, seed=2)
    assert t.to_dict() == gen_random_tree(3, 4, seed=2).to_dict()
    assert is_tree_based(t)


@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 5), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_random_layered_valid(S, A, H, seed):
    mdp = gen_random_layered(S, A, H, seed=seed)
    assert reachable_nodes(mdp) == mdp.n_nodes
    assert all(len(ids) <= max(S, 1) for ids in mdp.state_ids)


def test_generate_dispatch():
    assert generate("hard", S=8, A=3, H=9).n_arcs == 95
    assert generate("bandit", means=[0.1, 0.2]).n_arcs == 2
    with pytest.raises(ValueError):
        generate("unknown")


def test_lower_bound_all_equal_rewards():
    mdp = gen_random_layered(3, 2, 3, seed=2)
    mdp = mdp.with_means(np.full(mdp.n_arcs, 0.4))
    eps, delta = 0.1, 0.05
    c = local_lower_bounds(mdp, eps, delta)
    assert np.allclose(c, math.log(1 / (4 * delta)) / (4 * eps ** 2))


def test_lower_bound_bandit_value():
    mdp = gen_bandit([0.9, 0.1])
    c = local_lower_bounds(mdp, 0.05, 0.01)
    assert c[1] == pytest.approx(math.log(25) / (4 * 0.8 ** 2))
    assert c[1] == pytest.approx(1.2574, abs=1e-4)
    # the optimal arm is alone within eps, so its floor is the smallest positive gap
    assert c[0] == pytest.approx(c[1])
    rep = theorem1_lower_bound(mdp, 0.05, 0.01)
    assert rep.phi_star == pytest.approx(c.sum()) and rep.sandwich_holds()


@given(st.integers(0, 1000), st.floats(0.01, 0.5), st.floats(0.001, 0.2))
@settings(max_examples=40, deadline=None)
def test_lower_bound_sandwich(seed, eps, delta):
    mdp = gen_random_layered(3, 2, 4, seed=seed)
    rep = theorem1_lower_bound(mdp, eps, delta)
    assert rep.sandwich_holds()
    assert rep.phi_star == pytest.approx(flow_value_of(mdp, rep.demand))


def test_lower_bound_variance_scaling():
    mdp = gen_random_layered(3, 2, 4, seed=3)
    a = theorem1_lower_bound(mdp, 0.1, 0.05, 1.0)
    b = theorem1_lower_bound(mdp, 0.1, 0.05, 0.25)
    assert b.phi_star == pytest.approx(a.phi_star / 4)


def test_lower_bound_vacuous_for_large_delta():
    mdp = gen_bandit([0.9, 0.1])
    assert theorem1_lower_bound(mdp, 0.1, 0.5).phi_star == 0


def test_tree_bound_bandit_is_stage_sum():
    mdp = gen_bandit([0.9, 0.5, 0.1])
    c = local_lower_bounds(mdp, 0.05, 0.05)
    assert tree_lower_bound(mdp, 0.05, 0.05) == pytest.approx(c.sum())


def test_tree_bound_weighted_stage_sums():
    eps, delta = 0.05, 0.05
    mdp = gen_random_tree(2, 4, seed=5)
    c = local_lower_bounds(mdp, eps, delta)
    H = mdp.horizon
    expect = max((H - h + 1) * c[mdp.stage_arcs(h)].sum() for h in range(1, H + 1))
    assert tree_lower_bound(mdp, eps, delta) == pytest.approx(expect)


def test_tree_bound_rejects_non_trees():
    with pytest.raises(ValueError):
        tree_lower_bound(gen_hard_worst_case(4, 2, 6), 0.1, 0.1)


@given(st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_tree_bound_dominates_stage_max(seed):
    mdp = gen_random_tree(3, 4, seed=seed)
    rep = theorem1_lower_bound(mdp, 0.1, 0.05)
    assert rep.tree_bound >= rep.stage_max - 1e-9


def test_kappa_formula():
    from detpac.mdp import ActionSpec, DeterministicMdp
    mdp = DeterministicMdp([
        {"x": [ActionSpec("a", "y", 0.5), ActionSpec("b", "y", 0.5)]},
        {"y": [ActionSpec("a", None, 0.5), ActionSpec("b", None, 0.5)]},
    ])
    eps, delta, H, N = 0.1, 0.1, 2, 4
    lt = math.log(math.e * N * N / delta)
    L = math.log(2) + 4 * math.log(4 * H / eps) + math.log(lt)
    expect = 8 * H * H / eps ** 2 * (lt + L) + 1
    assert np.allclose(kappa_bound(mdp, eps, delta), expect)
    assert expect == pytest.approx(83523.3, rel=1e-5)


def test_kappa_decreasing_in_gap():
    mdp = gen_chain(3, 0.9, 0.4)
    k = kappa_bound(mdp, 0.05, 0.1)
    k_small = kappa_bound(gen_chain(3, 0.9, 0.2), 0.05, 0.1)
    assert np.all(k < k_small)


def test_elimination_periods_below_kappa_on_good_runs():
    mdp = gen_random_layered(3, 2, 4, seed=3)
    kappa = kappa_bound(mdp, 0.1, 0.1)
    for seed in range(10):
        r = run_eprl(mdp, "max-coverage", 0.1, 0.1, seed=seed)
        if not r.good_event:
            continue
        gone = r.elim_period >= 0
        assert np.all(r.elim_period[gone] <= kappa[gone])
        assert r.periods[-1].k <= kappa.max()
