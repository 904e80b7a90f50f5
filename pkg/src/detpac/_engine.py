"""The learner loop compiled with numba; mirrors learner._run_python step by step."""
from __future__ import annotations

import numpy as np
from numba import njit

from . import _kernels as K
from .mdp import Policy, policy_gap

RULE_CODES = {"max-diameter": 0, "max-coverage": 1, "adaptive-max-coverage": 2}
STOP_NAMES = {0: "budget", 1: "width", 2: "unique-active"}
LOG_FIELDS = 8  # k, t_start, d, n_demand, phi, cover_size, min_count, active_last_stage


@njit(cache=True)
def _grow(log, n):
    if n < log.shape[0]:
        return log
    out = np.zeros((2 * log.shape[0], LOG_FIELDS), dtype=np.int64)
    out[:n] = log[:n]
    return out


@njit(cache=True)
def _loop(arc_src, arc_dst, node_arc_start, in_start, in_arcs, n_nodes, horizon,
          true_means, gaussian, noise, eps, delta, subgaussian, sigma2,
          rule, seed, max_episodes, elim_period):
    N = arc_src.shape[0]
    M = n_nodes
    np.random.seed(seed)
    counts = np.zeros(N, dtype=np.int64)
    sums = np.zeros(N)
    means = np.zeros(N)
    bonus = np.ones(N)
    active = np.ones(N, dtype=np.bool_)
    elim_t = np.full(N, -1, dtype=np.int64)
    elim_k = np.full(N, -1, dtype=np.int64)
    everything = np.ones(N, dtype=np.bool_)
    # first arc of stage H: the lowest arc whose destination is the sink
    last_lo = N
    for a in range(N):
        if arc_dst[a] == M:
            last_lo = a
            break

    log = np.zeros((16, LOG_FIELDS), dtype=np.int64)
    n_log = 0
    k_cur = 0
    t_start = 0
    snap = active.copy()
    queue = np.zeros((0, M), dtype=np.int64)
    q_pos = 0
    played = 0

    eff = K.effective_mask(active, node_arc_start, M)
    _, diam_choice = K.best_suffix(bonus, eff, node_arc_start, arc_dst, M)
    good = True
    stop = 0
    t = 0
    while t < max_episodes:
        t += 1
        choice = diam_choice
        if rule != 0:
            kt = np.int64(1 << 62)
            for a in range(N):
                if active[a] and counts[a] < kt:
                    kt = counts[a]
            kt += 1
            if kt > k_cur:
                if n_log > 0:
                    log[n_log - 1, 2] = t - t_start
                leaves = 0
                for a in range(last_lo, N):
                    if active[a]:
                        leaves += 1
                for k in range(k_cur + 1, kt):
                    log = _grow(log, n_log)
                    log[n_log, 0] = k
                    log[n_log, 1] = t
                    log[n_log, 6] = kt - 1
                    log[n_log, 7] = leaves
                    n_log += 1
                k_cur = kt
                t_start = t
                snap = active.copy()
                lb = np.zeros(N)
                nk = 0
                for a in range(N):
                    if snap[a] and counts[a] < kt:
                        lb[a] = 1.0
                        nk += 1
                flow, _ = K.min_flow_kernel(lb, arc_src, node_arc_start, arc_dst,
                                            in_start, in_arcs, M, 0.5)
                phi = 0.0
                for a in range(node_arc_start[0], node_arc_start[1]):
                    phi += flow[a]
                cover_size = 0
                if rule == 1:
                    fi = np.empty(N, dtype=np.int64)
                    for a in range(N):
                        fi[a] = np.int64(np.round(flow[a]))
                    queue = K.extract_cover_kernel(fi, node_arc_start, arc_dst, horizon, M)
                    q_pos = 0
                    cover_size = queue.shape[0]
                played = 0
                log = _grow(log, n_log)
                log[n_log, 0] = kt
                log[n_log, 1] = t
                log[n_log, 2] = 0
                log[n_log, 3] = nk
                log[n_log, 4] = np.int64(np.round(phi))
                log[n_log, 5] = cover_size
                log[n_log, 6] = kt - 1
                log[n_log, 7] = leaves
                n_log += 1
            if t % 2 == 1:
                if rule == 1:
                    if q_pos < queue.shape[0]:
                        choice = queue[q_pos]
                        q_pos += 1
                else:
                    played += 1
                    log[n_log - 1, 5] = played
                    w = np.zeros(N)
                    for a in range(N):
                        if snap[a] and counts[a] < k_cur:
                            w[a] = 1.0
                    _, choice = K.best_suffix(w, everything, node_arc_start, arc_dst, M)

        traj = K.rollout_arcs(choice, arc_dst, horizon)
        for h in range(horizon):
            a = traj[h]
            r = true_means[a]
            if gaussian:
                y = r + noise * np.random.normal(0.0, 1.0)
            else:
                y = 1.0 if np.random.random() < r else 0.0
            counts[a] += 1
            sums[a] += y
            means[a] = sums[a] / counts[a]
            if subgaussian:
                bonus[a] = K.bonus_subgaussian(counts[a], delta, N, sigma2)
            else:
                bonus[a] = K.bonus_bounded(counts[a], delta, N)
        for h in range(horizon):
            a = traj[h]
            if abs(means[a] - true_means[a]) > bonus[a]:
                good = False

        if t % elim_period == 0:
            drop = K.elimination_sweep(active, means, bonus, arc_src, node_arc_start, arc_dst, M)
            for a in range(N):
                if drop[a]:
                    active[a] = False
                    elim_t[a] = t
                    elim_k[a] = k_cur

        eff = K.effective_mask(active, node_arc_start, M)
        V, diam_choice = K.best_suffix(bonus, eff, node_arc_start, arc_dst, M)
        if 2.0 * V[0] <= eps:
            stop = 1
            break
        unique = True
        for u in range(M):
            c = 0
            for a in range(node_arc_start[u], node_arc_start[u + 1]):
                if active[a]:
                    c += 1
            if c > 1:
                unique = False
                break
        if unique:
            stop = 2
            break

    if n_log > 0:
        log[n_log - 1, 2] = t - t_start + 1
    upper = means + bonus
    _, rec = K.best_suffix(upper, eff, node_arc_start, arc_dst, M)
    return t, stop, rec, counts, elim_t, elim_k, good, log[:n_log].copy()


def run_compiled(mdp, rule, eps, delta, seed, max_episodes, elim_period, confidence=None):
    from .learner import LearnerState, RunResult
    from .sampling import PeriodRecord

    if not eps > 0 or not 0 < delta < 1:
        raise ValueError("need eps > 0 and 0 < delta < 1")
    st = LearnerState.initial(mdp, eps, delta, confidence)
    gaussian = mdp.reward_kind == "gaussian"
    noise = float(np.sqrt(mdp.sigma2)) if gaussian else 0.0
    t, stop, rec, counts, elim_t, elim_k, good, log = _loop(
        mdp.arc_src, mdp.arc_dst, mdp.node_arc_start, mdp.in_start, mdp.in_arcs,
        mdp.n_nodes, mdp.horizon, mdp.means, gaussian, noise, float(eps), float(delta),
        st.confidence == "subgaussian", float(st.sigma2), RULE_CODES[rule], int(seed),
        int(max_episodes), int(elim_period))
    policy = Policy.from_arcs(mdp, rec)
    periods = [PeriodRecord(*(int(x) for x in row)) for row in log]
    return RunResult(int(t), policy, STOP_NAMES[int(stop)], counts, elim_t, elim_k,
                     bool(good), policy_gap(mdp, policy), rule, eps, delta, int(seed), periods)
