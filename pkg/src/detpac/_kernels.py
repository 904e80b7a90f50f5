"""Compiled dynamic programs and flow routines over the flat arc layout.

Layout conventions (shared by every kernel):
  nodes 0..M-1 are (stage, state) pairs sorted by stage, node 0 is the source;
  the sink has index M; arcs of node u are node_arc_start[u]..node_arc_start[u+1]-1;
  arc_dst[a] == M for arcs at the last stage.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

UNREACHABLE = -np.inf


@njit(cache=True)
def effective_mask(active, node_arc_start, n_nodes):
    # a node whose active set is empty falls back to its full action set
    eff = active.copy()
    for u in range(n_nodes):
        lo, hi = node_arc_start[u], node_arc_start[u + 1]
        empty = True
        for a in range(lo, hi):
            if active[a]:
                empty = False
                break
        if empty:
            for a in range(lo, hi):
                eff[a] = True
    return eff


@njit(cache=True)
def best_suffix(weights, allowed, node_arc_start, arc_dst, n_nodes):
    """Backward max of summed weights over allowed arcs.

    Returns (V, choice): V has length M+1 (V[M] = 0 at the sink), choice[u] is
    the maximizing arc (lowest index on ties) or -1 when u allows no arc.
    """
    V = np.empty(n_nodes + 1)
    V[n_nodes] = 0.0
    choice = np.full(n_nodes, -1, dtype=np.int64)
    for u in range(n_nodes - 1, -1, -1):
        best = UNREACHABLE
        arg = -1
        for a in range(node_arc_start[u], node_arc_start[u + 1]):
            if not allowed[a]:
                continue
            nxt = V[arc_dst[a]]
            if nxt == UNREACHABLE:
                continue
            q = weights[a] + nxt
            if arg < 0 or q > best:
                best = q
                arg = a
        V[u] = best
        choice[u] = arg
    return V, choice


@njit(cache=True)
def best_prefix(weights, allowed, node_arc_start, arc_dst, n_nodes):
    """Forward max of summed weights from the source to every node (and sink)."""
    P = np.full(n_nodes + 1, UNREACHABLE)
    P[0] = 0.0
    for u in range(n_nodes):
        pu = P[u]
        if pu == UNREACHABLE:
            continue
        for a in range(node_arc_start[u], node_arc_start[u + 1]):
            if not allowed[a]:
                continue
            v = arc_dst[a]
            q = pu + weights[a]
            if q > P[v]:
                P[v] = q
    return P


@njit(cache=True)
def through_arc_values(weights, allowed, arc_src, node_arc_start, arc_dst, n_nodes):
    """Best total weight of a path forced through each arc (UNREACHABLE if none)."""
    V, _ = best_suffix(weights, allowed, node_arc_start, arc_dst, n_nodes)
    P = best_prefix(weights, allowed, node_arc_start, arc_dst, n_nodes)
    n_arcs = arc_src.shape[0]
    out = np.full(n_arcs, UNREACHABLE)
    for a in range(n_arcs):
        if not allowed[a]:
            continue
        pre = P[arc_src[a]]
        suf = V[arc_dst[a]]
        if pre == UNREACHABLE or suf == UNREACHABLE:
            continue
        out[a] = pre + weights[a] + suf
    return out


@njit(cache=True)
def bonus_bounded(n, delta, n_arcs):
    if n == 0:
        return 1.0
    beta = 0.5 * math.log(math.e * (n + 1) * n_arcs / delta)
    return min(math.sqrt(beta / n), 1.0)


@njit(cache=True)
def bonus_subgaussian(n, delta, n_arcs, sigma2):
    if n == 0:
        return 1.0
    beta = 2.0 * sigma2 * math.log(math.pi ** 2 * n * n * n_arcs / (3.0 * delta))
    return min(math.sqrt(beta / n), 1.0)


@njit(cache=True)
def elimination_sweep(active, means, bonus, arc_src, node_arc_start, arc_dst, n_nodes):
    """Flags for active arcs whose optimistic forced return falls below the
    pessimistic benchmark. Optimistic side uses the effective active mask, the
    pessimistic benchmark ranges over all arcs."""
    n_arcs = means.shape[0]
    upper = means + bonus
    lower = means - bonus
    everything = np.ones(n_arcs, dtype=np.bool_)
    Vl, _ = best_suffix(lower, everything, node_arc_start, arc_dst, n_nodes)
    benchmark = Vl[0]
    eff = effective_mask(active, node_arc_start, n_nodes)
    forced = through_arc_values(upper, eff, arc_src, node_arc_start, arc_dst, n_nodes)
    out = np.zeros(n_arcs, dtype=np.bool_)
    for a in range(n_arcs):
        if not active[a]:
            continue
        if forced[a] == UNREACHABLE or forced[a] < benchmark:
            out[a] = True
    return out


@njit(cache=True)
def rollout_arcs(choice, arc_dst, horizon):
    traj = np.empty(horizon, dtype=np.int64)
    u = 0
    for h in range(horizon):
        a = choice[u]
        traj[h] = a
        u = arc_dst[a]
    return traj


@njit(cache=True)
def initial_flow(lb, arc_src, node_arc_start, arc_dst, in_start, in_arcs, n_nodes):
    """Route each arc's demand along first-parent chain, the arc, first-child chain."""
    flow = np.zeros(lb.shape[0])
    for a in range(lb.shape[0]):
        c = lb[a]
        if c <= 0.0:
            continue
        flow[a] += c
        u = arc_src[a]
        while u != 0:
            p = in_arcs[in_start[u]]
            flow[p] += c
            u = arc_src[p]
        v = arc_dst[a]
        while v != n_nodes:
            q = node_arc_start[v]
            flow[q] += c
            v = arc_dst[q]
    return flow


@njit(cache=True)
def reduce_flow(flow, lb, arc_src, node_arc_start, arc_dst, in_start, in_arcs, n_nodes, tol):
    """Cancel shortest decreasing source-sink paths until none is left.

    Mutates flow in place. Returns the boolean membership of nodes reachable
    from the source in the final residual graph (length M+1, sink last).
    """
    sink = n_nodes
    parent = np.empty(n_nodes + 1, dtype=np.int64)
    forward = np.zeros(n_nodes + 1, dtype=np.bool_)
    queue = np.empty(n_nodes + 1, dtype=np.int64)
    while True:
        seen = np.zeros(n_nodes + 1, dtype=np.bool_)
        seen[0] = True
        head, tail = 0, 1
        queue[0] = 0
        found = False
        while head < tail and not found:
            u = queue[head]
            head += 1
            if u < n_nodes:
                for a in range(node_arc_start[u], node_arc_start[u + 1]):
                    v = arc_dst[a]
                    if not seen[v] and flow[a] - lb[a] > tol:
                        seen[v] = True
                        parent[v] = a
                        forward[v] = True
                        queue[tail] = v
                        tail += 1
                        if v == sink:
                            found = True
            for i in range(in_start[u], in_start[u + 1]):
                a = in_arcs[i]
                w = arc_src[a]
                if not seen[w]:
                    seen[w] = True
                    parent[w] = a
                    forward[w] = False
                    queue[tail] = w
                    tail += 1
        if not found:
            return seen
        theta = np.inf
        v = sink
        while v != 0:
            a = parent[v]
            if forward[v]:
                theta = min(theta, flow[a] - lb[a])
                v = arc_src[a]
            else:
                v = arc_dst[a]
        v = sink
        while v != 0:
            a = parent[v]
            if forward[v]:
                flow[a] -= theta
                v = arc_src[a]
            else:
                flow[a] += theta
                v = arc_dst[a]


@njit(cache=True)
def min_flow_kernel(lb, arc_src, node_arc_start, arc_dst, in_start, in_arcs, n_nodes, tol):
    flow = initial_flow(lb, arc_src, node_arc_start, arc_dst, in_start, in_arcs, n_nodes)
    seen = reduce_flow(flow, lb, arc_src, node_arc_start, arc_dst, in_start, in_arcs, n_nodes, tol)
    return flow, seen[:n_nodes].copy()


@njit(cache=True)
def extract_cover_kernel(flow, node_arc_start, arc_dst, horizon, n_nodes):
    """Peel unit source-sink walks off an integer flow, following the largest
    remaining arc flow (lowest index on ties). Rows are per-node arc choices;
    nodes off the walk keep their first arc."""
    f = flow.copy()
    value = 0
    for a in range(node_arc_start[0], node_arc_start[1]):
        value += f[a]
    out = np.empty((value, n_nodes), dtype=np.int64)
    for i in range(value):
        for u in range(n_nodes):
            out[i, u] = node_arc_start[u]
        u = 0
        for h in range(horizon):
            best = node_arc_start[u]
            for a in range(node_arc_start[u] + 1, node_arc_start[u + 1]):
                if f[a] > f[best]:
                    best = a
            out[i, u] = best
            f[best] -= 1
            u = arc_dst[best]
    return out
