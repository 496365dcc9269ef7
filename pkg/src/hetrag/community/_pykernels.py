"""Pure-Python Leiden kernels. Must stay operation-for-operation identical to
``_kernels.pyx`` so both produce the same partitions bit for bit."""

from __future__ import annotations

from collections import deque

import numpy as np


def move_nodes(indptr, indices, weights, node_deg, membership, order, resolution, two_m):
    """Fast local moving: visit queued nodes, move each to its best community.

    Returns ``(membership, moved)``.
    """
    indptr = indptr.tolist()
    indices = indices.tolist()
    weights = weights.tolist()
    node_deg = node_deg.tolist()
    memb = membership.tolist()
    n = len(node_deg)
    scale = resolution / two_m

    comm_deg = [0.0] * n
    comm_size = [0] * n
    for v in range(n):
        comm_deg[memb[v]] += node_deg[v]
        comm_size[memb[v]] += 1
    empty = [c for c in range(n - 1, -1, -1) if comm_size[c] == 0]

    queue = deque(order.tolist())
    in_queue = [True] * n
    neigh_w = [0.0] * n
    touched: list[int] = []
    moved = False

    while queue:
        v = queue.popleft()
        in_queue[v] = False
        own = memb[v]
        dv = node_deg[v]
        for p in range(indptr[v], indptr[v + 1]):
            u = indices[p]
            if u == v:
                continue
            c = memb[u]
            if neigh_w[c] == 0.0:
                touched.append(c)
            neigh_w[c] += weights[p]

        comm_deg[own] -= dv
        comm_size[own] -= 1
        best = own
        best_gain = neigh_w[own] - scale * dv * comm_deg[own]
        for c in touched:
            gain = neigh_w[c] - scale * dv * comm_deg[c]
            if gain > best_gain:
                best = c
                best_gain = gain
        if best_gain < 0.0 and comm_size[own] > 0:
            best = empty.pop()
            best_gain = 0.0

        comm_deg[best] += dv
        comm_size[best] += 1
        if best != own:
            moved = True
            memb[v] = best
            if comm_size[own] == 0:
                empty.append(own)
            for p in range(indptr[v], indptr[v + 1]):
                u = indices[p]
                if u != v and not in_queue[u] and memb[u] != best:
                    queue.append(u)
                    in_queue[u] = True
        for c in touched:
            neigh_w[c] = 0.0
        touched.clear()

    return np.asarray(memb, dtype=np.int64), moved


def refine(indptr, indices, weights, node_deg, membership, order, resolution, two_m):
    """Refinement: merge well-connected singletons inside each coarse community.

    Merges are greedy (the zero-temperature limit of the randomized rule):
    a singleton joins the well-connected sub-community with the largest
    strictly positive gain.
    """
    indptr = indptr.tolist()
    indices = indices.tolist()
    weights = weights.tolist()
    node_deg = node_deg.tolist()
    memb = membership.tolist()
    n = len(node_deg)
    scale = resolution / two_m

    s_deg = [0.0] * n
    for v in range(n):
        s_deg[memb[v]] += node_deg[v]
    ext_v = [0.0] * n
    for v in range(n):
        mv = memb[v]
        for p in range(indptr[v], indptr[v + 1]):
            u = indices[p]
            if u != v and memb[u] == mv:
                ext_v[v] += weights[p]

    refined = list(range(n))
    r_deg = list(node_deg)
    r_size = [1] * n
    r_ext = list(ext_v)
    neigh_w = [0.0] * n
    touched: list[int] = []

    for v in order.tolist():
        own = refined[v]
        if r_size[own] != 1:
            continue
        s = memb[v]
        dv = node_deg[v]
        if ext_v[v] < scale * dv * (s_deg[s] - dv):
            continue
        for p in range(indptr[v], indptr[v + 1]):
            u = indices[p]
            if u == v or memb[u] != s:
                continue
            c = refined[u]
            if neigh_w[c] == 0.0:
                touched.append(c)
            neigh_w[c] += weights[p]

        best = own
        best_gain = 0.0
        for c in touched:
            if r_ext[c] < scale * r_deg[c] * (s_deg[s] - r_deg[c]):
                continue
            gain = neigh_w[c] - scale * dv * r_deg[c]
            if gain > best_gain:
                best = c
                best_gain = gain
        if best != own:
            r_size[own] = 0
            r_deg[own] = 0.0
            refined[v] = best
            r_size[best] += 1
            r_deg[best] += dv
            r_ext[best] = r_ext[best] + ext_v[v] - 2.0 * neigh_w[best]
        for c in touched:
            neigh_w[c] = 0.0
        touched.clear()

    return np.asarray(refined, dtype=np.int64)


def fine_tune(indptr, indices, weights, node_deg, membership, resolution, two_m):
    """Kernighan-Lin style sweep over single-node moves.

    Every node is moved exactly once, each step taking the best move still
    available even when it lowers modularity; the sweep is then rolled back
    to its best prefix. Returns ``(membership, improved)``.
    """
    indptr = indptr.tolist()
    indices = indices.tolist()
    weights = weights.tolist()
    node_deg = node_deg.tolist()
    memb = membership.tolist()
    n = len(node_deg)
    scale = resolution / two_m
    tol = 1e-12 * two_m

    comm_deg = [0.0] * n
    comm_size = [0] * n
    for v in range(n):
        comm_deg[memb[v]] += node_deg[v]
        comm_size[memb[v]] += 1
    empty = [c for c in range(n - 1, -1, -1) if comm_size[c] == 0]

    done = [False] * n
    neigh_w = [0.0] * n
    touched: list[int] = []
    hist_v: list[int] = []
    hist_src: list[int] = []
    total = 0.0
    best_total = 0.0
    best_len = 0

    for _ in range(n):
        b_gain = -np.inf
        b_v = -1
        b_c = -1
        for v in range(n):
            if done[v]:
                continue
            own = memb[v]
            dv = node_deg[v]
            for p in range(indptr[v], indptr[v + 1]):
                u = indices[p]
                if u == v:
                    continue
                c = memb[u]
                if neigh_w[c] == 0.0:
                    touched.append(c)
                neigh_w[c] += weights[p]
            base = neigh_w[own] - scale * dv * (comm_deg[own] - dv)
            for c in touched:
                if c == own:
                    continue
                gain = neigh_w[c] - scale * dv * comm_deg[c] - base
                if gain > b_gain:
                    b_gain = gain
                    b_v = v
                    b_c = c
            if comm_size[own] > 1:
                gain = -base
                if gain > b_gain:
                    b_gain = gain
                    b_v = v
                    b_c = -2
            for c in touched:
                neigh_w[c] = 0.0
            touched.clear()
        if b_v < 0:
            break
        src = memb[b_v]
        dst = empty.pop() if b_c == -2 else b_c
        dv = node_deg[b_v]
        comm_deg[src] -= dv
        comm_size[src] -= 1
        if comm_size[src] == 0:
            empty.append(src)
        comm_deg[dst] += dv
        comm_size[dst] += 1
        memb[b_v] = dst
        done[b_v] = True
        hist_v.append(b_v)
        hist_src.append(src)
        total += b_gain
        if total > best_total + tol:
            best_total = total
            best_len = len(hist_v)

    for i in range(len(hist_v) - 1, best_len - 1, -1):
        memb[hist_v[i]] = hist_src[i]
    return np.asarray(memb, dtype=np.int64), best_len > 0
