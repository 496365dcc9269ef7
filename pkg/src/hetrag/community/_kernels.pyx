# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Leiden kernels; mirrors ``_pykernels`` operation for operation."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64


def move_nodes(const i64[:] indptr, const i64[:] indices, const double[:] weights,
               const double[:] node_deg, membership, const i64[:] order,
               double resolution, double two_m):
    cdef Py_ssize_t n = node_deg.shape[0]
    cdef double scale = resolution / two_m
    out = np.array(membership, dtype=np.int64, copy=True)
    cdef i64[:] memb = out
    cdef double[:] comm_deg = np.zeros(n, dtype=np.float64)
    cdef i64[:] comm_size = np.zeros(n, dtype=np.int64)
    cdef i64[:] empty = np.empty(n, dtype=np.int64)
    cdef i64[:] queue = np.empty(n, dtype=np.int64)
    cdef cnp.uint8_t[:] in_queue = np.ones(n, dtype=np.uint8)
    cdef double[:] neigh_w = np.zeros(n, dtype=np.float64)
    cdef i64[:] touched = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t n_touched = 0, n_empty = 0, head = 0, count = n, tail = 0
    cdef Py_ssize_t v, u, p, c, i, own, best
    cdef double dv, gain, best_gain
    cdef bint moved = False

    for v in range(n):
        comm_deg[memb[v]] += node_deg[v]
        comm_size[memb[v]] += 1
    for c in range(n - 1, -1, -1):
        if comm_size[c] == 0:
            empty[n_empty] = c
            n_empty += 1
    for i in range(n):
        queue[i] = order[i]
    tail = 0  # ring buffer is full: next free slot wraps to index 0

    while count > 0:
        v = queue[head]
        head = (head + 1) % n
        count -= 1
        in_queue[v] = 0
        own = memb[v]
        dv = node_deg[v]
        for p in range(indptr[v], indptr[v + 1]):
            u = indices[p]
            if u == v:
                continue
            c = memb[u]
            if neigh_w[c] == 0.0:
                touched[n_touched] = c
                n_touched += 1
            neigh_w[c] += weights[p]

        comm_deg[own] -= dv
        comm_size[own] -= 1
        best = own
        best_gain = neigh_w[own] - scale * dv * comm_deg[own]
        for i in range(n_touched):
            c = touched[i]
            gain = neigh_w[c] - scale * dv * comm_deg[c]
            if gain > best_gain:
                best = c
                best_gain = gain
        if best_gain < 0.0 and comm_size[own] > 0:
            n_empty -= 1
            best = empty[n_empty]
            best_gain = 0.0

        comm_deg[best] += dv
        comm_size[best] += 1
        if best != own:
            moved = True
            memb[v] = best
            if comm_size[own] == 0:
                empty[n_empty] = own
                n_empty += 1
            for p in range(indptr[v], indptr[v + 1]):
                u = indices[p]
                if u != v and not in_queue[u] and memb[u] != best:
                    queue[tail] = u
                    tail = (tail + 1) % n
                    count += 1
                    in_queue[u] = 1
        for i in range(n_touched):
            neigh_w[touched[i]] = 0.0
        n_touched = 0

    return out, moved


def refine(const i64[:] indptr, const i64[:] indices, const double[:] weights,
           const double[:] node_deg, const i64[:] memb, const i64[:] order,
           double resolution, double two_m):
    cdef Py_ssize_t n = node_deg.shape[0]
    cdef double scale = resolution / two_m
    cdef double[:] s_deg = np.zeros(n, dtype=np.float64)
    cdef double[:] ext_v = np.zeros(n, dtype=np.float64)
    out = np.arange(n, dtype=np.int64)
    cdef i64[:] refined = out
    cdef double[:] r_deg = np.array(node_deg, dtype=np.float64, copy=True)
    cdef i64[:] r_size = np.ones(n, dtype=np.int64)
    cdef double[:] r_ext
    cdef double[:] neigh_w = np.zeros(n, dtype=np.float64)
    cdef i64[:] touched = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t n_touched = 0
    cdef Py_ssize_t v, u, p, c, i, k, s, own, best, mv
    cdef double dv, gain, best_gain

    for v in range(n):
        s_deg[memb[v]] += node_deg[v]
    for v in range(n):
        mv = memb[v]
        for p in range(indptr[v], indptr[v + 1]):
            u = indices[p]
            if u != v and memb[u] == mv:
                ext_v[v] += weights[p]
    r_ext = np.array(ext_v, dtype=np.float64, copy=True)

    for k in range(n):
        v = order[k]
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
                touched[n_touched] = c
                n_touched += 1
            neigh_w[c] += weights[p]

        best = own
        best_gain = 0.0
        for i in range(n_touched):
            c = touched[i]
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
        for i in range(n_touched):
            neigh_w[touched[i]] = 0.0
        n_touched = 0

    return out


def fine_tune(const i64[:] indptr, const i64[:] indices, const double[:] weights,
              const double[:] node_deg, membership, double resolution, double two_m):
    cdef Py_ssize_t n = node_deg.shape[0]
    cdef double scale = resolution / two_m
    cdef double tol = 1e-12 * two_m
    out = np.array(membership, dtype=np.int64, copy=True)
    cdef i64[:] memb = out
    cdef double[:] comm_deg = np.zeros(n, dtype=np.float64)
    cdef i64[:] comm_size = np.zeros(n, dtype=np.int64)
    cdef i64[:] empty = np.empty(n, dtype=np.int64)
    cdef cnp.uint8_t[:] done = np.zeros(n, dtype=np.uint8)
    cdef double[:] neigh_w = np.zeros(n, dtype=np.float64)
    cdef i64[:] touched = np.empty(n, dtype=np.int64)
    cdef i64[:] hist_v = np.empty(n, dtype=np.int64)
    cdef i64[:] hist_src = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t n_touched = 0, n_empty = 0, n_hist = 0, best_len = 0
    cdef Py_ssize_t step, v, u, p, c, i, own, b_v, b_c, src, dst
    cdef double dv, base, gain, b_gain, total = 0.0, best_total = 0.0

    for v in range(n):
        comm_deg[memb[v]] += node_deg[v]
        comm_size[memb[v]] += 1
    for c in range(n - 1, -1, -1):
        if comm_size[c] == 0:
            empty[n_empty] = c
            n_empty += 1

    for step in range(n):
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
                    touched[n_touched] = c
                    n_touched += 1
                neigh_w[c] += weights[p]
            base = neigh_w[own] - scale * dv * (comm_deg[own] - dv)
            for i in range(n_touched):
                c = touched[i]
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
            for i in range(n_touched):
                neigh_w[touched[i]] = 0.0
            n_touched = 0
        if b_v < 0:
            break
        src = memb[b_v]
        if b_c == -2:
            n_empty -= 1
            dst = empty[n_empty]
        else:
            dst = b_c
        dv = node_deg[b_v]
        comm_deg[src] -= dv
        comm_size[src] -= 1
        if comm_size[src] == 0:
            empty[n_empty] = src
            n_empty += 1
        comm_deg[dst] += dv
        comm_size[dst] += 1
        memb[b_v] = dst
        done[b_v] = 1
        hist_v[n_hist] = b_v
        hist_src[n_hist] = src
        n_hist += 1
        total += b_gain
        if total > best_total + tol:
            best_total = total
            best_len = n_hist

    for i in range(n_hist - 1, best_len - 1, -1):
        memb[hist_v[i]] = hist_src[i]
    return out, best_len > 0
