"""Numba kernels for graph traversal and neighbor selection.

All heaps order entries by the (distance, id) pair, so ties in distance
resolve by ascending id everywhere. Distances accumulate in float64 even
though vectors are stored as float32.
"""

from __future__ import annotations

import numpy as np
from numba import njit

INT = np.int64
FLT = np.float64


@njit(cache=True, inline="always")
def _lt(d1, i1, d2, i2):
    return d1 < d2 or (d1 == d2 and i1 < i2)


@njit(cache=True, inline="always")
def _point_dist(vectors, i, q):
    acc = 0.0
    row = vectors[i]
    for j in range(q.shape[0]):
        t = np.float64(row[j]) - q[j]
        acc += t * t
    return np.sqrt(acc)


@njit(cache=True, inline="always")
def _pair_dist(vectors, a, b):
    acc = 0.0
    ra = vectors[a]
    rb = vectors[b]
    for j in range(ra.shape[0]):
        t = np.float64(ra[j]) - np.float64(rb[j])
        acc += t * t
    return np.sqrt(acc)


@njit(cache=True)
def dists_to_point(vectors, ids, target):
    """Distances from vectors[target] to each row in ids."""
    out = np.empty(ids.shape[0], FLT)
    for t in range(ids.shape[0]):
        out[t] = _pair_dist(vectors, ids[t], target)
    return out


# -- binary heaps on parallel (dist, id) arrays ---------------------------

@njit(cache=True)
def _minh_push(hd, hi, n, d, i):
    hd[n] = d
    hi[n] = i
    c = n
    while c > 0:
        p = (c - 1) >> 1
        if _lt(hd[c], hi[c], hd[p], hi[p]):
            hd[c], hd[p] = hd[p], hd[c]
            hi[c], hi[p] = hi[p], hi[c]
            c = p
        else:
            break
    return n + 1


@njit(cache=True)
def _minh_pop(hd, hi, n):
    d = hd[0]
    i = hi[0]
    n -= 1
    hd[0] = hd[n]
    hi[0] = hi[n]
    c = 0
    while True:
        l = 2 * c + 1
        m = c
        if l < n and _lt(hd[l], hi[l], hd[m], hi[m]):
            m = l
        r = l + 1
        if r < n and _lt(hd[r], hi[r], hd[m], hi[m]):
            m = r
        if m == c:
            break
        hd[c], hd[m] = hd[m], hd[c]
        hi[c], hi[m] = hi[m], hi[c]
        c = m
    return d, i, n


@njit(cache=True)
def _maxh_push(hd, hi, n, d, i):
    hd[n] = d
    hi[n] = i
    c = n
    while c > 0:
        p = (c - 1) >> 1
        if _lt(hd[p], hi[p], hd[c], hi[c]):
            hd[c], hd[p] = hd[p], hd[c]
            hi[c], hi[p] = hi[p], hi[c]
            c = p
        else:
            break
    return n + 1


@njit(cache=True)
def _maxh_pop(hd, hi, n):
    d = hd[0]
    i = hi[0]
    n -= 1
    hd[0] = hd[n]
    hi[0] = hi[n]
    c = 0
    while True:
        l = 2 * c + 1
        m = c
        if l < n and _lt(hd[m], hi[m], hd[l], hi[l]):
            m = l
        r = l + 1
        if r < n and _lt(hd[m], hi[m], hd[r], hi[r]):
            m = r
        if m == c:
            break
        hd[c], hd[m] = hd[m], hd[c]
        hi[c], hi[m] = hi[m], hi[c]
        c = m
    return d, i, n


# -- beam search over a dense adjacency layer ------------------------------

@njit(cache=True)
def beam_dense(vectors, adj, deg, q, eps, ef,
               expand_mask, result_mask, two_hop_m,
               visited, stamp):
    """Best-first beam search on one graph layer.

    adj is int32 (n, cap), deg int32 (n,). eps are entry node ids.
    expand_mask / result_mask are uint8 arrays of length n, or length 0 to
    disable the constraint. With expand_mask set, only mask-positive nodes
    are traversed; if fewer than two_hop_m mask-positive one-hop neighbors
    exist, mask-positive two-hop neighbors are supplemented (pass 0 to
    disable). With result_mask set, only mask-positive nodes can enter the
    result heap, but traversal is unrestricted.

    visited is an int64 scratch array of length n; stamp must be unique
    per call. Returns (ids, dists) ascending by (dist, id).
    """
    n = deg.shape[0]
    use_e = expand_mask.shape[0] == n
    use_r = result_mask.shape[0] == n
    cd = np.empty(n + 2, FLT)
    ci = np.empty(n + 2, INT)
    cn = 0
    rd = np.empty(ef + 2, FLT)
    ri = np.empty(ef + 2, INT)
    rn = 0

    for t in range(eps.shape[0]):
        e = eps[t]
        if e < 0 or visited[e] == stamp:
            continue
        visited[e] = stamp
        de = _point_dist(vectors, e, q)
        cn = _minh_push(cd, ci, cn, de, e)
        if (not use_r) or result_mask[e] == 1:
            rn = _maxh_push(rd, ri, rn, de, e)
            if rn > ef:
                _, _, rn = _maxh_pop(rd, ri, rn)

    while cn > 0:
        d, u, cn = _minh_pop(cd, ci, cn)
        if rn >= ef and _lt(rd[0], ri[0], d, u):
            break
        du = deg[u]
        match_count = 0
        for s in range(du):
            v = INT(adj[u, s])
            if use_e:
                if expand_mask[v] == 1:
                    match_count += 1
                else:
                    continue
            if visited[v] == stamp:
                continue
            visited[v] = stamp
            dv = _point_dist(vectors, v, q)
            if rn < ef or _lt(dv, v, rd[0], ri[0]):
                cn = _minh_push(cd, ci, cn, dv, v)
                if (not use_r) or result_mask[v] == 1:
                    rn = _maxh_push(rd, ri, rn, dv, v)
                    if rn > ef:
                        _, _, rn = _maxh_pop(rd, ri, rn)
        # supplement two-hop neighbors only when the mask actually thinned
        # the list below the target degree
        if use_e and two_hop_m > 0 and match_count < two_hop_m and match_count < du:
            for s in range(du):
                v = INT(adj[u, s])
                for s2 in range(deg[v]):
                    w = INT(adj[v, s2])
                    if expand_mask[w] == 0 or visited[w] == stamp:
                        continue
                    visited[w] = stamp
                    dw = _point_dist(vectors, w, q)
                    if rn < ef or _lt(dw, w, rd[0], ri[0]):
                        cn = _minh_push(cd, ci, cn, dw, w)
                        rn = _maxh_push(rd, ri, rn, dw, w)
                        if rn > ef:
                            _, _, rn = _maxh_pop(rd, ri, rn)

    out_i = np.empty(rn, INT)
    out_d = np.empty(rn, FLT)
    m = rn
    while m > 0:
        d, i, m = _maxh_pop(rd, ri, m)
        out_d[m] = d
        out_i[m] = i
    return out_i, out_d


# -- beam search over an edge archive with validity intervals --------------

@njit(cache=True)
def beam_csr(vectors, indptr, nbr, birth, death, q, eps, ef, bound,
             visited, stamp):
    """Like beam_dense, but edges live in a CSR archive and an edge is
    traversable only if birth <= bound < death."""
    n = indptr.shape[0] - 1
    cd = np.empty(n + 2, FLT)
    ci = np.empty(n + 2, INT)
    cn = 0
    rd = np.empty(ef + 2, FLT)
    ri = np.empty(ef + 2, INT)
    rn = 0

    for t in range(eps.shape[0]):
        e = eps[t]
        if e < 0 or visited[e] == stamp:
            continue
        visited[e] = stamp
        de = _point_dist(vectors, e, q)
        cn = _minh_push(cd, ci, cn, de, e)
        rn = _maxh_push(rd, ri, rn, de, e)
        if rn > ef:
            _, _, rn = _maxh_pop(rd, ri, rn)

    while cn > 0:
        d, u, cn = _minh_pop(cd, ci, cn)
        if rn >= ef and _lt(rd[0], ri[0], d, u):
            break
        for s in range(indptr[u], indptr[u + 1]):
            if birth[s] > bound or death[s] <= bound:
                continue
            v = INT(nbr[s])
            if visited[v] == stamp:
                continue
            visited[v] = stamp
            dv = _point_dist(vectors, v, q)
            if rn < ef or _lt(dv, v, rd[0], ri[0]):
                cn = _minh_push(cd, ci, cn, dv, v)
                rn = _maxh_push(rd, ri, rn, dv, v)
                if rn > ef:
                    _, _, rn = _maxh_pop(rd, ri, rn)

    out_i = np.empty(rn, INT)
    out_d = np.empty(rn, FLT)
    m = rn
    while m > 0:
        d, i, m = _maxh_pop(rd, ri, m)
        out_d[m] = d
        out_i[m] = i
    return out_i, out_d


@njit(cache=True)
def select_neighbors(vectors, cand_ids, cand_d, cap, fill_pruned, alpha):
    """Diversity-preferring neighbor selection.

    Candidates must arrive sorted ascending by (dist, id) relative to the
    base point. A candidate is kept only while alpha times its distance to
    every already-kept neighbor exceeds its distance to the base (alpha=1
    is the classic occlusion rule; larger alpha keeps denser lists). With
    fill_pruned, rejected candidates backfill remaining capacity
    nearest-first.
    """
    m = cand_ids.shape[0]
    kept = np.empty(cap, INT)
    nk = 0
    disc = np.empty(m, INT)
    nd = 0
    for t in range(m):
        if nk >= cap:
            break
        c = cand_ids[t]
        dc = cand_d[t]
        ok = True
        for r in range(nk):
            if alpha * _pair_dist(vectors, c, kept[r]) <= dc:
                ok = False
                break
        if ok:
            kept[nk] = c
            nk += 1
        else:
            disc[nd] = c
            nd += 1
    if fill_pruned:
        t = 0
        while nk < cap and t < nd:
            kept[nk] = disc[t]
            nk += 1
            t += 1
    return kept[:nk].copy()
