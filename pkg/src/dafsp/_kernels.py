"""Compiled inner loops for evaluation and the constructive heuristics.

Everything here is 0-based and works on a *sequence* ``seq`` that may hold
only a subset of the jobs (partial permutations during insertion).  Products
are restricted to the jobs present in ``seq``.

The buffer state used by :func:`amend` is the counter abstraction of a settled
APP marking: free slots, jobs of each product already buffered, and which
products are assembled.  :mod:`dafsp.petri` holds the place-level version.
"""

from __future__ import annotations

import numpy as np
from numba import njit

INFEASIBLE = -1


@njit(cache=True)
def present_sizes(seq, product_of, l):
    sizes = np.zeros(l, dtype=np.int64)
    for j in seq:
        sizes[product_of[j]] += 1
    return sizes


@njit(cache=True)
def _safe(free, waiting, done, sizes):
    # greedy virtual assembly, lowest product first
    l = sizes.shape[0]
    left = 0
    for q in range(l):
        if not done[q] and sizes[q] > 0:
            left += 1
    taken = np.zeros(l, dtype=np.bool_)
    while left > 0:
        pick = -1
        for q in range(l):
            if not done[q] and not taken[q] and sizes[q] > 0 and free >= sizes[q] - waiting[q]:
                pick = q
                break
        if pick < 0:
            return False
        taken[pick] = True
        free += waiting[pick]
        left -= 1
    return True


@njit(cache=True)
def amend(seq, product_of, sizes, psi, out):
    """Deadlock-amend ``seq`` into ``out``; returns the number of deferrals or -1."""
    n = seq.shape[0]
    l = sizes.shape[0]
    for k in range(n):
        out[k] = seq[k]
    waiting = np.zeros(l, dtype=np.int64)
    done = np.zeros(l, dtype=np.bool_)
    free = psi
    moves = 0
    for r in range(n):
        found = False
        for _ in range(n - r):
            j = out[r]
            q = product_of[j]
            if free > 0:
                # tentative firing followed by immediate assembly
                nfree = free - 1
                waiting[q] += 1
                fin = waiting[q] == sizes[q]
                if fin:
                    nfree += sizes[q]
                    done[q] = True
                    waiting[q] = 0
                if _safe(nfree, waiting, done, sizes):
                    free = nfree
                    found = True
                    break
                if fin:
                    done[q] = False
                    waiting[q] = sizes[q]
                waiting[q] -= 1
            moves += 1
            for k in range(r, n - 1):
                out[k] = out[k + 1]
            out[n - 1] = j
        if not found:
            return INFEASIBLE
    return moves


@njit(cache=True)
def backward(seq, mu, proc, S, C, succ):
    """Backward latest-time schedule of ``seq`` into rows of ``S``/``C``.

    The last job's completion on the last machine anchors the recursion; all
    times are then shifted so the earliest start is zero.  ``succ[j]`` receives
    the factory successor of job ``j`` (or -1).  Returns ``(cm_max, shift)``.
    """
    n = seq.shape[0]
    m = proc.shape[1]
    last = m - 1
    nf = 0
    for h in range(n):
        if mu[seq[h]] + 1 > nf:
            nf = mu[seq[h]] + 1
    nxt_in = np.full(nf, -1, dtype=np.int64)
    for h in range(n - 1, -1, -1):
        j = seq[h]
        c = mu[j]
        fs = nxt_in[c]
        succ[j] = fs
        if h == n - 1:
            cval = 0
        else:
            k2 = seq[h + 1]
            if mu[k2] == c:
                cval = S[k2, last]
            else:
                cval = C[k2, last] - 1
                if fs >= 0 and S[fs, last] < cval:
                    cval = S[fs, last]
        C[j, last] = cval
        S[j, last] = cval - proc[j, last]
        nxt_in[c] = j
    for k in range(last - 1, -1, -1):
        for h in range(n - 1, -1, -1):
            j = seq[h]
            cval = S[j, k + 1]
            fs = succ[j]
            if fs >= 0 and S[fs, k] < cval:
                cval = S[fs, k]
            C[j, k] = cval
            S[j, k] = cval - proc[j, k]
    lo = S[seq[0], 0]
    for h in range(n):
        if S[seq[h], 0] < lo:
            lo = S[seq[h], 0]
    for h in range(n):
        j = seq[h]
        for k in range(m):
            S[j, k] -= lo
            C[j, k] -= lo
    return C[seq[n - 1], last], -lo


@njit(cache=True)
def cm_only(seq, mu, proc):
    u, m = proc.shape
    S = np.zeros((u, m), dtype=np.int64)
    C = np.zeros((u, m), dtype=np.int64)
    succ = np.full(u, -1, dtype=np.int64)
    cm, _ = backward(seq, mu, proc, S, C, succ)
    return cm


@njit(cache=True)
def assembly(seq, C, asm, product_of, sigma, SA, CA):
    """Serial assembly in order of each product's last job; returns ``(ca_max, n_products)``."""
    l = asm.shape[0]
    last = C.shape[1] - 1
    n = seq.shape[0]
    ready = np.full(l, -1, dtype=np.int64)
    lastpos = np.full(l, -1, dtype=np.int64)
    for h in range(n):
        j = seq[h]
        q = product_of[j]
        lastpos[q] = h
        if C[j, last] > ready[q]:
            ready[q] = C[j, last]
    # products sorted by last position; positions are distinct
    order = np.argsort(lastpos)
    cnt = 0
    for idx in range(l):
        q = order[idx]
        if lastpos[q] >= 0:
            sigma[cnt] = q
            cnt += 1
    t = 0
    for idx in range(cnt):
        q = sigma[idx]
        start = ready[q]
        if idx > 0 and t > start:
            start = t
        SA[q] = start
        CA[q] = start + asm[q]
        t = CA[q]
    return t, cnt


@njit(cache=True)
def evaluate_full(seq, mu, proc, asm, product_of, psi):
    """IDAM, backward schedule and assembly pass for a (possibly partial) sequence."""
    u, m = proc.shape
    l = asm.shape[0]
    sizes = present_sizes(seq, product_of, l)
    lam = np.empty(seq.shape[0], dtype=np.int64)
    moves = amend(seq, product_of, sizes, psi, lam)
    S = np.zeros((u, m), dtype=np.int64)
    C = np.zeros((u, m), dtype=np.int64)
    SA = np.zeros(l, dtype=np.int64)
    CA = np.zeros(l, dtype=np.int64)
    sigma = np.full(l, -1, dtype=np.int64)
    if moves < 0:
        return lam, S, C, SA, CA, sigma, -1, -1, 0, moves
    succ = np.full(u, -1, dtype=np.int64)
    cm, shift = backward(lam, mu, proc, S, C, succ)
    ca, _ = assembly(lam, C, asm, product_of, sigma, SA, CA)
    return lam, S, C, SA, CA, sigma, cm, ca, shift, moves


@njit(cache=True)
def ca_of(seq, mu, proc, asm, product_of, psi):
    """System makespan after amendment; -1 if no deadlock-free order exists."""
    out = evaluate_full(seq, mu, proc, asm, product_of, psi)
    return out[7]


@njit(cache=True)
def best_insert_ca(base, job, mu, proc, asm, product_of, psi):
    """Leftmost insertion position of ``job`` in ``base`` minimising the system makespan."""
    n = base.shape[0]
    cand = np.empty(n + 1, dtype=np.int64)
    best_pos = 0
    best = -1
    for pos in range(n + 1):
        for k in range(pos):
            cand[k] = base[k]
        cand[pos] = job
        for k in range(pos, n):
            cand[k + 1] = base[k]
        v = ca_of(cand, mu, proc, asm, product_of, psi)
        if v >= 0 and (best < 0 or v < best):
            best = v
            best_pos = pos
    return best_pos, best


@njit(cache=True)
def insert_at(base, job, pos):
    n = base.shape[0]
    out = np.empty(n + 1, dtype=np.int64)
    for k in range(pos):
        out[k] = base[k]
    out[pos] = job
    for k in range(pos, n):
        out[k + 1] = base[k]
    return out


@njit(cache=True)
def h1_assign(lam, proc, f):
    """Greedy factory assignment along ``lam`` by partial manufacturing makespan."""
    u, m = proc.shape
    n = lam.shape[0]
    mu = np.zeros(u, dtype=np.int64)
    S = np.zeros((u, m), dtype=np.int64)
    C = np.zeros((u, m), dtype=np.int64)
    succ = np.full(u, -1, dtype=np.int64)
    for h in range(n):
        j = lam[h]
        prefix = lam[: h + 1]
        best_c = 0
        best = -1
        for c in range(f):
            mu[j] = c
            cm, _ = backward(prefix, mu, proc, S, C, succ)
            if best < 0 or cm < best:
                best = cm
                best_c = c
        mu[j] = best_c
    return mu


@njit(cache=True)
def h2_insert(order, mu, proc):
    """Insert jobs of ``order`` one at a time at the leftmost position of least manufacturing makespan."""
    u, m = proc.shape
    n = order.shape[0]
    S = np.zeros((u, m), dtype=np.int64)
    C = np.zeros((u, m), dtype=np.int64)
    succ = np.full(u, -1, dtype=np.int64)
    seq = np.empty(n, dtype=np.int64)
    cand = np.empty(n, dtype=np.int64)
    size = 0
    for idx in range(n):
        job = order[idx]
        best = -1
        best_pos = 0
        for pos in range(size + 1):
            for k in range(pos):
                cand[k] = seq[k]
            cand[pos] = job
            for k in range(pos, size):
                cand[k + 1] = seq[k]
            cm, _ = backward(cand[: size + 1], mu, proc, S, C, succ)
            if best < 0 or cm < best:
                best = cm
                best_pos = pos
        for k in range(size, best_pos, -1):
            seq[k] = seq[k - 1]
        seq[best_pos] = job
        size += 1
    return seq
