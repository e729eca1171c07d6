"""Numba kernels: coordinate-descent paths and regression-tree growth.

The lasso solver works on Gram-matrix quantities (Q = X'X/n, c = X'y/n)
so one coordinate update costs O(J) and a whole warm-started penalty
path is a few milliseconds at panel scale. The tree builder scans
presorted feature orders with per-node membership counts, so node cost
is O(n) per tried feature with no per-node sorting.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def cd_sweep(Q, g, beta, xi, w, idx, m):
    """One cyclic pass over idx[:m]; returns max |coefficient change|.

    g must hold c - Q @ beta on entry and is kept in sync. Coordinates
    with Q[j, j] == 0 (zero variance) are skipped. w[j] is the
    per-coordinate penalty factor (0 = unpenalized).
    """
    J = Q.shape[0]
    delta = 0.0
    for ii in range(m):
        j = idx[ii]
        qjj = Q[j, j]
        if qjj <= 0.0:
            continue
        z = g[j] + qjj * beta[j]
        wj = w[j] * xi
        if z > wj:
            bn = (z - wj) / qjj
        elif z < -wj:
            bn = (z + wj) / qjj
        else:
            bn = 0.0
        d = bn - beta[j]
        if d != 0.0:
            beta[j] = bn
            for k in range(J):
                g[k] -= Q[k, j] * d
            ad = abs(d)
            if ad > delta:
                delta = ad
    return delta


@njit(cache=True)
def cd_solve(Q, c, xi, w, beta, tol, max_sweeps):
    """Coordinate descent at one penalty from a warm start.

    Returns (sweeps_used, converged). beta is updated in place.
    """
    J = Q.shape[0]
    g = c - Q @ beta
    allidx = np.arange(J)
    active = np.empty(J, np.int64)
    total = 0
    while True:
        delta = cd_sweep(Q, g, beta, xi, w, allidx, J)
        total += 1
        if delta < tol:
            return total, True
        if total >= max_sweeps:
            return total, False
        m = 0
        for j in range(J):
            if beta[j] != 0.0:
                active[m] = j
                m += 1
        while total < max_sweeps:
            delta = cd_sweep(Q, g, beta, xi, w, active, m)
            total += 1
            if delta < tol:
                break


@njit(cache=True)
def cd_objective(Q, c, yss, beta, xi, w):
    """(1/2n) SSR + xi * sum_j w_j |beta_j|, from Gram quantities.

    This is the function the soft-threshold update with threshold
    xi * w_j minimizes exactly (the (1/n)-SSR form is the same problem
    at twice the penalty, a pure grid reparametrization).
    """
    J = Q.shape[0]
    quad = 0.0
    lin = 0.0
    pen = 0.0
    for j in range(J):
        bj = beta[j]
        if bj == 0.0:
            continue
        lin += c[j] * bj
        pen += w[j] * abs(bj)
        acc = 0.0
        for k in range(J):
            bk = beta[k]
            if bk != 0.0:
                acc += Q[j, k] * bk
        quad += bj * acc
    return 0.5 * (yss - 2.0 * lin + quad) + xi * pen


@njit(cache=True)
def cd_solve_traced(Q, c, yss, xi, w, beta, tol, max_sweeps, trace):
    """Full-sweep CD recording the objective after every sweep (tests)."""
    J = Q.shape[0]
    g = c - Q @ beta
    allidx = np.arange(J)
    used = 0
    for sweep in range(max_sweeps):
        delta = cd_sweep(Q, g, beta, xi, w, allidx, J)
        trace[sweep] = cd_objective(Q, c, yss, beta, xi, w)
        used = sweep + 1
        if delta < tol:
            break
    return used


@njit(cache=True)
def cd_path(Q, c, grid, w, pen_mask, tol, max_sweeps, nnz_stop):
    """Warm-started CD down a descending penalty grid.

    Each grid point alternates coordinate descent restricted to the
    working set (nonzero or unpenalized coordinates, as a gathered
    dense subproblem) with a full KKT pass that pulls in violating
    coordinates; the accepted solution therefore satisfies the same
    stopping rule as a full cyclic sweep. Stops early once the count
    of nonzero penalized coefficients exceeds nnz_stop on three
    consecutive grid points (nnz_stop <= 0 disables).
    Returns (betas, sweeps, converged, n_computed).
    """
    J = Q.shape[0]
    G = grid.shape[0]
    out = np.zeros((G, J))
    sweeps = np.zeros(G, np.int64)
    conv = np.ones(G, np.bool_)
    beta = np.zeros(J)
    in_set = np.zeros(J, np.bool_)
    order = np.empty(J, np.int64)
    over = 0
    npts = G
    for gi in range(G):
        xi = grid[gi]
        for j in range(J):
            in_set[j] = Q[j, j] > 0.0 and (w[j] == 0.0 or beta[j] != 0.0)
        total = 0
        ok = True
        while True:
            na = 0
            for j in range(J):
                if in_set[j]:
                    order[na] = j
                    na += 1
            if na > 0:
                Qa = np.empty((na, na))
                ca = np.empty(na)
                wa = np.empty(na)
                ba = np.empty(na)
                for ii in range(na):
                    j = order[ii]
                    ca[ii] = c[j]
                    wa[ii] = w[j] * xi
                    ba[ii] = beta[j]
                    for kk in range(na):
                        Qa[ii, kk] = Q[j, order[kk]]
                ga = ca - np.dot(Qa, ba)
                inner_ok = False
                while total < max_sweeps:
                    delta = 0.0
                    for ii in range(na):
                        qjj = Qa[ii, ii]
                        z = ga[ii] + qjj * ba[ii]
                        wj = wa[ii]
                        if z > wj:
                            bn = (z - wj) / qjj
                        elif z < -wj:
                            bn = (z + wj) / qjj
                        else:
                            bn = 0.0
                        d = bn - ba[ii]
                        if d != 0.0:
                            ba[ii] = bn
                            for kk in range(na):
                                ga[kk] -= Qa[kk, ii] * d
                            ad = abs(d)
                            if ad > delta:
                                delta = ad
                    total += 1
                    if delta < tol:
                        inner_ok = True
                        break
                for ii in range(na):
                    beta[order[ii]] = ba[ii]
                if not inner_ok:
                    ok = False
                    break
            else:
                total += 1
            # full KKT pass: gradient from the nonzero coordinates only
            nz = 0
            for j in range(J):
                if beta[j] != 0.0:
                    nz += 1
            if nz > 0:
                Qrows = np.empty((nz, J))
                bnz = np.empty(nz)
                pos = 0
                for j in range(J):
                    if beta[j] != 0.0:
                        bnz[pos] = beta[j]
                        for r in range(J):
                            Qrows[pos, r] = Q[j, r]
                        pos += 1
                gfull = c - np.dot(bnz, Qrows)
            else:
                gfull = c.copy()
            viol = False
            for j in range(J):
                if (not in_set[j]) and Q[j, j] > 0.0 and w[j] > 0.0:
                    if abs(gfull[j]) > w[j] * xi:
                        in_set[j] = True
                        viol = True
            if not viol:
                break
        sweeps[gi] = total
        conv[gi] = ok
        out[gi] = beta
        if nnz_stop > 0:
            nnz = 0
            for j in range(J):
                if pen_mask[j] and beta[j] != 0.0:
                    nnz += 1
            if nnz > nnz_stop:
                over += 1
                if over >= 3:
                    npts = gi + 1
                    break
            else:
                over = 0
    return out, sweeps, conv, npts


# ---------------------------------------------------------------------------
# Regression trees
# ---------------------------------------------------------------------------


@njit(cache=True)
def build_tree(Xt, y, sort_idx, boot, min_leaf, mtry, seed,
               feat, thr, left, right, value, count):
    """Grow one SSE-greedy tree; returns the number of nodes used.

    Xt is feature-major (J, n) over the ORIGINAL rows; sort_idx[f] is
    the argsort of feature f over those rows; boot holds the (possibly
    repeated) original row ids of the bootstrap sample. Per node, mtry
    features are drawn without replacement, thresholds are midpoints of
    consecutive distinct member values, and the split minimizing the
    children's total SSE wins. A node becomes a leaf when it has fewer
    than 2*min_leaf members, zero SSE, or no valid split among the
    drawn features.
    """
    np.random.seed(seed)
    J, n = Xt.shape
    nb = boot.shape[0]
    order = boot.copy()
    cmark = np.zeros(n, np.int64)
    rows_buf = np.empty(n, np.int64)
    srows = np.empty(n, np.int64)
    fv = np.empty(n, np.float64)
    cap = 2 * nb + 8
    stack_node = np.empty(cap, np.int64)
    stack_lo = np.empty(cap, np.int64)
    stack_hi = np.empty(cap, np.int64)
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = nb
    top = 1
    nxt = 1
    perm = np.empty(J, np.int64)
    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        m = hi - lo
        s = 0.0
        s2 = 0.0
        for i in range(lo, hi):
            v = y[order[i]]
            s += v
            s2 += v * v
        mu = s / m
        value[node] = mu
        count[node] = m
        feat[node] = -1
        left[node] = -1
        right[node] = -1
        thr[node] = 0.0
        if m < 2 * min_leaf:
            continue
        sse = s2 - s * s / m
        if sse <= 1e-12 * m:
            continue
        # distinct member rows (bootstrap multiplicity lives in cmark)
        g = 0
        for i in range(lo, hi):
            r = order[i]
            if cmark[r] == 0:
                rows_buf[g] = r
                g += 1
            cmark[r] += 1
        for j in range(J):
            perm[j] = j
        for k in range(mtry):
            r = k + np.random.randint(0, J - k)
            tmp = perm[k]
            perm[k] = perm[r]
            perm[r] = tmp
        # small nodes: insertion-sort the members in place; large nodes:
        # scan the presorted full-sample order
        use_sorted = g * g < 2 * n
        best_gain = 0.0
        best_f = -1
        best_t = 0.0
        for k in range(mtry):
            f = perm[k]
            sl = 0.0
            sl2 = 0.0
            nl = 0
            started = False
            prev = 0.0
            if use_sorted:
                for t in range(g):
                    v = Xt[f, rows_buf[t]]
                    rr = rows_buf[t]
                    q = t - 1
                    while q >= 0 and fv[q] > v:
                        fv[q + 1] = fv[q]
                        srows[q + 1] = srows[q]
                        q -= 1
                    fv[q + 1] = v
                    srows[q + 1] = rr
                for t in range(g):
                    r = srows[t]
                    cnt = cmark[r]
                    cur = fv[t]
                    if started and cur != prev:
                        nr = m - nl
                        if nl >= min_leaf and nr >= min_leaf:
                            sr = s - sl
                            sr2 = s2 - sl2
                            gain = sse - (sl2 - sl * sl / nl) - (sr2 - sr * sr / nr)
                            if gain > best_gain:
                                best_gain = gain
                                best_f = f
                                best_t = 0.5 * (prev + cur)
                        if nl >= m - min_leaf:
                            break
                    yv = y[r]
                    sl += cnt * yv
                    sl2 += cnt * yv * yv
                    nl += cnt
                    prev = cur
                    started = True
            else:
                for pos in range(n):
                    r = sort_idx[f, pos]
                    cnt = cmark[r]
                    if cnt == 0:
                        continue
                    cur = Xt[f, r]
                    if started and cur != prev:
                        nr = m - nl
                        if nl >= min_leaf and nr >= min_leaf:
                            sr = s - sl
                            sr2 = s2 - sl2
                            gain = sse - (sl2 - sl * sl / nl) - (sr2 - sr * sr / nr)
                            if gain > best_gain:
                                best_gain = gain
                                best_f = f
                                best_t = 0.5 * (prev + cur)
                        if nl >= m - min_leaf:
                            break
                    yv = y[r]
                    sl += cnt * yv
                    sl2 += cnt * yv * yv
                    nl += cnt
                    prev = cur
                    started = True
        for i in range(lo, hi):
            cmark[order[i]] = 0
        if best_f < 0:
            continue
        i = lo
        jp = hi - 1
        while i <= jp:
            if Xt[best_f, order[i]] <= best_t:
                i += 1
            else:
                tmp2 = order[i]
                order[i] = order[jp]
                order[jp] = tmp2
                jp -= 1
        feat[node] = best_f
        thr[node] = best_t
        left[node] = nxt
        right[node] = nxt + 1
        stack_node[top] = nxt
        stack_lo[top] = lo
        stack_hi[top] = i
        top += 1
        stack_node[top] = nxt + 1
        stack_lo[top] = i
        stack_hi[top] = hi
        top += 1
        nxt += 2
    return nxt


@njit(cache=True)
def tree_predict(feat, thr, left, right, value, X):
    """Evaluate one tree on rows of X (row-major, original feature order)."""
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feat[node] >= 0:
            if X[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out
