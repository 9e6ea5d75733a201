"""Pure-Python hot loops.

``_ckernels.pyx`` implements the same three functions with the same
floating-point operation order, so both backends return bit-identical
results.  Keep the two files in step when changing either.
"""
import math

import numpy as np

# ties within this relative gap are broken by the configuration key
TIE_RTOL = 1e-12


def _popcount(x):
    return bin(x).count("1")


def _key_less(a, b):
    """True if view-set ``a`` sorts before ``b``: fewer views first, then lexicographic."""
    ca, cb = _popcount(a), _popcount(b)
    if ca != cb:
        return ca < cb
    d = a ^ b
    if d == 0:
        return False
    low = d & -d
    return (a & low) != 0


def _size(mask, sizes):
    s = 0
    k = 0
    while mask:
        if mask & 1:
            s += sizes[k]
        mask >>= 1
        k += 1
    return s


def _bb(sizes, budget, masks, values, fixed):
    n_items = len(masks)
    cap = budget - _size(fixed, sizes)
    if cap < 0:
        return fixed, 0.0
    rest = []
    val = []
    rsize = []
    for j in range(n_items):
        if values[j] <= 0.0:
            continue
        r = masks[j] & ~fixed
        rs = _size(r, sizes)
        if rs > cap:
            continue
        rest.append(r)
        val.append(values[j])
        rsize.append(rs)
    m = len(rest)
    relevant = 0
    for j in range(m):
        relevant |= rest[j]
    n_views = len(sizes)
    cand = []
    ratio = [0.0] * n_views
    for v in range(n_views):
        if relevant >> v & 1:
            tot = 0.0
            bit = 1 << v
            for j in range(m):
                if rest[j] & bit:
                    tot += val[j]
            ratio[v] = tot / sizes[v]
            cand.append(v)
    # insertion sort: descending ratio, ascending index on ties
    order = []
    for v in cand:
        pos = len(order)
        while pos > 0:
            u = order[pos - 1]
            if ratio[v] > ratio[u]:
                pos -= 1
            else:
                break
        order.insert(pos, v)
    n_rel = len(order)

    base = 0.0
    for j in range(m):
        if rest[j] == 0:
            base += val[j]
    best = [base, 0]

    def covered_value(inc):
        s = 0.0
        for j in range(m):
            if rest[j] & inc == rest[j]:
                s += val[j]
        return s

    def frac_bound(k, inc, room, exc):
        # covered value plus a fractional knapsack over undecided views, each
        # credited with every still-coverable item it would help complete
        cov = 0.0
        vval = [0.0] * n_views
        for j in range(m):
            r = rest[j]
            if r & inc == r:
                cov += val[j]
                continue
            if r & exc:
                continue
            if rsize[j] - _size(r & inc, sizes) > room:
                continue
            miss = r & ~inc
            for q in range(k, n_rel):
                v = order[q]
                if miss >> v & 1:
                    vval[v] += val[j]
        seq = []
        for q in range(k, n_rel):
            v = order[q]
            if vval[v] > 0.0:
                rv = vval[v] / sizes[v]
                pos = len(seq)
                while pos > 0:
                    u = seq[pos - 1]
                    if rv > vval[u] / sizes[u]:
                        pos -= 1
                    else:
                        break
                seq.insert(pos, v)
        left = room
        extra = 0.0
        for v in seq:
            if sizes[v] <= left:
                extra += vval[v]
                left -= sizes[v]
            else:
                extra += vval[v] * left / sizes[v]
                break
        return cov + extra

    def dfs(k, inc, used, exc):
        room = cap - used
        bound = 0.0
        for j in range(m):
            r = rest[j]
            if r & exc:
                continue
            if rsize[j] - _size(r & inc, sizes) <= room:
                bound += val[j]
        best_val = best[0]
        tol = TIE_RTOL * max(1.0, abs(best_val))
        if bound < best_val - tol:
            return
        if k < n_rel and frac_bound(k, inc, room, exc) < best_val - tol:
            return
        if k == n_rel:
            cur = covered_value(inc)
            if cur > best_val + tol or (cur >= best_val - tol and _key_less(inc, best[1])):
                best[0] = cur
                best[1] = inc
            return
        v = order[k]
        bit = 1 << v
        if sizes[v] <= room:
            useful = False
            for j in range(m):
                r = rest[j]
                if r & bit and not (r & exc) and (r & inc) != r:
                    if rsize[j] - _size(r & inc, sizes) <= room:
                        useful = True
                        break
            if useful:
                dfs(k + 1, inc | bit, used + sizes[v], exc)
        dfs(k + 1, inc, used, exc | bit)

    dfs(0, 0, 0, 0)
    return best[1] | fixed, best[0]


def bb_welfare(sizes, budget, masks, values, fixed=0):
    """Exact max over feasible view sets of the summed value of fully covered items.

    ``masks[j]`` is the view set item ``j`` needs and ``values[j]`` its value.
    Views in ``fixed`` are always cached and count against ``budget``.
    Returns ``(mask, value)``.
    """
    sizes = [int(s) for s in sizes]
    masks = [int(m) for m in masks]
    values = [float(v) for v in values]
    return _bb(sizes, int(budget), masks, values, int(fixed))


def _item_values(coef, w, n_items, n):
    vals = [0.0] * n_items
    for j in range(n_items):
        row = coef[j]
        s = 0.0
        for i in range(n):
            s += row[i] * w[i]
        vals[j] = s
    return vals


def _tenant_values(coef, masks, chosen, n_items, n):
    out = [0.0] * n
    for j in range(n_items):
        if masks[j] & chosen == masks[j]:
            row = coef[j]
            for i in range(n):
                out[i] += row[i]
    return out


def mmf_mw(sizes, budget, masks, coef, eps, iterations, trace=None):
    """Multiplicative-weights loop for max-min scaled utility.

    ``coef`` holds per-item scaled rates (items x tenants).  Returns the array
    of configuration masks chosen in each round.
    """
    sizes = [int(s) for s in sizes]
    masks = [int(m) for m in masks]
    coef = [[float(c) for c in row] for row in np.asarray(coef)]
    n_items = len(masks)
    n = len(coef[0]) if n_items else 0
    budget = int(budget)
    w = [1.0 / n] * n
    chosen = np.zeros(iterations, dtype=np.uint64)
    for t in range(iterations):
        vals = _item_values(coef, w, n_items, n)
        s_mask, _ = _bb(sizes, budget, masks, vals, 0)
        chosen[t] = s_mask
        if trace is not None:
            trace.append((t, list(w), s_mask))
        rates = _tenant_values(coef, masks, s_mask, n_items, n)
        tot = 0.0
        for i in range(n):
            w[i] = w[i] * math.exp(-eps * rates[i])
            tot += w[i]
        for i in range(n):
            w[i] = w[i] / tot
    return chosen


def gamma_at(L, w, lam, floors):
    n = len(w)
    g = [0.0] * n
    for i in range(n):
        if w[i] <= 0.0:
            g[i] = 1.0
        else:
            v = L * lam[i] / w[i]
            if v > 1.0:
                v = 1.0
            if v < floors[i]:
                v = floors[i]
            g[i] = v
    return g


def _logsum(g, lam):
    s = 0.0
    for i in range(len(g)):
        s += lam[i] * math.log(g[i])
    return s


def gamma_solve(w, Q, lam, floors, tol=1e-9, max_iter=200):
    """min sum w_i g_i  s.t.  sum lam_i log g_i >= Q,  g_i in [floor_i, 1].

    Bisection over the multiplier L of the log constraint; the returned
    vector always satisfies the constraint.
    """
    w = [float(x) for x in w]
    lam = [float(x) for x in lam]
    floors = [float(x) for x in floors]
    g = gamma_at(0.0, w, lam, floors)
    if _logsum(g, lam) >= Q:
        return g
    hi = 0.0
    for i in range(len(w)):
        r = w[i] / lam[i]
        if r > hi:
            hi = r
    lo = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f = _logsum(gamma_at(mid, w, lam, floors), lam)
        if f >= Q:
            hi = mid
            if f - Q <= tol:
                break
        else:
            lo = mid
    return gamma_at(hi, w, lam, floors)


def pffeas_ahk(sizes, budget, masks, coef, lam, floors, Q, delta, rho, iterations):
    """AHK feasibility run for the proportional-fairness level set at ``Q``.

    Returns ``(feasible, rounds, chosen_masks, gamma_sum)``; when infeasibility
    is declared ``rounds`` is the round in which it happened.
    """
    sizes = [int(s) for s in sizes]
    masks = [int(m) for m in masks]
    coef = [[float(c) for c in row] for row in np.asarray(coef)]
    lam = [float(x) for x in lam]
    floors = [float(x) for x in floors]
    n_items = len(masks)
    n = len(lam)
    budget = int(budget)
    y = [1.0 / n] * n
    chosen = np.zeros(iterations, dtype=np.uint64)
    gsum = np.zeros(n)
    gacc = [0.0] * n
    up = 1.0 - delta
    down = 1.0 + delta
    for t in range(iterations):
        vals = _item_values(coef, y, n_items, n)
        s_mask, wval = _bb(sizes, budget, masks, vals, 0)
        g = gamma_solve(y, Q, lam, floors)
        cost = 0.0
        for i in range(n):
            cost += y[i] * g[i]
        if wval - cost < -1e-12:
            return False, t, chosen[:t], gsum
        rates = _tenant_values(coef, masks, s_mask, n_items, n)
        chosen[t] = s_mask
        tot = 0.0
        for i in range(n):
            slack = rates[i] - g[i]
            if slack > rho + 1e-9 or slack < -rho - 1e-9:
                raise ValueError(f"slack {slack} exceeds width {rho}")
            if slack >= 0.0:
                y[i] = y[i] * up ** (slack / rho)
            else:
                y[i] = y[i] * down ** (-slack / rho)
            tot += y[i]
            gacc[i] += g[i]
        for i in range(n):
            y[i] = y[i] / tot
    for i in range(n):
        gsum[i] = gacc[i]
    return True, iterations, chosen, gsum
