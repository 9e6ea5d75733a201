# cython: language_level=3
"""Compiled versions of the hot loops in ``_pykernels``.

Same algorithms, same floating-point operation order: results must match
the Python backend bit for bit.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, pow
from libc.stdlib cimport malloc, free
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef double TIE_RTOL = 1e-12

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


cdef inline int _popcount(uint64_t x) noexcept nogil:
    return __builtin_popcountll(x)


cdef inline bint _key_less(uint64_t a, uint64_t b) noexcept nogil:
    cdef int ca = _popcount(a)
    cdef int cb = _popcount(b)
    cdef uint64_t d, low
    if ca != cb:
        return ca < cb
    d = a ^ b
    if d == 0:
        return False
    low = d & (~d + 1)
    return (a & low) != 0


cdef inline int64_t _size(uint64_t mask, const int64_t* sizes) noexcept nogil:
    cdef int64_t s = 0
    cdef int k = 0
    while mask:
        if mask & 1:
            s += sizes[k]
        mask >>= 1
        k += 1
    return s


cdef struct BB:
    const int64_t* sizes
    int m
    uint64_t* rest
    double* val
    int64_t* rsize
    int* order
    double* vval
    int* seq
    int n_rel
    int64_t cap
    double best_val
    uint64_t best_mask


cdef double _covered_value(BB* s, uint64_t inc) noexcept nogil:
    cdef double tot = 0.0
    cdef int j
    for j in range(s.m):
        if (s.rest[j] & inc) == s.rest[j]:
            tot += s.val[j]
    return tot


cdef double _frac_bound(BB* s, int k, uint64_t inc, int64_t room, uint64_t exc) noexcept nogil:
    cdef double cov = 0.0
    cdef double extra = 0.0
    cdef double rv
    cdef int j, q, v, u, pos, nseq
    cdef uint64_t r, miss
    cdef int64_t left
    for q in range(k, s.n_rel):
        s.vval[s.order[q]] = 0.0
    for j in range(s.m):
        r = s.rest[j]
        if (r & inc) == r:
            cov += s.val[j]
            continue
        if r & exc:
            continue
        if s.rsize[j] - _size(r & inc, s.sizes) > room:
            continue
        miss = r & ~inc
        for q in range(k, s.n_rel):
            v = s.order[q]
            if (miss >> v) & 1:
                s.vval[v] += s.val[j]
    nseq = 0
    for q in range(k, s.n_rel):
        v = s.order[q]
        if s.vval[v] > 0.0:
            rv = s.vval[v] / s.sizes[v]
            pos = nseq
            while pos > 0:
                u = s.seq[pos - 1]
                if rv > s.vval[u] / s.sizes[u]:
                    s.seq[pos] = u
                    pos -= 1
                else:
                    break
            s.seq[pos] = v
            nseq += 1
    left = room
    for q in range(nseq):
        v = s.seq[q]
        if s.sizes[v] <= left:
            extra += s.vval[v]
            left -= s.sizes[v]
        else:
            extra += s.vval[v] * left / s.sizes[v]
            break
    return cov + extra


cdef void _dfs(BB* s, int k, uint64_t inc, int64_t used, uint64_t exc) noexcept nogil:
    cdef int64_t room = s.cap - used
    cdef double bound = 0.0
    cdef int j, v
    cdef uint64_t r, bit
    cdef double best_val, tol, cur
    cdef bint useful
    for j in range(s.m):
        r = s.rest[j]
        if r & exc:
            continue
        if s.rsize[j] - _size(r & inc, s.sizes) <= room:
            bound += s.val[j]
    best_val = s.best_val
    tol = TIE_RTOL * (abs(best_val) if abs(best_val) > 1.0 else 1.0)
    if bound < best_val - tol:
        return
    if k < s.n_rel and _frac_bound(s, k, inc, room, exc) < best_val - tol:
        return
    if k == s.n_rel:
        cur = _covered_value(s, inc)
        if cur > best_val + tol or (cur >= best_val - tol and _key_less(inc, s.best_mask)):
            s.best_val = cur
            s.best_mask = inc
        return
    v = s.order[k]
    bit = (<uint64_t>1) << v
    if s.sizes[v] <= room:
        useful = False
        for j in range(s.m):
            r = s.rest[j]
            if (r & bit) and not (r & exc) and (r & inc) != r:
                if s.rsize[j] - _size(r & inc, s.sizes) <= room:
                    useful = True
                    break
        if useful:
            _dfs(s, k + 1, inc | bit, used + s.sizes[v], exc)
    _dfs(s, k + 1, inc, used, exc | bit)


cdef struct Work:
    uint64_t* rest
    double* val
    int64_t* rsize
    int* order
    double* ratio
    double* vval
    int* seq


cdef int _work_alloc(Work* w, int n_items, int n_views) noexcept nogil:
    w.rest = <uint64_t*> malloc((n_items + 1) * sizeof(uint64_t))
    w.val = <double*> malloc((n_items + 1) * sizeof(double))
    w.rsize = <int64_t*> malloc((n_items + 1) * sizeof(int64_t))
    w.order = <int*> malloc((n_views + 1) * sizeof(int))
    w.ratio = <double*> malloc((n_views + 1) * sizeof(double))
    w.vval = <double*> malloc((n_views + 1) * sizeof(double))
    w.seq = <int*> malloc((n_views + 1) * sizeof(int))
    if w.vval == NULL or w.seq == NULL or w.rest == NULL or w.val == NULL or w.rsize == NULL or w.order == NULL or w.ratio == NULL:
        return -1
    return 0


cdef void _work_free(Work* w) noexcept nogil:
    free(w.rest)
    free(w.val)
    free(w.rsize)
    free(w.order)
    free(w.ratio)
    free(w.vval)
    free(w.seq)


cdef void _bb(const int64_t* sizes, int n_views, int64_t budget, const uint64_t* masks,
              const double* values, int n_items, uint64_t fixed, Work* w,
              uint64_t* out_mask, double* out_val) noexcept nogil:
    cdef int64_t cap = budget - _size(fixed, sizes)
    cdef int j, v, m, pos, u, n_rel
    cdef uint64_t r, relevant, bit
    cdef int64_t rs
    cdef double tot, base
    cdef BB s
    if cap < 0:
        out_mask[0] = fixed
        out_val[0] = 0.0
        return
    m = 0
    for j in range(n_items):
        if values[j] <= 0.0:
            continue
        r = masks[j] & ~fixed
        rs = _size(r, sizes)
        if rs > cap:
            continue
        w.rest[m] = r
        w.val[m] = values[j]
        w.rsize[m] = rs
        m += 1
    relevant = 0
    for j in range(m):
        relevant |= w.rest[j]
    n_rel = 0
    for v in range(n_views):
        if (relevant >> v) & 1:
            tot = 0.0
            bit = (<uint64_t>1) << v
            for j in range(m):
                if w.rest[j] & bit:
                    tot += w.val[j]
            w.ratio[v] = tot / sizes[v]
            pos = n_rel
            while pos > 0:
                u = w.order[pos - 1]
                if w.ratio[v] > w.ratio[u]:
                    w.order[pos] = u
                    pos -= 1
                else:
                    break
            w.order[pos] = v
            n_rel += 1
    base = 0.0
    for j in range(m):
        if w.rest[j] == 0:
            base += w.val[j]
    s.sizes = sizes
    s.m = m
    s.rest = w.rest
    s.val = w.val
    s.rsize = w.rsize
    s.order = w.order
    s.vval = w.vval
    s.seq = w.seq
    s.n_rel = n_rel
    s.cap = cap
    s.best_val = base
    s.best_mask = 0
    _dfs(&s, 0, 0, 0, 0)
    out_mask[0] = s.best_mask | fixed
    out_val[0] = s.best_val


def bb_welfare(sizes, budget, masks, values, fixed=0):
    cdef int64_t[::1] sz = np.ascontiguousarray(sizes, dtype=np.int64)
    cdef uint64_t[::1] mk = np.ascontiguousarray(masks, dtype=np.uint64)
    cdef double[::1] vl = np.ascontiguousarray(values, dtype=np.float64)
    cdef int n_views = sz.shape[0]
    cdef int n_items = mk.shape[0]
    cdef Work w
    cdef uint64_t out_mask = 0
    cdef double out_val = 0.0
    cdef uint64_t fx = <uint64_t> int(fixed)
    cdef int64_t bud = int(budget)
    if _work_alloc(&w, n_items, n_views) != 0:
        _work_free(&w)
        raise MemoryError()
    _bb(&sz[0] if n_views else NULL, n_views, bud, &mk[0] if n_items else NULL,
        &vl[0] if n_items else NULL, n_items, fx, &w, &out_mask, &out_val)
    _work_free(&w)
    return int(out_mask), float(out_val)


cdef void _item_values(const double* coef, const double* wt, int n_items, int n, double* out) noexcept nogil:
    cdef int j, i
    cdef double s
    for j in range(n_items):
        s = 0.0
        for i in range(n):
            s += coef[j * n + i] * wt[i]
        out[j] = s


cdef void _tenant_values(const double* coef, const uint64_t* masks, uint64_t chosen,
                         int n_items, int n, double* out) noexcept nogil:
    cdef int j, i
    for i in range(n):
        out[i] = 0.0
    for j in range(n_items):
        if (masks[j] & chosen) == masks[j]:
            for i in range(n):
                out[i] += coef[j * n + i]


def mmf_mw(sizes, budget, masks, coef, double eps, long iterations, trace=None):
    if trace is not None:
        from faircache import _pykernels
        return _pykernels.mmf_mw(sizes, budget, masks, coef, eps, iterations, trace)
    cdef int64_t[::1] sz = np.ascontiguousarray(sizes, dtype=np.int64)
    cdef uint64_t[::1] mk = np.ascontiguousarray(masks, dtype=np.uint64)
    cdef double[:, ::1] cf = np.ascontiguousarray(coef, dtype=np.float64).reshape(mk.shape[0], -1)
    cdef int n_views = sz.shape[0]
    cdef int n_items = mk.shape[0]
    cdef int n = cf.shape[1]
    cdef int64_t bud = int(budget)
    chosen_arr = np.zeros(iterations, dtype=np.uint64)
    cdef uint64_t[::1] chosen = chosen_arr
    cdef double* wt = <double*> malloc((n + 1) * sizeof(double))
    cdef double* vals = <double*> malloc((n_items + 1) * sizeof(double))
    cdef double* rates = <double*> malloc((n + 1) * sizeof(double))
    cdef Work w
    cdef uint64_t s_mask
    cdef double wval, tot
    cdef long t
    cdef int i
    if n_items == 0 or n == 0:
        free(wt); free(vals); free(rates)
        return chosen_arr
    if _work_alloc(&w, n_items, n_views) != 0 or wt == NULL or vals == NULL or rates == NULL:
        _work_free(&w); free(wt); free(vals); free(rates)
        raise MemoryError()
    with nogil:
        for i in range(n):
            wt[i] = 1.0 / n
        for t in range(iterations):
            _item_values(&cf[0, 0], wt, n_items, n, vals)
            _bb(&sz[0], n_views, bud, &mk[0], vals, n_items, 0, &w, &s_mask, &wval)
            chosen[t] = s_mask
            _tenant_values(&cf[0, 0], &mk[0], s_mask, n_items, n, rates)
            tot = 0.0
            for i in range(n):
                wt[i] = wt[i] * exp(-eps * rates[i])
                tot += wt[i]
            for i in range(n):
                wt[i] = wt[i] / tot
    _work_free(&w)
    free(wt); free(vals); free(rates)
    return chosen_arr


cdef void _gamma_at(double L, const double* w, const double* lam, const double* floors,
                    int n, double* g) noexcept nogil:
    cdef int i
    cdef double v
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


cdef double _logsum(const double* g, const double* lam, int n) noexcept nogil:
    cdef double s = 0.0
    cdef int i
    for i in range(n):
        s += lam[i] * log(g[i])
    return s


cdef void _gamma_solve(const double* w, double Q, const double* lam, const double* floors,
                       int n, double* g, double tol, int max_iter) noexcept nogil:
    cdef double hi, lo, mid, f, r
    cdef int i, it
    _gamma_at(0.0, w, lam, floors, n, g)
    if _logsum(g, lam, n) >= Q:
        return
    hi = 0.0
    for i in range(n):
        r = w[i] / lam[i]
        if r > hi:
            hi = r
    lo = 0.0
    for it in range(max_iter):
        mid = 0.5 * (lo + hi)
        _gamma_at(mid, w, lam, floors, n, g)
        f = _logsum(g, lam, n)
        if f >= Q:
            hi = mid
            if f - Q <= tol:
                break
        else:
            lo = mid
    _gamma_at(hi, w, lam, floors, n, g)


def gamma_solve(w, double Q, lam, floors, double tol=1e-9, int max_iter=200):
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] lv = np.ascontiguousarray(lam, dtype=np.float64)
    cdef double[::1] fv = np.ascontiguousarray(floors, dtype=np.float64)
    cdef int n = wv.shape[0]
    out = np.zeros(n)
    cdef double[::1] g = out
    _gamma_solve(&wv[0], Q, &lv[0], &fv[0], n, &g[0], tol, max_iter)
    return [float(x) for x in out]


def pffeas_ahk(sizes, budget, masks, coef, lam, floors, double Q, double delta, double rho, long iterations):
    cdef int64_t[::1] sz = np.ascontiguousarray(sizes, dtype=np.int64)
    cdef uint64_t[::1] mk = np.ascontiguousarray(masks, dtype=np.uint64)
    cdef double[::1] lv = np.ascontiguousarray(lam, dtype=np.float64)
    cdef double[::1] fv = np.ascontiguousarray(floors, dtype=np.float64)
    cdef int n = lv.shape[0]
    cdef double[:, ::1] cf = np.ascontiguousarray(coef, dtype=np.float64).reshape(mk.shape[0], n)
    cdef int n_views = sz.shape[0]
    cdef int n_items = mk.shape[0]
    cdef int64_t bud = int(budget)
    chosen_arr = np.zeros(iterations, dtype=np.uint64)
    gsum_arr = np.zeros(n)
    cdef uint64_t[::1] chosen = chosen_arr
    cdef double[::1] gsum = gsum_arr
    cdef double* y = <double*> malloc((n + 1) * sizeof(double))
    cdef double* g = <double*> malloc((n + 1) * sizeof(double))
    cdef double* vals = <double*> malloc((n_items + 1) * sizeof(double))
    cdef double* rates = <double*> malloc((n + 1) * sizeof(double))
    cdef double* gacc = <double*> malloc((n + 1) * sizeof(double))
    cdef Work w
    cdef uint64_t s_mask = 0
    cdef double wval, cost, tot, slack
    cdef double up = 1.0 - delta
    cdef double down = 1.0 + delta
    cdef long t
    cdef long stop = -1
    cdef int i
    cdef int width_error = 0
    cdef double bad_slack = 0.0
    if _work_alloc(&w, n_items, n_views) != 0 or y == NULL or g == NULL or vals == NULL or rates == NULL or gacc == NULL:
        _work_free(&w); free(y); free(g); free(vals); free(rates); free(gacc)
        raise MemoryError()
    with nogil:
        for i in range(n):
            y[i] = 1.0 / n
            gacc[i] = 0.0
        for t in range(iterations):
            _item_values(&cf[0, 0] if n_items else NULL, y, n_items, n, vals)
            _bb(&sz[0] if n_views else NULL, n_views, bud, &mk[0] if n_items else NULL,
                vals, n_items, 0, &w, &s_mask, &wval)
            _gamma_solve(y, Q, &lv[0], &fv[0], n, g, 1e-9, 200)
            cost = 0.0
            for i in range(n):
                cost += y[i] * g[i]
            if wval - cost < -1e-12:
                stop = t
                break
            _tenant_values(&cf[0, 0] if n_items else NULL, &mk[0] if n_items else NULL,
                           s_mask, n_items, n, rates)
            chosen[t] = s_mask
            tot = 0.0
            for i in range(n):
                slack = rates[i] - g[i]
                if slack > rho + 1e-9 or slack < -rho - 1e-9:
                    width_error = 1
                    bad_slack = slack
                    break
                if slack >= 0.0:
                    y[i] = y[i] * pow(up, slack / rho)
                else:
                    y[i] = y[i] * pow(down, -slack / rho)
                tot += y[i]
                gacc[i] += g[i]
            if width_error:
                break
            for i in range(n):
                y[i] = y[i] / tot
        for i in range(n):
            gsum[i] = gacc[i]
    _work_free(&w)
    free(y); free(g); free(vals); free(rates); free(gacc)
    if width_error:
        raise ValueError(f"slack {bad_slack} exceeds width {rho}")
    if stop >= 0:
        return False, int(stop), chosen_arr[:stop], np.zeros(n)
    return True, int(iterations), chosen_arr, gsum_arr
