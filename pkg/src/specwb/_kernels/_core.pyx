# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot-loop kernels: continuum hulls, logistic IRLS, active-set NNLS.

Algorithmically identical to `_pure`; the module-level loops release the GIL
so callers can parallelize across slices with threads.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log1p, sqrt

cnp.import_array()

BACKEND = "compiled"

cdef enum:
    C_OK = 0
    C_NO_CONVERGENCE = 1
    C_SEPARATION = 2
    C_SINGULAR = 3

STATUS_OK = C_OK
STATUS_NO_CONVERGENCE = C_NO_CONVERGENCE
STATUS_SEPARATION = C_SEPARATION
STATUS_SINGULAR = C_SINGULAR

cdef double INF = float("inf")
cdef double NAN = float("nan")


# ---------------------------------------------------------------------------
# continuum hulls
# ---------------------------------------------------------------------------

cdef void _fill_segments(const double* wl, const double* r, const int* verts,
                         int nverts, double* cv) noexcept nogil:
    cdef int t, k, a, b
    for t in range(nverts):
        cv[verts[t]] = r[verts[t]]
    for t in range(nverts - 1):
        a = verts[t]
        b = verts[t + 1]
        for k in range(a + 1, b):
            cv[k] = r[a] + (r[b] - r[a]) * ((wl[k] - wl[a]) / (wl[b] - wl[a]))


def convex_hull_batch(wl_in, values_in):
    wl_arr = np.ascontiguousarray(wl_in, dtype=np.float64)
    values_arr = np.ascontiguousarray(values_in, dtype=np.float64)
    cdef const double[::1] wl = wl_arr
    cdef const double[:, ::1] values = values_arr
    cdef Py_ssize_t n = values.shape[0], b = values.shape[1]
    cv_arr = np.empty((n, b), dtype=np.float64)
    fix_arr = np.zeros((n, b), dtype=np.uint8)
    cdef double[:, ::1] cv = cv_arr
    cdef unsigned char[:, ::1] fix = fix_arr
    stack_arr = np.empty(b, dtype=np.intc)
    cdef int[::1] stack = stack_arr
    cdef Py_ssize_t i
    cdef int k, nstack, a, c, t
    cdef double cross
    with nogil:
        for i in range(n):
            nstack = 0
            for k in range(<int> b):
                while nstack >= 2:
                    a = stack[nstack - 2]
                    c = stack[nstack - 1]
                    cross = (wl[c] - wl[a]) * (values[i, k] - values[i, a]) \
                        - (values[i, c] - values[i, a]) * (wl[k] - wl[a])
                    if cross > 0.0:
                        nstack -= 1
                    else:
                        break
                stack[nstack] = k
                nstack += 1
            for t in range(nstack):
                fix[i, stack[t]] = 1
            _fill_segments(&wl[0], &values[i, 0], &stack[0], nstack, &cv[i, 0])
    return cv_arr, fix_arr.astype(bool)


def segmented_hull_batch(wl_in, values_in):
    wl_arr = np.ascontiguousarray(wl_in, dtype=np.float64)
    values_arr = np.ascontiguousarray(values_in, dtype=np.float64)
    cdef const double[::1] wl = wl_arr
    cdef const double[:, ::1] values = values_arr
    cdef Py_ssize_t n = values.shape[0], b = values.shape[1]
    cv_arr = np.empty((n, b), dtype=np.float64)
    fix_arr = np.zeros((n, b), dtype=np.uint8)
    cdef double[:, ::1] cv = cv_arr
    cdef unsigned char[:, ::1] fix = fix_arr
    verts_arr = np.empty(2 * b + 2, dtype=np.intc)
    tail_arr = np.empty(b, dtype=np.intc)
    cdef int[::1] verts = verts_arr
    cdef int[::1] tail = tail_arr
    cdef Py_ssize_t i
    cdef int k, m_left, m_right, nverts, ntail, t
    cdef double rmax, cur
    with nogil:
        for i in range(n):
            rmax = -INF
            m_left = 0
            for k in range(<int> b):
                if values[i, k] > rmax:
                    rmax = values[i, k]
                    m_left = k
            m_right = m_left
            for k in range(m_left + 1, <int> b):
                if values[i, k] == rmax:
                    m_right = k
            nverts = 0
            cur = -INF
            for k in range(m_left + 1):
                if values[i, k] >= cur:
                    verts[nverts] = k
                    nverts += 1
                    cur = values[i, k]
            ntail = 0
            cur = -INF
            for k in range(<int> b - 1, m_right - 1, -1):
                if values[i, k] >= cur:
                    tail[ntail] = k
                    ntail += 1
                    cur = values[i, k]
            for t in range(ntail - 1, -1, -1):
                verts[nverts] = tail[t]
                nverts += 1
            for t in range(nverts):
                fix[i, verts[t]] = 1
            _fill_segments(&wl[0], &values[i, 0], &verts[0], nverts, &cv[i, 0])
    return cv_arr, fix_arr.astype(bool)


# ---------------------------------------------------------------------------
# binomial GLM by iteratively reweighted least squares
# ---------------------------------------------------------------------------

cdef inline double _log1pexp(double t) noexcept nogil:
    if t > 0.0:
        return t + log1p(exp(-t))
    return log1p(exp(t))


cdef double _deviance(const double* x, const double* y, int n, double b0,
                      double b1) noexcept nogil:
    cdef double s = 0.0, eta
    cdef int i
    for i in range(n):
        eta = b0 + b1 * x[i]
        s += y[i] * _log1pexp(-eta) + (1.0 - y[i]) * _log1pexp(eta)
    return 2.0 * s


cdef void _fit_logistic(const double* x, const double* y, int n, int max_iter,
                        double tol, double beta_cap, double* out) noexcept nogil:
    # out: beta0, beta1, se0, se1, deviance, iterations, status
    cdef double b0 = 0.0, b1 = 0.0, dev, new_dev, delta
    cdef double eta, mu, w, z
    cdef double s0, s1, s2, t0, t1, det, nb0, nb1
    cdef int it = 0, i, status = C_NO_CONVERGENCE
    out[0] = NAN
    out[1] = NAN
    out[2] = NAN
    out[3] = NAN
    out[5] = 0.0
    if n < 3:
        out[4] = NAN
        out[6] = C_SINGULAR
        return
    dev = _deviance(x, y, n, b0, b1)
    for it in range(1, max_iter + 1):
        s0 = s1 = s2 = t0 = t1 = 0.0
        for i in range(n):
            eta = b0 + b1 * x[i]
            mu = 1.0 / (1.0 + exp(-eta))
            w = mu * (1.0 - mu)
            if w < 1e-300:
                w = 1e-300
            z = eta + (y[i] - mu) / w
            s0 += w
            s1 += w * x[i]
            s2 += w * x[i] * x[i]
            t0 += w * z
            t1 += w * x[i] * z
        det = s0 * s2 - s1 * s1
        if not det > 1e-14 * max(s0 * s2, 1e-300):
            status = C_SINGULAR
            break
        nb0 = (s2 * t0 - s1 * t1) / det
        nb1 = (s0 * t1 - s1 * t0) / det
        if max(fabs(nb0), fabs(nb1)) > beta_cap:
            status = C_SEPARATION
            break
        new_dev = _deviance(x, y, n, nb0, nb1)
        delta = dev - new_dev
        b0 = nb0
        b1 = nb1
        dev = new_dev
        if fabs(delta) < tol:
            status = C_OK
            break
        if delta < 0.0:
            status = C_SEPARATION
            break
    out[4] = dev
    out[5] = it
    out[6] = status
    if status != C_OK:
        return
    s0 = s1 = s2 = 0.0
    for i in range(n):
        eta = b0 + b1 * x[i]
        mu = 1.0 / (1.0 + exp(-eta))
        w = mu * (1.0 - mu)
        s0 += w
        s1 += w * x[i]
        s2 += w * x[i] * x[i]
    det = s0 * s2 - s1 * s1
    if not det > 0.0:
        out[6] = C_SINGULAR
        return
    out[0] = b0
    out[1] = b1
    out[2] = sqrt(s2 / det)
    out[3] = sqrt(s0 / det)


def logistic_irls_batch(x_in, y_in, int max_iter=50, double tol=1e-10,
                        double beta_cap=30.0):
    """Per-row logistic fits y ~ b0 + b1*x; see the pure backend for details."""
    x_arr = np.ascontiguousarray(x_in, dtype=np.float64)
    y_arr = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef const double[:, ::1] x = x_arr
    cdef const double[::1] y = y_arr
    cdef Py_ssize_t npairs = x.shape[0], n = x.shape[1]
    beta0 = np.full(npairs, np.nan)
    beta1 = np.full(npairs, np.nan)
    se0 = np.full(npairs, np.nan)
    se1 = np.full(npairs, np.nan)
    deviance = np.full(npairs, np.nan)
    iterations = np.zeros(npairs, dtype=np.int32)
    status = np.zeros(npairs, dtype=np.int8)
    cdef double[::1] vb0 = beta0, vb1 = beta1, vs0 = se0, vs1 = se1, vdev = deviance
    cdef int[::1] vit = iterations
    cdef signed char[::1] vst = status
    xbuf_arr = np.empty(n, dtype=np.float64)
    ybuf_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] xbuf = xbuf_arr
    cdef double[::1] ybuf = ybuf_arr
    cdef double out[7]
    cdef Py_ssize_t p
    cdef int i, m
    with nogil:
        for p in range(npairs):
            m = 0
            for i in range(<int> n):
                if x[p, i] == x[p, i]:  # not NaN
                    xbuf[m] = x[p, i]
                    ybuf[m] = y[i]
                    m += 1
            _fit_logistic(&xbuf[0], &ybuf[0], m, max_iter, tol, beta_cap, out)
            vb0[p] = out[0]
            vb1[p] = out[1]
            vs0[p] = out[2]
            vs1[p] = out[3]
            vdev[p] = out[4]
            vit[p] = <int> out[5]
            vst[p] = <signed char> out[6]
    return beta0, beta1, se0, se1, deviance, iterations, status


# ---------------------------------------------------------------------------
# nonnegative least squares (active set)
# ---------------------------------------------------------------------------

cdef int _chol_solve(double* a, double* rhs, int m) noexcept nogil:
    # in-place Cholesky solve of the SPD system a (row-major m x m); returns
    # nonzero when the factorization breaks down
    cdef int i, j, k
    cdef double s
    for i in range(m):
        for j in range(i + 1):
            s = a[i * m + j]
            for k in range(j):
                s -= a[i * m + k] * a[j * m + k]
            if i == j:
                if s <= 0.0:
                    return 1
                a[i * m + i] = sqrt(s)
            else:
                a[i * m + j] = s / a[j * m + j]
    for i in range(m):
        s = rhs[i]
        for k in range(i):
            s -= a[i * m + k] * rhs[k]
        rhs[i] = s / a[i * m + i]
    for i in range(m - 1, -1, -1):
        s = rhs[i]
        for k in range(i + 1, m):
            s -= a[k * m + i] * rhs[k]
        rhs[i] = s / a[i * m + i]
    return 0


def nnls_batch(a_in, b_in, max_iter=None):
    """Row-wise min ||a @ x - b_row|| with x >= 0 (Lawson-Hanson active set)."""
    a_arr = np.ascontiguousarray(a_in, dtype=np.float64)
    b_arr = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef Py_ssize_t m = a_arr.shape[1], nrows = b_arr.shape[0]
    cdef int iters = 3 * <int> m + 10 if max_iter is None else <int> max_iter
    ata_arr = np.ascontiguousarray(a_arr.T @ a_arr)
    atb_arr = np.ascontiguousarray(b_arr @ a_arr)
    out_arr = np.zeros((nrows, m), dtype=np.float64)
    # gradient tolerance in the spirit of scipy's active-set NNLS
    tol_base = 10.0 * np.finfo(np.float64).eps * max(a_arr.shape) \
        * float(np.abs(a_arr).sum(axis=0).max())
    tols_arr = tol_base * np.maximum(1.0, np.abs(b_arr).max(axis=1, initial=0.0))
    cdef const double[:, ::1] ata = ata_arr
    cdef const double[:, ::1] atb = atb_arr
    cdef const double[::1] tols = tols_arr
    cdef double[:, ::1] out = out_arr
    scratch = np.empty((6, m), dtype=np.float64)
    cdef double[:, ::1] sc = scratch
    sub_arr = np.empty(m * m, dtype=np.float64)
    cdef double[::1] sub = sub_arr
    pass_arr = np.zeros(m, dtype=np.intc)
    idx_arr = np.empty(m, dtype=np.intc)
    cdef int[::1] passive = pass_arr
    cdef int[::1] idx = idx_arr
    cdef Py_ssize_t r
    cdef int i, j, k, np_, jmax, hit_any
    cdef double tol, wmax, w, alpha, ratio, zmax
    with nogil:
        for r in range(nrows):
            for i in range(<int> m):
                passive[i] = 0
                sc[0, i] = 0.0  # x
            tol = tols[r]
            for k in range(iters):
                # gradient over free coordinates
                jmax = -1
                wmax = -INF
                for i in range(<int> m):
                    if passive[i]:
                        continue
                    w = atb[r, i]
                    for j in range(<int> m):
                        w -= ata[i, j] * sc[0, j]
                    if w > wmax:
                        wmax = w
                        jmax = i
                if jmax < 0 or wmax <= tol:
                    break
                passive[jmax] = 1
                while True:
                    np_ = 0
                    for i in range(<int> m):
                        if passive[i]:
                            idx[np_] = i
                            np_ += 1
                    for i in range(np_):
                        sc[1, i] = atb[r, idx[i]]  # z
                        for j in range(np_):
                            sub[i * np_ + j] = ata[idx[i], idx[j]]
                    if _chol_solve(&sub[0], &sc[1, 0], np_):
                        # singular passive set: drop the newest member
                        passive[jmax] = 0
                        break
                    hit_any = 1
                    for i in range(np_):
                        if sc[1, i] <= 0.0:
                            hit_any = 0
                    if hit_any:
                        for i in range(<int> m):
                            sc[0, i] = 0.0
                        for i in range(np_):
                            sc[0, idx[i]] = sc[1, i]
                        break
                    alpha = INF
                    for i in range(np_):
                        if sc[1, i] <= 0.0:
                            ratio = sc[0, idx[i]] / (sc[0, idx[i]] - sc[1, i])
                            if ratio < alpha:
                                alpha = ratio
                    hit_any = 0
                    for i in range(np_):
                        w = sc[0, idx[i]] + alpha * (sc[1, i] - sc[0, idx[i]])
                        if sc[1, i] <= 0.0:
                            ratio = sc[0, idx[i]] / (sc[0, idx[i]] - sc[1, i])
                            if ratio <= alpha * (1.0 + 1e-12):
                                w = 0.0
                                passive[idx[i]] = 0
                                hit_any = 1
                        sc[0, idx[i]] = w
                    if not hit_any:
                        # numerical safety: force out the most negative z
                        zmax = INF
                        j = -1
                        for i in range(np_):
                            if sc[1, i] <= 0.0 and sc[1, i] < zmax:
                                zmax = sc[1, i]
                                j = idx[i]
                        if j >= 0:
                            sc[0, j] = 0.0
                            passive[j] = 0
            for i in range(<int> m):
                out[r, i] = sc[0, i]
    return out_arr
