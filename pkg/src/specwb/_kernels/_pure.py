"""Pure-NumPy implementations of the hot per-spectrum/per-pair loops.

Mirrors the compiled extension in `_core.pyx`; both backends implement the
same algorithms so results agree to floating-point noise. Selected at import
by `specwb._kernels` when the extension is unavailable or SPECWB_PURE=1.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


# ---------------------------------------------------------------------------
# continuum hulls
# ---------------------------------------------------------------------------

def _fill_segments(wl, r, verts, cv):
    cv[verts] = r[verts]
    for t in range(len(verts) - 1):
        a, b = verts[t], verts[t + 1]
        if b - a > 1:
            span = slice(a + 1, b)
            cv[span] = r[a] + (r[b] - r[a]) * ((wl[span] - wl[a]) / (wl[b] - wl[a]))


def _convex_vertices(wl, r):
    # upper hull by monotone chain; collinear points are kept so that every
    # band lying on the hull is a fixpoint
    stack = [0]
    for k in range(1, r.size):
        while len(stack) >= 2:
            a, b = stack[-2], stack[-1]
            cross = (wl[b] - wl[a]) * (r[k] - r[a]) - (r[b] - r[a]) * (wl[k] - wl[a])
            if cross > 0.0:
                stack.pop()
            else:
                break
        stack.append(k)
    return stack


def _segmented_vertices(r):
    # running maxima toward the global maximum from each end; segments rise
    # left of the maximum and fall right of it
    n = r.size
    m_left = int(np.argmax(r))
    m_right = n - 1 - int(np.argmax(r[::-1]))
    verts = []
    cur = -np.inf
    for k in range(m_left + 1):
        if r[k] >= cur:
            verts.append(k)
            cur = r[k]
    tail = []
    cur = -np.inf
    for k in range(n - 1, m_right - 1, -1):
        if r[k] >= cur:
            tail.append(k)
            cur = r[k]
    verts.extend(reversed(tail))
    return verts


def convex_hull_batch(wl, values):
    wl = np.ascontiguousarray(wl, dtype=float)
    values = np.ascontiguousarray(values, dtype=float)
    n, b = values.shape
    cv = np.empty_like(values)
    fix = np.zeros((n, b), dtype=bool)
    for i in range(n):
        verts = _convex_vertices(wl, values[i])
        fix[i, verts] = True
        _fill_segments(wl, values[i], verts, cv[i])
    return cv, fix


def segmented_hull_batch(wl, values):
    wl = np.ascontiguousarray(wl, dtype=float)
    values = np.ascontiguousarray(values, dtype=float)
    n, b = values.shape
    cv = np.empty_like(values)
    fix = np.zeros((n, b), dtype=bool)
    for i in range(n):
        verts = _segmented_vertices(values[i])
        fix[i, verts] = True
        _fill_segments(wl, values[i], verts, cv[i])
    return cv, fix


# ---------------------------------------------------------------------------
# binomial GLM by iteratively reweighted least squares
# ---------------------------------------------------------------------------

STATUS_OK = 0
STATUS_NO_CONVERGENCE = 1
STATUS_SEPARATION = 2
STATUS_SINGULAR = 3


def _log1pexp(t):
    out = np.empty_like(t)
    pos = t > 0
    out[pos] = t[pos] + np.log1p(np.exp(-t[pos]))
    out[~pos] = np.log1p(np.exp(t[~pos]))
    return out


def _binomial_deviance(xv, yv, b0, b1):
    eta = b0 + b1 * xv
    return 2.0 * float(np.sum(yv * _log1pexp(-eta) + (1.0 - yv) * _log1pexp(eta)))


def _fit_logistic(xv, yv, max_iter, tol, beta_cap):
    n = xv.size
    if n < 3:
        return np.nan, np.nan, np.nan, np.nan, np.nan, 0, STATUS_SINGULAR
    b0 = b1 = 0.0
    dev = _binomial_deviance(xv, yv, b0, b1)
    status = STATUS_NO_CONVERGENCE
    it = 0
    s0 = s1 = s2 = det = 0.0
    for it in range(1, max_iter + 1):
        eta = b0 + b1 * xv
        mu = 1.0 / (1.0 + np.exp(-eta))
        w = mu * (1.0 - mu)
        z = eta + (yv - mu) / np.maximum(w, 1e-300)
        s0 = float(np.sum(w))
        s1 = float(np.sum(w * xv))
        s2 = float(np.sum(w * xv * xv))
        t0 = float(np.sum(w * z))
        t1 = float(np.sum(w * xv * z))
        det = s0 * s2 - s1 * s1
        if not det > 1e-14 * max(s0 * s2, 1e-300):
            status = STATUS_SINGULAR
            break
        nb0 = (s2 * t0 - s1 * t1) / det
        nb1 = (s0 * t1 - s1 * t0) / det
        if max(abs(nb0), abs(nb1)) > beta_cap:
            status = STATUS_SEPARATION
            break
        new_dev = _binomial_deviance(xv, yv, nb0, nb1)
        delta = dev - new_dev
        b0, b1, dev = nb0, nb1, new_dev
        if abs(delta) < tol:
            status = STATUS_OK
            break
        if delta < 0.0:
            status = STATUS_SEPARATION
            break
    if status != STATUS_OK:
        return np.nan, np.nan, np.nan, np.nan, dev, it, status
    # Fisher information at the accepted estimate
    eta = b0 + b1 * xv
    mu = 1.0 / (1.0 + np.exp(-eta))
    w = mu * (1.0 - mu)
    s0 = float(np.sum(w))
    s1 = float(np.sum(w * xv))
    s2 = float(np.sum(w * xv * xv))
    det = s0 * s2 - s1 * s1
    if not det > 0.0:
        return np.nan, np.nan, np.nan, np.nan, dev, it, STATUS_SINGULAR
    se0 = np.sqrt(s2 / det)
    se1 = np.sqrt(s0 / det)
    return b0, b1, se0, se1, dev, it, STATUS_OK


def logistic_irls_batch(x, y, max_iter=50, tol=1e-10, beta_cap=30.0):
    """Fit y ~ b0 + b1*x_row with a logit link for every row of `x`.

    NaN entries in a row are excluded from that row's fit. Returns arrays
    (beta0, beta1, se0, se1, deviance, iterations, status).
    """
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    npairs = x.shape[0]
    beta0 = np.full(npairs, np.nan)
    beta1 = np.full(npairs, np.nan)
    se0 = np.full(npairs, np.nan)
    se1 = np.full(npairs, np.nan)
    deviance = np.full(npairs, np.nan)
    iterations = np.zeros(npairs, dtype=np.int32)
    status = np.zeros(npairs, dtype=np.int8)
    for p in range(npairs):
        xv = x[p]
        ok = np.isfinite(xv)
        res = _fit_logistic(xv[ok], y[ok], max_iter, tol, beta_cap)
        beta0[p], beta1[p], se0[p], se1[p], deviance[p], iterations[p], status[p] = res
    return beta0, beta1, se0, se1, deviance, iterations, status


# ---------------------------------------------------------------------------
# nonnegative least squares (active set)
# ---------------------------------------------------------------------------

def _nnls_single(ata, atb, max_iter, tol):
    m = atb.size
    x = np.zeros(m)
    passive = np.zeros(m, dtype=bool)
    for _ in range(max_iter):
        w = np.where(passive, -np.inf, atb - ata @ x)
        j = int(np.argmax(w))
        if w[j] <= tol:
            break
        passive[j] = True
        while True:
            idx = np.flatnonzero(passive)
            sub = ata[np.ix_(idx, idx)]
            try:
                z = np.linalg.solve(sub, atb[idx])
            except np.linalg.LinAlgError:
                z = np.linalg.lstsq(sub, atb[idx], rcond=None)[0]
            if np.all(z > 0.0):
                x[:] = 0.0
                x[idx] = z
                break
            # step toward z until the first passive coordinate hits zero
            xs = x[idx]
            neg = z <= 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, xs / (xs - z), np.inf)
            alpha = float(np.min(ratios))
            xs = xs + alpha * (z - xs)
            hit = neg & (ratios <= alpha * (1.0 + 1e-12))
            if not np.any(hit):
                hit = neg.copy()
                hit[np.flatnonzero(neg)[1:]] = False
            xs[hit] = 0.0
            x[:] = 0.0
            x[idx] = xs
            passive[idx[hit]] = False
    return x


def nnls_batch(a, b, max_iter=None):
    """Solve min ||a @ x - row||_2 with x >= 0 for every row of `b`.

    `a` has shape (k, m); `b` has shape (nrows, k). Returns (nrows, m).
    """
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    m = a.shape[1]
    if max_iter is None:
        max_iter = 3 * m + 10
    ata = a.T @ a
    atb = b @ a
    # gradient tolerance in the spirit of scipy's active-set NNLS: machine
    # epsilon scaled by the design norm, the problem size and the row scale
    tol_base = 10.0 * np.finfo(float).eps * max(a.shape) * float(np.abs(a).sum(axis=0).max())
    tols = tol_base * np.maximum(1.0, np.abs(b).max(axis=1, initial=0.0))
    out = np.empty((b.shape[0], m))
    for i in range(b.shape[0]):
        out[i] = _nnls_single(ata, atb[i], max_iter, tols[i])
    return out
