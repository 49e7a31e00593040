# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels.

Drop-in replacements for the functions of ``irsdetect._pykernels``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, exp, fabs

cnp.import_array()

DEF BISECT_ITERS = 200
DEF SCAN_POINTS = 64
DEF GOLDEN_ITERS = 90
DEF NEWTON_ITERS = 30

cdef double INV_PHI = (sqrt(5.0) - 1.0) / 2.0


cdef inline double _clip(double x, double lo, double hi) nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


cdef double _spectrum_obj(const double[::1] phi, const double[::1] lam) nogil:
    cdef Py_ssize_t m
    cdef double f = 0.0
    for m in range(phi.shape[0]):
        f += log(lam[m]) + phi[m] / lam[m]
    return f


def spectrum_objective(phi, lam):
    """``sum(log(lam) + phi / lam)``."""
    cdef double[::1] p = np.ascontiguousarray(phi, dtype=np.float64)
    cdef double[::1] l = np.ascontiguousarray(lam, dtype=np.float64)
    return _spectrum_obj(p, l)


cdef void _interpolate_to_sum(double[::1] big, double[::1] small, double total, double[::1] out) nogil:
    cdef Py_ssize_t m, n = big.shape[0]
    cdef double sb = 0.0, ss = 0.0, t
    for m in range(n):
        sb += big[m]
        ss += small[m]
    if sb - ss <= 0.0:
        for m in range(n):
            out[m] = small[m]
        return
    t = _clip((total - ss) / (sb - ss), 0.0, 1.0)
    for m in range(n):
        out[m] = small[m] + t * (big[m] - small[m])


cdef double _shift_clip(const double[::1] phi, double tau, double lo, double hi, double[::1] out) nogil:
    cdef Py_ssize_t m
    cdef double s = 0.0
    for m in range(phi.shape[0]):
        out[m] = _clip(phi[m] - tau, lo, hi)
        s += out[m]
    return s


def project_spectrum(phi, double lo, double hi, double total):
    """Euclidean projection of ``phi`` onto ``{lo <= x <= hi, sum(x) = total}``."""
    cdef double[::1] p = np.ascontiguousarray(phi, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], m, it
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double[::1] big = np.empty(n)
    cdef double[::1] small = np.empty(n)
    cdef double t_lo = p[0], t_hi = p[0], mid
    for m in range(n):
        if p[m] < t_lo:
            t_lo = p[m]
        if p[m] > t_hi:
            t_hi = p[m]
    t_lo -= hi
    t_hi -= lo
    with nogil:
        for it in range(BISECT_ITERS):
            mid = 0.5 * (t_lo + t_hi)
            if mid == t_lo or mid == t_hi:
                break
            if _shift_clip(p, mid, lo, hi, big) > total:
                t_lo = mid
            else:
                t_hi = mid
        _shift_clip(p, t_lo, lo, hi, big)
        _shift_clip(p, t_hi, lo, hi, small)
        _interpolate_to_sum(big, small, total, out)
    return out_arr


cdef double _inner_lambda(const double[::1] phi, const double[::1] w, double mu,
                          double lo, double hi, double[::1] out) nogil:
    cdef Py_ssize_t m
    cdef double den, s = 0.0
    for m in range(phi.shape[0]):
        den = w[m] + mu
        if den <= 0.0:
            out[m] = hi
        else:
            out[m] = _clip(sqrt(phi[m] / den), lo, hi)
        s += out[m]
    return s


cdef void _inner_solve(const double[::1] phi, const double[::1] w, double lo, double hi,
                       double total, double[::1] big, double[::1] small, double[::1] out) nogil:
    cdef Py_ssize_t m, it, n = phi.shape[0]
    cdef double mu_lo, mu_hi, mid, v, wmax = w[0]
    mu_lo = phi[0] / (hi * hi) - w[0]
    mu_hi = phi[0] / (lo * lo) - w[0]
    for m in range(n):
        v = phi[m] / (hi * hi) - w[m]
        if v < mu_lo:
            mu_lo = v
        v = phi[m] / (lo * lo) - w[m]
        if v > mu_hi:
            mu_hi = v
        if w[m] > wmax:
            wmax = w[m]
    if -wmax < mu_lo:
        mu_lo = -wmax
    for it in range(BISECT_ITERS):
        mid = 0.5 * (mu_lo + mu_hi)
        if mid == mu_lo or mid == mu_hi:
            break
        if _inner_lambda(phi, w, mid, lo, hi, big) > total:
            mu_lo = mid
        else:
            mu_hi = mid
    _inner_lambda(phi, w, mu_lo, lo, hi, big)
    _inner_lambda(phi, w, mu_hi, lo, hi, small)
    _interpolate_to_sum(big, small, total, out)


def cccp_spectrum(phi, double lo, double hi, double total, lam0, double tol, int max_iter):
    """CCCP for ``min sum(log lam + phi/lam)`` s.t. box and sum constraints.

    Returns ``(lam, history)``.
    """
    cdef double[::1] p = np.ascontiguousarray(phi, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], m
    lam_arr = np.array(lam0, dtype=np.float64, copy=True)
    cdef double[::1] lam = lam_arr
    cdef double[::1] new = np.empty(n)
    cdef double[::1] w = np.empty(n)
    cdef double[::1] big = np.empty(n)
    cdef double[::1] small = np.empty(n)
    hist_arr = np.empty(max_iter + 1)
    cdef double[::1] hist = hist_arr
    cdef double f, fn
    cdef int it, count = 1
    f = _spectrum_obj(p, lam)
    hist[0] = f
    with nogil:
        for it in range(max_iter):
            for m in range(n):
                w[m] = 1.0 / lam[m]
            _inner_solve(p, w, lo, hi, total, big, small, new)
            fn = _spectrum_obj(p, new)
            if fn > f:
                break
            for m in range(n):
                lam[m] = new[m]
            hist[count] = fn
            count += 1
            if fabs(f - fn) < tol * (fabs(f) if fabs(f) > 1.0 else 1.0):
                f = fn
                break
            f = fn
    return lam_arr, hist_arr[:count].copy()


cdef double _theta_obj(double theta, const double[::1] d, const double[::1] g,
                       double n, double a, double c) nogil:
    cdef Py_ssize_t m
    cdef double s, f = 0.0
    for m in range(d.shape[0]):
        s = a * d[m] * theta + c
        f += n * log(s) + g[m] / s
    return f


def theta_objective(double theta, d, g, double n, double a, double c):
    """Negative log-likelihood (up to ``n M log pi``) of a scaled covariance."""
    cdef double[::1] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    return _theta_obj(theta, dv, gv, n, a, c)


cdef double _cccp_h(double t, double slope, const double[::1] d, const double[::1] g,
                    double a, double c) nogil:
    cdef Py_ssize_t m
    cdef double ad, s, out = slope
    for m in range(d.shape[0]):
        ad = a * d[m]
        s = ad * t + c
        out -= g[m] * ad / (s * s)
    return out


cdef double _theta_cccp_step(double theta_t, const double[::1] d, const double[::1] g,
                             double n, double a, double c, double lo, double hi) nogil:
    cdef Py_ssize_t m
    cdef int it
    cdef double slope = 0.0, ad, x0, x1, mid
    for m in range(d.shape[0]):
        ad = a * d[m]
        slope += n * ad / (ad * theta_t + c)
    if _cccp_h(lo, slope, d, g, a, c) >= 0.0:
        return lo
    if _cccp_h(hi, slope, d, g, a, c) <= 0.0:
        return hi
    x0 = lo
    x1 = hi
    for it in range(BISECT_ITERS):
        mid = 0.5 * (x0 + x1)
        if mid == x0 or mid == x1:
            break
        if _cccp_h(mid, slope, d, g, a, c) > 0.0:
            x1 = mid
        else:
            x0 = mid
    return 0.5 * (x0 + x1)


cdef double _obj_log(double u, const double[::1] d, const double[::1] g, double n, double a, double c) nogil:
    return _theta_obj(exp(u), d, g, n, a, c)


def theta_mle(d, g, double n, double a, double c, double lo, double hi,
              double theta0, double tol, int max_iter):
    """Minimize ``sum(n log(a d theta + c) + g / (a d theta + c))`` over ``[lo, hi]``."""
    cdef double[::1] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef Py_ssize_t m, nd = dv.shape[0]
    cdef int it, j, jbest
    cdef double theta, f, new, fn, gr, hs, s, ad
    cdef double ulo, uhi, u, du, u0, u1, x1, x2, f1, f2, fv, best_f, best_t
    with nogil:
        theta = _clip(theta0, lo, hi)
        f = _theta_obj(theta, dv, gv, n, a, c)
        for it in range(max_iter):
            new = _theta_cccp_step(theta, dv, gv, n, a, c, lo, hi)
            fn = _theta_obj(new, dv, gv, n, a, c)
            if fn > f:
                break
            if fabs(f - fn) < tol * (fabs(f) if fabs(f) > 1.0 else 1.0):
                theta = new
                f = fn
                break
            theta = new
            f = fn
        for it in range(NEWTON_ITERS):
            gr = 0.0
            hs = 0.0
            for m in range(nd):
                ad = a * dv[m]
                s = ad * theta + c
                gr += ad * (n * s - gv[m]) / (s * s)
                hs += ad * ad * (2.0 * gv[m] - n * s) / (s * s * s)
            if hs <= 0.0 or gr == 0.0:
                break
            new = _clip(theta - gr / hs, lo, hi)
            fn = _theta_obj(new, dv, gv, n, a, c)
            if not fn < f:
                break
            theta = new
            f = fn
        best_f = f
        best_t = theta

        ulo = log(lo)
        uhi = log(hi)
        du = (uhi - ulo) / (SCAN_POINTS - 1)
        jbest = 0
        fv = _obj_log(ulo, dv, gv, n, a, c)
        for j in range(1, SCAN_POINTS):
            fn = _obj_log(ulo + j * du, dv, gv, n, a, c)
            if fn < fv:
                fv = fn
                jbest = j
        u0 = ulo + (jbest - 1 if jbest > 0 else 0) * du
        u1 = ulo + (jbest + 1 if jbest < SCAN_POINTS - 1 else SCAN_POINTS - 1) * du
        x1 = u1 - INV_PHI * (u1 - u0)
        x2 = u0 + INV_PHI * (u1 - u0)
        f1 = _obj_log(x1, dv, gv, n, a, c)
        f2 = _obj_log(x2, dv, gv, n, a, c)
        for it in range(GOLDEN_ITERS):
            if f1 <= f2:
                u1 = x2
                x2 = x1
                f2 = f1
                x1 = u1 - INV_PHI * (u1 - u0)
                f1 = _obj_log(x1, dv, gv, n, a, c)
            else:
                u0 = x1
                x1 = x2
                f1 = f2
                x2 = u0 + INV_PHI * (u1 - u0)
                f2 = _obj_log(x2, dv, gv, n, a, c)
        u = x1 if f1 <= f2 else x2
        fn = _obj_log(u, dv, gv, n, a, c)
        if fn < best_f:
            best_f = fn
            best_t = exp(u)
        if fv < best_f:
            best_f = fv
            best_t = exp(ulo + jbest * du)
        if lo <= theta0 <= hi:
            fn = _theta_obj(theta0, dv, gv, n, a, c)
            if fn < best_f:
                best_f = fn
                best_t = theta0
    return best_t
