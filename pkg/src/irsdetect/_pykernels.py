"""Pure-Python (numpy) versions of the numerical kernels.

Same signatures and semantics as the compiled ``_kernels`` extension; used
when the extension is unavailable or ``IRSDETECT_PURE_PYTHON`` is set.
"""

import math

import numpy as np

BISECT_ITERS = 200
SCAN_POINTS = 64
GOLDEN_ITERS = 90
NEWTON_ITERS = 30
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def spectrum_objective(phi, lam):
    """``sum(log(lam) + phi / lam)``."""
    lam = np.asarray(lam, dtype=float)
    return float(np.sum(np.log(lam) + np.asarray(phi, dtype=float) / lam))


def _interpolate_to_sum(x_big, x_small, total):
    s_big = x_big.sum()
    s_small = x_small.sum()
    if s_big - s_small <= 0.0:
        return x_small.copy()
    t = (total - s_small) / (s_big - s_small)
    t = min(max(t, 0.0), 1.0)
    return x_small + t * (x_big - x_small)


def project_spectrum(phi, lo, hi, total):
    """Euclidean projection of ``phi`` onto ``{lo <= x <= hi, sum(x) = total}``."""
    phi = np.asarray(phi, dtype=float)
    # x(tau) = clip(phi - tau) is non-increasing in tau.
    t_lo = float(np.min(phi)) - hi
    t_hi = float(np.max(phi)) - lo
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (t_lo + t_hi)
        if mid == t_lo or mid == t_hi:
            break
        if np.clip(phi - mid, lo, hi).sum() > total:
            t_lo = mid
        else:
            t_hi = mid
    return _interpolate_to_sum(np.clip(phi - t_lo, lo, hi), np.clip(phi - t_hi, lo, hi), total)


def _inner_lambda(phi, w, mu, lo, hi):
    den = w + mu
    out = np.full_like(phi, hi)
    pos = den > 0.0
    out[pos] = np.clip(np.sqrt(phi[pos] / den[pos]), lo, hi)
    return out


def _inner_solve(phi, w, lo, hi, total):
    # sum(lambda(mu)) is non-increasing in mu; these endpoints pin every
    # coordinate to hi (mu_lo) or lo (mu_hi).
    mu_lo = min(float(np.min(phi / hi**2 - w)), -float(np.max(w)))
    mu_hi = float(np.max(phi / lo**2 - w))
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (mu_lo + mu_hi)
        if mid == mu_lo or mid == mu_hi:
            break
        if _inner_lambda(phi, w, mid, lo, hi).sum() > total:
            mu_lo = mid
        else:
            mu_hi = mid
    return _interpolate_to_sum(
        _inner_lambda(phi, w, mu_lo, lo, hi), _inner_lambda(phi, w, mu_hi, lo, hi), total
    )


def cccp_spectrum(phi, lo, hi, total, lam0, tol, max_iter):
    """CCCP for ``min sum(log lam + phi/lam)`` s.t. box and sum constraints.

    Returns ``(lam, history)`` where ``history`` holds the objective at the
    start point and after every accepted outer iteration.
    """
    phi = np.asarray(phi, dtype=float)
    lam = np.asarray(lam0, dtype=float).copy()
    f = spectrum_objective(phi, lam)
    history = [f]
    for _ in range(int(max_iter)):
        new = _inner_solve(phi, 1.0 / lam, lo, hi, total)
        fn = spectrum_objective(phi, new)
        if fn > f:
            # Only possible through rounding in the inner solve.
            break
        lam = new
        history.append(fn)
        done = abs(f - fn) < tol * max(1.0, abs(f))
        f = fn
        if done:
            break
    return lam, np.asarray(history)


def theta_objective(theta, d, g, n, a, c):
    """Negative log-likelihood (up to ``n M log pi``) of a scaled covariance."""
    s = a * d * theta + c
    return float(np.sum(n * np.log(s) + g / s))


def _theta_grad(theta, d, g, n, a, c):
    s = a * d * theta + c
    ad = a * d
    return float(np.sum(ad * (n * s - g) / s**2)), float(np.sum(ad**2 * (2.0 * g - n * s) / s**3))


def _theta_cccp_step(theta_t, d, g, n, a, c, lo, hi):
    ad = a * d
    slope = float(np.sum(n * ad / (ad * theta_t + c)))

    def h(t):
        return slope - float(np.sum(g * ad / (ad * t + c) ** 2))

    if h(lo) >= 0.0:
        return lo
    if h(hi) <= 0.0:
        return hi
    x0, x1 = lo, hi
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (x0 + x1)
        if mid == x0 or mid == x1:
            break
        if h(mid) > 0.0:
            x1 = mid
        else:
            x0 = mid
    return 0.5 * (x0 + x1)


def _golden_log(f, u0, u1):
    x1 = u1 - INV_PHI * (u1 - u0)
    x2 = u0 + INV_PHI * (u1 - u0)
    f1, f2 = f(x1), f(x2)
    for _ in range(GOLDEN_ITERS):
        if f1 <= f2:
            u1, x2, f2 = x2, x1, f1
            x1 = u1 - INV_PHI * (u1 - u0)
            f1 = f(x1)
        else:
            u0, x1, f1 = x1, x2, f2
            x2 = u0 + INV_PHI * (u1 - u0)
            f2 = f(x2)
    return x1 if f1 <= f2 else x2


def theta_mle(d, g, n, a, c, lo, hi, theta0, tol, max_iter):
    """Minimize ``sum(n log(a d theta + c) + g / (a d theta + c))`` over ``[lo, hi]``.

    CCCP (tangent on the concave log term) with Newton polishing, then a
    log-grid scan refined by golden section; the best of those and
    ``theta0`` is returned.
    """
    d = np.asarray(d, dtype=float)
    g = np.asarray(g, dtype=float)

    def obj(t):
        return theta_objective(t, d, g, n, a, c)

    theta = min(max(theta0, lo), hi)
    f = obj(theta)
    for _ in range(int(max_iter)):
        new = _theta_cccp_step(theta, d, g, n, a, c, lo, hi)
        fn = obj(new)
        if fn > f:
            break
        done = abs(f - fn) < tol * max(1.0, abs(f))
        theta, f = new, fn
        if done:
            break
    for _ in range(NEWTON_ITERS):
        gr, hs = _theta_grad(theta, d, g, n, a, c)
        if hs <= 0.0 or gr == 0.0:
            break
        new = min(max(theta - gr / hs, lo), hi)
        fn = obj(new)
        if not fn < f:
            break
        theta, f = new, fn

    ulo, uhi = math.log(lo), math.log(hi)
    grid = np.linspace(ulo, uhi, SCAN_POINTS)
    vals = [obj(math.exp(u)) for u in grid]
    j = int(np.argmin(vals))
    u = _golden_log(lambda u: obj(math.exp(u)), grid[max(j - 1, 0)], grid[min(j + 1, SCAN_POINTS - 1)])
    # Same preference order as the compiled kernel: strict improvement only.
    best_f, best_t = f, theta
    cands = [(obj(math.exp(u)), math.exp(u)), (vals[j], math.exp(grid[j]))]
    if lo <= theta0 <= hi:
        cands.append((obj(theta0), theta0))
    for fv, tv in cands:
        if fv < best_f:
            best_f, best_t = fv, tv
    return best_t
