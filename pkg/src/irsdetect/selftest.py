"""Fast numerical oracles run by ``irsdetect selftest``.

Each check compares a library routine with an independent brute-force
computation on small instances and returns a list of failed check names.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .channel import CcdWindow
from .covariance import HermitianCovariance, IrsPhaseVector, LinkParams, ScatteringGeometry, one_ring_covariance, theta
from .detectors import DetectorConfig, gaussian_logpdf, llr_type2
from .estimators import EstimatorBounds, ml_theta_estimate, solve_spectrum_problem, theta_loglik
from .evaluation import ExperimentConfig, roc_sweep, run_trials


def _random_psd(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    c = a @ a.conj().T
    return HermitianCovariance(c * n / np.trace(c).real)


def check_one_ring(rng):
    g = ScatteringGeometry(4, 30.0, 10.0, 0.5)
    c = np.asarray(one_ring_covariance(g))
    p = 20000
    alpha = np.deg2rad(30.0 + (np.arange(p) + 0.5) / p * 20.0 - 10.0)
    lag = np.subtract.outer(np.arange(4), np.arange(4))
    ref = np.exp(-2j * np.pi * 0.5 * lag[..., None] * np.sin(alpha)).mean(axis=-1)
    return np.max(np.abs(c - ref)) < 1e-4


def check_theta(rng):
    cib, ciu = _random_psd(rng, 3), _random_psd(rng, 3)
    phi = IrsPhaseVector.random(3, rng)
    a, b, f = np.asarray(cib), np.asarray(ciu), phi.phases
    ref = sum(f[m].conjugate() * a[m, n] * b[n, m] * f[n] for m in range(3) for n in range(3))
    return abs(theta(phi, cib, ciu) - ref.real) < 1e-10


def check_logpdf(rng):
    c = _random_psd(rng, 3)
    link = LinkParams(1.3, 0.7, 2.0, 0.5)
    h = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    s = link.gain * 1.7 * np.asarray(c) + link.estimation_noise * np.eye(3)
    ref = -(h.conj() @ np.linalg.inv(s) @ h).real - math.log(math.pi**3 * np.linalg.det(s).real)
    return abs(gaussian_logpdf(h, c, 1.7, link) - ref) < 1e-9


def check_spectrum(rng):
    bounds = EstimatorBounds(0.1, 3.0)
    for _ in range(3):
        phi = rng.gamma(1.0, 1.0, 3) * 1.5
        a, c = 1.0, 0.2
        lam = solve_spectrum_problem(phi, a, c, bounds)
        lo, hi, total = 0.1 + c / a, 3.0 + c / a, 3 * (1 + c / a)
        f = lambda x: float(np.sum(np.log(x) + phi / x))
        best = math.inf
        for l1 in np.arange(lo, hi + 1e-12, 0.01):
            for l2 in np.arange(lo, hi + 1e-12, 0.01):
                l3 = total - l1 - l2
                if lo <= l3 <= hi:
                    best = min(best, f(np.array([l1, l2, l3])))
        if f(lam) > best + 1e-4:
            return False
    return True


def check_theta_grid(rng):
    c = _random_psd(rng, 4)
    link = LinkParams(1.0, 1.0, 3.0, 1.0)
    s = np.asarray(c) * 1.8 * link.gain + link.estimation_noise * np.eye(4)
    w, v = np.linalg.eigh(s)
    z = (rng.standard_normal((40, 4)) + 1j * rng.standard_normal((40, 4))) / math.sqrt(2)
    tail = (z * np.sqrt(np.clip(w, 0, None))) @ v.T
    th = ml_theta_estimate(tail, c, 1.0, link)
    grid = np.logspace(-1, 1, 200)
    return theta_loglik(th, tail, c, link) >= max(theta_loglik(t, tail, c, link) for t in grid) - 1e-6


def check_micro_type2(rng):
    c = _random_psd(rng, 2)
    link = LinkParams(1.0, 1.0, 2.0, 1.0)
    h = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    win = CcdWindow.from_samples(h, c, 1.0, link)
    res = llr_type2(win, DetectorConfig(min_tail=1))
    best = -math.inf
    for i in range(1, 4):
        tail = h[i - 1 :]
        th = ml_theta_estimate(tail, c, 1.0, link)
        best = max(best, theta_loglik(th, tail, c, link) - theta_loglik(1.0, tail, c, link))
    return abs(res.best_llr - best) < 1e-9


def check_roc_recount(rng):
    tl = run_trials(ExperimentConfig(m=8, n=16, k=7, trials_per_hypothesis=4, seed=7))
    pts = roc_sweep(tl, "TypeI", [-math.inf, 0.0, 10.0, math.inf])
    h0 = [r.llr_c for r in tl.records if r.hypothesis == "H0"]
    ok = all(p.n_fa == sum(1 for x in h0 if x > p.threshold) for p in pts)
    return ok and pts[0].p_fa == 1.0 and (pts[-1].p_fa, pts[-1].p_md) == (0.0, 1.0)


CHECKS = {
    "one-ring covariance vs fine quadrature": check_one_ring,
    "theta vs triple loop": check_theta,
    "gaussian log-density vs dense solve": check_logpdf,
    "spectrum solver vs grid search": check_spectrum,
    "theta estimate vs log-grid search": check_theta_grid,
    "type II statistic vs exhaustive micro-instance": check_micro_type2,
    "ROC counts vs recount": check_roc_recount,
}


def run_selftest(report=None) -> list:
    """Run every check; returns the names of the failed ones."""
    failed = []
    for j, (name, fn) in enumerate(CHECKS.items()):
        rng = np.random.default_rng([12345, j])
        try:
            ok = bool(fn(rng))
        except Exception as exc:  # a crash is a failure of that property
            ok = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        if report is not None:
            report(f"{'ok  ' if ok else 'FAIL'} {name}")
        if not ok:
            failed.append(name)
    return failed
