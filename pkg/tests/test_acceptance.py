"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line with the
measured quantity before asserting. The Monte-Carlo runs are shared
through module-scoped fixtures; the whole module takes a few minutes.
"""

import math

import numpy as np
import pytest

from irsdetect import _backend, cli
from irsdetect.channel import CcdWindow, Hypothesis, generate_ccd_window, sample_cascaded_channel
from irsdetect.covariance import IrsPhaseVector, LinkParams, ScatteringGeometry, one_ring_covariance, theta
from irsdetect.detectors import DetectorConfig, llr_type1, llr_type2
from irsdetect.estimators import EstimatorBounds, ml_theta_estimate, solve_spectrum_problem, theta_loglik
from irsdetect.evaluation import (
    ExperimentConfig,
    build_setup,
    localization_errors,
    operating_point,
    roc_sweep,
    run_trials,
    stale_mmse_diagnostic,
)
from conftest import cn, random_psd

pytestmark = pytest.mark.slow

TRIALS = 2000
PFA_GRID = (0.01, 0.02, 0.05, 0.1, 0.2)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:>2} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return emit


_runs = {}


def tradeoff_log(snr_db, delta_chi_deg):
    key = (snr_db, delta_chi_deg)
    if key not in _runs:
        _runs[key] = run_trials(ExperimentConfig(snr_db=snr_db, delta_chi_deg=delta_chi_deg, trials_per_hypothesis=TRIALS))
    return _runs[key]


def test_1_operating_point(report):
    log = tradeoff_log(15.0, 1.25)
    pts = {d: operating_point(log, d, 0.05) for d in ("TypeI", "TypeII")}
    ok = all(p.p_fa <= 0.05 and p.p_md <= 0.15 for p in pts.values())
    detail = ", ".join(f"{d} P_FA={p.p_fa:.4f} P_MD={p.p_md:.4f} ({p.n_md}/{p.n_change})" for d, p in pts.items())
    assert report(1, ok, f"SNR 15 dB, 1.25 deg, {TRIALS}/hyp: {detail}; bound P_MD <= 0.15")


def test_2_ordering(report):
    pairs = [
        ((15.0, 1.25), (15.0, 1.5)),
        ((5.0, 1.25), (5.0, 1.5)),
        ((5.0, 1.25), (15.0, 1.25)),
        ((5.0, 1.5), (15.0, 1.5)),
    ]
    worst = -math.inf
    lines = []
    for worse, better in pairs:
        lw, lb = tradeoff_log(*worse), tradeoff_log(*better)
        for det in ("TypeI", "TypeII"):
            for pfa in PFA_GRID:
                d = operating_point(lb, det, pfa).p_md - operating_point(lw, det, pfa).p_md
                worst = max(worst, d)
        pm = [operating_point(lw, "TypeI", 0.05).p_md, operating_point(lb, "TypeI", 0.05).p_md,
              operating_point(lw, "TypeII", 0.05).p_md, operating_point(lb, "TypeII", 0.05).p_md]
        lines.append(f"{worse}->{better}: P_MD@5% I {pm[0]:.3f}->{pm[1]:.3f}, II {pm[2]:.3f}->{pm[3]:.3f}")
    ok = worst <= 0.02
    assert report(2, ok, f"max P_MD increase {worst:+.4f} over P_FA grid {PFA_GRID} (slack 0.02); " + "; ".join(lines))


def test_3_cascaded_moment_oracle(report):
    rng = np.random.default_rng(3)
    m, n = 8, 32
    c_bi = one_ring_covariance(ScatteringGeometry(m, 20.0, 10.0))
    c_ib = one_ring_covariance(ScatteringGeometry(n, -15.0, 5.0))
    c_iu = one_ring_covariance(ScatteringGeometry(n, 40.0, 5.0))
    phi = IrsPhaseVector.random(n, rng)
    link = LinkParams(beta_r=0.8, beta_t=1.5)
    h = sample_cascaded_channel(c_iu, c_bi, c_ib, phi, link, rng, size=100_000)
    emp = h.T @ h.conj() / h.shape[0]
    v = link.gain * theta(phi, c_ib, c_iu) * c_bi.entries
    err = np.linalg.norm(emp - v) / np.linalg.norm(v)
    assert report(3, err < 0.02, f"relative Frobenius error {err:.4f} at 1e5 draws, M=8, N=32 (bound 0.02)")


def _grid_opt(phi, lo, hi, total, step=0.01):
    g = np.arange(lo, hi + 1e-12, step)
    l1, l2 = np.meshgrid(g, g, indexing="ij")
    l3 = total - l1 - l2
    ok = (l3 >= lo) & (l3 <= hi)
    l3 = np.where(ok, l3, 1.0)
    f = np.log(l1) + phi[0] / l1 + np.log(l2) + phi[1] / l2 + np.log(l3) + phi[2] / l3
    return float(np.min(f[ok]))


def test_4_spectrum_oracle(report):
    rng = np.random.default_rng(4)
    worst_gap, monotone = -math.inf, True
    for _ in range(100):
        phi = rng.gamma(0.6, 2.0, 3)
        a, c = rng.uniform(0.3, 3.0), rng.uniform(0.0, 1.0)
        bounds = EstimatorBounds(rng.uniform(0.01, 0.5), rng.uniform(1.2, 5.0))
        lo, hi, total = bounds.xi_l + c / a, bounds.xi_u + c / a, 3 * (1 + c / a)
        best = _grid_opt(phi, lo, hi, total)
        for name in _backend.BACKENDS:
            lam, hist = solve_spectrum_problem(phi, a, c, bounds, return_history=True, backend=name)
            f = float(np.sum(np.log(lam) + phi / lam))
            worst_gap = max(worst_gap, f - best)
            monotone &= bool(np.all(np.diff(hist) <= 0))
    ok = worst_gap <= 1e-4 and monotone
    assert report(4, ok, f"100 instances x {sorted(_backend.BACKENDS)}: max(obj - grid optimum) = {worst_gap:.2e} (bound 1e-4), CCCP monotone: {monotone}")


def test_5_theta_oracle(report):
    rng = np.random.default_rng(5)
    worst = -math.inf
    for _ in range(100):
        m = int(rng.integers(2, 16))
        c_bi = random_psd(rng, m, rank=int(rng.integers(1, m + 1)))
        th_bar = rng.uniform(0.2, 5.0)
        link = LinkParams(tx_power=rng.uniform(0.1, 50.0))
        h = cn(rng, (int(rng.integers(1, 30)), m)) @ random_psd(rng, m).entries * rng.uniform(0.3, 3.0)
        est = ml_theta_estimate(h, c_bi, th_bar, link)
        grid = np.logspace(math.log10(th_bar / 10), math.log10(th_bar * 10), 200)
        best = max(theta_loglik(t, h, c_bi, link) for t in grid)
        worst = max(worst, best - theta_loglik(est, h, c_bi, link))
    setup = build_setup(ExperimentConfig())
    b = setup.baseline
    d, u = b.c_bi.eigh()
    s = b.link.gain * 2 * setup.theta_bar * d + b.link.estimation_noise
    h = (cn(rng, (500, d.size)) * np.sqrt(s)) @ u.T
    rel = abs(ml_theta_estimate(h, b.c_bi, setup.theta_bar, b.link) / (2 * setup.theta_bar) - 1)
    ok = worst <= 1e-6 and rel < 0.05
    assert report(5, ok, f"max(grid LL - estimate LL) = {worst:.2e} (bound 1e-6); consistency error {rel:.4f} at S=500 (bound 0.05)")


def test_6_zero_llr_identity(report):
    setup = build_setup(ExperimentConfig(delta_chi_deg=1.25))
    cfg = ExperimentConfig().detector_config()
    rng = np.random.default_rng(6)
    worst = 0.0
    for hyp in (Hypothesis.H0, Hypothesis.H1, Hypothesis.H2):
        for _ in range(30):
            w = generate_ccd_window(setup.scenario(hyp), 17, rng, "gaussian")
            r1 = llr_type1(w, cfg, estimator=lambda tail: w.baseline_c_bi)
            r2 = llr_type2(w, cfg, estimator=lambda tail: w.baseline_theta)
            worst = max(worst, np.max(np.abs(r1.llrs)), np.max(np.abs(r2.llrs)))
    assert report(6, worst <= 1e-9, f"max |LLR| with pinned estimates over 90 windows = {worst:.1e} (bound 1e-9)")


def test_7_roc_endpoints(report):
    log = tradeoff_log(15.0, 1.25)
    ok, notes = True, []
    for det in ("TypeI", "TypeII"):
        lo, hi = roc_sweep(log, det, [-math.inf, math.inf])
        ok &= (hi.p_fa, hi.p_md) == (0.0, 1.0) and lo.p_fa == 1.0
        pts = roc_sweep(log, det)
        mono = all(b.p_fa <= a.p_fa and b.p_md >= a.p_md for a, b in zip(pts, pts[1:]))
        ok &= mono
        notes.append(f"{det}: +inf->({hi.p_fa:g},{hi.p_md:g}) -inf->P_FA {lo.p_fa:g}, monotone over {len(pts)} thresholds: {mono}")
    assert report(7, ok, "; ".join(notes))


def test_8_localization(report):
    log = run_trials(ExperimentConfig(snr_db=15.0, delta_chi_deg=5.0, trials_per_hypothesis=200))
    err = localization_errors(log)
    med = {d: float(np.median(np.abs(e))) for d, e in err.items()}
    ok = all(v <= 2 for v in med.values())
    assert report(8, ok, f"median |i - nu| over 200 trials: Type I (H1) {med['TypeI']:g}, Type II (H2) {med['TypeII']:g} (bound 2)")


def test_9_determinism(report, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    rc1 = cli.main(["roc", "--trials", "20", "--seed", "99", "--out-dir", str(a)])
    rc2 = cli.main(["roc", "--manifest", str(a / "manifest.json"), "--out-dir", str(b)])
    same = rc1 == rc2 == 0 and (a / "roc.csv").read_bytes() == (b / "roc.csv").read_bytes()
    assert report(9, same, f"roc.csv from manifest rerun byte-identical: {same}")


def test_10_stale_mmse(report):
    fresh, stale = stale_mmse_diagnostic(ExperimentConfig(snr_db=15.0, delta_chi_deg=5.0), samples=20_000)
    ratio = stale / fresh
    assert report(10, ratio > 1.05, f"mse_stale/mse_fresh = {ratio:.3f} at 5 deg, 15 dB, 2e4 samples (bound > 1.05)")
