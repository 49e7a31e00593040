import math
from fractions import Fraction

import numpy as np
import pytest

from irsdetect.channel import Hypothesis
from irsdetect.evaluation import (
    ConfigError,
    ExperimentConfig,
    TrialLog,
    TrialRecord,
    build_setup,
    localization_errors,
    operating_point,
    resolve_thresholds,
    roc_sweep,
    run_trials,
    stale_mmse_diagnostic,
    threshold_for_pfa,
)

SMALL = dict(m=8, n=16, k=9)


@pytest.fixture(scope="module")
def small_log():
    return run_trials(ExperimentConfig(trials_per_hypothesis=30, seed=5, delta_chi_deg=3.0, **SMALL))


def recount(log, detector, omega, oc, ot, o12):
    """Independent single pass over the raw records."""
    n_h0 = n_fa = n_ch = n_md = 0
    change = "H1" if detector == "TypeI" else "H2"
    for r in log.records:
        s1, s2 = r.llr_c, r.llr_theta
        if detector == "TypeI":
            oc_ = omega
            ot_ = ot
            stat = s1
        else:
            oc_ = oc
            ot_ = omega
            stat = s2
        if r.hypothesis == "H0":
            n_h0 += 1
            n_fa += stat > omega
        elif r.hypothesis == change:
            n_ch += 1
            f1, f2 = s1 > oc_, s2 > ot_
            if f1 and f2:
                v = "TypeI" if r.llr_confusion > o12 else "TypeII"
            else:
                v = "TypeI" if f1 else "TypeII" if f2 else "NoChange"
            n_md += v != detector
    return n_fa, n_h0, n_md, n_ch


class TestConfig:
    def test_defaults(self):
        c = ExperimentConfig()
        assert (c.m, c.n, c.k, c.default_change_time) == (32, 128, 17, 9)

    @pytest.mark.parametrize(
        "key,value",
        [("k", 0), ("trials_per_hypothesis", 0), ("threshold_grid", ()), ("threshold_grid", (1.0, 1.0)),
         ("sampler_mode", "exact"), ("change_time", 17), ("xi_l", 1.5), ("target_pfa", 0.0), ("seed", -1)],
    )
    def test_validation_names_key(self, key, value):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig(**{key: value})
        assert exc.value.key == key

    def test_dict_round_trip(self):
        c = ExperimentConfig(threshold_grid=(0.0, 1.0, 2.5), snr_db=5.0)
        assert ExperimentConfig.from_dict(c.to_dict()) == c
        with pytest.raises(ConfigError, match="nope"):
            ExperimentConfig.from_dict({"nope": 1})


class TestSetup:
    def test_geometry_independent_of_snr_and_shift(self):
        a = build_setup(ExperimentConfig(seed=9))
        b = build_setup(ExperimentConfig(seed=9, snr_db=5.0, delta_chi_deg=1.5))
        assert a.bs_geometry == b.bs_geometry and a.ib_geometry == b.ib_geometry
        assert a.theta_bar == b.theta_bar

    def test_snr_definition(self):
        s = build_setup(ExperimentConfig(snr_db=15.0))
        link = s.baseline.link
        assert math.isclose(link.tx_power * link.gain * s.theta_bar / link.noise_var, 10**1.5)

    def test_scenarios(self):
        s = build_setup(ExperimentConfig(delta_chi_deg=1.25))
        assert s.scenario(Hypothesis.H2).post_theta != s.theta_bar
        h1 = s.scenario(Hypothesis.H1)
        assert h1.change_time == 9 and h1.post_theta == s.theta_bar

    def test_cophased_beats_random(self):
        co = build_setup(ExperimentConfig(seed=1))
        rnd = build_setup(ExperimentConfig(seed=1, irs_phases="random"))
        assert co.theta_bar > rnd.theta_bar


class TestRunTrials:
    def test_one_trial_each(self):
        log = run_trials(ExperimentConfig(trials_per_hypothesis=1, **SMALL))
        assert [r.hypothesis for r in log.records] == ["H0", "H1", "H2"]
        assert [r.change_time for r in log.records] == [0, 5, 5]

    def test_deterministic_and_worker_independent(self):
        c = ExperimentConfig(trials_per_hypothesis=4, seed=3, **SMALL)
        a, b = run_trials(c), run_trials(c)
        assert a == b
        p = run_trials(ExperimentConfig(trials_per_hypothesis=4, seed=3, workers=2, **SMALL))
        assert p.records == a.records

    def test_random_change_time_range(self):
        log = run_trials(ExperimentConfig(trials_per_hypothesis=20, random_change_time=True, **SMALL))
        ct = [r.change_time for r in log.records if r.hypothesis != "H0"]
        assert min(ct) >= 2 and max(ct) <= 8 and len(set(ct)) > 3

    def test_zero_shift_rejected(self):
        with pytest.raises(ConfigError, match="delta_chi_deg"):
            run_trials(ExperimentConfig(delta_chi_deg=0.0, trials_per_hypothesis=1, **SMALL))

    def test_serialization_round_trip(self, small_log):
        text = small_log.dumps()
        assert text.splitlines()[2] == "hypothesis,trial,change_time,llr_c,i_c,llr_theta,i_theta,llr_confusion"
        back = TrialLog.loads(text)
        assert back == small_log
        with pytest.raises(ValueError):
            TrialLog.loads("garbage\n")

    def test_type1_dominance_at_1p5_degrees(self):
        log = run_trials(ExperimentConfig(trials_per_hypothesis=200, delta_chi_deg=1.5, seed=11))
        assert np.median(log.statistic("TypeI", "H1")) > np.median(log.statistic("TypeI", "H0"))


class TestRoc:
    def test_endpoints(self, small_log):
        for det in ("TypeI", "TypeII"):
            lo, hi = roc_sweep(small_log, det, [-math.inf, math.inf])
            assert (hi.p_fa, hi.p_md) == (0.0, 1.0)
            assert lo.p_fa == 1.0

    def test_monotone_over_auto_grid(self, small_log):
        for det in ("TypeI", "TypeII"):
            pts = roc_sweep(small_log, det)
            assert all(b.threshold > a.threshold for a, b in zip(pts, pts[1:]))
            assert all(b.p_fa <= a.p_fa and b.p_md >= a.p_md for a, b in zip(pts, pts[1:]))

    def test_recount_oracle(self, small_log):
        oc, ot, o12 = resolve_thresholds(small_log)
        grid = np.linspace(-5, 150, 40)
        for det in ("TypeI", "TypeII"):
            for p in roc_sweep(small_log, det, grid):
                assert (p.n_fa, p.n_h0, p.n_md, p.n_change) == recount(small_log, det, p.threshold, oc, ot, o12)
                assert p.p_fa_exact == Fraction(p.n_fa, p.n_h0) and p.p_fa == p.n_fa / p.n_h0
                assert p.n_misclass <= p.n_md

    def test_configured_thresholds_used(self, small_log):
        pts = roc_sweep(small_log, "TypeI", [0.0], omega_theta=math.inf)
        # Type II never fires, so Step III never overrides Type I.
        expected = sum(1 for r in small_log.select("H1") if r.llr_c <= 0.0)
        assert pts[0].n_md == expected and pts[0].n_misclass == 0

    def test_requires_records(self):
        with pytest.raises(ValueError):
            roc_sweep(TrialLog(ExperimentConfig()), "TypeI")
        with pytest.raises(ValueError):
            roc_sweep(TrialLog(ExperimentConfig(), [TrialRecord("H0", 0, 0, 1.0, 1, 1.0, 1, 0.0)]), "Type3")

    def test_threshold_for_pfa(self):
        s = np.arange(100.0)
        w = threshold_for_pfa(s, 0.05)
        assert np.sum(s > w) == 5
        assert threshold_for_pfa(s, 0.999) == -math.inf or np.sum(s > threshold_for_pfa(s, 0.999)) <= 99
        assert np.sum(np.full(10, 3.0) > threshold_for_pfa(np.full(10, 3.0), 0.5)) == 0

    def test_operating_point(self, small_log):
        p = operating_point(small_log, "TypeII")
        assert p.p_fa <= small_log.config.target_pfa

    def test_localization_errors(self, small_log):
        e = localization_errors(small_log)
        assert e["TypeI"].size == e["TypeII"].size == 30


class TestStaleMmse:
    def test_no_change_equal(self):
        f, s = stale_mmse_diagnostic(ExperimentConfig(delta_chi_deg=0.0), samples=10_000)
        assert abs(s / f - 1) < 0.02

    def test_large_change(self):
        f, s = stale_mmse_diagnostic(ExperimentConfig(delta_chi_deg=5.0), samples=10_000)
        assert s >= f and s / f > 1.05

    def test_noiseless_limit(self):
        base = stale_mmse_diagnostic(ExperimentConfig(delta_chi_deg=0.0), samples=10_000)
        tiny = stale_mmse_diagnostic(ExperimentConfig(delta_chi_deg=0.0), samples=10_000, noise_var=1e-10)
        assert tiny[0] < 1e-6 * base[0] and tiny[1] < 1e-6 * base[1]
