"""Monte-Carlo experiment engine.

Builds the seeded experiment geometry, simulates CCD windows under each
hypothesis, stores the raw detector statistics, and turns them into
P_FA / P_MD trade-off points for arbitrary thresholds without re-simulation.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .channel import Baseline, ChangeScenario, Hypothesis, complex_normal, generate_ccd_window, mmse_channel_estimate
from .channel import SAMPLERS, sample_gaussian_channel
from .covariance import (
    IrsPhaseVector,
    LinkParams,
    ScatteringGeometry,
    effective_covariance,
    one_ring_covariance,
    theta,
)
from .detectors import DetectorConfig, Verdict, combine, detect
from .estimators import EstimatorBounds

__all__ = (
    "ConfigError",
    "ExperimentConfig",
    "ExperimentSetup",
    "TrialRecord",
    "TrialLog",
    "RocPoint",
    "build_setup",
    "run_trials",
    "resolve_thresholds",
    "threshold_for_pfa",
    "roc_sweep",
    "operating_point",
    "localization_errors",
    "stale_mmse_diagnostic",
)

DETECTORS = ("TypeI", "TypeII")
_HYPS = (Hypothesis.H0, Hypothesis.H1, Hypothesis.H2)


class ConfigError(ValueError):
    """Invalid experiment configuration; ``key`` names the offending field."""

    def __init__(self, key: str, reason: str):
        super().__init__(f"{key}: {reason}")
        self.key = key
        self.reason = reason


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a Monte-Carlo run.

    Thresholds left as ``None`` are calibrated from the H0 trials: the
    detector thresholds to ``target_pfa`` and the Step III threshold to
    ``omega_c - omega_theta``.
    """

    m: int = 32
    n: int = 128
    k: int = 17
    snr_db: float = 15.0
    delta_chi_deg: float = 1.25
    trials_per_hypothesis: int = 2000
    threshold_grid: tuple | None = None
    seed: int = 2024
    sampler_mode: str = "gaussian"
    change_time: int | None = None
    random_change_time: bool = False
    h2_side: str = "ib"
    bs_spread_deg: float = 2.0
    irs_spread_deg: float = 0.75
    element_spacing: float = 0.5
    angle_range_deg: float = 30.0
    irs_phases: str = "cophased"
    xi_l: float = 0.01
    xi_u: float = 10.0
    min_tail: int = 2
    omega_c: float | None = None
    omega_theta: float | None = None
    omega_1_2: float | None = None
    target_pfa: float = 0.05
    workers: int = 1

    def __post_init__(self):
        if self.threshold_grid is not None:
            object.__setattr__(self, "threshold_grid", tuple(float(x) for x in self.threshold_grid))
        self.validate()

    def validate(self):
        for key in ("m", "n", "k", "trials_per_hypothesis", "min_tail", "workers"):
            v = getattr(self, key)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(key, f"must be a positive integer, got {v!r}")
        if self.min_tail > self.k:
            raise ConfigError("min_tail", f"exceeds k={self.k}")
        if not (isinstance(self.seed, (int, np.integer)) and 0 <= self.seed < 2**64):
            raise ConfigError("seed", "must be an integer in [0, 2**64)")
        if self.sampler_mode not in SAMPLERS:
            raise ConfigError("sampler_mode", f"must be one of {SAMPLERS}")
        if self.h2_side not in ("ib", "iu"):
            raise ConfigError("h2_side", "must be 'ib' or 'iu'")
        if self.irs_phases not in ("cophased", "random"):
            raise ConfigError("irs_phases", "must be 'cophased' or 'random'")
        if not math.isfinite(self.snr_db):
            raise ConfigError("snr_db", "must be finite")
        if not (math.isfinite(self.delta_chi_deg) and self.delta_chi_deg >= 0):
            raise ConfigError("delta_chi_deg", "must be a finite non-negative angle")
        for key in ("bs_spread_deg", "irs_spread_deg"):
            if not 0 < getattr(self, key) < 90:
                raise ConfigError(key, "must lie in (0, 90)")
        if not self.element_spacing > 0:
            raise ConfigError("element_spacing", "must be positive")
        if not 0 < self.angle_range_deg < 90:
            raise ConfigError("angle_range_deg", "must lie in (0, 90)")
        if not 0.0 < self.xi_l < 1.0 < self.xi_u:
            raise ConfigError("xi_l", "need 0 < xi_l < 1 < xi_u")
        if not 0.0 < self.target_pfa < 1.0:
            raise ConfigError("target_pfa", "must lie in (0, 1)")
        if self.change_time is not None and not 1 <= self.change_time < self.k:
            raise ConfigError("change_time", f"must lie in [1, {self.k - 1}]")
        if self.threshold_grid is not None:
            g = self.threshold_grid
            if not g:
                raise ConfigError("threshold_grid", "must be non-empty")
            if any(b <= a for a, b in zip(g, g[1:])):
                raise ConfigError("threshold_grid", "must be strictly increasing")

    @property
    def default_change_time(self) -> int:
        return self.change_time if self.change_time is not None else math.ceil(self.k / 2)

    @property
    def bounds(self) -> EstimatorBounds:
        return EstimatorBounds(xi_l=self.xi_l, xi_u=self.xi_u)

    def detector_config(self, omega_c=0.0, omega_theta=0.0, omega_1_2=0.0) -> DetectorConfig:
        return DetectorConfig(omega_c, omega_theta, omega_1_2, bounds=self.bounds, min_tail=self.min_tail)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["threshold_grid"] is not None:
            d["threshold_grid"] = list(d["threshold_grid"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            k = sorted(unknown)[0]
            raise ConfigError(k, "unknown key")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class ExperimentSetup:
    """Seed-determined geometry and the three scenario prototypes."""

    config: ExperimentConfig
    bs_geometry: ScatteringGeometry
    ib_geometry: ScatteringGeometry
    iu_geometry: ScatteringGeometry
    baseline: Baseline
    h1_c_bi: object
    h2_c: object

    @property
    def theta_bar(self) -> float:
        return self.baseline.theta

    def scenario(self, hyp: Hypothesis, change_time: int | None = None) -> ChangeScenario:
        b = self.baseline
        if hyp is Hypothesis.H0:
            return ChangeScenario(hyp, b)
        ct = change_time or self.config.default_change_time
        if hyp is Hypothesis.H1:
            return ChangeScenario(hyp, b, ct, new_c_bi=self.h1_c_bi)
        if self.config.h2_side == "ib":
            return ChangeScenario(hyp, b, ct, new_c_ib=self.h2_c)
        return ChangeScenario(hyp, b, ct, new_c_iu=self.h2_c)

    def describe(self) -> dict:
        return {
            "bs_center_deg": self.bs_geometry.center_angle_deg,
            "ib_center_deg": self.ib_geometry.center_angle_deg,
            "iu_center_deg": self.iu_geometry.center_angle_deg,
            "theta_bar": self.theta_bar,
            "tx_power": self.baseline.link.tx_power,
        }


def cophased_phases(c_ib, c_iu) -> IrsPhaseVector:
    """Unit-modulus phases of the principal eigenvector of ``C_IB o C_IU^T``."""
    _, v = np.linalg.eigh(np.asarray(c_ib) * np.asarray(c_iu).T)
    return IrsPhaseVector.from_angles(np.angle(v[:, -1]))


def build_setup(config: ExperimentConfig) -> ExperimentSetup:
    """Draw the experiment geometry from the seed.

    Center angles are uniform in ``[-angle_range_deg, angle_range_deg]`` and
    independent of every other setting, so runs that differ only in SNR or
    angle shift share the geometry. The transmit power is set so that
    ``w beta_r beta_t theta_bar / sigma^2`` equals the configured SNR.
    """
    rng = np.random.default_rng([config.seed, 0])
    r = config.angle_range_deg
    chi_bs, chi_ib, chi_iu = rng.uniform(-r, r, size=3)
    random_phases = rng.uniform(0.0, 2.0 * np.pi, size=config.n)
    d = config.element_spacing
    g_bs = ScatteringGeometry(config.m, chi_bs, config.bs_spread_deg, d)
    g_ib = ScatteringGeometry(config.n, chi_ib, config.irs_spread_deg, d)
    g_iu = ScatteringGeometry(config.n, chi_iu, config.irs_spread_deg, d)
    c_bi, c_ib, c_iu = (one_ring_covariance(g) for g in (g_bs, g_ib, g_iu))
    if config.irs_phases == "cophased":
        phi = cophased_phases(c_ib, c_iu)
    else:
        phi = IrsPhaseVector.from_angles(random_phases)
    th = theta(phi, c_ib, c_iu)
    noise_var = 1.0
    link = LinkParams(1.0, 1.0, 10 ** (config.snr_db / 10) * noise_var / th, noise_var)
    baseline = Baseline(c_bi, c_ib, c_iu, phi, link)
    dchi = config.delta_chi_deg
    h1 = one_ring_covariance(g_bs.shifted(dchi))
    h2 = one_ring_covariance((g_ib if config.h2_side == "ib" else g_iu).shifted(dchi))
    return ExperimentSetup(config, g_bs, g_ib, g_iu, baseline, h1, h2)


@dataclass(frozen=True)
class TrialRecord:
    hypothesis: str
    trial: int
    change_time: int
    llr_c: float
    i_c: int
    llr_theta: float
    i_theta: int
    llr_confusion: float

    def verdict(self, omega_c: float, omega_theta: float, omega_1_2: float) -> Verdict:
        return combine(self.llr_c, self.llr_theta, self.llr_confusion, omega_c, omega_theta, omega_1_2)


_FIELDS = [f.name for f in dataclasses.fields(TrialRecord)]
LOG_HEADER = "# irsdetect trial log v1"


@dataclass(eq=False)
class TrialLog:
    """Raw per-window statistics of a run, ordered by (hypothesis, trial)."""

    config: ExperimentConfig
    records: list = field(default_factory=list)
    setup_info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def __eq__(self, other):
        if not isinstance(other, TrialLog):
            return NotImplemented
        return self.config == other.config and self.records == other.records

    def select(self, hypothesis: str) -> list:
        return [r for r in self.records if r.hypothesis == hypothesis]

    def statistic(self, detector: str, hypothesis: str) -> np.ndarray:
        attr = "llr_c" if detector == "TypeI" else "llr_theta"
        return np.array([getattr(r, attr) for r in self.select(hypothesis)])

    def dumps(self) -> str:
        """Line-oriented text form: two comment lines, a CSV header, one row per window."""
        out = io.StringIO()
        out.write(LOG_HEADER + "\n")
        out.write("# config " + json.dumps(self.config.to_dict(), sort_keys=True) + "\n")
        out.write(",".join(_FIELDS) + "\n")
        for r in self.records:
            out.write(
                f"{r.hypothesis},{r.trial},{r.change_time},{r.llr_c!r},{r.i_c},"
                f"{r.llr_theta!r},{r.i_theta},{r.llr_confusion!r}\n"
            )
        return out.getvalue()

    @classmethod
    def loads(cls, text: str) -> "TrialLog":
        lines = text.splitlines()
        if not lines or lines[0] != LOG_HEADER:
            raise ValueError("not an irsdetect trial log")
        if not lines[1].startswith("# config "):
            raise ValueError("trial log is missing its config line")
        config = ExperimentConfig.from_dict(json.loads(lines[1][len("# config ") :]))
        if lines[2].split(",") != _FIELDS:
            raise ValueError("unexpected trial log columns")
        records = []
        for ln in lines[3:]:
            h, t, ct, lc, ic, lt, it, lf = ln.split(",")
            records.append(TrialRecord(h, int(t), int(ct), float(lc), int(ic), float(lt), int(it), float(lf)))
        return cls(config, records)


def _trial_rng(seed: int, hyp_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1, hyp_index, trial])


def _run_chunk(args):
    config, jobs = args
    setup = build_setup(config)
    det = config.detector_config()
    out = []
    for hyp_index, trial in jobs:
        hyp = _HYPS[hyp_index]
        rng = _trial_rng(config.seed, hyp_index, trial)
        ct = 0
        if hyp is not Hypothesis.H0:
            ct = int(rng.integers(2, config.k)) if config.random_change_time else config.default_change_time
        window = generate_ccd_window(setup.scenario(hyp, ct or None), config.k, rng, config.sampler_mode)
        d = detect(window, det, always_resolve=True)
        out.append(TrialRecord(hyp.value, trial, ct, d.llr_c, d.i_c, d.llr_theta, d.i_theta, d.llr_confusion))
    return out


def run_trials(config: ExperimentConfig, progress=None) -> TrialLog:
    """Simulate ``trials_per_hypothesis`` windows for each of H0, H1, H2.

    Each window draws from its own stream seeded by ``(seed, hypothesis,
    trial)``, so the log does not depend on ``workers`` or scheduling.
    H1 shifts the BS-side geometry and H2 the IRS-side geometry by
    ``delta_chi_deg``.
    """
    if not config.delta_chi_deg > 0:
        raise ConfigError("delta_chi_deg", "must be positive to simulate changes")
    setup = build_setup(config)
    jobs = [(h, t) for h in range(3) for t in range(config.trials_per_hypothesis)]
    size = max(1, min(200, len(jobs) // (4 * config.workers) or 1))
    chunks = [(config, jobs[i : i + size]) for i in range(0, len(jobs), size)]
    records = []
    if config.workers == 1:
        results = map(_run_chunk, chunks)
    else:
        pool = ProcessPoolExecutor(max_workers=config.workers)
        results = pool.map(_run_chunk, chunks)
    try:
        for done, chunk in enumerate(results, 1):
            records.extend(chunk)
            if progress is not None:
                progress(done, len(chunks))
    finally:
        if config.workers != 1:
            pool.shutdown()
    return TrialLog(config, records, setup.describe())


def threshold_for_pfa(h0_stats, target_pfa: float) -> float:
    """Smallest observed threshold whose empirical false-alarm rate is at most ``target_pfa``.

    A window alarms when its statistic is strictly above the threshold.
    """
    s = np.sort(np.asarray(h0_stats, dtype=float))
    n = s.size
    allowed = int(math.floor(target_pfa * n + 1e-9))
    if allowed >= n:
        return -math.inf
    return float(s[n - allowed - 1])


def resolve_thresholds(log: TrialLog, omega_c=None, omega_theta=None, omega_1_2=None):
    """Fill unset thresholds: config values first, else H0 calibration."""
    cfg = log.config
    omega_c = omega_c if omega_c is not None else cfg.omega_c
    omega_theta = omega_theta if omega_theta is not None else cfg.omega_theta
    omega_1_2 = omega_1_2 if omega_1_2 is not None else cfg.omega_1_2
    if omega_c is None:
        omega_c = threshold_for_pfa(log.statistic("TypeI", "H0"), cfg.target_pfa)
    if omega_theta is None:
        omega_theta = threshold_for_pfa(log.statistic("TypeII", "H0"), cfg.target_pfa)
    if omega_1_2 is None:
        omega_1_2 = omega_c - omega_theta if math.isfinite(omega_c - omega_theta) else 0.0
    return omega_c, omega_theta, omega_1_2


@dataclass(frozen=True)
class RocPoint:
    """One threshold of a sweep with the raw counts behind both rates."""

    detector: str
    threshold: float
    n_fa: int
    n_h0: int
    n_md: int
    n_change: int
    n_misclass: int
    n_h1: int
    n_h2: int

    @property
    def p_fa(self) -> float:
        return self.n_fa / self.n_h0 if self.n_h0 else 0.0

    @property
    def p_md(self) -> float:
        return self.n_md / self.n_change if self.n_change else 0.0

    @property
    def p_fa_exact(self) -> Fraction:
        return Fraction(self.n_fa, self.n_h0)

    @property
    def p_md_exact(self) -> Fraction:
        return Fraction(self.n_md, self.n_change)


def _point(log: TrialLog, detector: str, omega: float, others) -> RocPoint:
    omega_c, omega_theta, omega_1_2 = others
    if detector == "TypeI":
        omega_c, target, other, change = omega, Verdict.TYPE_I, Verdict.TYPE_II, "H1"
    else:
        omega_theta, target, other, change = omega, Verdict.TYPE_II, Verdict.TYPE_I, "H2"
    h0 = log.statistic(detector, "H0")
    n_fa = int(np.sum(h0 > omega))
    n_md = n_mis = 0
    changed = log.select(change)
    for r in changed:
        v = r.verdict(omega_c, omega_theta, omega_1_2)
        if v is not target:
            n_md += 1
            if v is other:
                n_mis += 1
    return RocPoint(
        detector, float(omega), n_fa, int(h0.size), n_md, len(changed), n_mis,
        len(log.select("H1")), len(log.select("H2")),
    )


def roc_sweep(log: TrialLog, detector: str, thresholds=None, **omegas) -> list:
    """P_FA / P_MD of ``detector`` over a threshold grid.

    P_FA counts H0 windows whose statistic exceeds the threshold. P_MD
    counts windows carrying this detector's change type whose full pipeline
    verdict is anything else; the other two thresholds stay at their
    configured (or calibrated) values. Without a grid the sweep uses every
    observed statistic value plus the two infinite endpoints.
    """
    if detector not in DETECTORS:
        raise ValueError(f"detector must be one of {DETECTORS}")
    if not log.records:
        raise ValueError("empty trial log")
    others = resolve_thresholds(log, **omegas)
    if thresholds is None:
        thresholds = log.config.threshold_grid
    if thresholds is None:
        stats = np.concatenate([log.statistic(detector, h) for h in ("H0", "H1", "H2")])
        thresholds = [-math.inf] + sorted(set(stats.tolist())) + [math.inf]
    return [_point(log, detector, float(w), others) for w in thresholds]


def operating_point(log: TrialLog, detector: str, target_pfa: float | None = None) -> RocPoint:
    """Sweep point at the H0-calibrated threshold for ``target_pfa``."""
    target = log.config.target_pfa if target_pfa is None else target_pfa
    omega = threshold_for_pfa(log.statistic(detector, "H0"), target)
    return roc_sweep(log, detector, [omega])[0]


def localization_errors(log: TrialLog) -> dict:
    """Signed change-time errors: Type I statistic on H1 windows, Type II on H2 windows."""
    return {
        "TypeI": np.array([r.i_c - r.change_time for r in log.select("H1")], dtype=int),
        "TypeII": np.array([r.i_theta - r.change_time for r in log.select("H2")], dtype=int),
    }


def stale_mmse_diagnostic(config: ExperimentConfig, samples: int = 20000, noise_var: float | None = None):
    """MSE of the MMSE channel estimator with the true versus the stale covariance.

    Channels are drawn from the post-change covariance (BS-side geometry
    shifted by ``delta_chi_deg``); pilots are ``x = 1``. Returns
    ``(mse_fresh, mse_stale)`` as mean squared error norms per sample.
    ``noise_var`` overrides the noise variance while keeping the transmit
    power of the configured SNR.
    """
    setup = build_setup(config)
    link = setup.baseline.link
    if noise_var is not None:
        link = dataclasses.replace(link, noise_var=noise_var)
    th = setup.theta_bar
    v_old = effective_covariance(link, th, setup.baseline.c_bi)
    v_new = effective_covariance(link, th, setup.h1_c_bi) if config.delta_chi_deg > 0 else v_old
    rng = np.random.default_rng([config.seed, 2])
    h = sample_gaussian_channel(v_new, rng, size=samples)
    y = math.sqrt(link.tx_power) * h + math.sqrt(link.noise_var) * complex_normal(rng, h.shape)
    fresh = mmse_channel_estimate(y, 1.0, v_new, link)
    stale = mmse_channel_estimate(y, 1.0, v_old, link)
    mse = lambda est: float(np.mean(np.sum(np.abs(est - h) ** 2, axis=1)))
    return mse(fresh), mse(stale)
