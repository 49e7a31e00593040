"""Three-step LLR change detection on one CCD window.

Step I tests for a change of the BS receive covariance, Step II for a
change of the IRS-side scalar, and Step III resolves windows where both
fire by comparing the two full-window likelihoods.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channel import CcdWindow
from .covariance import HermitianCovariance, LinkParams
from .estimators import (
    EstimatorBounds,
    SpectrumFit,
    _theta_mle,
    sample_covariance,
    solve_spectrum_problem,
)

__all__ = (
    "Verdict",
    "DetectorConfig",
    "Decision",
    "Type1Result",
    "Type2Result",
    "gaussian_logpdf",
    "llr_type1",
    "llr_type2",
    "segment_loglik",
    "confusion_llr",
    "resolve_confusion",
    "detect",
)

LOG_PI = math.log(math.pi)


class Verdict(str, enum.Enum):
    NO_CHANGE = "NoChange"
    TYPE_I = "TypeI"
    TYPE_II = "TypeII"


@dataclass(frozen=True)
class DetectorConfig:
    """Thresholds and estimator settings of the detection pipeline.

    A detector fires when its maximum LLR is strictly above its threshold.
    Step III declares Type I when the confusion LLR is strictly above
    ``omega_1_2`` and Type II otherwise (ties go to Type II).
    """

    omega_c: float = 0.0
    omega_theta: float = 0.0
    omega_1_2: float = 0.0
    bounds: EstimatorBounds = field(default_factory=EstimatorBounds)
    min_tail: int = 2
    theta_tol: float = 1e-10

    def __post_init__(self):
        if int(self.min_tail) != self.min_tail or self.min_tail < 1:
            raise ValueError("min_tail must be an integer >= 1")

    def candidates(self, k: int) -> np.ndarray:
        """1-based candidate change times ``1 .. K - min_tail + 1``."""
        if self.min_tail > k:
            raise ValueError(f"min_tail={self.min_tail} exceeds the window length K={k}")
        return np.arange(1, k - self.min_tail + 2)


@dataclass(frozen=True)
class Decision:
    verdict: Verdict
    change_time_estimate: int | None
    llr_c: float
    llr_theta: float
    llr_confusion: float | None = None
    i_c: int | None = None
    i_theta: int | None = None


@dataclass(frozen=True, eq=False)
class Type1Result:
    best_i: int
    best_llr: float
    estimate: HermitianCovariance
    llrs: np.ndarray


@dataclass(frozen=True, eq=False)
class Type2Result:
    best_i: int
    best_llr: float
    theta_hat: float
    llrs: np.ndarray


class _Model:
    """Eigen-factored ``beta_r beta_t theta C + (sigma^2/w) I``."""

    def __init__(self, c_bi, link: LinkParams):
        d, u = np.linalg.eigh(np.asarray(c_bi, dtype=complex))
        self.d = np.clip(d, 0.0, None)
        self.u = u
        self.link = link

    def energies(self, h: np.ndarray) -> np.ndarray:
        """``|U^H h|^2`` per sample and eigendirection."""
        return np.abs(h @ self.u.conj()) ** 2

    def logpdf(self, h: np.ndarray, theta: float) -> np.ndarray:
        s = self.link.gain * theta * self.d + self.link.estimation_noise
        e = self.energies(h)
        return -(e / s).sum(axis=-1) - np.log(s).sum() - self.d.size * LOG_PI


def gaussian_logpdf(h_bar, c_bi, theta: float, link: LinkParams):
    """Log-density of ``CN(0, beta_r beta_t theta C_BI + (sigma^2/w) I)``.

    ``h_bar`` may be one ``(M,)`` vector (returns a float) or a ``(S, M)``
    stack (returns an ``(S,)`` array).
    """
    h = np.asarray(h_bar, dtype=complex)
    out = _Model(c_bi, link).logpdf(np.atleast_2d(h), theta)
    return float(out[0]) if h.ndim == 1 else out


def _suffix_sums(x: np.ndarray) -> np.ndarray:
    """``out[i] = sum(x[i:])`` along axis 0, with a trailing zero row."""
    out = np.zeros((x.shape[0] + 1,) + x.shape[1:])
    out[:-1] = np.cumsum(x[::-1], axis=0)[::-1]
    return out


def _argmax_first(values: np.ndarray) -> int:
    return int(np.argmax(values))


def llr_type1(
    window: CcdWindow,
    config: DetectorConfig,
    estimator: Callable[[np.ndarray], HermitianCovariance] | None = None,
) -> Type1Result:
    """Type I statistic: LLR maximized over the candidate change time.

    For each candidate ``i`` the post-change covariance is fitted on the tail
    ``h_i .. h_K`` by constrained ML (or by ``estimator(tail)`` when given)
    and the tail log-likelihood is compared with the baseline covariance at
    the baseline ``theta``. Ties in the maximum go to the smallest ``i``.
    """
    h = window.samples
    link = window.link
    theta_bar = window.baseline_theta
    base = _Model(window.baseline_c_bi, link)
    base_tail = _suffix_sums(base.logpdf(h, theta_bar))
    cands = config.candidates(window.k)
    llrs = np.empty(cands.size)

    if estimator is not None:
        fits = []
        for j, i in enumerate(cands):
            c_hat = estimator(h[i - 1 :])
            fits.append(c_hat)
            # Same slice and summation order on both sides, so identical models give exactly 0.
            tail = h[i - 1 :]
            llrs[j] = np.sum(gaussian_logpdf(tail, c_hat, theta_bar, link)) - np.sum(base.logpdf(tail, theta_bar))
        best = _argmax_first(llrs)
        return Type1Result(int(cands[best]), float(llrs[best]), fits[best], llrs)

    a = link.gain * theta_bar
    c = link.estimation_noise
    m = h.shape[1]
    covs = np.stack([sample_covariance(h, i) for i in cands])
    evals, evecs = np.linalg.eigh(covs)
    evals = np.clip(evals[:, ::-1], 0.0, None)
    evecs = evecs[:, :, ::-1]
    lams = []
    for j, i in enumerate(cands):
        n = window.k - i + 1
        lam = solve_spectrum_problem(evals[j] / a, a, c, config.bounds)
        lams.append(lam)
        s = a * lam
        # Fitted covariance shares the sample eigenvectors, so the quadratic
        # term reduces to sum(phi / s).
        tail_ll = -n * (m * LOG_PI + np.log(s).sum() + (evals[j] / s).sum())
        llrs[j] = tail_ll - base_tail[i - 1]
    best = _argmax_first(llrs)
    fit = SpectrumFit(evecs[best], lams[best], evals[best], a, c)
    return Type1Result(int(cands[best]), float(llrs[best]), fit.covariance, llrs)


def llr_type2(
    window: CcdWindow,
    config: DetectorConfig,
    estimator: Callable[[np.ndarray], float] | None = None,
) -> Type2Result:
    """Type II statistic: LLR of a scalar power change, maximized over ``i``."""
    h = window.samples
    link = window.link
    theta_bar = window.baseline_theta
    base = _Model(window.baseline_c_bi, link)
    energies = _suffix_sums(base.energies(h))
    cands = config.candidates(window.k)
    llrs = np.empty(cands.size)
    thetas = np.empty(cands.size)
    a = link.gain
    c = link.estimation_noise
    m = base.d.size

    def tail_ll(theta, g, n):
        s = a * theta * base.d + c
        return -(n * m * LOG_PI + n * np.log(s).sum() + (g / s).sum())

    for j, i in enumerate(cands):
        n = window.k - i + 1
        g = energies[i - 1]
        if estimator is not None:
            th = float(estimator(h[i - 1 :]))
        else:
            th = _theta_mle(base.d, g, n, theta_bar, link, config.theta_tol)
        thetas[j] = th
        llrs[j] = tail_ll(th, g, n) - tail_ll(theta_bar, g, n)
    best = _argmax_first(llrs)
    return Type2Result(int(cands[best]), float(llrs[best]), float(thetas[best]), llrs)


def segment_loglik(window: CcdWindow, change_time: int, c_bi, theta: float) -> float:
    """Full-window log-likelihood: baseline before ``change_time``, ``(c_bi, theta)`` from it on."""
    h = window.samples
    pre = gaussian_logpdf(h[: change_time - 1], window.baseline_c_bi, window.baseline_theta, window.link)
    post = gaussian_logpdf(h[change_time - 1 :], c_bi, theta, window.link)
    return float(np.sum(pre) + np.sum(post))


def confusion_llr(window: CcdWindow, type1: Type1Result, type2: Type2Result) -> float:
    """``log p(H1) - log p(H2)`` at the two detectors' fitted segmentations."""
    ll1 = segment_loglik(window, type1.best_i, type1.estimate, window.baseline_theta)
    ll2 = segment_loglik(window, type2.best_i, window.baseline_c_bi, type2.theta_hat)
    return ll1 - ll2


def resolve_confusion(window: CcdWindow, type1: Type1Result, type2: Type2Result, config: DetectorConfig):
    """Step III. Returns ``(verdict, confusion_llr)``."""
    diff = confusion_llr(window, type1, type2)
    verdict = Verdict.TYPE_I if diff > config.omega_1_2 else Verdict.TYPE_II
    return verdict, diff


def combine(llr_c, llr_theta, llr_confusion, omega_c, omega_theta, omega_1_2) -> Verdict:
    """Pipeline verdict from the three raw statistics and thresholds."""
    fire1 = llr_c > omega_c
    fire2 = llr_theta > omega_theta
    if fire1 and fire2:
        return Verdict.TYPE_I if llr_confusion > omega_1_2 else Verdict.TYPE_II
    if fire1:
        return Verdict.TYPE_I
    if fire2:
        return Verdict.TYPE_II
    return Verdict.NO_CHANGE


def detect(window: CcdWindow, config: DetectorConfig, *, always_resolve: bool = False) -> Decision:
    """Run Steps I-III on one window.

    With ``always_resolve`` the confusion LLR is computed even when fewer
    than two detectors fire, so verdicts can be re-derived for other
    thresholds afterwards.
    """
    r1 = llr_type1(window, config)
    r2 = llr_type2(window, config)
    fire1 = r1.best_llr > config.omega_c
    fire2 = r2.best_llr > config.omega_theta
    conf = None
    if always_resolve or (fire1 and fire2):
        conf = confusion_llr(window, r1, r2)
    verdict = combine(r1.best_llr, r2.best_llr, conf, config.omega_c, config.omega_theta, config.omega_1_2)
    if verdict is Verdict.TYPE_I:
        t = r1.best_i
    elif verdict is Verdict.TYPE_II:
        t = r2.best_i
    else:
        t = None
    return Decision(verdict, t, r1.best_llr, r2.best_llr, conf, r1.best_i, r2.best_i)
