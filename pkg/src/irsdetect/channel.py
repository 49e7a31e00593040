"""Channel sampling, channel estimation and change-scenario windows."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .covariance import HermitianCovariance, IrsPhaseVector, LinkParams, effective_covariance, theta

__all__ = (
    "Hypothesis",
    "ChannelEstimate",
    "Baseline",
    "ChangeScenario",
    "CcdWindow",
    "psd_sqrt",
    "complex_normal",
    "sample_cascaded_channel",
    "sample_gaussian_channel",
    "ml_channel_estimate",
    "mmse_channel_estimate",
    "generate_ccd_window",
)

SAMPLERS = ("cascaded", "gaussian")


class Hypothesis(str, enum.Enum):
    H0 = "H0"
    H1 = "H1"
    H2 = "H2"


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard circularly-symmetric complex normal samples, ``E|z|^2 = 1``."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)


def psd_sqrt(matrix, tol: float = 1e-10) -> np.ndarray:
    """Hermitian square root via eigen-decomposition.

    Negative eigenvalues down to ``-tol * max(1, |lambda|_max)`` are clamped to
    zero; anything more negative raises ``ValueError``.
    """
    m = np.asarray(matrix, dtype=complex)
    d, u = np.linalg.eigh(0.5 * (m + m.conj().T))
    scale = max(1.0, float(np.max(np.abs(d)))) if d.size else 1.0
    if d.size and d[0] < -tol * scale:
        raise ValueError(f"matrix is not PSD (min eigenvalue {d[0]:.3e})")
    return (u * np.sqrt(np.clip(d, 0.0, None))) @ u.conj().T


@dataclass(frozen=True, eq=False)
class ChannelEstimate:
    vector: np.ndarray
    coherence_index: int = 0

    def __post_init__(self):
        v = np.array(self.vector, dtype=complex, copy=True)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError("channel estimate must be a finite 1-D vector")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)


def _rng(rng_state) -> np.random.Generator:
    if isinstance(rng_state, np.random.Generator):
        return rng_state
    return np.random.default_rng(rng_state)


def sample_cascaded_channel(
    c_iu: HermitianCovariance,
    c_bi: HermitianCovariance,
    c_ib: HermitianCovariance,
    phi: IrsPhaseVector,
    link: LinkParams,
    rng_state,
    size: int | None = None,
) -> np.ndarray:
    """Draw the cascaded effective channel ``h = R (phi o t)``.

    ``t ~ CN(0, beta_t C_IU)`` and ``R = C_BI^(1/2) Rt C_IB^(1/2)`` with i.i.d.
    ``CN(0, beta_r)`` entries in ``Rt``, so that ``E[h h^H]`` is
    ``beta_r beta_t theta C_BI``.

    Returns an ``(M,)`` vector, or ``(size, M)`` when ``size`` is given.
    """
    rng = _rng(rng_state)
    n = phi.size
    if c_iu.dim != n or c_ib.dim != n:
        raise ValueError("IRS-side covariances must match the phase vector length")
    s = 1 if size is None else int(size)
    sq_iu = psd_sqrt(c_iu.entries)
    sq_ib = psd_sqrt(c_ib.entries)
    sq_bi = psd_sqrt(c_bi.entries)

    t = math.sqrt(link.beta_t) * complex_normal(rng, (s, n)) @ sq_iu.T
    x = (t * np.asarray(phi.phases)) @ sq_ib.T
    # Rt @ x is exactly CN(0, beta_r |x|^2 I) given x, so the M x N Gaussian
    # matrix never needs to be materialized.
    scale = np.sqrt(link.beta_r) * np.linalg.norm(x, axis=1)
    h = (scale[:, None] * complex_normal(rng, (s, c_bi.dim))) @ sq_bi.T
    return h[0] if size is None else h


def sample_gaussian_channel(v, rng_state, size: int | None = None) -> np.ndarray:
    """Draw ``h ~ CN(0, V)``; ``V`` may be a HermitianCovariance or an array."""
    rng = _rng(rng_state)
    sq = psd_sqrt(np.asarray(v))
    m = sq.shape[0]
    s = 1 if size is None else int(size)
    h = complex_normal(rng, (s, m)) @ sq.T
    return h[0] if size is None else h


def ml_channel_estimate(h_true, link: LinkParams, rng_state, coherence_index: int = 0) -> ChannelEstimate:
    """ML channel estimate ``h + z`` with ``z ~ CN(0, (noise_var / tx_power) I)``."""
    rng = _rng(rng_state)
    h = np.asarray(h_true, dtype=complex)
    noise = math.sqrt(link.estimation_noise) * complex_normal(rng, h.shape)
    return ChannelEstimate(h + noise, coherence_index)


def mmse_channel_estimate(y_p, x_p: complex, v, link: LinkParams) -> np.ndarray:
    """Linear MMSE estimate of ``h`` from the pilot observation ``y_p``.

    ``y_p`` may be a single ``(M,)`` observation or a stack ``(S, M)``.
    """
    vm = np.asarray(v, dtype=complex)
    y = np.asarray(y_p, dtype=complex)
    m = vm.shape[0]
    a = vm + link.estimation_noise * np.eye(m)
    # V (V + cI)^-1 y, solved on the right so rows of a stack stay rows.
    z = np.linalg.solve(a, y.T).T
    return np.conj(x_p) / math.sqrt(link.tx_power) * (z @ vm.T)


@dataclass(frozen=True, eq=False)
class Baseline:
    """Pre-change parameters known to the detector."""

    c_bi: HermitianCovariance
    c_ib: HermitianCovariance
    c_iu: HermitianCovariance
    phi: IrsPhaseVector
    link: LinkParams

    @property
    def theta(self) -> float:
        return theta(self.phi, self.c_ib, self.c_iu)


@dataclass(frozen=True, eq=False)
class ChangeScenario:
    """Ground truth for one CCD interval.

    For ``H1`` supply ``new_c_bi``; for ``H2`` supply ``new_c_ib`` and/or
    ``new_c_iu``. ``change_time`` is the 1-based coherence index of the
    first post-change sample.
    """

    hypothesis: Hypothesis
    baseline: Baseline
    change_time: int | None = None
    new_c_bi: HermitianCovariance | None = None
    new_c_ib: HermitianCovariance | None = None
    new_c_iu: HermitianCovariance | None = None
    _post_theta: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        hyp = Hypothesis(self.hypothesis)
        object.__setattr__(self, "hypothesis", hyp)
        b = self.baseline
        if hyp is Hypothesis.H0:
            if any(x is not None for x in (self.new_c_bi, self.new_c_ib, self.new_c_iu)):
                raise ValueError("H0 scenario cannot carry post-change parameters")
        else:
            if self.change_time is None or self.change_time < 1:
                raise ValueError("change_time must be a positive integer for H1/H2")
        if hyp is Hypothesis.H1:
            if self.new_c_bi is None or self.new_c_ib is not None or self.new_c_iu is not None:
                raise ValueError("H1 changes C_BI only")
            if self.new_c_bi.dim != b.c_bi.dim:
                raise ValueError("post-change C_BI has the wrong dimension")
            if np.array_equal(self.new_c_bi.entries, b.c_bi.entries):
                raise ValueError("H1 post-change C_BI equals the baseline")
        post_theta = b.theta
        if hyp is Hypothesis.H2:
            if self.new_c_bi is not None or (self.new_c_ib is None and self.new_c_iu is None):
                raise ValueError("H2 changes C_IB and/or C_IU only")
            post_theta = theta(b.phi, self.new_c_ib or b.c_ib, self.new_c_iu or b.c_iu)
            if post_theta == b.theta:
                raise ValueError("H2 post-change theta equals the baseline theta")
        object.__setattr__(self, "_post_theta", post_theta)

    @property
    def post_theta(self) -> float:
        return self._post_theta

    @property
    def post_c_bi(self) -> HermitianCovariance:
        return self.new_c_bi if self.new_c_bi is not None else self.baseline.c_bi

    def segments(self, k: int):
        """Yield ``(first, last, c_bi, c_ib, c_iu, theta)`` for the 1-based index ranges of the window."""
        b = self.baseline
        if self.hypothesis is Hypothesis.H0:
            yield 1, k, b.c_bi, b.c_ib, b.c_iu, b.theta
            return
        if not 1 <= self.change_time < k:
            raise ValueError(f"change_time must lie in [1, {k - 1}] for K={k}, got {self.change_time}")
        post = (
            self.post_c_bi,
            self.new_c_ib or b.c_ib,
            self.new_c_iu or b.c_iu,
            self.post_theta,
        )
        if self.change_time > 1:
            yield 1, self.change_time - 1, b.c_bi, b.c_ib, b.c_iu, b.theta
        yield (self.change_time, k) + post


@dataclass(frozen=True, eq=False)
class CcdWindow:
    """K consecutive ML channel estimates plus the genie baseline."""

    estimates: tuple
    baseline_c_bi: HermitianCovariance
    baseline_theta: float
    link: LinkParams
    window_index: int = 1

    def __post_init__(self):
        est = tuple(self.estimates)
        if not est:
            raise ValueError("window must hold at least one estimate")
        idx = [e.coherence_index for e in est]
        if idx != list(range(idx[0], idx[0] + len(idx))):
            raise ValueError("coherence indices must be consecutive")
        if any(e.vector.size != self.baseline_c_bi.dim for e in est):
            raise ValueError("estimate length does not match the baseline dimension")
        if not self.baseline_theta > 0:
            raise ValueError("baseline_theta must be positive")
        object.__setattr__(self, "estimates", est)
        samples = np.stack([e.vector for e in est])
        samples.setflags(write=False)
        object.__setattr__(self, "_samples", samples)

    @property
    def k(self) -> int:
        return len(self.estimates)

    @property
    def samples(self) -> np.ndarray:
        """``(K, M)`` array of the channel estimates."""
        return self._samples

    @classmethod
    def from_samples(cls, samples, baseline_c_bi, baseline_theta, link, window_index: int = 1):
        samples = np.asarray(samples, dtype=complex)
        k = samples.shape[0]
        first = (window_index - 1) * k + 1
        est = tuple(ChannelEstimate(v, first + i) for i, v in enumerate(samples))
        return cls(est, baseline_c_bi, baseline_theta, link, window_index)


def generate_ccd_window(
    scenario: ChangeScenario,
    k: int,
    rng_state,
    sampler_mode: str = "cascaded",
    window_index: int = 1,
) -> CcdWindow:
    """Simulate the K ML channel estimates of one CCD interval.

    Samples before ``change_time`` use the baseline parameters, the rest use
    the post-change ones. The IRS phases stay fixed across the window.
    """
    if sampler_mode not in SAMPLERS:
        raise ValueError(f"sampler_mode must be one of {SAMPLERS}, got {sampler_mode!r}")
    if k < 1:
        raise ValueError("k must be positive")
    rng = _rng(rng_state)
    b = scenario.baseline
    link = b.link
    blocks = []
    for first, last, c_bi, c_ib, c_iu, th in scenario.segments(k):
        n = last - first + 1
        if sampler_mode == "cascaded":
            h = sample_cascaded_channel(c_iu, c_bi, c_ib, b.phi, link, rng, size=n)
        else:
            h = sample_gaussian_channel(effective_covariance(link, th, c_bi), rng, size=n)
        blocks.append(h)
    h = np.concatenate(blocks)
    noisy = h + math.sqrt(link.estimation_noise) * complex_normal(rng, h.shape)
    return CcdWindow.from_samples(noisy, b.c_bi, b.theta, link, window_index)
