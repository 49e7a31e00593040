"""Structured covariance matrices for the IRS-assisted uplink.

One-ring covariance synthesis for uniform linear arrays, the IRS-side scalar
statistic ``theta`` and the covariance of the effective user-to-BS channel.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

__all__ = (
    "HermitianCovariance",
    "ScatteringGeometry",
    "IrsPhaseVector",
    "LinkParams",
    "one_ring_covariance",
    "theta",
    "effective_covariance",
    "achievable_rate",
)

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-8
TRACE_RTOL = 1e-8


def _frozen(a):
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HermitianCovariance:
    """Hermitian positive semidefinite matrix with a fixed trace.

    Parameters
    ----------
    entries : (M, M) array_like
        Complex matrix. Copied and made read-only.
    trace_target : float, optional
        Expected trace. Defaults to ``dim`` (normalized covariance).
    """

    entries: np.ndarray
    trace_target: float | None = None

    def __post_init__(self):
        e = _frozen(self.entries)
        if e.ndim != 2 or e.shape[0] != e.shape[1] or e.shape[0] == 0:
            raise ValueError(f"entries must be a non-empty square matrix, got shape {e.shape}")
        object.__setattr__(self, "entries", e)
        target = float(e.shape[0]) if self.trace_target is None else float(self.trace_target)
        object.__setattr__(self, "trace_target", target)
        scale = max(1.0, float(np.max(np.abs(e))))
        if np.max(np.abs(e - e.conj().T)) > HERMITIAN_TOL * scale:
            raise ValueError("matrix is not Hermitian")
        if self.min_eigenvalue < -PSD_TOL * scale:
            raise ValueError(f"matrix is not PSD (min eigenvalue {self.min_eigenvalue:.3e})")
        tr = float(np.trace(e).real)
        if abs(tr - target) > TRACE_RTOL * max(abs(target), 1e-300):
            raise ValueError(f"trace {tr!r} differs from target {target!r}")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def eigh(self):
        """Eigen-decomposition ``(d, U)`` with ``d`` ascending and clipped at zero."""
        d, u = np.linalg.eigh(self.entries)
        return np.clip(d, 0.0, None), u

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, HermitianCovariance):
            return NotImplemented
        return self.trace_target == other.trace_target and np.array_equal(self.entries, other.entries)

    __hash__ = None


@dataclass(frozen=True)
class ScatteringGeometry:
    """One-ring scattering geometry seen by a uniform linear array.

    Angles are in degrees; ``angular_spread_deg`` is the half-width of the
    scatterer ring as seen from the array.
    """

    num_elements: int
    center_angle_deg: float
    angular_spread_deg: float
    element_spacing_wavelengths: float = 0.5

    def __post_init__(self):
        if int(self.num_elements) != self.num_elements or self.num_elements < 1:
            raise ValueError(f"num_elements must be a positive integer, got {self.num_elements!r}")
        if not 0.0 < self.angular_spread_deg < 90.0:
            raise ValueError(f"angular_spread_deg must lie in (0, 90), got {self.angular_spread_deg!r}")
        if not -90.0 < self.center_angle_deg < 90.0:
            raise ValueError(f"center_angle_deg must lie in (-90, 90), got {self.center_angle_deg!r}")
        if not self.element_spacing_wavelengths > 0.0:
            raise ValueError("element_spacing_wavelengths must be positive")

    def shifted(self, delta_deg: float) -> "ScatteringGeometry":
        """Same geometry with the center angle moved by ``delta_deg``."""
        return dataclasses.replace(self, center_angle_deg=self.center_angle_deg + delta_deg)


@dataclass(frozen=True, eq=False)
class IrsPhaseVector:
    """Unit-modulus IRS reflecting coefficients."""

    phases: np.ndarray

    def __post_init__(self):
        p = _frozen(self.phases)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("phases must be a non-empty 1-D vector")
        if np.max(np.abs(np.abs(p) - 1.0)) > 1e-12:
            raise ValueError("IRS coefficients must have unit modulus")
        object.__setattr__(self, "phases", p)

    @classmethod
    def from_angles(cls, angles) -> "IrsPhaseVector":
        return cls(np.exp(1j * np.asarray(angles, dtype=float)))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "IrsPhaseVector":
        return cls.from_angles(rng.uniform(0.0, 2.0 * np.pi, size=n))

    @property
    def size(self) -> int:
        return self.phases.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.phases, dtype=dtype)


@dataclass(frozen=True)
class LinkParams:
    """Path losses, user transmit power and BS noise variance."""

    beta_r: float = 1.0
    beta_t: float = 1.0
    tx_power: float = 1.0
    noise_var: float = 1.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{f.name} must be strictly positive, got {v!r}")

    @property
    def gain(self) -> float:
        """Product of the two path losses."""
        return self.beta_r * self.beta_t

    @property
    def estimation_noise(self) -> float:
        """Per-component variance ``noise_var / tx_power`` of the ML channel estimate error."""
        return self.noise_var / self.tx_power


def one_ring_covariance(geometry: ScatteringGeometry, num_points: int = 200) -> HermitianCovariance:
    """One-ring covariance of a uniform linear array.

    The angular average of the array response over ``[-spread, +spread]``
    around the center angle is approximated with a ``num_points`` midpoint
    grid, then the result is rescaled to trace ``num_elements``.

    Parameters
    ----------
    geometry : ScatteringGeometry
    num_points : int
        Number of equal-weight angle samples. ``1`` gives the zero-spread
        (rank-one) limit.

    Returns
    -------
    HermitianCovariance
    """
    if num_points < 1:
        raise ValueError("num_points must be >= 1")
    spread = np.deg2rad(geometry.angular_spread_deg)
    center = np.deg2rad(geometry.center_angle_deg)
    step = 2.0 * spread / num_points
    alphas = -spread + step * (np.arange(num_points) + 0.5)

    idx = np.arange(geometry.num_elements)
    lag = idx[:, None] - idx[None, :]
    # Toeplitz in the lag; evaluate once per lag then expand.
    lags = np.arange(-(geometry.num_elements - 1), geometry.num_elements)
    phase = -2j * np.pi * geometry.element_spacing_wavelengths * np.outer(lags, np.sin(center + alphas))
    col = np.exp(phase).mean(axis=1)
    c = col[lag + geometry.num_elements - 1]
    c = 0.5 * (c + c.conj().T)
    c *= geometry.num_elements / np.trace(c).real
    return HermitianCovariance(c)


def theta(phi: IrsPhaseVector, c_ib: HermitianCovariance, c_iu: HermitianCovariance) -> float:
    """IRS-side statistic ``phi^H (C_IB o C_IU^T) phi``.

    Real and non-negative for PSD inputs (Schur product theorem); a
    residual imaginary part above ``1e-9 |theta|`` raises.
    """
    p = np.asarray(phi.phases if isinstance(phi, IrsPhaseVector) else phi)
    a = np.asarray(c_ib)
    b = np.asarray(c_iu)
    if not (a.shape == b.shape == (p.size, p.size)):
        raise ValueError(f"dimension mismatch: phi {p.shape}, C_IB {a.shape}, C_IU {b.shape}")
    val = p.conj() @ (a * b.T) @ p
    if abs(val.imag) > 1e-9 * abs(val):
        raise ValueError(f"theta has a non-negligible imaginary part ({val!r})")
    out = float(val.real)
    if not out > 0:
        raise ValueError(f"theta must be strictly positive, got {out!r}")
    return out


def effective_covariance(link: LinkParams, theta: float, c_bi: HermitianCovariance) -> HermitianCovariance:
    """Covariance ``beta_r * beta_t * theta * C_BI`` of the effective channel."""
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta!r}")
    scale = link.gain * theta
    return HermitianCovariance(scale * c_bi.entries, trace_target=scale * c_bi.trace_target)


def achievable_rate(link: LinkParams, theta: float, n_irs: int) -> float:
    """Achievable user rate in bits per channel use (diagnostic)."""
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta!r}")
    snr = link.tx_power * link.gain / (n_irs * link.noise_var) * theta
    return float(np.log2(1.0 + snr))
