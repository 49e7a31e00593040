"""ML estimation of the post-change parameters.

The BS-side covariance is fitted under a trace constraint and eigenvalue
box constraints by reducing to a spectrum problem solved with CCCP; the
IRS-side scalar is fitted by one-dimensional likelihood maximization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .covariance import HermitianCovariance, LinkParams

__all__ = (
    "EigenSolution",
    "EstimatorBounds",
    "SpectrumFit",
    "sample_covariance",
    "eigen_solution",
    "spectrum_objective",
    "solve_spectrum_problem",
    "ml_covariance_fit",
    "ml_covariance_estimate",
    "theta_loglik",
    "ml_theta_estimate",
)

THETA_RANGE = 100.0


@dataclass(frozen=True)
class EstimatorBounds:
    """Eigenvalue box for the covariance estimate plus CCCP controls."""

    xi_l: float = 0.01
    xi_u: float = 10.0
    cccp_tol: float = 1e-8
    cccp_max_iter: int = 100

    def __post_init__(self):
        if not 0.0 < self.xi_l < 1.0 < self.xi_u:
            raise ValueError(
                f"need 0 < xi_l < 1 < xi_u so the identity is feasible, got xi_l={self.xi_l}, xi_u={self.xi_u}"
            )
        if not self.cccp_tol > 0:
            raise ValueError("cccp_tol must be positive")
        if int(self.cccp_max_iter) != self.cccp_max_iter or self.cccp_max_iter < 1:
            raise ValueError("cccp_max_iter must be a positive integer")


@dataclass(frozen=True, eq=False)
class EigenSolution:
    """Eigenvectors (columns) and eigenvalues sorted descending, clipped at 0."""

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray


def _as_samples(estimates) -> np.ndarray:
    if isinstance(estimates, np.ndarray):
        arr = estimates
    else:
        arr = np.stack([np.asarray(getattr(e, "vector", e)) for e in estimates])
    arr = np.asarray(arr, dtype=complex)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def sample_covariance(estimates, from_index: int = 1) -> np.ndarray:
    """Sample covariance of the estimates from ``from_index`` (1-based) to the end."""
    h = _as_samples(estimates)
    k = h.shape[0]
    if not 1 <= from_index <= k:
        raise ValueError(f"from_index must lie in [1, {k}], got {from_index}")
    tail = h[from_index - 1 :]
    s = tail.T @ tail.conj() / tail.shape[0]
    return 0.5 * (s + s.conj().T)


def eigen_solution(matrix) -> EigenSolution:
    d, u = np.linalg.eigh(np.asarray(matrix, dtype=complex))
    return EigenSolution(u[:, ::-1], np.clip(d[::-1], 0.0, None))


def spectrum_objective(phi_eigs, lam) -> float:
    """Objective ``sum(log lam + phi / lam)`` of the spectrum problem."""
    return _backend.kernels.spectrum_objective(np.asarray(phi_eigs, dtype=float), np.asarray(lam, dtype=float))


def _spectrum_constraints(m: int, a: float, c: float, bounds: EstimatorBounds):
    shift = c / a
    return bounds.xi_l + shift, bounds.xi_u + shift, m * (1.0 + shift)


def solve_spectrum_problem(
    phi_eigs,
    a: float,
    c: float,
    bounds: EstimatorBounds,
    *,
    return_history: bool = False,
    backend: str | None = None,
):
    """Solve ``min sum(log lam_m + phi_m / lam_m)`` under the spectrum constraints.

    Constraints are ``sum(lam) = M (1 + c/a)`` and
    ``xi_l + c/a <= lam_m <= xi_u + c/a``. The CCCP outer loop replaces
    ``log lam`` by its tangent; each convex subproblem is solved through its
    Lagrangian with bisection on the multiplier. The start point is the
    Euclidean projection of ``phi`` onto the constraint set.

    Parameters
    ----------
    phi_eigs : (M,) array_like
        Non-negative sample eigenvalues, already divided by ``a``.
    a, c : float
        Signal scale ``beta_r beta_t theta`` and estimation noise ``sigma^2 / w``.
    bounds : EstimatorBounds
    return_history : bool
        Also return the objective after every outer iteration.

    Returns
    -------
    lam : ndarray
    history : ndarray, only if ``return_history``
    """
    if not (a > 0 and c >= 0):
        raise ValueError("need a > 0 and c >= 0")
    k = _backend.get(backend)
    phi = np.ascontiguousarray(np.clip(np.asarray(phi_eigs, dtype=float), 0.0, None))
    if not np.all(np.isfinite(phi)):
        raise ValueError("spectrum values must be finite")
    lo, hi, total = _spectrum_constraints(phi.size, a, c, bounds)
    lam0 = k.project_spectrum(phi, lo, hi, total)
    lam, history = k.cccp_spectrum(phi, lo, hi, total, lam0, bounds.cccp_tol, bounds.cccp_max_iter)
    if abs(lam.sum() - total) > 1e-8 * total or lam.min() < lo * (1 - 1e-12) or lam.max() > hi * (1 + 1e-12):
        raise ArithmeticError("spectrum solver returned an infeasible point")
    return (lam, history) if return_history else lam


@dataclass(frozen=True, eq=False)
class SpectrumFit:
    """Covariance estimate in factored form: ``C = U diag(lam - c/a) U^H``."""

    eigenvectors: np.ndarray
    lam: np.ndarray
    sample_eigs: np.ndarray
    a: float
    c: float

    @property
    def covariance(self) -> HermitianCovariance:
        u = self.eigenvectors
        spec = self.lam - self.c / self.a
        mat = (u * spec) @ u.conj().T
        mat = 0.5 * (mat + mat.conj().T)
        m = spec.size
        # Remove trace rounding so the normalization holds to machine precision.
        mat += (m - np.trace(mat).real) / m * np.eye(m)
        return HermitianCovariance(mat)

    @property
    def noise_eigs(self) -> np.ndarray:
        """Eigenvalues ``a * lam`` of the fitted ``a C + c I``."""
        return self.a * self.lam


def ml_covariance_fit(c_sam, baseline_theta: float, link: LinkParams, bounds: EstimatorBounds) -> SpectrumFit:
    """Constrained ML covariance fit, returned in factored form."""
    if not baseline_theta > 0:
        raise ValueError("baseline_theta must be positive")
    a = link.gain * baseline_theta
    c = link.estimation_noise
    eig = eigen_solution(c_sam)
    lam = solve_spectrum_problem(eig.eigenvalues / a, a, c, bounds)
    return SpectrumFit(eig.eigenvectors, lam, eig.eigenvalues, a, c)


def ml_covariance_estimate(
    c_sam, baseline_theta: float, link: LinkParams, bounds: EstimatorBounds
) -> HermitianCovariance:
    """Constrained ML estimate of the normalized BS receive covariance.

    With ``a = beta_r beta_t theta_bar`` and ``c = sigma^2 / w`` the estimate is
    ``U diag(lam) U^H - (c/a) I`` where ``U`` are the eigenvectors of the
    sample covariance and ``lam`` solves the spectrum problem on the sample
    eigenvalues divided by ``a``. The result has trace ``M`` and eigenvalues
    in ``[xi_l, xi_u]``.
    """
    return ml_covariance_fit(c_sam, baseline_theta, link, bounds).covariance


def _theta_stats(tail, baseline_c_bi: HermitianCovariance):
    h = _as_samples(tail)
    d, u = baseline_c_bi.eigh()
    g = np.sum(np.abs(h @ u.conj()) ** 2, axis=0)
    return d, g, h.shape[0]


def theta_loglik(theta: float, tail, baseline_c_bi: HermitianCovariance, link: LinkParams) -> float:
    """Gaussian log-likelihood of ``tail`` under covariance ``beta theta C_BI + (sigma^2/w) I``."""
    d, g, n = _theta_stats(tail, baseline_c_bi)
    return _theta_loglik(theta, d, g, n, link.gain, link.estimation_noise)


def _theta_loglik(theta, d, g, n, a, c):
    return -(n * d.size * math.log(math.pi) + _backend.kernels.theta_objective(theta, d, g, n, a, c))


def ml_theta_estimate(
    tail,
    baseline_c_bi: HermitianCovariance,
    baseline_theta: float,
    link: LinkParams,
    tol: float = 1e-10,
    *,
    max_iter: int = 500,
    backend: str | None = None,
) -> float:
    """ML estimate of the IRS-side scalar from a tail of channel estimates.

    The baseline covariance is diagonalized once; the likelihood then
    depends on the tail only through per-eigendirection energies. Search
    interval is ``[theta_bar / 100, 100 theta_bar]``.
    """
    if not baseline_theta > 0:
        raise ValueError("baseline_theta must be positive")
    d, g, n = _theta_stats(tail, baseline_c_bi)
    if not np.any(g > 0):
        raise ValueError("all-zero tail: the likelihood has no maximizer")
    return _theta_mle(d, g, n, baseline_theta, link, tol, max_iter, backend)


def _theta_mle(d, g, n, baseline_theta, link, tol=1e-10, max_iter=500, backend=None):
    k = _backend.get(backend)
    return float(
        k.theta_mle(
            np.ascontiguousarray(d, dtype=float),
            np.ascontiguousarray(g, dtype=float),
            float(n),
            link.gain,
            link.estimation_noise,
            baseline_theta / THETA_RANGE,
            baseline_theta * THETA_RANGE,
            baseline_theta,
            tol,
            max_iter,
        )
    )
