import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from irsdetect.covariance import (
    HermitianCovariance,
    IrsPhaseVector,
    LinkParams,
    ScatteringGeometry,
    achievable_rate,
    effective_covariance,
    one_ring_covariance,
    theta,
)
from conftest import random_psd


def quad_one_ring(m, chi_deg, spread_deg, spacing):
    """Continuous one-ring average by adaptive quadrature, one entry at a time."""
    chi, spread = math.radians(chi_deg), math.radians(spread_deg)
    out = np.empty((m, m), dtype=complex)
    for a in range(m):
        for b in range(m):
            f = lambda al, part: part(np.exp(-2j * np.pi * spacing * (a - b) * np.sin(chi + al)))
            re = integrate.quad(f, -spread, spread, args=(np.real,), epsabs=1e-13)[0]
            im = integrate.quad(f, -spread, spread, args=(np.imag,), epsabs=1e-13)[0]
            out[a, b] = (re + 1j * im) / (2 * spread)
    return out


class TestHermitianCovariance:
    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError, match="Hermitian"):
            HermitianCovariance(np.array([[1, 1j], [1j, 1]]))

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError, match="PSD"):
            HermitianCovariance(np.array([[2.0, 0], [0, 0.0]]) + np.array([[0, 3.0], [3.0, 0]]))

    def test_rejects_wrong_trace(self):
        with pytest.raises(ValueError, match="trace"):
            HermitianCovariance(np.eye(3) * 2)
        HermitianCovariance(np.eye(3) * 2, trace_target=6.0)

    def test_entries_are_read_only(self):
        c = HermitianCovariance(np.eye(2))
        with pytest.raises(ValueError):
            c.entries[0, 0] = 5

    def test_eigh_ascending_clipped(self):
        d, u = HermitianCovariance(np.diag([2.0, 0.0])).eigh()
        assert list(d) == [0.0, 2.0]
        assert np.allclose(u @ u.conj().T, np.eye(2))


class TestOneRing:
    def test_single_point_is_rank_one(self):
        chi = 23.0
        c = one_ring_covariance(ScatteringGeometry(4, chi, 5.0), num_points=1)
        lag = np.subtract.outer(np.arange(4), np.arange(4))
        expected = np.exp(-1j * np.pi * lag * math.sin(math.radians(chi)))
        assert np.allclose(c.entries, expected, atol=1e-12)
        assert np.linalg.matrix_rank(c.entries, tol=1e-9) == 1
        assert math.isclose(np.trace(c.entries).real, 4.0)

    def test_broadside_is_real_symmetric_toeplitz(self):
        c = one_ring_covariance(ScatteringGeometry(6, 0.0, 12.0)).entries
        assert np.max(np.abs(c.imag)) < 1e-12
        assert np.allclose(c, c.T)
        for k in range(-5, 6):
            assert np.ptp(np.diagonal(c, k)) < 1e-12

    def test_matches_fine_quadrature(self):
        c = one_ring_covariance(ScatteringGeometry(4, 30.0, 10.0, 0.5)).entries
        ref = quad_one_ring(4, 30.0, 10.0, 0.5)
        assert np.max(np.abs(c - ref)) < 1e-4

    @pytest.mark.parametrize("bad", [dict(angular_spread_deg=0.0), dict(angular_spread_deg=-1), dict(center_angle_deg=90.0), dict(center_angle_deg=-95.0)])
    def test_rejects_degenerate_geometry(self, bad):
        kw = dict(num_elements=4, center_angle_deg=10.0, angular_spread_deg=5.0)
        kw.update(bad)
        with pytest.raises(ValueError):
            ScatteringGeometry(**kw)

    @settings(max_examples=40, deadline=None)
    @given(
        m=st.integers(1, 24),
        chi=st.floats(-80, 80),
        spread=st.floats(0.1, 60),
        spacing=st.floats(0.1, 2.0),
    )
    def test_always_valid_covariance(self, m, chi, spread, spacing):
        c = one_ring_covariance(ScatteringGeometry(m, chi, spread, spacing))
        assert c.dim == m
        assert abs(np.trace(c.entries).real - m) <= 1e-8 * m
        assert c.min_eigenvalue >= -1e-8

    @settings(max_examples=30, deadline=None)
    @given(chi=st.floats(-60, 60), delta=st.floats(-20, 20))
    def test_shift_round_trip(self, chi, delta):
        g = ScatteringGeometry(8, chi, 4.0)
        back = g.shifted(delta).shifted(-delta)
        assert np.max(np.abs(one_ring_covariance(back).entries - one_ring_covariance(g).entries)) < 1e-12


class TestTheta:
    def test_identity_all_ones(self):
        n = 7
        i = HermitianCovariance(np.eye(n))
        assert math.isclose(theta(IrsPhaseVector(np.ones(n)), i, i), n)

    def test_identity_any_phases(self):
        rng = np.random.default_rng(0)
        i = HermitianCovariance(np.eye(9))
        assert math.isclose(theta(IrsPhaseVector.random(9, rng), i, i), 9, rel_tol=1e-14)

    def test_triple_loop(self):
        rng = np.random.default_rng(1)
        a, b = random_psd(rng, 3), random_psd(rng, 3)
        phi = IrsPhaseVector.random(3, rng)
        f, ea, eb = phi.phases, a.entries, b.entries
        ref = 0j
        for m in range(3):
            for n in range(3):
                ref += f[m].conjugate() * ea[m, n] * eb[n, m] * f[n]
        assert abs(theta(phi, a, b) - ref.real) < 1e-10
        assert abs(ref.imag) < 1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            theta(IrsPhaseVector(np.ones(3)), HermitianCovariance(np.eye(3)), HermitianCovariance(np.eye(4)))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), psi=st.floats(0, 2 * math.pi), n=st.integers(1, 12))
    def test_global_phase_invariance_and_positivity(self, seed, psi, n):
        rng = np.random.default_rng(seed)
        a, b = random_psd(rng, n), random_psd(rng, n)
        phi = IrsPhaseVector.random(n, rng)
        t = theta(phi, a, b)
        assert t > 0
        rotated = IrsPhaseVector(phi.phases * np.exp(1j * psi))
        assert abs(theta(rotated, a, b) - t) <= 1e-10 * max(1.0, t)

    def test_unit_modulus_enforced(self):
        with pytest.raises(ValueError, match="unit modulus"):
            IrsPhaseVector(np.array([1.0, 1.0 + 1e-9]))


class TestEffectiveCovariance:
    def test_identity_scaling(self):
        c = random_psd(np.random.default_rng(2), 4)
        v = effective_covariance(LinkParams(), 1.0, c)
        assert np.array_equal(v.entries, c.entries)

    def test_linear_in_theta(self):
        c = random_psd(np.random.default_rng(3), 4)
        v1 = effective_covariance(LinkParams(), 1.5, c)
        v2 = effective_covariance(LinkParams(), 3.0, c)
        assert np.allclose(v2.entries, 2 * v1.entries, rtol=0, atol=1e-14)
        assert math.isclose(np.trace(v2.entries).real, 3.0 * 4)

    def test_scalar_arithmetic(self):
        v = effective_covariance(LinkParams(beta_r=2, beta_t=0.5), 3.0, HermitianCovariance(np.eye(2)))
        assert np.allclose(v.entries, 3 * np.eye(2))

    def test_rejects_nonpositive_theta(self):
        with pytest.raises(ValueError):
            effective_covariance(LinkParams(), 0.0, HermitianCovariance(np.eye(2)))


class TestLinkAndRate:
    @pytest.mark.parametrize("field", ["beta_r", "beta_t", "tx_power", "noise_var"])
    def test_strictly_positive(self, field):
        with pytest.raises(ValueError, match=field):
            LinkParams(**{field: 0.0})

    def test_one_bit_at_unit_snr(self):
        link = LinkParams(tx_power=2.0, noise_var=0.5)
        n = 16
        th = n * link.noise_var / link.tx_power
        assert math.isclose(achievable_rate(link, th, n), 1.0)

    def test_vanishing_theta(self):
        assert achievable_rate(LinkParams(), 1e-300, 128) < 1e-12

    def test_direct_substitution(self):
        assert achievable_rate(LinkParams(), 128.0, 128) == 1.0

    def test_monotone(self):
        rates = [achievable_rate(LinkParams(), t, 32) for t in np.logspace(-3, 3, 50)]
        assert all(b > a for a, b in zip(rates, rates[1:]))
