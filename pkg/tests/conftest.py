import numpy as np
import pytest

from irsdetect import _backend
from irsdetect.covariance import HermitianCovariance


@pytest.fixture(params=sorted(_backend.BACKENDS))
def backend(request, monkeypatch):
    """Run a test once per available kernel backend, with that backend active."""
    monkeypatch.setattr(_backend, "kernels", _backend.BACKENDS[request.param])
    return request.param


def random_psd(rng, n, rank=None, trace=None):
    rank = n if rank is None else rank
    a = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    c = a @ a.conj().T
    c = 0.5 * (c + c.conj().T)
    c *= (n if trace is None else trace) / np.trace(c).real
    return HermitianCovariance(c, trace_target=trace)


def cn(rng, shape):
    """Reference CN(0, 1) draws, independent of the library helper."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
