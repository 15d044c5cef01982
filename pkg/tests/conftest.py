import numpy as np
import pytest

from qgeom import _kernels

BACKENDS = ["python"] + (["cython"] if _kernels.compiled is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    impl = _kernels.pure if request.param == "python" else _kernels.compiled
    monkeypatch.setattr(_kernels, "_impl", impl)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
