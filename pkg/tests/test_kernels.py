import numpy as np
import pytest

from gradskip_lab import kernels
from gradskip_lab._accel import HAVE_NUMBA, resolve_backend
from gradskip_lab.numerics import SERVER, stream_key

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def test_numpy_matches_integer_reference():
    key = stream_key(12, (0, "k"))
    block = kernels.uniform_block(key, 5, 32, backend="numpy")
    assert block.tolist() == [kernels.uniform_int(key, 5 + j) for j in range(32)]


@needs_numba
def test_uniform_backends_identical():
    key = stream_key(3, (SERVER, "theta"))
    a = kernels.uniform_block(key, 1000, 5000, backend="numba")
    b = kernels.uniform_block(key, 1000, 5000, backend="numpy")
    assert np.array_equal(a, b)


@needs_numba
@pytest.mark.parametrize("q", [[0.0, 0.5, 1.0], [0.9, 0.2, 0.7]])
def test_round_simulation_backends_identical(q):
    tkey = stream_key(1, (SERVER, "theta"))
    ekeys = [stream_key(1, (i, "eta")) for i in range(len(q))]
    a = kernels.simulate_rounds(tkey, ekeys, 0.1, np.array(q), 3000, backend="numba")
    b = kernels.simulate_rounds(tkey, ekeys, 0.1, np.array(q), 3000, backend="numpy")
    for u, v in zip(a, b):
        assert np.array_equal(u, v)


def test_round_simulation_resumes():
    tkey = stream_key(2, (SERVER, "theta"))
    ekeys = [stream_key(2, (0, "eta"))]
    full, flen, _ = kernels.simulate_rounds(tkey, ekeys, 0.3, np.array([0.6]), 40)
    head, hlen, nxt = kernels.simulate_rounds(tkey, ekeys, 0.3, np.array([0.6]), 25)
    tail, tlen, _ = kernels.simulate_rounds(tkey, ekeys, 0.3, np.array([0.6]), 15, start=nxt)
    assert np.array_equal(full, np.vstack([head, tail]))
    assert np.array_equal(flen, np.r_[hlen, tlen])


def test_backend_env_flag(monkeypatch):
    monkeypatch.setenv("GRADSKIP_NUMBA", "0")
    assert resolve_backend() == "numpy"
    monkeypatch.setenv("GRADSKIP_NUMBA", "1")
    assert resolve_backend() == ("numba" if HAVE_NUMBA else "numpy")
