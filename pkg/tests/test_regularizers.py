import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gradskip_lab.errors import ParameterError
from gradskip_lab.regularizers import Regularizer, prox

REGS = [Regularizer.consensus(3, 2), Regularizer.l1(0.7), Regularizer.zero()]
vectors = arrays(np.float64, 6, elements=st.floats(-1e3, 1e3))


def test_consensus_average():
    out = prox(Regularizer.consensus(2, 1), 0.37, np.array([1.0, 3.0]))
    assert out.tolist() == [2.0, 2.0]


def test_soft_threshold():
    assert prox(Regularizer.l1(1.0), 1.0, np.array([3.0])).tolist() == [2.0]
    assert prox(Regularizer.l1(1.0), 1.0, np.array([-0.5, -4.0])).tolist() == [0.0, -3.0]


def test_zero_is_identity():
    v = np.array([1.0, -2.0, 5.0])
    assert np.array_equal(prox(Regularizer.zero(), 3.0, v), v)


def test_consensus_step_invariant_and_idempotent():
    reg = Regularizer.consensus(4, 3)
    v = np.random.default_rng(0).normal(size=12)
    outs = [prox(reg, s, v) for s in (0.1, 1.0, 10.0)]
    assert all(np.array_equal(outs[0], o) for o in outs)
    assert np.allclose(prox(reg, 1.0, outs[0]), outs[0], atol=1e-15)


def test_consensus_value():
    reg = Regularizer.consensus(2, 2)
    assert reg.value(np.array([1.0, 2.0, 1.0, 2.0])) == 0.0
    assert reg.value(np.array([1.0, 2.0, 1.0, 2.5])) == np.inf


def test_invalid_step():
    with pytest.raises(ParameterError):
        prox(Regularizer.zero(), 0.0, np.zeros(2))


@pytest.mark.parametrize("reg", REGS, ids=lambda r: r.kind)
@settings(max_examples=100, deadline=None)
@given(v=vectors, w=vectors, step=st.floats(1e-3, 10))
def test_firm_nonexpansive(reg, v, w, step):
    a, b = prox(reg, step, v), prox(reg, step, w)
    lhs = float((a - b) @ (a - b))
    rhs = float((a - b) @ (v - w))
    assert lhs <= rhs + 1e-9 * (1 + abs(rhs))


@pytest.mark.parametrize("reg", REGS[1:], ids=lambda r: r.kind)
def test_prox_minimizes_model(reg):
    rng = np.random.default_rng(4)
    v, step = rng.normal(size=6), 0.8
    z = prox(reg, step, v)
    obj = lambda u: step * reg.value(u) + 0.5 * (u - v) @ (u - v)
    for _ in range(200):
        assert obj(z) <= obj(z + 0.1 * rng.normal(size=6)) + 1e-12
