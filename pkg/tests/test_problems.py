import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradskip_lab.errors import ParameterError
from gradskip_lab.problems import (
    LogisticObjective,
    QuadraticObjective,
    bregman,
    gradient,
    lift,
    reference_minimizer,
    smoothness_constant,
)

from conftest import random_quadratics


def central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f.value(x + e) - f.value(x - e)) / (2 * h)
    return g


def power_iteration(M, iters=500):
    v = np.ones(M.shape[0])
    for _ in range(iters):
        v = M @ v
        v /= np.linalg.norm(v)
    return float(v @ M @ v)


def test_logistic_single_sample_gradient():
    f = LogisticObjective([[1.0, 0.0]], [1.0], 0.0)
    assert np.allclose(gradient(f, np.zeros(2)), [-0.5, 0.0], atol=1e-15)
    assert np.allclose(central_diff(f, np.zeros(2)), [-0.5, 0.0], atol=1e-9)


def test_quadratic_gradient_vanishes_at_center():
    c = np.array([1.0, -2.0, 3.0])
    f = QuadraticObjective.isotropic(1.0, c)
    assert np.array_equal(gradient(f, c), np.zeros(3))


def test_symmetric_labels_cancel():
    a = np.array([0.3, -1.2, 2.0])
    f = LogisticObjective(np.vstack([a, a]), [1.0, -1.0], 0.1)
    assert np.allclose(gradient(f, np.zeros(3)), 0.0, atol=1e-16)


def test_smoothness_examples():
    f = LogisticObjective([[1.0, 0.0]], [1.0], 0.1)
    assert smoothness_constant(f) == pytest.approx(0.35, rel=1e-12)
    A = f.features
    assert smoothness_constant(f) == pytest.approx(power_iteration(A.T @ A / 4) + 0.1, rel=1e-9)
    assert smoothness_constant(QuadraticObjective.isotropic(3.0, np.zeros(4))) == 3.0
    assert smoothness_constant(LogisticObjective(np.zeros((5, 3)), np.ones(5), 0.5)) == 0.5


def test_smoothness_matches_power_iteration():
    rng = np.random.default_rng(0)
    f = LogisticObjective(rng.normal(size=(40, 6)), np.sign(rng.normal(size=40)), 0.2)
    M = f.features.T @ f.features / (4 * 40)
    assert f.smoothness() == pytest.approx(power_iteration(M) + 0.2, rel=1e-9)


def test_bregman_examples():
    f = QuadraticObjective.isotropic(2.0, np.array([0.5, 0.5]))
    x = np.array([3.0, 1.0])
    assert bregman(f, x, x) == 0.0
    assert bregman(f, x, x - [1.0, 0.0]) == pytest.approx(1.0, rel=1e-14)


def _objectives():
    rng = np.random.default_rng(5)
    return [
        LogisticObjective(rng.normal(size=(30, 4)), np.sign(rng.normal(size=30)), 0.1),
        LogisticObjective(3 * rng.normal(size=(10, 4)), np.ones(10), 0.01),
        QuadraticObjective(0.2, 7.0, rng.normal(size=4), rng.normal(size=4)),
        QuadraticObjective.isotropic(1.5, rng.normal(size=4)),
    ]


@pytest.mark.parametrize("f", _objectives(), ids=lambda f: f.kind)
def test_bregman_bounds(f):
    rng = np.random.default_rng(1)
    L = f.smoothness()
    for _ in range(100):
        x, y = rng.normal(size=(2, f.d)) * 2
        r2 = float((x - y) @ (x - y))
        b = bregman(f, x, y)
        assert f.mu / 2 * r2 * (1 - 1e-10) <= b <= L / 2 * r2 * (1 + 1e-10)


@pytest.mark.parametrize("f", _objectives(), ids=lambda f: f.kind)
def test_gradient_finite_differences(f):
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.normal(size=f.d)
        fd = central_diff(f, x)
        assert np.linalg.norm(gradient(f, x) - fd) <= 1e-6 * max(np.linalg.norm(fd), 1e-8)


def test_hessian_matches_gradient_differences():
    f = _objectives()[0]
    x = np.random.default_rng(3).normal(size=f.d)
    H = np.column_stack([(f.gradient(x + 1e-6 * e) - f.gradient(x - 1e-6 * e)) / 2e-6
                         for e in np.eye(f.d)])
    assert np.allclose(f.hessian(x), H, atol=1e-7)


def test_quadratic_constants_exact():
    f = QuadraticObjective(0.3, 12.0, np.zeros(5), np.arange(1.0, 6.0))
    eig = np.linalg.eigvalsh(f.hessian())
    assert eig[0] == pytest.approx(0.3, rel=1e-12)
    assert eig[-1] == pytest.approx(12.0, rel=1e-12)


def test_quadratic_rejects_bad_constants():
    with pytest.raises(ParameterError):
        QuadraticObjective(2.0, 1.0, np.zeros(2))


def test_reference_minimizer_isotropic_mean():
    C = np.array([[0.0, 1.0], [2.0, 3.0], [4.0, -1.0]])
    f = lift([QuadraticObjective.isotropic(1.0, c) for c in C])
    assert np.allclose(reference_minimizer(f).x_star, C.mean(axis=0), atol=1e-14)


def test_reference_minimizer_single_client():
    c = np.array([1.5, -0.5])
    assert np.allclose(reference_minimizer(lift([QuadraticObjective(0.5, 4.0, c)])).x_star, c)


def test_reference_minimizer_logistic(logistic3):
    f, ref = logistic3
    avg = np.mean([g.gradient(ref.x_star) for g in f.locals], axis=0)
    assert np.linalg.norm(avg) <= 1e-10
    assert np.allclose(ref.h_star.sum(axis=0), 0.0, atol=1e-10)


def test_reference_minimizer_quadratics(quad3):
    f, ref = quad3
    assert ref.grad_norm <= 1e-10


def test_lift_single_client():
    g = random_quadratics(1, 3, seed=0)[0]
    f = lift([g])
    x = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(f.gradient(x), g.gradient(x))


def test_lift_block_gradient(logistic3):
    f, _ = logistic3
    X = np.random.default_rng(0).normal(size=(3, f.d))
    G = f.gradient(X)
    for i, g in enumerate(f.locals):
        assert np.array_equal(G[i], g.gradient(X[i]))
    assert np.array_equal(f.gradient(X.reshape(-1)), G.reshape(-1))


def test_lift_smoothness_matrix():
    fs = [QuadraticObjective.isotropic(1.0, np.zeros(2)), QuadraticObjective.isotropic(3.0, np.zeros(2))]
    assert lift(fs).smoothness_matrix().tolist() == [1.0, 1.0, 3.0, 3.0]


def test_lift_rejects_mixed_dimensions():
    with pytest.raises(ParameterError):
        lift([QuadraticObjective.isotropic(1.0, np.zeros(2)),
              QuadraticObjective.isotropic(1.0, np.zeros(3))])


SMALL_LOGISTIC = LogisticObjective(np.random.default_rng(8).normal(size=(12, 3)),
                                   np.r_[np.ones(6), -np.ones(6)], 0.1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3),
       st.lists(st.floats(-50, 50), min_size=3, max_size=3))
def test_logistic_bregman_property(x, y):
    x, y = np.array(x), np.array(y)
    r2 = float((x - y) @ (x - y))
    b = bregman(SMALL_LOGISTIC, x, y)
    slack = 1e-9 * (1 + r2)
    assert SMALL_LOGISTIC.mu / 2 * r2 - slack <= b <= SMALL_LOGISTIC.smoothness() / 2 * r2 + slack
