import numpy as np
import pytest

from gradskip_lab.compressors import (
    CompressorSpec,
    compress,
    scalar_bound,
    variance_matrix,
    verify_variance_bound,
)
from gradskip_lab.errors import EnumerationSizeError, ParameterError
from gradskip_lab.numerics import make_stream


def mc_mean(spec, x, trials=10**5, seed=0):
    s = make_stream(seed, (0, "c"))
    draws = np.array([compress(spec, s, x) for _ in range(trials)])
    return draws.mean(axis=0), draws.std(axis=0, ddof=1) / np.sqrt(trials)


def test_identity_and_full_bernoulli():
    s = make_stream(0, (0, "c"))
    x = np.array([1.0, 2.0])
    for _ in range(20):
        assert np.array_equal(compress(CompressorSpec.identity(2), s, x), x)
        assert np.array_equal(compress(CompressorSpec.bernoulli(1.0, 2), s, x), x)


def test_bernoulli_unbiased_example():
    mean, _ = mc_mean(CompressorSpec.bernoulli(0.25, 2), np.array([1.0, 0.0]))
    assert np.all(np.abs(mean - [1.0, 0.0]) <= 0.03)


@pytest.mark.parametrize("spec", [
    CompressorSpec.identity(3),
    CompressorSpec.bernoulli(0.3, 3),
    CompressorSpec.coordinate_prob([0.2, 0.5, 0.9]),
    CompressorSpec.block_bernoulli([0.4, 0.7, 1.0], 1),
], ids=lambda s: s.kind)
def test_unbiased_within_three_se(spec):
    rng = np.random.default_rng(1)
    for k in range(5):
        x = rng.normal(size=3)
        mean, se = mc_mean(spec, x, trials=20_000, seed=k)
        assert np.all(np.abs(mean - x) <= 3 * se + 1e-12)


def test_variance_matrix_examples():
    assert np.allclose(variance_matrix(CompressorSpec.bernoulli(0.1, 3)), 9.0)
    assert variance_matrix(CompressorSpec.coordinate_prob([0.5, 0.25])).tolist() == [1.0, 3.0]
    assert variance_matrix(CompressorSpec.identity(2)).tolist() == [0.0, 0.0]


def test_scalar_bound_examples():
    assert scalar_bound([4.0, 4.0]) == pytest.approx(4.0)
    assert scalar_bound([1.0, 3.0]) == pytest.approx(7.0)
    assert scalar_bound([0.0, 0.0]) == 0.0


def test_identity_bound_is_equality():
    x = np.array([1.0, -3.0, 2.0])
    rep = verify_variance_bound(CompressorSpec.identity(3), x)
    assert rep.lhs == rep.rhs == pytest.approx(14.0)


def test_coordinate_prob_bound_tight():
    rep = verify_variance_bound(CompressorSpec.coordinate_prob([0.5, 0.25]), np.ones(2))
    assert rep.holds
    assert rep.lhs == pytest.approx(0.75, rel=1e-14)
    assert rep.rhs == pytest.approx(0.75, rel=1e-14)


def test_bernoulli_half_enumeration():
    rep = verify_variance_bound(CompressorSpec.bernoulli(0.5, 2), np.array([2.0, 0.0]))
    assert rep.lhs == pytest.approx(2.0) and rep.rhs == pytest.approx(2.0)
    assert np.allclose(rep.mean, [2.0, 0.0])


def test_monte_carlo_variant_agrees_with_enumeration():
    spec = CompressorSpec.coordinate_prob([0.3, 0.6, 0.8])
    x = np.array([1.0, -2.0, 0.5])
    exact = verify_variance_bound(spec, x)
    mc = verify_variance_bound(spec, x, trials=50_000, stream=make_stream(2, (0, "v")))
    assert mc.holds and mc.scalar_holds
    assert abs(mc.lhs - exact.lhs) <= 4 * mc.stderr


def test_monte_carlo_needs_enough_trials():
    with pytest.raises(ParameterError):
        verify_variance_bound(CompressorSpec.bernoulli(0.5, 1), np.ones(1), trials=100)


def test_enumeration_limit():
    spec = CompressorSpec.coordinate_prob([0.5] * 25)
    with pytest.raises(EnumerationSizeError):
        verify_variance_bound(spec, np.ones(25))


def test_block_product_structure():
    q, d = [0.3, 0.8, 0.5], 2
    x = np.random.default_rng(3).normal(size=len(q) * d)
    spec = CompressorSpec.block_bernoulli(q, d)
    streams = [make_stream(9, (i, "eta")) for i in range(3)]
    joint = compress(spec, streams, x)
    blocks = [compress(CompressorSpec.bernoulli(qi, d), make_stream(9, (i, "eta")), x[i * d:(i + 1) * d])
              for i, qi in enumerate(q)]
    assert np.array_equal(joint, np.concatenate(blocks))


def test_invalid_specs():
    with pytest.raises(ParameterError):
        CompressorSpec.bernoulli(0.0, 2)
    with pytest.raises(ParameterError):
        CompressorSpec.coordinate_prob([0.5, 1.2])
    with pytest.raises(ParameterError):
        compress(CompressorSpec.identity(2), make_stream(0, (0, "c")), np.ones(3))
