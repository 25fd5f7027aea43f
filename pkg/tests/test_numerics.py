import numpy as np
import pytest

from gradskip_lab.errors import ParameterError
from gradskip_lab.numerics import (
    RngStream,
    flip,
    flips,
    make_stream,
    sample_geometric,
    weighted_norm_sq,
)


def test_stream_is_deterministic():
    a = make_stream(42, (0, "theta")).uniforms(100)
    b = make_stream(42, (0, "theta")).uniforms(100)
    assert np.array_equal(a, b)


def test_streams_are_separated():
    a = make_stream(42, (0, "theta")).uniforms(100)
    b = make_stream(42, (1, "theta")).uniforms(100)
    c = make_stream(43, (0, "theta")).uniforms(100)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_state_round_trip_continues_sequence():
    s = make_stream(42, (0, "theta"))
    s.uniforms(17)
    clone = RngStream.from_state(s.state_dict())
    assert np.array_equal(s.uniforms(50), clone.uniforms(50))


def test_scalar_and_block_draws_agree():
    s, t = make_stream(7, (3, "eta")), make_stream(7, (3, "eta"))
    scalar = np.array([s.uniform() for _ in range(64)])
    assert np.array_equal(scalar, t.uniforms(64))


def test_peek_does_not_advance():
    s = make_stream(1, (0, "x"))
    ahead = s.peek(5)
    assert np.array_equal(ahead, s.uniforms(5))


def test_uniforms_lie_in_unit_interval():
    u = make_stream(0, (0, "u")).uniforms(10**5)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.005


@pytest.mark.parametrize("prob, expected", [(1.0, 1), (0.0, 0)])
def test_flip_degenerate(prob, expected):
    s = make_stream(5, (0, "coin"))
    assert all(flip(s, prob) == expected for _ in range(200))


@pytest.mark.parametrize("prob", [0.1, 0.3, 0.5, 0.9])
def test_flip_frequency(prob):
    N = 10**5
    mean = flips(make_stream(9, (0, "coin")), prob, N).mean()
    assert abs(mean - prob) <= 5 * np.sqrt(prob * (1 - prob) / N)
    if prob == 0.3:
        assert abs(mean - 0.3) <= 0.01


def test_flip_rejects_bad_probability():
    with pytest.raises(ParameterError):
        flip(make_stream(0, (0, "c")), 1.5)


def test_geometric_success_one():
    s = make_stream(0, (0, "g"))
    assert all(sample_geometric(s, 1.0) == 1 for _ in range(100))


@pytest.mark.parametrize("p", [0.05, 0.1, 0.5, 1.0])
def test_geometric_mean(p):
    s = make_stream(3, (0, "geo"))
    mean = np.mean([sample_geometric(s, p) for _ in range(10**5)])
    assert abs(mean - 1 / p) <= 0.03 / p


def test_geometric_mean_at_tenth():
    s = make_stream(4, (0, "geo"))
    mean = np.mean([sample_geometric(s, 0.1) for _ in range(10**5)])
    assert abs(mean - 10) <= 0.3


def test_min_of_two_geometrics():
    a, b = make_stream(8, (0, "a")), make_stream(8, (1, "b"))
    vals = [min(sample_geometric(a, 0.5), sample_geometric(b, 0.5)) for _ in range(10**5)]
    assert abs(np.mean(vals) - 4 / 3) <= 0.05


def test_geometric_consumes_exactly_its_trials():
    s, ref = make_stream(2, (0, "g")), make_stream(2, (0, "g"))
    k = sample_geometric(s, 0.2)
    u = ref.uniforms(k)
    assert np.all(u[:-1] >= 0.2) and u[-1] < 0.2
    assert s.counter == ref.counter


def test_weighted_norm_examples():
    assert weighted_norm_sq([1, 2], [1, 1]) == 5
    assert weighted_norm_sq([1, 2], [0.5, 0.25]) == 1.5
    assert weighted_norm_sq(np.arange(4.0), np.zeros(4)) == 0


def test_weighted_norm_identity_is_euclidean():
    x = np.random.default_rng(0).normal(size=50)
    assert weighted_norm_sq(x, np.ones(50)) == pytest.approx(x @ x, rel=1e-15)
