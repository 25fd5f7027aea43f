import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradskip_lab.data_io import (
    OutlierProfile,
    dump_libsvm,
    parse_libsvm,
    partition,
    read_libsvm,
    scale_features,
    synthesize_heterogeneous,
)
from gradskip_lab.errors import GenerationError, ParameterError, ParseError


def test_parse_basic_line():
    ds = parse_libsvm("+1 1:0.5 3:-2")
    assert ds.labels.tolist() == [1.0] and ds.d >= 3
    assert ds.indices[0].tolist() == [0, 2] and ds.values[0].tolist() == [0.5, -2.0]


def test_zero_label_maps_to_minus_one():
    ds = parse_libsvm("0 2:1")
    assert ds.labels.tolist() == [-1.0]
    assert ds.indices[0].tolist() == [1] and ds.values[0].tolist() == [1.0]


def test_non_increasing_indices_rejected():
    with pytest.raises(ParseError) as err:
        parse_libsvm("1 1:1\n1 3:1 2:1")
    assert err.value.line == 2


@pytest.mark.parametrize("text", ["2 1:1", "1 1=3", "1 0:1", "x 1:1", "1 1:nan"])
def test_malformed_lines(text):
    with pytest.raises(ParseError):
        parse_libsvm(text)


def test_comments_blank_lines_and_crlf():
    ds = parse_libsvm("# header\r\n\r\n-1 4:2 # trailing\r\n+1\r\n")
    assert ds.labels.tolist() == [-1.0, 1.0] and ds.d == 4
    assert ds.to_dense().tolist() == [[0, 0, 0, 2.0], [0, 0, 0, 0]]


def test_read_from_file(tmp_path):
    path = tmp_path / "tiny.svm"
    path.write_text("1 1:1 2:0.25\n-1 2:-1\n")
    assert read_libsvm(path) == parse_libsvm("1 1:1 2:0.25\n-1 2:-1\n")


line = st.tuples(
    st.sampled_from([1.0, -1.0]),
    st.dictionaries(st.integers(1, 30), st.floats(-1e6, 1e6, allow_nan=False), max_size=6),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(line, min_size=1, max_size=10))
def test_round_trip(rows):
    text = "\n".join(f"{'+1' if y > 0 else '-1'} " + " ".join(f"{k}:{v!r}" for k, v in sorted(f.items()))
                     for y, f in rows)
    ds = parse_libsvm(text)
    assert parse_libsvm(dump_libsvm(ds), d=ds.d) == ds


@pytest.mark.parametrize("m, n, sizes", [(10, 2, [5, 5]), (10, 3, [3, 3, 4]), (4, 4, [1, 1, 1, 1])])
def test_partition_sizes(m, n, sizes):
    ds = parse_libsvm("\n".join(f"1 1:{i}" for i in range(m)))
    shards = partition(ds, n)
    assert [len(s) for s in shards] == sizes
    merged = np.concatenate([s.to_dense()[:, 0] for s in shards])
    assert np.array_equal(merged, ds.to_dense()[:, 0])


def test_partition_rejects_too_many_clients():
    with pytest.raises(ParameterError):
        partition(parse_libsvm("1 1:1"), 2)


def test_scale_features():
    ds = scale_features(parse_libsvm("1 1:4 2:-1\n-1 1:-2 3:0"))
    A = ds.to_dense()
    assert np.abs(A).max() == 1.0
    assert A[:, 0].tolist() == [1.0, -0.5]


def test_outlier_profile_quadratics():
    fs = synthesize_heterogeneous(20, 5, OutlierProfile(1e3), seed=1, kind="quadratic")
    L = np.array([f.smoothness() for f in fs])
    assert L.max() == 1e3 and np.all((L[1:] >= 0.1) & (L[1:] <= 1.0))


def test_single_client_target():
    (f,) = synthesize_heterogeneous(1, 3, [2.0], seed=0)
    assert f.smoothness() == pytest.approx(2.0, rel=1e-12)


def test_logistic_targets_within_one_percent():
    targets = np.array([0.3, 1.0, 10.0, 1e3])
    fs = synthesize_heterogeneous(4, 8, targets, seed=3, m=50)
    L = np.array([f.smoothness() for f in fs])
    assert np.allclose(L, targets, rtol=0.01)


def test_synthesis_deterministic():
    a = synthesize_heterogeneous(3, 4, OutlierProfile(50.0), seed=7)
    b = synthesize_heterogeneous(3, 4, OutlierProfile(50.0), seed=7)
    for f, g in zip(a, b):
        assert np.array_equal(f.features, g.features) and np.array_equal(f.labels, g.labels)


def test_synthesis_rejects_targets_below_lam():
    with pytest.raises(GenerationError):
        synthesize_heterogeneous(2, 3, [0.05, 1.0], seed=0, lam=0.1)
