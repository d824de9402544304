import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vcprobe.errors import DataError, ShapeError
from vcprobe.features import (
    AlignmentMatrix,
    FeatureMatrix,
    TextEncoding,
    concat_features,
    fuse_alignment,
    linear_interpolate_time,
    weighted_text_index,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def random_alignment(rng, n_frames, n_symbols):
    a = rng.random((n_frames, n_symbols)) ** 3
    return AlignmentMatrix(a / a.sum(axis=1, keepdims=True))


# -- types --------------------------------------------------------------------------------

def test_feature_matrix_validation():
    assert FeatureMatrix(np.arange(3.0)).data.shape == (3, 1)
    with pytest.raises(ShapeError):
        FeatureMatrix(np.zeros((0, 2)))
    with pytest.raises(DataError):
        FeatureMatrix(np.array([[np.inf]]))
    with pytest.raises(DataError):
        FeatureMatrix(np.zeros((2, 2)), kind="X")


def test_alignment_validation():
    with pytest.raises(DataError):
        AlignmentMatrix(np.array([[0.5, 0.4]]))
    with pytest.raises(DataError):
        AlignmentMatrix(np.array([[1.5, -0.5]]))
    AlignmentMatrix(np.array([[0.5, 0.5 + 5e-5]]))


# -- interpolation ------------------------------------------------------------------------

def test_interpolation_examples():
    out = linear_interpolate_time(FeatureMatrix([[0.0], [1.0], [2.0]]), 5)
    assert np.allclose(out.data[:, 0], [0, 0.5, 1, 1.5, 2])
    out = linear_interpolate_time(FeatureMatrix([[3.0, 4.0]], kind="PPG"), 5)
    assert np.array_equal(out.data, np.tile([[3.0, 4.0]], (5, 1))) and out.kind == "PPG"
    x = FeatureMatrix(np.random.default_rng(0).random((7, 3)))
    assert np.array_equal(linear_interpolate_time(x, 7).data, x.data)
    with pytest.raises(ShapeError):
        linear_interpolate_time(x, 0)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 30), st.integers(1, 4)), elements=finite), st.integers(1, 80))
def test_interpolation_endpoints_and_bounds(data, target):
    out = linear_interpolate_time(FeatureMatrix(data), target).data
    assert out.shape == (target, data.shape[1])
    assert np.array_equal(out[0], data[0])
    if target > 1:
        assert np.array_equal(out[-1], data[-1])
    assert np.all(out >= data.min(axis=0)) and np.all(out <= data.max(axis=0))


def test_interpolation_matches_numpy_interp(rng):
    data = rng.standard_normal((9, 2))
    out = linear_interpolate_time(FeatureMatrix(data), 23).data
    grid = np.linspace(0, 1, 23)
    for d in range(2):
        assert np.allclose(out[:, d], np.interp(grid, np.linspace(0, 1, 9), data[:, d]), atol=1e-12)


# -- fusion and index reduction -----------------------------------------------------------

def test_fuse_examples(rng):
    enc = TextEncoding(rng.standard_normal((4, 3)))
    onehot = AlignmentMatrix.from_indices([2, 0, 3], 4)
    assert np.array_equal(fuse_alignment(onehot, enc).data, enc.data[[2, 0, 3]])
    uniform = AlignmentMatrix(np.full((2, 4), 0.25))
    assert np.allclose(fuse_alignment(uniform, enc).data, enc.data.mean(axis=0))
    out = fuse_alignment(AlignmentMatrix([[0.5, 0.5], [0, 1]]), TextEncoding([[2.0, 0.0], [0.0, 2.0]]))
    assert np.array_equal(out.data, [[1.0, 1.0], [0.0, 2.0]]) and out.kind == "L"
    with pytest.raises(ShapeError, match="dimension mismatch"):
        fuse_alignment(uniform, TextEncoding(np.zeros((3, 3))))


def test_fuse_matches_brute_force_product(rng):
    for _ in range(50):
        a = random_alignment(rng, 10, 7)
        enc = TextEncoding(rng.standard_normal((7, 5)))
        want = np.array([[sum(a.data[i, k] * enc.data[k, j] for k in range(7)) for j in range(5)] for i in range(10)])
        assert np.max(np.abs(fuse_alignment(a, enc).data - want)) < 1e-6


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 12), st.integers(1, 9), st.integers(1, 5))
def test_fuse_stays_in_convex_hull(seed, n, m, d):
    rng = np.random.default_rng(seed)
    enc = TextEncoding(rng.standard_normal((m, d)))
    out = fuse_alignment(random_alignment(rng, n, m), enc).data
    assert np.all(out >= enc.data.min(axis=0) - 1e-12) and np.all(out <= enc.data.max(axis=0) + 1e-12)


def test_text_index_examples():
    assert np.all(weighted_text_index(AlignmentMatrix.from_indices([3] * 4, 6)).data == 3.0)
    assert np.all(weighted_text_index(AlignmentMatrix(np.full((3, 5), 0.2))).data == pytest.approx(2.0))
    out = weighted_text_index(AlignmentMatrix([[0.25, 0.75]]))
    assert out.data.shape == (1, 1) and out.data[0, 0] == pytest.approx(0.75) and out.kind == "A"


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 15), st.integers(1, 12))
def test_text_index_is_fusion_with_index_vector(seed, n, m):
    a = random_alignment(np.random.default_rng(seed), n, m)
    via_fuse = fuse_alignment(a, TextEncoding(np.arange(m, dtype=np.float64)[:, None])).data
    assert np.max(np.abs(weighted_text_index(a).data - via_fuse)) < 1e-6


# -- concatenation ------------------------------------------------------------------------

def test_concat_examples(rng):
    a = FeatureMatrix(rng.standard_normal((6, 3)), "L")
    b = FeatureMatrix(rng.standard_normal((6, 1)), "F")
    out = concat_features(a, b)
    assert out.data.shape == (6, 4) and out.kind == "generic"
    assert np.array_equal(out.data[:, :3], a.data) and np.array_equal(out.data[:, 3:], b.data)
    assert concat_features(a, FeatureMatrix(np.zeros((6, 0)))) is a
    with pytest.raises(ShapeError, match="frame-count mismatch"):
        concat_features(FeatureMatrix(np.zeros((80, 2))), FeatureMatrix(np.zeros((81, 1))))
    with pytest.raises(ShapeError, match="hop"):
        concat_features(FeatureMatrix(np.zeros((5, 1)), frame_hop=256), FeatureMatrix(np.zeros((5, 1)), frame_hop=128))
