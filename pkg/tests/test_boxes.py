import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iim import Box, InvalidInputError

coord = st.floats(-50, 50, allow_nan=False)
width = st.floats(0.01, 20, allow_nan=False)


@st.composite
def boxes(draw, dim=2):
    lo = [draw(coord) for _ in range(dim)]
    hi = [l + draw(width) for l in lo]
    return Box(tuple(lo), tuple(hi))


def test_basic_geometry():
    b = Box((0.0, 1.0), (2.0, 4.0))
    assert b.dim == 2
    np.testing.assert_array_equal(b.widths, [2.0, 3.0])
    np.testing.assert_array_equal(b.center, [1.0, 2.5])
    assert b.measure == 6.0
    assert b.corners().shape == (4, 2)
    assert b.to_dict() == {"lo": [0.0, 1.0], "hi": [2.0, 4.0]}


@pytest.mark.parametrize("lo,hi", [((0.0,), (0.0,)), ((1.0, 0.0), (0.0, 1.0)), ((), ()),
                                   ((0.0,), (np.inf,)), ((0.0, 0.0), (1.0,))])
def test_degenerate_boxes_rejected(lo, hi):
    with pytest.raises(InvalidInputError):
        Box(lo, hi)


def test_contains_with_margin():
    b = Box.cube(0.0, 1.0, 2)
    pts = np.array([[0.5, 0.5], [0.05, 0.5], [1.0, 1.0], [1.1, 0.5]])
    np.testing.assert_array_equal(b.contains(pts), [True, True, True, False])
    np.testing.assert_array_equal(b.contains(pts, margin=0.1), [True, False, False, False])


def test_boundary_cloud_lies_on_boundary():
    b = Box((0.0, -1.0), (2.0, 3.0))
    cloud = b.boundary_cloud(16)
    on_x = np.isclose(cloud[:, 0], 0.0) | np.isclose(cloud[:, 0], 2.0)
    on_y = np.isclose(cloud[:, 1], -1.0) | np.isclose(cloud[:, 1], 3.0)
    assert np.all(on_x | on_y)
    assert cloud.shape == (4 * 16, 2)
    np.testing.assert_array_equal(Box((1.0,), (2.0,)).boundary_cloud(), [[1.0], [2.0]])


def test_around_rejects_empty_cloud():
    with pytest.raises(InvalidInputError):
        Box.around(np.zeros((0, 2)))


@given(boxes(), boxes())
def test_union_contains_both(a, b):
    u = a.union(b)
    assert u.contains_box(a) and u.contains_box(b)


@settings(max_examples=50)
@given(boxes(), st.integers(0, 2**32 - 1))
def test_around_contains_samples(b, seed):
    pts = b.sample(np.random.default_rng(seed), 20)
    assert b.contains(pts).all()
    assert b.contains_box(Box.around(pts))
    assert Box.around(pts, pad=0.5).contains(pts, margin=0.5 - 1e-9).all()


@given(boxes(), st.floats(0.0, 3.0))
def test_inflate_measure(b, pad):
    big = b.inflate(pad)
    assert big.measure == pytest.approx(np.prod(b.widths + 2 * pad))
    assert big.contains_box(b)
