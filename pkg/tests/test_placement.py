import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from textinpaint.config import PlacementConfig
from textinpaint.errors import DataError, ShapeError
from textinpaint.geometry import rasterize_polygon
from textinpaint.oracles import largest_rectangle_area, plane_rms_normal_equations
from textinpaint.placement import largest_rectangle, plane_fit_residual, propose_regions


def planar_depth(h, w, a=0.01, b=0.02, c=2.0):
    yy, xx = np.mgrid[0:h, 0:w]
    return c + a * xx + b * yy


def test_uniform_planar_segment():
    seg = np.zeros((64, 64), np.int32)
    regions = propose_regions(seg, planar_depth(64, 64))
    assert len(regions) >= 1
    assert all(r.smoothness == pytest.approx(0.0, abs=1e-9) for r in regions)


def test_all_segments_too_small():
    seg = np.arange(64 * 64).reshape(64, 64)
    assert propose_regions(seg, planar_depth(64, 64)) == []


def test_planar_vs_noisy():
    rng = np.random.default_rng(0)
    seg = np.zeros((64, 64), np.int32)
    seg[:, 32:] = 1
    depth = planar_depth(64, 64)
    depth[:, 32:] += rng.uniform(0, 1.5, size=(64, 32))
    regions = propose_regions(seg, depth)
    assert regions and {r.segment_id for r in regions} == {0}


def test_input_errors():
    with pytest.raises(ShapeError):
        propose_regions(np.zeros((4, 4)), np.ones((4, 5)))
    with pytest.raises(DataError):
        propose_regions(np.zeros((4, 4)), np.zeros((4, 4)))


@given(st.integers(0, 2**32 - 1))
def test_plane_residual_matches_normal_equations(seed):
    rng = np.random.default_rng(seed)
    depth = rng.uniform(0.5, 2.0, size=(9, 11))
    mask = rng.random((9, 11)) > 0.3
    if mask.sum() < 3:
        return
    assert plane_fit_residual(depth, mask) == pytest.approx(plane_rms_normal_equations(depth, mask), abs=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_largest_rectangle_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    mask = rng.random((7, 8)) > 0.35
    rect = largest_rectangle(mask)
    area = largest_rectangle_area(mask)
    if area == 0:
        assert rect is None
        return
    x0, y0, x1, y1 = rect
    assert (x1 - x0) * (y1 - y0) == area
    assert mask[y0:y1, x0:x1].all()


def _random_world(rng, size=48):
    seg = np.zeros((size, size), np.int32)
    cut_x, cut_y = rng.integers(8, size - 8, size=2)
    seg[:, cut_x:] = 1
    seg[cut_y:, :cut_x] = 2
    depth = 1.0 + rng.uniform(0, 0.01) * np.mgrid[0:size, 0:size][1]
    for label in (1, 2):
        if rng.random() < 0.5:
            depth = np.where(seg == label, depth + rng.uniform(0, 1, size=depth.shape), depth)
    return seg, depth


@given(st.integers(0, 2**32 - 1))
def test_placement_laws(seed):
    rng = np.random.default_rng(seed)
    seg, depth = _random_world(rng)
    params = PlacementConfig(min_width=8, max_width=24, box_height=8)
    h, w = seg.shape
    for r in propose_regions(seg, depth, params):
        cover = rasterize_polygon(r.polygon, h, w)
        assert np.all(r.polygon >= 0) and np.all(r.polygon[:, 0] <= w) and np.all(r.polygon[:, 1] <= h)
        assert np.unique(seg[cover]).tolist() == [r.segment_id]
        assert r.area >= params.min_area_frac * h * w
        assert r.smoothness <= params.max_residual
