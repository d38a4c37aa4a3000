"""Polygon helpers shared by masking, placement, patches and scoring.

Rasterization rule: pixel ``(row, col)`` belongs to a polygon when its centre
``(col + 0.5, row + 0.5)`` is strictly inside by the even-odd rule. A box with
integer corners ``[x0, x1] x [y0, y1]`` therefore covers exactly
``(x1 - x0) * (y1 - y0)`` pixels.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidAnnotationError


def as_polygon(points) -> np.ndarray:
    poly = np.asarray(points, dtype=np.float64)
    if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
        raise InvalidAnnotationError(f"polygon needs >= 3 (x, y) vertices, got shape {poly.shape}")
    if not np.all(np.isfinite(poly)):
        raise InvalidAnnotationError("polygon has non-finite coordinates")
    return poly


def polygon_area(points) -> float:
    p = np.asarray(points, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def validate_polygon(points, height: int | None = None, width: int | None = None) -> np.ndarray:
    poly = as_polygon(points)
    if polygon_area(poly) <= 0.0:
        raise InvalidAnnotationError("degenerate polygon (zero area)")
    if height is not None and width is not None:
        if poly[:, 0].min() < 0 or poly[:, 1].min() < 0 or poly[:, 0].max() > width or poly[:, 1].max() > height:
            raise InvalidAnnotationError(f"polygon outside {width}x{height} image bounds")
    return poly


def rasterize_polygon(points, height: int, width: int) -> np.ndarray:
    """Boolean (height, width) mask of pixels whose centres lie inside ``points``."""
    poly = as_polygon(points)
    ys = np.arange(height, dtype=np.float64)[:, None] + 0.5
    xs = np.arange(width, dtype=np.float64)[None, :] + 0.5
    inside = np.zeros((height, width), dtype=bool)
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    for ax, ay, bx, by in zip(x0, y0, x1, y1):
        if ay == by:
            continue
        crosses = (ay > ys) != (by > ys)  # (H, 1)
        with np.errstate(over="ignore"):  # near-horizontal edges; only rows it crosses matter
            x_at = ax + (ys - ay) * (bx - ax) / (by - ay)
        inside ^= crosses & (xs < x_at)
    return inside


def bbox(points) -> tuple[float, float, float, float]:
    p = np.asarray(points, dtype=np.float64)
    return float(p[:, 0].min()), float(p[:, 1].min()), float(p[:, 0].max()), float(p[:, 1].max())


def box_to_quad(x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    """Clockwise quad (in image coordinates, y down) starting top-left."""
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=np.float64)


def translate(points, dx: float, dy: float) -> np.ndarray:
    return np.asarray(points, dtype=np.float64) + np.array([dx, dy])


def _orient(a, b, c) -> float:
    return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def _on_segment(a, b, c) -> bool:
    """``c`` collinear with ``a``-``b`` lies within its bounding box."""
    return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])


def _segments_intersect(p1, p2, p3, p4) -> bool:
    """Closed segments share a point (touching and collinear overlap count)."""
    d1, d2 = _orient(p3, p4, p1), _orient(p3, p4, p2)
    d3, d4 = _orient(p1, p2, p3), _orient(p1, p2, p4)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True
    return (
        (d1 == 0 and _on_segment(p3, p4, p1))
        or (d2 == 0 and _on_segment(p3, p4, p2))
        or (d3 == 0 and _on_segment(p1, p2, p3))
        or (d4 == 0 and _on_segment(p1, p2, p4))
    )


def is_simple(points) -> bool:
    """True when vertices are distinct and no two non-adjacent edges touch."""
    p = np.asarray(points, dtype=np.float64)
    n = len(p)
    if len({tuple(v) for v in p.tolist()}) != n:
        return False
    edges = [(p[i], p[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def min_area_quad(points) -> np.ndarray:
    """Minimum-area enclosing rectangle of a point set as four corners."""
    import cv2

    pts = np.asarray(points, dtype=np.float32)
    rect = cv2.minAreaRect(pts)
    quad = cv2.boxPoints(rect).astype(np.float64)
    return order_quad(quad)


def order_quad(quad) -> np.ndarray:
    """Order four corners clockwise starting from the top-left-most one."""
    q = np.asarray(quad, dtype=np.float64)
    c = q.mean(axis=0)
    ang = np.arctan2(q[:, 1] - c[1], q[:, 0] - c[0])
    q = q[np.argsort(ang)]
    start = int(np.argmin(q[:, 0] + q[:, 1]))
    return np.roll(q, -start, axis=0)
