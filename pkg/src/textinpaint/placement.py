"""Text placement proposals from segmentation and depth maps.

A segment qualifies when it is large enough and its depth is well explained
by a plane (RMS residual of a least-squares fit on depth normalised by its
maximum). Inside a qualifying segment we repeatedly take the largest
inscribed axis-aligned rectangle, trim it to a text-line box and carve it out
(plus a gap) before searching again.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PlacementConfig
from .errors import DataError, ShapeError
from .geometry import box_to_quad


@dataclass
class PlacementRegion:
    polygon: np.ndarray  # (4, 2) clockwise from top-left
    segment_id: int
    smoothness: float
    area: float

    @property
    def box(self) -> tuple[int, int, int, int]:
        p = self.polygon
        return int(p[:, 0].min()), int(p[:, 1].min()), int(p[:, 0].max()), int(p[:, 1].max())


def plane_fit_residual(depth: np.ndarray, mask: np.ndarray) -> float:
    """RMS residual of the least-squares plane ``a*x + b*y + c`` over ``mask``."""
    ys, xs = np.nonzero(mask)
    if len(xs) < 3:
        return 0.0
    z = depth[ys, xs].astype(np.float64)
    A = np.column_stack([xs, ys, np.ones_like(xs)]).astype(np.float64)
    coef, *_ = np.linalg.lstsq(A, z, rcond=None)
    r = z - A @ coef
    return float(np.sqrt(np.mean(r * r)))


def largest_rectangle(mask: np.ndarray) -> tuple[int, int, int, int] | None:
    """Largest all-true axis-aligned rectangle as ``(x0, y0, x1, y1)``, exclusive ends.

    Histogram-stack scan, row by row. Ties keep the first rectangle found
    (topmost bottom edge, then leftmost).
    """
    h, w = mask.shape
    heights = np.zeros(w, dtype=np.int64)
    best, best_area = None, 0
    for row in range(h):
        heights = np.where(mask[row], heights + 1, 0)
        stack: list[int] = []
        hs = heights.tolist() + [0]
        for col, hcur in enumerate(hs):
            while stack and hs[stack[-1]] >= hcur:
                top = stack.pop()
                height = hs[top]
                left = stack[-1] + 1 if stack else 0
                area = height * (col - left)
                if area > best_area:
                    best_area = area
                    best = (left, row - height + 1, col, row + 1)
            stack.append(col)
    return best


def _trim_to_line(rect, cfg: PlacementConfig):
    x0, y0, x1, y1 = rect
    rw, rh = x1 - x0, y1 - y0
    bh = min(cfg.box_height, rh)
    bw = min(cfg.max_width, rw)
    if bw < cfg.min_width or bw < bh:
        return None
    ox = x0 + (rw - bw) // 2
    oy = y0 + (rh - bh) // 2
    return ox, oy, ox + bw, oy + bh


def propose_regions(seg_map, depth_map, params: PlacementConfig | None = None) -> list[PlacementRegion]:
    params = params or PlacementConfig()
    seg = np.asarray(seg_map)
    depth = np.asarray(depth_map, dtype=np.float64)
    if seg.shape != depth.shape or seg.ndim != 2:
        raise ShapeError(f"segmentation {seg.shape} and depth {depth.shape} must be equal 2-D shapes")
    if not np.all(np.isfinite(depth)) or depth.min() <= 0:
        raise DataError("depth values must be finite and positive")
    h, w = seg.shape
    min_area = params.min_area_frac * h * w
    dnorm = depth / depth.max()

    regions: list[PlacementRegion] = []
    for label in np.unique(seg):
        mask = seg == label
        if mask.sum() < min_area:
            continue
        residual = plane_fit_residual(dnorm, mask)
        if residual > params.max_residual:
            continue
        avail = mask.copy()
        for _ in range(params.per_segment):
            rect = largest_rectangle(avail)
            if rect is None:
                break
            box = _trim_to_line(rect, params)
            if box is None:
                break
            x0, y0, x1, y1 = box
            area = float((x1 - x0) * (y1 - y0))
            if area < min_area:
                break
            regions.append(PlacementRegion(box_to_quad(x0, y0, x1, y1), int(label), residual, area))
            g = params.gap
            avail[max(0, y0 - g) : y1 + g, max(0, x0 - g) : x1 + g] = False

    regions.sort(key=lambda r: (-r.area, r.segment_id, r.box[1], r.box[0]))
    return regions[: params.max_regions]
