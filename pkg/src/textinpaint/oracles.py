"""Slow, independent reference computations used to check the fast paths.

None of these share code with the implementations they check.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def cumulative_alpha_bar(beta_start: float, beta_end: float, T: int) -> list[float]:
    out, acc = [], 1.0
    for i in range(T):
        beta = beta_start if T == 1 else beta_start + (beta_end - beta_start) * i / (T - 1)
        acc *= 1.0 - beta
        out.append(acc)
    return out


def point_in_polygon(x: float, y: float, poly) -> bool:
    """Winding-number test; points exactly on an edge count as outside."""
    wn = 0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        cross = (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)
        if y0 <= y < y1 and cross > 0:
            wn += 1
        elif y1 <= y < y0 and cross < 0:
            wn -= 1
    return wn != 0


def raster_count(poly, height: int, width: int) -> int:
    return sum(point_in_polygon(c + 0.5, r + 0.5, poly) for r in range(height) for c in range(width))


def raster_mask(poly, height: int, width: int) -> np.ndarray:
    m = np.zeros((height, width), dtype=bool)
    for r in range(height):
        for c in range(width):
            m[r, c] = point_in_polygon(c + 0.5, r + 0.5, poly)
    return m


def plane_rms_normal_equations(depth: np.ndarray, mask: np.ndarray) -> float:
    """Plane fit by explicitly solving the 3x3 normal equations."""
    ys, xs = np.nonzero(mask)
    z = depth[ys, xs].astype(np.float64)
    x, y = xs.astype(np.float64), ys.astype(np.float64)
    n = float(len(z))
    M = np.array(
        [[np.sum(x * x), np.sum(x * y), np.sum(x)], [np.sum(x * y), np.sum(y * y), np.sum(y)], [np.sum(x), np.sum(y), n]]
    )
    rhs = np.array([np.sum(x * z), np.sum(y * z), np.sum(z)])
    a, b, c = np.linalg.solve(M, rhs)
    r = z - (a * x + b * y + c)
    return math.sqrt(float(np.mean(r * r)))


def largest_rectangle_area(mask: np.ndarray) -> int:
    """Brute force over all rectangles via a 2-D prefix sum."""
    h, w = mask.shape
    P = np.zeros((h + 1, w + 1), dtype=np.int64)
    P[1:, 1:] = np.cumsum(np.cumsum(mask.astype(np.int64), 0), 1)
    best = 0
    for y0 in range(h):
        for y1 in range(y0 + 1, h + 1):
            for x0 in range(w):
                for x1 in range(x0 + 1, w + 1):
                    area = (y1 - y0) * (x1 - x0)
                    if area <= best:
                        continue
                    if P[y1, x1] - P[y0, x1] - P[y1, x0] + P[y0, x0] == area:
                        best = area
    return best


def crop_box_arithmetic(bbox, margin: int, factor: int, width: int, height: int):
    """Expand-snap-clamp, written out with floats and math.floor/ceil."""
    x0, y0, x1, y1 = bbox
    ex0, ey0, ex1, ey1 = x0 - margin, y0 - margin, x1 + margin, y1 + margin
    sx0 = math.floor(ex0 / factor) * factor
    sy0 = math.floor(ey0 / factor) * factor
    sx1 = math.ceil(ex1 / factor) * factor
    sy1 = math.ceil(ey1 / factor) * factor
    return max(sx0, 0), max(sy0, 0), min(sx1, width), min(sy1, height)


def iou_bruteforce(a, b, height: int, width: int) -> float:
    ma, mb = raster_mask(a, height, width), raster_mask(b, height, width)
    u = int((ma | mb).sum())
    return 0.0 if u == 0 else int((ma & mb).sum()) / u


def best_matching_count(preds, gts, iou_threshold: float, height: int, width: int) -> int:
    """Maximum one-to-one matching size by enumerating all assignments."""
    ious = [[iou_bruteforce(p, g, height, width) for g in gts] for p in preds]
    best = 0
    slots = list(range(len(gts))) + [None] * len(preds)
    for perm in itertools.permutations(slots, len(preds)):
        count = sum(1 for pi, gi in enumerate(perm) if gi is not None and ious[pi][gi] >= iou_threshold)
        best = max(best, count)
    return best


def score_from_counts(matches: int, n_pred: int, n_gt: int) -> tuple[float, float, float]:
    p = matches / n_pred if n_pred else 0.0
    r = matches / n_gt if n_gt else (1.0 if n_pred == 0 else 0.0)
    h = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, h


def central_differences(f, params: list[np.ndarray], h: float = 1e-6) -> list[np.ndarray]:
    """Numerical gradient of scalar ``f()`` w.r.t. arrays mutated in place."""
    grads = []
    for arr in params:
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = f()
            flat[i] = old - h
            fm = f()
            flat[i] = old
            gflat[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """``|a - n| / max(|a| + |n|, floor)``.

    The floor sits at the noise level of float64 central differences, so
    tensors whose true gradient is zero (attention key biases) are judged by
    absolute error.
    """
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), floor))
