"""Fast self-check: every core routine against its independent oracle.

Each check returns ``(name, passed, detail)``; the CLI prints one line per
check and exits non-zero if any failed.
"""
from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from . import oracles
from .condition import Charset, detokenize, tokenize
from .config import DEFAULT_CHARSET
from .crops import crop_box_for
from .dataset import DatasetRecord, export_icdar, parse_icdar, parse_manifest_lines
from .geometry import box_to_quad, rasterize_polygon
from .placement import largest_rectangle, plane_fit_residual
from .probe import match_and_score, polygon_iou
from .recognizer import GeneratedInstance, filter_instances
from .schedule import build_schedule, forward_diffuse


def check_schedule(rng):
    s = build_schedule(1000)
    ref = np.array(oracles.cumulative_alpha_bar(1e-4, 0.02, 1000))
    err = float(np.max(np.abs(s.alpha_bar - ref)))
    return err < 1e-12, f"max |alpha_bar - sequential product| = {err:.2e}"


def check_forward_moments(rng, n=4000):
    s = build_schedule(1000)
    x0 = np.full(n, 0.7)
    worst = 0.0
    for t in (1, 500, 1000):
        x = forward_diffuse(x0, t, rng.standard_normal(n), s).x_t
        ab = s.ab(t)
        z_mean = abs(x.mean() - np.sqrt(ab) * 0.7) / np.sqrt((1 - ab) / n)
        worst = max(worst, z_mean)
    return worst < 4.0, f"worst mean z-score {worst:.2f}"


def check_raster(rng, n=50):
    for _ in range(n):
        pts = rng.uniform(0, 16, size=(int(rng.integers(3, 7)), 2))
        # star-shaped ordering keeps the polygon simple, where fill rules agree
        c = pts.mean(axis=0)
        pts = pts[np.argsort(np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0]))]
        if not np.array_equal(rasterize_polygon(pts, 16, 16), oracles.raster_mask(pts, 16, 16)):
            return False, f"raster mismatch for {pts.tolist()}"
    return True, f"{n} random polygons"


def check_plane_fit(rng, n=50):
    worst = 0.0
    for _ in range(n):
        depth = rng.uniform(0.5, 2, size=(8, 9))
        mask = rng.random((8, 9)) > 0.3
        if mask.sum() >= 3:
            worst = max(worst, abs(plane_fit_residual(depth, mask) - oracles.plane_rms_normal_equations(depth, mask)))
    return worst < 1e-9, f"max residual difference {worst:.2e}"


def check_largest_rectangle(rng, n=100):
    for _ in range(n):
        mask = rng.random((6, 7)) > 0.35
        rect = largest_rectangle(mask)
        area = 0 if rect is None else (rect[2] - rect[0]) * (rect[3] - rect[1])
        if area != oracles.largest_rectangle_area(mask):
            return False, f"area {area} != brute force"
    return True, f"{n} random masks"


def check_crop_boxes(rng, n=200):
    for _ in range(n):
        f = int(rng.choice([1, 2, 4, 8]))
        w = h = 64
        x0, y0 = rng.integers(0, 50, 2)
        x1, y1 = x0 + rng.integers(1, 14), y0 + rng.integers(1, 14)
        m = int(rng.integers(0, 10))
        got = crop_box_for(box_to_quad(x0, y0, x1, y1), m, f, w, h)
        if got != oracles.crop_box_arithmetic((x0, y0, x1, y1), m, f, w, h):
            return False, f"crop box {got} differs from arithmetic"
    return True, f"{n} random boxes"


def _random_boxes(rng, k, size=20):
    out = []
    for _ in range(k):
        x0, y0 = rng.integers(0, size - 4, 2)
        out.append(box_to_quad(x0, y0, x0 + rng.integers(2, 5), y0 + rng.integers(2, 5)))
    return out


def check_iou(rng, n=50):
    for _ in range(n):
        a, b = _random_boxes(rng, 2)
        if abs(polygon_iou(a, b, 20, 20) - oracles.iou_bruteforce(a, b, 20, 20)) > 1e-12:
            return False, "IoU mismatch"
    return True, f"{n} random pairs"


def check_matching(rng, n=100):
    for _ in range(n):
        cells = rng.permutation(9)[: rng.integers(0, 5)]
        gts = [box_to_quad(c % 3 * 7, c // 3 * 7, c % 3 * 7 + 5, c // 3 * 7 + 5) for c in cells]
        preds = [np.clip(g + rng.integers(-2, 3, size=2), 0, 21) for g in gts if rng.random() < 0.8]
        preds += _random_boxes(rng, int(rng.integers(0, 3)))
        s = match_and_score([preds], [gts], 0.5, sizes=[(21, 21)])
        if s["matches"] != oracles.best_matching_count(preds, gts, 0.5, 21, 21):
            return False, "greedy matching is not maximum on a disjoint instance"
    return True, f"{n} random instances"


def check_filter_laws(rng, n=200):
    for _ in range(n):
        confs = rng.random(int(rng.integers(0, 10)))
        insts = [GeneratedInstance("x", box_to_quad(0, 0, 2, 2), "w", "w", float(c), job_index=i) for i, c in enumerate(confs)]
        a, b = np.sort(rng.random(2))
        ka, da = filter_instances(insts, threshold=a)
        kb, _ = filter_instances(insts, threshold=b)
        if not {i.job_index for i in kb} <= {i.job_index for i in ka}:
            return False, "raising the threshold kept a new instance"
        if sorted(i.job_index for i in ka + da) != list(range(len(insts))):
            return False, "kept and discarded do not partition the input"
        if len(filter_instances(insts, threshold=0.0)[0]) != len(insts):
            return False, "threshold 0 discarded something"
    return True, f"{n} random instance sets"


def check_tokenizer(rng, n=100):
    cs = Charset(DEFAULT_CHARSET)
    for _ in range(n):
        s = "".join(rng.choice(list(DEFAULT_CHARSET), size=int(rng.integers(0, 20))))
        toks = tokenize(s, cs, 16)
        if detokenize(toks, cs) != s[:16]:
            return False, f"round trip failed for {s!r}"
    return True, f"{n} random strings"


def check_manifest_round_trip(rng):
    inst = GeneratedInstance("a", box_to_quad(1, 2, 9, 7), "ink", "ink", 0.97, True)
    rec = DatasetRecord("images/a.png", 16, 12, [inst], {"seed": 3})
    back = parse_manifest_lines([rec.to_line()])[0]
    if back.to_line() != rec.to_line():
        return False, "manifest line changed on round trip"
    with tempfile.TemporaryDirectory() as tmp:
        export_icdar([rec], tmp)
        (quad, text), = parse_icdar(Path(tmp) / "a.txt")
    ok = text == "ink" and np.array_equal(quad, inst.polygon)
    return ok, "manifest and ICDAR text round trips"


def micro_gradient_problem(seed: int = 0):
    """Noise-prediction loss of a micro generator in float64.

    Latent 4x4x4, embedding width D=8, sequence length L=4, batch of 2.
    Returns ``(loss_fn, parameters)``.
    """
    import torch

    from .condition import build_condition_encoder
    from .config import ConditionConfig, DenoiserConfig
    from .denoiser import build_denoiser

    den = build_denoiser(DenoiserConfig(channels=8, heads=2, groups=4), 4, 8, seed=seed).double()
    cond = build_condition_encoder(ConditionConfig(dim=8, max_len=4, layers=1, heads=2), seed=seed + 1).double()
    g = np.random.default_rng(seed)
    x_t = torch.from_numpy(g.normal(size=(2, 4, 4, 4)))
    z_b = torch.from_numpy(g.normal(size=(2, 4, 4, 4)))
    m = torch.from_numpy((g.random((2, 1, 4, 4)) > 0.5).astype(np.float64))
    eps = torch.from_numpy(g.normal(size=(2, 4, 4, 4)))
    t = torch.tensor([3, 700])
    tokens = cond.tokens_for(["ab", "xyz9"])

    def loss():
        pred = den(torch.cat([x_t, z_b, m], 1), t, cond(tokens))
        return torch.mean((pred - eps) ** 2)

    return loss, list(den.parameters()) + list(cond.parameters())


def gradient_errors(loss, params, h: float = 1e-6) -> list[float]:
    """Per-tensor relative error between autograd and central differences."""
    import torch

    for p in params:
        p.grad = None
    loss().backward()
    analytic = [p.grad.detach().numpy().copy() for p in params]

    def f():
        with torch.no_grad():
            return float(loss())

    numeric = oracles.central_differences(f, [p.data.numpy() for p in params], h)
    return [oracles.relative_error(a, n) for a, n in zip(analytic, numeric)]


def check_gradients(rng):
    loss, params = micro_gradient_problem(int(rng.integers(1000)))
    small = [p for p in params if p.numel() <= 16]
    worst = max(gradient_errors(loss, small))
    return worst <= 1e-3, f"worst relative error {worst:.2e} over {len(small)} tensors"


CHECKS = [
    ("schedule closed form", check_schedule),
    ("forward noising moments", check_forward_moments),
    ("polygon rasterization", check_raster),
    ("plane-fit residual", check_plane_fit),
    ("largest rectangle", check_largest_rectangle),
    ("crop-box arithmetic", check_crop_boxes),
    ("polygon IoU", check_iou),
    ("detection matching", check_matching),
    ("filter laws", check_filter_laws),
    ("tokenizer round trip", check_tokenizer),
    ("manifest round trip", check_manifest_round_trip),
    ("loss gradients", check_gradients),
]


def run_checks(seed: int = 0) -> list[tuple[str, bool, str]]:
    results = []
    for name, fn in CHECKS:
        rng = np.random.default_rng(seed)
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))
    return results
