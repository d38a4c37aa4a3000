import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from textinpaint.config import ProbeConfig
from textinpaint.errors import ConfigError
from textinpaint.geometry import box_to_quad
from textinpaint.oracles import best_matching_count, iou_bruteforce, score_from_counts
from textinpaint.probe import components_to_quads, evaluate_probe, match_and_score, polygon_iou, train_probe


def test_hand_example():
    gts = [box_to_quad(0, 0, 10, 10), box_to_quad(20, 0, 30, 10)]
    preds = [box_to_quad(0, 0, 10, 9), box_to_quad(20, 0, 30, 10), box_to_quad(40, 40, 45, 45)]
    s = match_and_score([preds], [gts], 0.5, sizes=[(50, 50)])
    assert s["precision"] == pytest.approx(2 / 3)
    assert s["recall"] == 1.0
    assert s["hmean"] == pytest.approx(0.8)


def test_empty_conventions():
    q = [box_to_quad(0, 0, 4, 4)]
    assert match_and_score([[]], [q])["precision"] == 0.0
    assert match_and_score([q], [[]])["recall"] == 0.0
    both = match_and_score([[]], [[]])
    assert (both["precision"], both["recall"], both["hmean"]) == (0.0, 1.0, 0.0)
    with pytest.raises(ConfigError):
        match_and_score([[]], [[], []])
    with pytest.raises(ConfigError):
        match_and_score([[]], [[]], iou_threshold=0.0)


def test_polygon_iou_matches_oracle(rng):
    for _ in range(20):
        x0, y0 = rng.integers(0, 10, 2)
        x1, y1 = rng.integers(11, 20, 2)
        u0, v0 = rng.integers(0, 10, 2)
        u1, v1 = rng.integers(11, 20, 2)
        a, b = box_to_quad(x0, y0, x1, y1), box_to_quad(u0, v0, u1, v1)
        assert polygon_iou(a, b, 20, 20) == pytest.approx(iou_bruteforce(a, b, 20, 20))


def random_instance(rng, size=24):
    """Non-overlapping ground truth in a grid of cells, jittered predictions."""
    cells = rng.permutation(9)[: rng.integers(0, 6)]
    gts = []
    for c in cells:
        cx, cy = (c % 3) * 8, (c // 3) * 8
        x0, y0 = cx + rng.integers(0, 3), cy + rng.integers(0, 3)
        gts.append(box_to_quad(x0, y0, x0 + rng.integers(3, 6), y0 + rng.integers(3, 6)))
    preds = []
    for _ in range(rng.integers(0, 6)):
        if gts and rng.random() < 0.7:
            g = gts[rng.integers(len(gts))]
            preds.append(g + rng.integers(-2, 3, size=2))
        else:
            x0, y0 = rng.integers(0, size - 6, 2)
            preds.append(box_to_quad(x0, y0, x0 + rng.integers(2, 6), y0 + rng.integers(2, 6)))
    preds = [np.clip(p, 0, size) for p in preds]
    preds = [p for p in preds if np.ptp(p[:, 0]) > 0 and np.ptp(p[:, 1]) > 0]
    return preds, gts


def test_agrees_with_bruteforce_oracle():
    rng = np.random.default_rng(7)
    for _ in range(100):
        preds, gts = random_instance(rng)
        s = match_and_score([preds], [gts], 0.5, sizes=[(24, 24)])
        m = best_matching_count(preds, gts, 0.5, 24, 24)
        p, r, h = score_from_counts(m, len(preds), len(gts))
        assert s["matches"] == m
        assert (s["precision"], s["recall"]) == pytest.approx((p, r))
        assert s["hmean"] == pytest.approx(h)


@given(st.integers(0, 2**32 - 1))
def test_score_properties(seed):
    rng = np.random.default_rng(seed)
    images = [random_instance(rng) for _ in range(3)]
    preds, gts = [p for p, _ in images], [g for _, g in images]
    sizes = [(24, 24)] * 3
    s = match_and_score(preds, gts, 0.5, sizes)
    P, R, H = s["precision"], s["recall"], s["hmean"]
    assert H <= min(2 * P, 2 * R) + 1e-12
    assert H <= max(P, R) + 1e-12
    rolled = [[np.roll(p, rng.integers(4), axis=0) for p in ps] for ps in preds]
    assert match_and_score(rolled, gts, 0.5, sizes) == s
    perm = rng.permutation(3)
    relabeled = match_and_score([preds[i] for i in perm], [gts[i] for i in perm], 0.5, [sizes[i] for i in perm])
    assert relabeled == s


def test_components_to_quads():
    m = np.zeros((20, 20), bool)
    m[2:6, 3:12] = True
    m[15, 15] = True
    (quad,) = components_to_quads(m, min_area=4)
    assert sorted(map(tuple, quad.tolist())) == sorted([(3.0, 2.0), (12.0, 2.0), (12.0, 6.0), (3.0, 6.0)])


def _probe_set(n, seed):
    rng = np.random.default_rng(seed)
    images, polys = [], []
    for _ in range(n):
        img = rng.uniform(-0.2, 0.2, size=(32, 32, 3)).astype(np.float32)
        x0, y0 = rng.integers(2, 14, 2)
        img[y0 : y0 + 6, x0 : x0 + 14] = 0.9
        images.append(img)
        polys.append([box_to_quad(x0, y0, x0 + 14, y0 + 6)])
    return images, polys


def test_train_probe_deterministic_and_memorizes():
    images, polys = _probe_set(20, 0)
    cfg = ProbeConfig(hidden=8, steps=150, batch_size=8, min_component_area=10)
    p1, h1 = train_probe(images, polys, cfg, seed=2)
    p2, h2 = train_probe(images, polys, cfg, seed=2)
    assert h1 == h2
    assert evaluate_probe(p1, images, polys)["hmean"] >= 0.9


def test_untrained_probe_scores_low():
    from textinpaint.probe import Probe

    images, polys = _probe_set(10, 1)
    assert evaluate_probe(Probe(ProbeConfig(), 3, seed=0), images, polys)["hmean"] <= 0.1


def test_train_probe_errors():
    with pytest.raises(ConfigError):
        train_probe([], [], ProbeConfig())
