import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from textinpaint.config import RecognizerConfig
from textinpaint.errors import CompatibilityError, ConfigError
from textinpaint.geometry import box_to_quad
from textinpaint.recognizer import (
    GeneratedInstance,
    ToyRecognizer,
    decode_slots,
    extract_patch,
    filter_instances,
    resize_pad_geometry,
    train_toy_recognizer,
    word_accuracy,
)
from textinpaint.toyworld import recognizer_corpus


def instances_from(confs):
    return [
        GeneratedInstance(f"img{i % 3}", box_to_quad(0, 0, 4, 4), "w", "w", float(c), job_index=i)
        for i, c in enumerate(confs)
    ]


confidences = st.lists(st.floats(0.0, 1.0, allow_nan=False), max_size=12)


@given(confidences, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_filter_monotone_partition(confs, a, b):
    lo, hi = min(a, b), max(a, b)
    insts = instances_from(confs)
    kept_lo, disc_lo = filter_instances(insts, threshold=lo)
    kept_hi, _ = filter_instances(insts, threshold=hi)
    assert {i.job_index for i in kept_hi} <= {i.job_index for i in kept_lo}
    ids = sorted(i.job_index for i in kept_lo + disc_lo)
    assert ids == list(range(len(insts)))
    assert [i.job_index for i in kept_lo] == sorted(i.job_index for i in kept_lo)
    assert all(i.kept for i in kept_lo) and not any(i.kept for i in disc_lo)


@given(confidences)
def test_filter_boundaries(confs):
    insts = instances_from(confs)
    assert len(filter_instances(insts, threshold=0.0)[0]) == len(insts)
    kept, _ = filter_instances(insts, threshold=1.0)
    assert all(i.confidence >= 1.0 for i in kept)


def test_filter_does_not_mutate_and_validates():
    insts = instances_from([0.2, 0.95])
    filter_instances(insts, threshold=0.5)
    assert not any(i.kept for i in insts)
    with pytest.raises(ConfigError):
        filter_instances(insts, threshold=1.5)
    with pytest.raises(ConfigError):
        filter_instances(insts, recognizer=object(), patches=[np.zeros((2, 2, 3))])


def test_require_match():
    insts = [GeneratedInstance("a", box_to_quad(0, 0, 4, 4), "cat", "cab", 0.99)]
    assert len(filter_instances(insts, threshold=0.5)[0]) == 1
    assert len(filter_instances(insts, threshold=0.5, require_match=True)[0]) == 0


def test_extract_patch_example():
    img = np.ones((40, 40, 3), np.float32)
    scale, (nw, nh), (top, left) = resize_pad_geometry(20, 10, 32, 32)
    assert scale == pytest.approx(1.6)
    assert (nw, nh) == (32, 16) and (top, left) == (8, 0)
    patch = extract_patch(img, box_to_quad(5, 5, 25, 15), size=(32, 32), fill=-1.0)
    assert patch.shape == (32, 32, 3)
    assert np.all(patch[8:24] == 1.0)
    assert np.all(patch[:8] == -1.0) and np.all(patch[24:] == -1.0)


def test_decode_slots_confidence():
    from textinpaint.condition import Charset

    cs = Charset("ab")
    probs = np.full((4, cs.size), 0.0)
    probs[0, cs.id("a")] = 1.0
    probs[1, cs.id("b")] = 1.0
    probs[2, 0] = 1.0
    probs[3, 0] = 1.0
    assert decode_slots(probs, cs) == ("ab", 1.0)
    probs[1] = 1.0 / cs.size
    text, conf = decode_slots(probs, cs)
    assert 0.0 <= conf < 1.0


def test_single_class_accuracy():
    corpus = recognizer_corpus(0, 40, words=["lamp"])
    rec, _ = train_toy_recognizer(corpus, RecognizerConfig(steps=60, batch_size=8, hidden=8), seed=0)
    assert word_accuracy(rec, corpus) == 1.0


def test_training_deterministic(tmp_path):
    corpus = recognizer_corpus(1, 16)
    cfg = RecognizerConfig(steps=5, batch_size=4, hidden=8)
    r1, h1 = train_toy_recognizer(corpus, cfg, seed=3)
    r2, h2 = train_toy_recognizer(corpus, cfg, seed=3)
    assert h1 == h2
    assert r1.save(tmp_path / "a") == r2.save(tmp_path / "b")
    loaded = ToyRecognizer.load(tmp_path / "a")
    patch = np.zeros((32, 96, 3), np.float32)
    assert loaded.recognize(patch) == r1.recognize(patch)
    with pytest.raises(CompatibilityError):
        ToyRecognizer.load(tmp_path / "a", expect_charset_hash="other")


def test_empty_corpus():
    with pytest.raises(ConfigError):
        train_toy_recognizer([], RecognizerConfig())


@pytest.mark.slow
def test_ten_word_corpus():
    words = ["sun", "map", "tree", "door", "lamp", "road", "bird", "fish", "book", "star"]
    train = recognizer_corpus(0, 1000, words=words)
    test = recognizer_corpus(99, 200, words=words)
    rec, _ = train_toy_recognizer(train, RecognizerConfig(steps=1000), seed=0)
    assert word_accuracy(rec, test) >= 0.95
