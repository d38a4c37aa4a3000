import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from textinpaint.condition import PAD, UNK, Charset, build_condition_encoder, detokenize, encode_condition, tokenize
from textinpaint.config import DEFAULT_CHARSET, ConditionConfig
from textinpaint.errors import VocabularyError

CS = Charset(DEFAULT_CHARSET)


def test_empty_string_is_all_pad():
    assert tokenize("", CS, 8).tolist() == [PAD] * 8


def test_direct_lookup():
    assert tokenize("cat", CS, 8).tolist() == [CS.id("c"), CS.id("a"), CS.id("t")] + [PAD] * 5


def test_truncation_and_case_and_unk():
    s = "abcdefghijklmnopqrstu"  # L + 5 with L = 16
    toks = tokenize(s, CS, 16)
    assert len(toks) == 16 and detokenize(toks, CS) == s[:16]
    assert tokenize("CaT", CS, 4).tolist() == tokenize("cat", CS, 4).tolist()
    assert tokenize("a!", CS, 3).tolist() == [CS.id("a"), UNK, PAD]


@given(st.text(alphabet=DEFAULT_CHARSET, max_size=20))
def test_tokenize_idempotent_over_charset(s):
    toks = tokenize(s, CS, 16)
    assert tokenize(detokenize(toks, CS), CS, 16).tolist() == toks.tolist()
    assert toks.max(initial=0) < CS.size


@pytest.fixture(scope="module")
def encoder():
    return build_condition_encoder(ConditionConfig(), seed=0)


def test_encode_shape_finite_deterministic(encoder):
    toks = encoder.tokenize("lamp")
    e1, e2 = encode_condition(encoder, toks), encode_condition(encoder, toks)
    assert e1.shape == (16, 64)
    assert np.all(np.isfinite(e1))
    assert e1.tobytes() == e2.tobytes()


def test_invalid_ids(encoder):
    bad = np.full(16, CS.size, dtype=np.int64)
    with pytest.raises(VocabularyError):
        encode_condition(encoder, bad)
    with pytest.raises(VocabularyError):
        encode_condition(encoder, np.zeros(5, dtype=np.int64))


def test_distinct_words_distinct_pooled_embeddings(encoder):
    a = encode_condition(encoder, encoder.tokenize("cat")).mean(0)
    b = encode_condition(encoder, encoder.tokenize("dog")).mean(0)
    cos = float(a @ b / np.linalg.norm(a) / np.linalg.norm(b))
    assert cos < 1.0


def test_charset_hash_changes_with_charset():
    assert Charset("abc").hash != Charset("abd").hash
