import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dctc.types import (BLANK, DomainError, LabelSequence, Vocabulary, augment_label, softmax_columns)


def test_vocabulary_indices():
    v = Vocabulary(("a", "b", "c"))
    assert v.K == 3 and v.num_classes == 4
    assert v.encode("cab").ids == (3, 1, 2)
    assert v.decode([3, 1, 2]) == "cab"
    assert v.token(BLANK) == "<b>"


@pytest.mark.parametrize("chars", [(), ("a", "a"), ("ab",), (" ",), ("\t",)])
def test_vocabulary_rejects_bad_symbols(chars):
    with pytest.raises(DomainError):
        Vocabulary(chars)


def test_vocabulary_decode_rejects_blank():
    with pytest.raises(DomainError):
        Vocabulary(("a",)).decode([0])


def test_synthetic_vocabulary_beyond_ascii():
    v = Vocabulary.synthetic(70)
    assert v.K == 70 and len(set(v.chars)) == 70
    assert v.chars[:3] == ("a", "b", "c")


def test_vocabulary_file_round_trip(tmp_path):
    v = Vocabulary.synthetic(12)
    v.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt") == v
    (tmp_path / "bad.txt").write_text("a\nb\n")
    with pytest.raises(DomainError):
        Vocabulary.load(tmp_path / "bad.txt")


def test_label_sequence_rules():
    with pytest.raises(DomainError):
        LabelSequence((1, 0, 2))
    y = LabelSequence((1, 1, 2, 2, 2))
    assert y.repeats == 3
    assert y.min_frames() == 8
    assert len(LabelSequence(())) == 0


def test_encode_unknown_character():
    with pytest.raises(DomainError):
        Vocabulary(("a",)).encode("ab")


@pytest.mark.parametrize("y, expected", [
    ((1,), [0, 1, 0]),
    ((1, 2), [0, 1, 0, 2, 0]),
    ((1, 1), [0, 1, 0, 1, 0]),
])
def test_augment_label(y, expected):
    assert augment_label(LabelSequence(y)).tolist() == expected


def test_augment_label_errors(ab):
    with pytest.raises(DomainError):
        augment_label(LabelSequence(()))
    with pytest.raises(DomainError):
        augment_label(LabelSequence((3,)), ab)


@given(st.lists(st.integers(1, 5), min_size=1, max_size=12))
def test_augment_label_structure(ids):
    ext = augment_label(LabelSequence(tuple(ids)))
    assert len(ext) == 2 * len(ids) + 1
    assert np.all(ext[0::2] == BLANK)
    assert ext[1::2].tolist() == ids


@pytest.mark.parametrize("col, expected", [
    ([0.0, 0.0], [0.5, 0.5]),
    ([1000.0, 1000.0, 1000.0], [1 / 3, 1 / 3, 1 / 3]),
    ([np.log(2.0), 0.0], [2 / 3, 1 / 3]),
])
def test_softmax_columns_examples(col, expected):
    P = softmax_columns(np.array(col)[:, None])
    np.testing.assert_allclose(P.values[:, 0], expected, rtol=0, atol=1e-15)


def test_softmax_columns_validation():
    with pytest.raises(DomainError):
        softmax_columns(np.array([[np.nan], [0.0]]))
    with pytest.raises(DomainError):
        softmax_columns(np.zeros((1, 3)))
    with pytest.raises(DomainError):
        softmax_columns(np.zeros((3, 0)))


def test_softmax_keeps_log_finite_under_underflow():
    P = softmax_columns(np.array([[0.0], [-2000.0]]))
    assert P.values[1, 0] == 0.0
    assert P.log_values[1, 0] == pytest.approx(-2000.0)


@settings(max_examples=200)
@given(st.integers(2, 6), st.integers(1, 8), st.floats(0.1, 50), st.integers(0, 2**32 - 1))
def test_softmax_columns_stochastic(C, T, scale, seed):
    U = np.random.default_rng(seed).normal(scale=scale, size=(C, T))
    P = softmax_columns(U)
    np.testing.assert_allclose(P.values.sum(axis=0), 1.0, atol=1e-12)
    assert np.all((P.values >= 0) & (P.values <= 1))
    np.testing.assert_allclose(np.exp(P.log_values), P.values, rtol=1e-12)
    assert not P.values.flags.writeable
