import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import probs, uniform
from dctc.alignment import (LatentAlignment, accuracy, alignment_accuracy, collapse, estimate_map_alignment,
                            estimate_self_alignment, format_dump_line, greedy_decode, parse_dump_line,
                            posterior_ratio)
from dctc.ctc import ctc_gradient, lattice_for
from dctc.types import DomainError, LabelSequence, Vocabulary, softmax_columns

A = LabelSequence((1,))


@pytest.mark.parametrize("T, y, expected", [
    (1, (1,), (1,)),
    (2, (1,), (1, 1)),
    (3, (1, 1), (1, 0, 1)),
])
def test_map_alignment_uniform(T, y, expected):
    P = uniform(2, T)
    assert estimate_map_alignment(P, lattice_for(P, LabelSequence(y))).ids == expected


def test_map_agrees_with_gradient_ratio():
    # argmax of gamma - logP must order classes like argmin of G / P
    rng = np.random.default_rng(1)
    for _ in range(50):
        P = softmax_columns(rng.normal(size=(4, 7)))
        lat = lattice_for(P, LabelSequence((1, 3, 3)))
        ratio = ctc_gradient(P, lat) / P.values
        z = estimate_map_alignment(P, lat)
        assert z.ids == tuple(np.argmin(ratio, axis=0))


def test_map_on_one_hot_path_returns_it():
    P = probs([[0, 1, 0], [1, 0, 0], [0, 0, 1]])
    z = estimate_map_alignment(P, lattice_for(P, LabelSequence((1, 2))))
    assert z.ids == (1, 0, 2)


def test_map_requires_feasible_lattice():
    P = uniform(2, 1)
    with pytest.raises(DomainError):
        estimate_map_alignment(P, lattice_for(P, LabelSequence((1, 1))))


def test_posterior_ratio_absent_class_never_wins():
    P = uniform(3, 2)
    r = posterior_ratio(P, lattice_for(P, A))
    assert np.all(r[2] == -np.inf)


@pytest.mark.parametrize("M, expected", [
    ([[0, 1], [1, 0]], (1, 0)),
    ([[0.6, 0.3], [0.4, 0.7]], (0, 1)),
])
def test_self_alignment(M, expected):
    assert estimate_self_alignment(probs(M)).ids == expected


def test_self_alignment_uniform_is_all_blank():
    assert estimate_self_alignment(uniform(3, 5)).ids == (0,) * 5


@pytest.mark.parametrize("z, text", [
    ((1, 1, 0, 1), "aa"),
    ((0, 0), ""),
    ((1, 0, 1, 2, 2), "aab"),
])
def test_greedy_decode_examples(ab, z, text):
    assert greedy_decode(LatentAlignment(z), ab).text() == text


@given(st.lists(st.integers(1, 6), max_size=30))
def test_decode_of_blank_interleaved_is_identity(ids):
    path = [0]
    for i in ids:
        path += [i, 0]
    assert collapse(path) == tuple(ids)


@given(st.lists(st.integers(0, 4), max_size=30))
def test_collapse_output_is_blank_free_and_idempotent(path):
    out = collapse(path)
    assert 0 not in out
    assert len(out) <= len(path)


def test_accuracy_examples():
    assert accuracy(["ab", "c"], ["ab", "c"]) == 1.0
    assert accuracy(["ab", ""], ["ab", "a"]) == 0.5
    assert accuracy(["AB"], ["ab"], fold_case=True) == 1.0
    assert accuracy(["AB"], ["ab"]) == 0.0
    assert accuracy([], []) == 0.0
    with pytest.raises(DomainError):
        accuracy(["a"], [])


def test_alignment_accuracy(ab):
    assert alignment_accuracy([LatentAlignment((1, 1))], [A]) == 1.0
    assert alignment_accuracy([LatentAlignment((0, 0))], [A]) == 0.0
    zs = [LatentAlignment((1, 0, 2)), LatentAlignment((2, 2))]
    assert alignment_accuracy(zs, ["ab", "a"], ab) == 0.5


def test_dump_line_round_trip(ab):
    z = LatentAlignment((0, 1, 1, 0, 2, 0))
    line = format_dump_line(7, z, ab.encode("ab"), ab)
    assert line == "7\t<b> a a <b> b <b>\tab\tab\t1"
    sid, z2, decoded, truth, ok = parse_dump_line(line, ab)
    assert (sid, z2.ids, decoded, truth, ok) == ("7", z.ids, "ab", "ab", True)
    assert greedy_decode(z2, ab).text() == decoded
