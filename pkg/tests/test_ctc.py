import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phondrift import ctc
from phondrift.errors import DataError, GuardError, InfeasibleTargetError


def test_hand_example_single_label():
    logits = np.zeros((2, 2))
    loss, _ = ctc.ctc_loss(logits, [1])
    assert loss == pytest.approx(-math.log(0.75), abs=1e-12)
    assert loss == pytest.approx(0.287682, abs=1e-6)
    assert ctc.brute_force_ctc(logits, [1]) == pytest.approx(-math.log(0.75), abs=1e-12)


def test_repeat_needs_blank():
    with pytest.raises(InfeasibleTargetError):
        ctc.ctc_loss(np.zeros((2, 2)), [1, 1])
    assert ctc.min_frames([1, 1]) == 3
    assert ctc.is_feasible(3, [1, 1])


def test_empty_target():
    logits = np.zeros((2, 2))
    assert ctc.brute_force_ctc(logits, []) == pytest.approx(math.log(4), abs=1e-12)
    assert ctc.ctc_loss(logits, [])[0] == pytest.approx(math.log(4), abs=1e-12)


def _random_instance(rng):
    T = int(rng.integers(1, 6))
    V = int(rng.integers(1, 3))
    L = int(rng.integers(0, 3))
    labels = [int(v) for v in rng.integers(1, V + 1, size=L)]
    return rng.normal(0, 2, size=(T, V + 1)), labels


def test_matches_brute_force_random():
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 200:
        logits, labels = _random_instance(rng)
        if not ctc.is_feasible(len(logits), labels):
            continue
        loss, _ = ctc.ctc_loss(logits, labels)
        assert abs(loss - ctc.brute_force_ctc(logits, labels)) < 1e-9
        checked += 1


def test_distribution_sums_to_one():
    logits = np.random.default_rng(1).normal(size=(3, 3))
    assert sum(ctc.collapsed_distribution(logits).values()) == pytest.approx(1.0, abs=1e-12)


def test_guard():
    with pytest.raises(GuardError):
        ctc.brute_force_ctc(np.zeros((30, 3)), [1])


def _fd(logits, labels, h=1e-5):
    g = np.zeros_like(logits)
    for idx in np.ndindex(logits.shape):
        p, m = logits.copy(), logits.copy()
        p[idx] += h
        m[idx] -= h
        g[idx] = (ctc.ctc_loss(p, labels)[0] - ctc.ctc_loss(m, labels)[0]) / (2 * h)
    return g


def test_gradient_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(5):
        logits = rng.normal(size=(4, 3))
        _, grad = ctc.ctc_loss(logits, [1, 2])
        num = _fd(logits, [1, 2])
        assert np.max(np.abs(grad - num)) / np.max(np.abs(num)) < 1e-4


def test_gradient_rows_sum_to_zero():
    logits = np.random.default_rng(3).normal(size=(20, 5))
    _, grad = ctc.ctc_loss(logits, [1, 2, 2, 3])
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-50, 50))
def test_shift_invariance(seed, c):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(6, 4))
    frame = int(rng.integers(0, 6))
    shifted = logits.copy()
    shifted[frame] += c
    a, _ = ctc.ctc_loss(logits, [1, 3])
    b, _ = ctc.ctc_loss(shifted, [1, 3])
    assert abs(a - b) < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_loss_nonnegative(seed):
    rng = np.random.default_rng(seed)
    logits = rng.normal(0, 5, size=(8, 4))
    labels = [int(v) for v in rng.integers(1, 4, size=int(rng.integers(0, 4)))]
    assert ctc.ctc_loss(logits, labels)[0] >= 0.0


def test_zero_loss_when_certain():
    logits = np.full((3, 3), -1e3)
    for t, k in enumerate([1, 0, 2]):
        logits[t, k] = 1e3
    assert ctc.ctc_loss(logits, [1, 2])[0] == 0.0


def test_long_sequence_stays_finite():
    rng = np.random.default_rng(4)
    logits = rng.normal(0, 3, size=(600, 28))
    labels = [int(v) for v in rng.integers(1, 28, size=200)]
    loss, grad = ctc.ctc_loss(logits, labels)
    assert math.isfinite(loss) and np.all(np.isfinite(grad))


def test_bad_labels():
    with pytest.raises(DataError):
        ctc.ctc_loss(np.zeros((4, 3)), [3])
    with pytest.raises(DataError):
        ctc.ctc_loss(np.zeros((4, 3)), [0])


def _onehot(path, n_out=3):
    m = np.full((len(path), n_out), -5.0)
    m[np.arange(len(path)), path] = 5.0
    return m


@pytest.mark.parametrize("path, text", [
    ([0, 1, 1, 0, 2], "ab"),
    ([0, 0, 0], ""),
    ([1, 0, 1], "aa"),
])
def test_greedy_decode_examples(path, text):
    vocab = ctc.Vocabulary("ab")
    assert ctc.greedy_decode(_onehot(path), vocab).text == text


def test_greedy_ties_to_lowest_index():
    assert ctc.greedy_decode(np.zeros((2, 3)), ctc.Vocabulary("ab")).text == ""


def test_vocabulary_roundtrip():
    v = ctc.Vocabulary()
    assert v.n_outputs == 28
    assert v.decode(v.encode("open the door")) == "open the door"
    with pytest.raises(DataError):
        v.encode("don't")
    with pytest.raises(ValueError):
        ctc.Vocabulary("aa")
