"""Numeric substrate checked against hand-rolled reference implementations."""

import math

import numpy as np
import pytest

from mlpmoe.errors import ArgumentError, NumericError, ShapeError
from mlpmoe.tensor_ops import (
    as_f32,
    get_activation,
    log_softmax,
    mask_below,
    matmul,
    quantile_abs,
    silu,
    softmax,
    variance,
)


def _matmul_loops(a, b):
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += float(a[i, k]) * float(b[k, j])
            out[i, j] = acc
    return out


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(7)
    for _ in range(5):
        a = rng.normal(size=(4, 6)).astype(np.float32)
        b = rng.normal(size=(6, 3)).astype(np.float32)
        got = matmul(a, b)
        assert got.dtype == np.float32
        assert np.max(np.abs(got - _matmul_loops(a, b))) < 1e-5


def test_matmul_associative_within_tolerance():
    rng = np.random.default_rng(11)
    for _ in range(10):
        a = 0.1 * rng.normal(size=(8, 8)).astype(np.float32)
        b = 0.1 * rng.normal(size=(8, 8)).astype(np.float32)
        c = 0.1 * rng.normal(size=(8, 8)).astype(np.float32)
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        assert np.max(np.abs(left - right)) < 1e-5


def test_matmul_shape_errors():
    a = np.zeros((2, 3), dtype=np.float32)
    with pytest.raises(ShapeError):
        matmul(a, np.zeros((4, 2), dtype=np.float32))
    with pytest.raises(ShapeError):
        matmul(a, np.zeros(3, dtype=np.float32))


def test_matmul_rejects_overflowing_result():
    a = np.full((1, 1), 3e38, dtype=np.float32)
    b = np.full((1, 1), 10.0, dtype=np.float32)
    with pytest.raises(NumericError):
        matmul(a, b)


def test_silu_matches_scalar_oracle():
    def ref(v):
        return v / (1.0 + math.exp(-v))

    xs = np.array([-5.0, -1.0, -0.5, 0.0, 0.5, 1.0, 5.0], dtype=np.float32)
    got = silu(xs)
    want = np.array([ref(float(v)) for v in xs])
    assert np.max(np.abs(got - want)) < 1e-6
    assert got[3] == 0.0


def test_silu_extremes_stay_finite():
    xs = np.array([-1e30, -200.0, 0.0, 200.0, 1e30], dtype=np.float32)
    got = silu(xs)
    assert np.isfinite(got).all()
    # saturation: sigmoid -> 1 for large positive, 0 for large negative
    assert got[4] == np.float32(1e30)
    assert got[0] == 0.0


def test_silu_odd_part_recovers_input():
    # silu(x) - silu(-x) == x because sigmoid(x) + sigmoid(-x) == 1
    rng = np.random.default_rng(3)
    x = rng.normal(0.0, 2.0, size=1000).astype(np.float32)
    assert np.max(np.abs(silu(x) - silu(-x) - x)) < 1e-5


def test_activation_registry():
    assert get_activation("silu") is silu
    x = np.array([1.5, -2.0], dtype=np.float32)
    assert np.array_equal(get_activation("identity")(x), x)
    with pytest.raises(ArgumentError):
        get_activation("gelu")


def _quantile_sorted(values, ratio):
    s = sorted(values)
    pos = ratio * (len(s) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(s) - 1)
    frac = pos - lo
    return s[lo] * (1.0 - frac) + s[hi] * frac


def test_quantile_matches_sorted_interpolation():
    rng = np.random.default_rng(21)
    for _ in range(5):
        w = rng.normal(size=197).astype(np.float32)
        for ratio in (0.0, 0.1, 0.45, 0.5, 0.9, 1.0):
            got = quantile_abs(w, ratio)
            want = _quantile_sorted([abs(float(v)) for v in w], ratio)
            assert got == pytest.approx(want, abs=1e-12)


def test_quantile_monotone_in_ratio():
    rng = np.random.default_rng(22)
    w = rng.normal(size=500)
    values = [quantile_abs(w, r) for r in np.linspace(0.0, 1.0, 21)]
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_quantile_validation():
    with pytest.raises(ArgumentError):
        quantile_abs(np.array([]), 0.5)
    for bad in (-0.01, 1.01):
        with pytest.raises(ArgumentError):
            quantile_abs(np.ones(3), bad)


def test_mask_below_counting_oracle():
    rng = np.random.default_rng(31)
    w = rng.normal(size=(16, 16)).astype(np.float32)
    threshold = quantile_abs(w, 0.45)
    masked, kept = mask_below(w, threshold)
    want_kept = sum(1 for v in w.flat if abs(float(v)) > threshold)
    assert kept == want_kept
    assert int(np.count_nonzero(masked)) == want_kept
    survivors = np.abs(w) > threshold
    assert np.array_equal(masked[survivors], w[survivors])
    assert np.all(masked[~survivors] == 0.0)


def test_mask_below_keep_bound():
    # strict-greater masking can only keep at most ceil((1-r) * N) entries
    rng = np.random.default_rng(32)
    for size in (10, 97, 1024):
        w = rng.normal(size=size)
        for ratio in (0.1, 0.45, 0.5, 0.9):
            _, kept = mask_below(w, quantile_abs(w, ratio))
            assert kept <= math.ceil((1.0 - ratio) * size)


def test_mask_below_ties_are_zeroed():
    w = np.ones(8, dtype=np.float32)
    masked, kept = mask_below(w, 1.0)
    assert kept == 0
    assert np.all(masked == 0.0)


def test_mask_below_negative_threshold():
    with pytest.raises(ArgumentError):
        mask_below(np.ones(3), -0.5)


def test_variance_matches_two_pass_oracle():
    rng = np.random.default_rng(41)
    x = rng.normal(size=257)
    mean = sum(float(v) for v in x) / x.size
    want = sum((float(v) - mean) ** 2 for v in x) / x.size
    assert variance(x) == pytest.approx(want, rel=1e-12)


def test_variance_of_standard_normal_sample():
    x = np.random.default_rng(42).normal(size=100_000)
    assert variance(x) == pytest.approx(1.0, abs=0.02)


def test_variance_needs_two_values():
    with pytest.raises(ArgumentError):
        variance(np.array([1.0]))


def test_log_softmax_rows_normalize():
    rng = np.random.default_rng(51)
    logits = rng.normal(0.0, 5.0, size=(12, 40)).astype(np.float32)
    ls = log_softmax(logits)
    assert np.all(ls <= 0.0)
    sums = np.exp(ls.astype(np.float64)).sum(axis=-1)
    assert np.max(np.abs(sums - 1.0)) < 1e-6
    assert np.max(np.abs(softmax(logits).sum(axis=-1) - 1.0)) < 1e-6


def test_log_softmax_shift_invariant_and_stable():
    rng = np.random.default_rng(52)
    logits = rng.normal(size=(4, 10))
    shifted = logits + 1000.0
    assert np.max(np.abs(log_softmax(logits) - log_softmax(shifted))) < 1e-9
    # huge magnitudes must not overflow
    assert np.isfinite(log_softmax(np.array([[1e30, -1e30, 0.0]]))).all()


def test_as_f32_rejects_nonfinite():
    out = as_f32([[1, 2], [3, 4]], "x")
    assert out.dtype == np.float32 and out.flags.c_contiguous
    with pytest.raises(NumericError):
        as_f32(np.array([1.0, np.nan]), "x")
    with pytest.raises(NumericError):
        as_f32(np.array([np.inf]), "x")
