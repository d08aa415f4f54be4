"""The fixed-point accumulator is the load-bearing wall: every claim of
bit-identical results across node counts reduces to these properties."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parclust.exactsum import (column_sums_fixed, fixed_from_float,
                               fixed_mean, fixed_ratio, fixed_to_float,
                               sum_fixed)

finite_floats = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(finite_floats)
def test_fixed_round_trip_is_lossless(x):
    assert fixed_to_float(fixed_from_float(x)) == x


@given(st.lists(finite_floats, min_size=0, max_size=60))
@settings(deadline=None)
def test_sum_matches_exact_rational_oracle(values):
    oracle = sum(Fraction(v) for v in values)
    assert Fraction(sum_fixed(values), 1 << 1126) == oracle


@given(st.lists(finite_floats, min_size=1, max_size=60),
       st.randoms(use_true_random=False))
@settings(deadline=None)
def test_sum_is_grouping_and_order_free(values, rnd):
    whole = sum_fixed(values)
    shuffled = list(values)
    rnd.shuffle(shuffled)
    cut = rnd.randrange(len(shuffled) + 1)
    assert sum_fixed(shuffled[:cut]) + sum_fixed(shuffled[cut:]) == whole


def test_fixed_from_float_small_values():
    tiny = 5e-324  # smallest subnormal, 2**-1074, i.e. 2**52 grid units
    assert fixed_from_float(tiny) == 1 << 52
    assert fixed_to_float(1 << 52) == tiny


def test_sum_simple_arithmetic():
    assert fixed_to_float(sum_fixed([1.0, 2.0, 3.0])) == 6.0
    assert sum_fixed([]) == 0
    assert fixed_to_float(sum_fixed([0.1] * 10)) == float(Fraction(0.1) * 10)


def test_column_sums_match_per_column_loop():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(23, 4)) * 1e3
    cols = column_sums_fixed(a)
    for j in range(4):
        assert cols[j] == sum_fixed(a[:, j])
    with pytest.raises(ValueError):
        column_sums_fixed(a[:, 0])


def test_fixed_mean_rounds_once():
    acc = sum_fixed([1.0, 2.0])
    assert fixed_mean(acc, 2) == 1.5
    # 1/3 is not a float64; the mean must be the correctly rounded quotient
    acc = sum_fixed([1.0])
    assert fixed_mean(acc, 3) == float(Fraction(1, 3))
    with pytest.raises(ZeroDivisionError):
        fixed_mean(acc, 0)


def test_fixed_ratio():
    num = sum_fixed([3.0])
    den = sum_fixed([2.0])
    assert fixed_ratio(num, den) == 1.5
    with pytest.raises(ZeroDivisionError):
        fixed_ratio(num, 0)


@given(st.lists(finite_floats, min_size=1, max_size=30))
@settings(deadline=None)
def test_mean_equals_rational_oracle(values):
    # a mean of finite floats never exceeds the largest input, so the
    # rational oracle always rounds to a finite float
    acc = sum_fixed(values)
    oracle = float(sum(Fraction(v) for v in values) / len(values))
    assert fixed_mean(acc, len(values)) == oracle
