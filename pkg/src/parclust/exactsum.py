"""Grouping-independent exact accumulation of float64 values.

Finite float64 values convert losslessly to integers on a fixed
power-of-two grid. Integer addition is associative, so any split of a
sum into per-node partial sums folds to the same total, and rounding
back to float64 happens exactly once. This is what lets the parallel
reductions reproduce serial results bit for bit regardless of how the
rows were blocked.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

# frexp writes every finite float64 as mantissa * 2**exp with |mantissa|
# in [0.5, 1) and exp >= -1073, so mantissa * 2**53 is an exact integer
# and the left shift below is never negative. The grid is 2**-1126.
_GRID_BITS = 1126
_MANT_SCALE = float(1 << 53)


def fixed_from_float(x: float) -> int:
    """Exact fixed-point image of one finite float64."""
    m, e = math.frexp(x)
    return int(m * _MANT_SCALE) << (e + 1073)


def fixed_to_float(acc: int) -> float:
    """Round an accumulated fixed-point value to the nearest float64."""
    return float(Fraction(acc, 1 << _GRID_BITS))


def fixed_mean(acc: int, count: int) -> float:
    """Exact accumulated sum divided by an integer count, rounded once."""
    if count <= 0:
        raise ZeroDivisionError("mean of zero rows")
    return float(Fraction(acc, count << _GRID_BITS))


def fixed_ratio(num: int, den: int) -> float:
    """Quotient of two accumulated values on the same grid, rounded once."""
    if den == 0:
        raise ZeroDivisionError("zero denominator in fixed-point ratio")
    return float(Fraction(num, den))


def sum_fixed(values) -> int:
    """Exact sum of an array of float64 values as a fixed-point integer."""
    arr = np.ascontiguousarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        return 0
    m, e = np.frexp(arr)
    mant = (m * _MANT_SCALE).astype(np.int64).tolist()
    shift = (e.astype(np.int64) + 1073).tolist()
    total = 0
    for a, b in zip(mant, shift):
        total += a << b
    return total


def column_sums_fixed(a) -> list[int]:
    """Exact per-column sums of a 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("column_sums_fixed expects a 2-D array")
    return [sum_fixed(arr[:, j]) for j in range(arr.shape[1])]
