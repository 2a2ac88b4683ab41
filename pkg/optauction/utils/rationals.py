"""Exact rational helpers shared by the JSON codecs and the solvers."""

import math
from fractions import Fraction
from functools import reduce
from typing import Iterable, Union

import numpy as np

from optauction.errors import PriorValidationError

RationalLike = Union[int, str, Fraction]


def parse_rational(value: RationalLike) -> Fraction:
    """Parse "p/q", an integer, or a decimal string into a Fraction."""
    if isinstance(value, bool):
        raise PriorValidationError(f"Not a rational: {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, float):
        raise PriorValidationError(f"Floats are not accepted, use \"p/q\": {value!r}")
    try:
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise PriorValidationError(f"Not a rational: {value!r}") from exc


def format_rational(value: Fraction) -> str:
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


def common_denominator(values: Iterable[Fraction]) -> int:
    return reduce(lambda acc, v: math.lcm(acc, Fraction(v).denominator), values, 1)


def fraction_array(values, shape=None) -> np.ndarray:
    """Object array of Fractions from a nested list of rational-likes."""
    arr = np.array(values, dtype=object)
    if shape is not None:
        arr = arr.reshape(shape)
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(arr.shape):
        out[idx] = parse_rational(arr[idx])
    return out


def zeros(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(Fraction(0))
    return out


def to_strings(arr: np.ndarray):
    """Nested list of "p/q" strings; None entries pass through."""
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(arr.shape):
        out[idx] = None if arr[idx] is None else format_rational(arr[idx])
    return out.tolist()


def quantize(x: float, bits: int) -> Fraction:
    """Round a float to the nearest multiple of 2**-bits."""
    scale = 1 << bits
    return Fraction(int(round(x * scale)), scale)
