"""Exact rational helpers.

Everything numeric that feeds a combinatorial decision is an ``mpq``.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational

from gmpy2 import mpq

Q = mpq
ZERO = mpq(0)
ONE = mpq(1)
TWO = mpq(2)


def to_q(value, max_denominator: int | None = None) -> mpq:
    """Convert ints, strings ("p/q" or decimal), Fractions or floats to ``mpq``.

    Floats are converted exactly unless ``max_denominator`` is given, in which
    case they are snapped to the closest rational with that denominator bound.
    """
    if isinstance(value, type(ZERO)):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return mpq(value)
    if isinstance(value, str):
        s = value.strip()
        if "/" in s:
            return mpq(s)
        return mpq(Fraction(s))
    if isinstance(value, Rational):
        return mpq(value.numerator, value.denominator)
    if isinstance(value, float):
        if max_denominator is not None:
            return mpq(Fraction(value).limit_denominator(max_denominator))
        return mpq(value)
    raise TypeError(f"cannot convert {type(value).__name__} to a rational")


def snap(value: float, denominator: int = 10**6) -> mpq:
    """Round a float to the nearest multiple of ``1/denominator``."""
    return mpq(round(value * denominator), denominator)


def q_str(value) -> str:
    """Canonical ``p/q`` string (integers keep the ``/1``)."""
    v = to_q(value)
    return f"{v.numerator}/{v.denominator}"


def edge(u: int, v: int) -> tuple[int, int]:
    """Canonical key of the undirected edge {u, v}."""
    if u == v:
        raise ValueError(f"self-loop at {u}")
    return (u, v) if u < v else (v, u)
