"""Exact rational scalars, p-adic valuations and 2x2 rational matrices.

Scalars are :class:`fractions.Fraction`, which already keeps values in lowest
terms with a positive denominator and represents zero as ``0/1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np
from sympy import isprime

from .errors import ConfigurationError, DomainError

RationalScalar = Fraction
Scalarish = Union[int, Fraction, str]

INF = math.inf


@lru_cache(maxsize=256)
def check_prime(p: int) -> int:
    if not isinstance(p, (int, np.integer)) or p < 2 or not isprime(int(p)):
        raise ConfigurationError(f"{p!r} is not a prime")
    return int(p)


def _int_valuation(n: int, p: int) -> int:
    v = 0
    while n % p == 0:
        n //= p
        v += 1
    return v


def padic_valuation(x: Scalarish, p: int) -> int | float:
    """Return ``v`` with ``|x|_p = p**-v``; ``math.inf`` for zero."""
    check_prime(p)
    x = Fraction(x)
    if x == 0:
        return INF
    return _int_valuation(abs(x.numerator), p) - _int_valuation(x.denominator, p)


def padic_abs(x: Scalarish, p: int) -> Fraction:
    v = padic_valuation(x, p)
    if v == INF:
        return Fraction(0)
    return Fraction(p) ** (-v)


@dataclass(frozen=True)
class RationalMatrix:
    """An immutable 2x2 matrix ``[[a, b], [c, d]]`` over the rationals."""

    a: Fraction
    b: Fraction
    c: Fraction
    d: Fraction

    def __post_init__(self):
        for name in "abcd":
            v = getattr(self, name)
            if not isinstance(v, Fraction):
                object.__setattr__(self, name, Fraction(v))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[Scalarish]]) -> "RationalMatrix":
        (a, b), (c, d) = rows
        return cls(Fraction(a), Fraction(b), Fraction(c), Fraction(d))

    @classmethod
    def from_integers(cls, entries: Iterable[int], scale: int = 1) -> "RationalMatrix":
        a, b, c, d = (Fraction(int(e), scale) for e in entries)
        return cls(a, b, c, d)

    @classmethod
    def identity(cls) -> "RationalMatrix":
        return cls(Fraction(1), Fraction(0), Fraction(0), Fraction(1))

    @classmethod
    def diag(cls, x: Scalarish, y: Scalarish) -> "RationalMatrix":
        return cls(Fraction(x), Fraction(0), Fraction(0), Fraction(y))

    @property
    def entries(self) -> tuple[Fraction, Fraction, Fraction, Fraction]:
        return (self.a, self.b, self.c, self.d)

    def rows(self) -> tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]]:
        return ((self.a, self.b), (self.c, self.d))

    def det(self) -> Fraction:
        return self.a * self.d - self.b * self.c

    def is_special(self) -> bool:
        return self.det() == 1

    def inverse(self) -> "RationalMatrix":
        det = self.det()
        if det == 0:
            raise DomainError("singular matrix has no inverse")
        return RationalMatrix(self.d / det, -self.b / det, -self.c / det, self.a / det)

    def __matmul__(self, other: "RationalMatrix") -> "RationalMatrix":
        a, b, c, d = self.entries
        e, f, g, h = other.entries
        return RationalMatrix(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)

    def __neg__(self) -> "RationalMatrix":
        return RationalMatrix(-self.a, -self.b, -self.c, -self.d)

    def common_denominator(self) -> int:
        return math.lcm(*(e.denominator for e in self.entries))

    def to_array(self) -> np.ndarray:
        return np.array([[float(self.a), float(self.b)], [float(self.c), float(self.d)]])

    def serialize(self) -> str:
        return format_matrix(self)

    def __str__(self) -> str:
        return self.serialize()


def padic_norm_matrix(m: RationalMatrix, p: int) -> Fraction:
    """Max-entry p-adic norm of ``m``: an exact power of ``p``, or 0 for the zero matrix."""
    return max(padic_abs(e, p) for e in m.entries)


def reduce_mod(m: RationalMatrix, q: int) -> tuple[int, int, int, int]:
    """Entry-wise image of ``m`` in Z/q, row-major."""
    if q < 1:
        raise DomainError(f"modulus must be positive, got {q}")
    out = []
    for name, e in zip("abcd", m.entries):
        if math.gcd(e.denominator, q) != 1:
            raise DomainError(
                f"entry {name}={e} has denominator {e.denominator} not invertible mod {q}"
            )
        out.append(e.numerator * pow(e.denominator, -1, q) % q if q > 1 else 0)
    return tuple(out)


def mat_mul_mod(x: Sequence[int], y: Sequence[int], q: int) -> tuple[int, int, int, int]:
    a, b, c, d = x
    e, f, g, h = y
    return ((a * e + b * g) % q, (a * f + b * h) % q, (c * e + d * g) % q, (c * f + d * h) % q)


def format_matrix(m: RationalMatrix) -> str:
    """Serialize as ``"a/b,c/d;e/f,g/h"`` (row-major, reduced fractions)."""
    (a, b), (c, d) = m.rows()
    return f"{a},{b};{c},{d}"


def _split_matrix_text(text: str) -> list[list[str]]:
    rows = [r.split(",") for r in text.strip().split(";")]
    if len(rows) != 2 or any(len(r) != 2 for r in rows):
        raise ConfigurationError(f"matrix text must look like 'a,b;c,d', got {text!r}")
    return [[s.strip() for s in r] for r in rows]


def parse_matrix(text: str) -> RationalMatrix:
    rows = _split_matrix_text(text)
    try:
        return RationalMatrix.from_rows([[Fraction(s) for s in r] for r in rows])
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigurationError(f"cannot parse rational matrix {text!r}: {exc}") from None


def parse_real_matrix(text: str) -> np.ndarray:
    """Parse ``"a,b;c,d"`` where entries may be fractions or decimals."""
    rows = _split_matrix_text(text)
    try:
        return np.array([[float(Fraction(s)) for s in r] for r in rows])
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigurationError(f"cannot parse real matrix {text!r}: {exc}") from None
