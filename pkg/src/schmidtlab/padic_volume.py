"""Exact Haar volumes of p-adic height spheres and balls, and congruence sets.

The Haar measure on the product of the p-adic groups is normalized so the
integral points have measure one.  Every volume here is then a count of left
cosets of the integral subgroup, hence an exact integer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable

import numpy as np
from sympy import primefactors

from .arith import RationalMatrix, check_prime, reduce_mod
from .errors import ConfigurationError, DomainError, RangeError
from .fitting import fit_exponent
from .heights import PlaceSet, RealizableHeight, _as_height, realizable_heights

ORACLE_LIMIT = 10**6
ENUMERATION_LIMIT = 50


def sphere_volume(p: int, k: int) -> int:
    """Number of integral cosets in the sphere of height ``p**k`` in SL2(Q_p).

    These are the vertices at even distance ``2k`` from the root of the
    (p+1)-regular tree.
    """
    check_prime(p)
    if k < 0:
        raise DomainError(f"k must be >= 0, got {k}")
    if k == 0:
        return 1
    return (p + 1) * p ** (2 * k - 1)


def sphere_volume_oracle(p: int, k: int) -> int:
    """Count Hermite-normal-form sublattices of Z^2 with cyclic quotient of order ``p**(2k)``."""
    check_prime(p)
    if k < 0:
        raise DomainError(f"k must be >= 0, got {k}")
    n = p ** (2 * k)
    if n > ORACLE_LIMIT:
        raise RangeError(f"oracle loop bound p^(2k)={n} exceeds {ORACLE_LIMIT}")
    count = 0
    for i in range(2 * k + 1):
        d1, d2 = p**i, p ** (2 * k - i)
        g = math.gcd(d1, d2)
        count += sum(1 for b in range(d1) if math.gcd(g, b) == 1)
    return count


def sphere_volume_product(S: PlaceSet, h: RealizableHeight | int) -> int:
    h = _as_height(h, S)
    vol = 1
    for p in S.primes:
        vol *= sphere_volume(p, h.exponent(p))
    return vol


@dataclass(frozen=True)
class SphereVolumeTable:
    place_set: PlaceSet
    entries: dict[int, int]

    @classmethod
    def build(cls, S: PlaceSet, T: int) -> "SphereVolumeTable":
        return cls(S, {h.value: sphere_volume_product(S, h) for h in realizable_heights(S, T)})

    def heights(self) -> list[int]:
        return sorted(self.entries)

    def ball(self, h: int) -> int:
        return sum(v for hh, v in self.entries.items() if hh <= h)

    def cumulative(self) -> list[tuple[int, int, int]]:
        """Rows ``(h, sphere volume, v_S(h))`` in increasing h."""
        rows, total = [], 0
        for h in self.heights():
            total += self.entries[h]
            rows.append((h, self.entries[h], total))
        return rows


def ball_volume_padic(S: PlaceSet, h: RealizableHeight | int) -> int:
    """``v_S(h)``; a non-realizable h rounds down to the largest realizable height below it."""
    value = h.value if isinstance(h, RealizableHeight) else int(h)
    return sum(sphere_volume_product(S, hh) for hh in realizable_heights(S, value))


def growth_exponent_a(S: PlaceSet, cutoff: int) -> float:
    """Fitted log-log slope of sphere volume against height over ``1 < h <= cutoff``.

    The trivial sphere ``h = 1`` is the integral subgroup itself and follows
    a different branch of the coset count, so it is left out of the fit.
    """
    pts = [(h.value, sphere_volume_product(S, h)) for h in realizable_heights(S, cutoff) if h.value > 1]
    return fit_exponent(pts).slope


# --- congruence conditions -------------------------------------------------

Residue = tuple[int, int, int, int]


@lru_cache(maxsize=64)
def sl2_mod_q(q: int) -> frozenset[Residue]:
    """All of SL2(Z/q) by direct enumeration (vectorized over three entries)."""
    if q < 1:
        raise DomainError(f"modulus must be positive, got {q}")
    if q > ENUMERATION_LIMIT:
        raise RangeError(f"explicit SL2(Z/{q}) enumeration limited to q <= {ENUMERATION_LIMIT}")
    if q == 1:
        return frozenset({(0, 0, 0, 0)})
    r = np.arange(q)
    b, c, d = np.meshgrid(r, r, r, indexing="ij")
    out = set()
    for a in range(q):
        ok = (a * d - b * c) % q == 1
        out.update((a, int(x), int(y), int(z)) for x, y, z in zip(b[ok], c[ok], d[ok]))
    return frozenset(out)


def sl2_order_formula(q: int) -> int:
    """``q**3 * prod_{l | q} (1 - l**-2)``."""
    n = Fraction(q**3)
    for l in primefactors(q):
        n *= 1 - Fraction(1, l * l)
    assert n.denominator == 1
    return int(n)


def sl2_order(q: int) -> int:
    if q <= ENUMERATION_LIMIT:
        return len(sl2_mod_q(q))
    return sl2_order_formula(q)


@dataclass(frozen=True)
class CongruenceCondition:
    """A union of cosets of the principal congruence subgroup of level q."""

    modulus: int
    residue_set: frozenset[Residue]
    label: str = field(default="custom", compare=False)

    def __post_init__(self):
        q = self.modulus
        if q < 1:
            raise ConfigurationError(f"modulus must be positive, got {q}")
        rs = frozenset(tuple(int(x) % q for x in r) for r in self.residue_set)
        if not rs:
            raise ConfigurationError("congruence residue set is empty")
        for a, b, c, d in rs:
            if (a * d - b * c) % q != 1 % q:
                raise ConfigurationError(f"residue {(a, b, c, d)} has determinant != 1 mod {q}")
        object.__setattr__(self, "residue_set", rs)

    @classmethod
    def full(cls, q: int = 1) -> "CongruenceCondition":
        return cls(q, sl2_mod_q(q) if q <= ENUMERATION_LIMIT else _refuse_large(q), "full")

    @classmethod
    def identity(cls, q: int) -> "CongruenceCondition":
        return cls(q, frozenset({(1 % q, 0, 0, 1 % q)}), "identity")

    @classmethod
    def upper_triangular(cls, q: int) -> "CongruenceCondition":
        return cls(q, frozenset(r for r in sl2_mod_q(q) if r[2] == 0), "upper_triangular")

    @classmethod
    def named(cls, name: str, q: int) -> "CongruenceCondition":
        try:
            return {"full": cls.full, "identity": cls.identity, "upper_triangular": cls.upper_triangular}[name](q)
        except KeyError:
            raise ConfigurationError(
                f"unknown residue set {name!r}; expected full, identity or upper_triangular"
            ) from None

    @property
    def is_full(self) -> bool:
        return len(self.residue_set) == sl2_order(self.modulus)

    @property
    def measure(self) -> Fraction:
        return congruence_measure(self)

    def validate_for(self, S: PlaceSet) -> "CongruenceCondition":
        if math.gcd(self.modulus, math.prod(S.primes)) != 1:
            raise ConfigurationError(
                f"congruence modulus {self.modulus} shares a factor with S={S.primes}"
            )
        return self

    def contains(self, m: RationalMatrix) -> bool:
        return reduce_mod(m, self.modulus) in self.residue_set

    def codes(self) -> np.ndarray:
        """Residues encoded as ``a + q*b + q^2*c + q^3*d`` for vectorized membership."""
        q = self.modulus
        return np.array(sorted(a + q * (b + q * (c + q * d)) for a, b, c, d in self.residue_set), dtype=np.int64)

    def fingerprint(self) -> str:
        return f"q={self.modulus}:" + ",".join(map(str, self.codes().tolist()))

    def union(self, other: "CongruenceCondition") -> "CongruenceCondition":
        if other.modulus != self.modulus:
            raise DomainError("union needs a common modulus")
        return CongruenceCondition(self.modulus, self.residue_set | other.residue_set)


def _refuse_large(q: int):
    raise RangeError(f"explicit residue set for q={q} > {ENUMERATION_LIMIT} is not supported")


def congruence_measure(W: CongruenceCondition, S: PlaceSet | None = None) -> Fraction:
    if S is not None:
        W.validate_for(S)
    return Fraction(len(W.residue_set), sl2_order(W.modulus))


def disjoint_pieces(W: CongruenceCondition, n: int) -> Iterable[CongruenceCondition]:
    """Split a residue set into ``n`` nonempty disjoint parts (for additivity checks)."""
    items = sorted(W.residue_set)
    n = max(1, min(n, len(items)))
    for i in range(n):
        yield CongruenceCondition(W.modulus, frozenset(items[i::n]))
