"""Finite-adelic height over a finite set of primes and the realizable heights."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .arith import RationalMatrix, check_prime, padic_norm_matrix
from .errors import ConfigurationError, DomainError

SL2_REAL_DIMENSION = 3


@dataclass(frozen=True)
class PlaceSet:
    """The set S of primes plus the spectral decay exponent and real dimension."""

    primes: tuple[int, ...]
    spectral_kappa: float = 0.5
    dim_d: int = SL2_REAL_DIMENSION

    def __post_init__(self):
        primes = tuple(sorted(int(p) for p in self.primes))
        if not primes:
            raise ConfigurationError("place set needs at least one prime")
        if len(set(primes)) != len(primes):
            raise ConfigurationError(f"duplicate primes in {primes}")
        for p in primes:
            check_prime(p)
        object.__setattr__(self, "primes", primes)
        if not 0 < self.spectral_kappa <= 0.5:
            raise ConfigurationError(f"spectral_kappa must lie in (0, 1/2], got {self.spectral_kappa}")
        if self.dim_d != SL2_REAL_DIMENSION:
            raise ConfigurationError("only SL2 (real dimension 3) is supported")

    @classmethod
    def of(cls, *primes: int, kappa: float = 0.5) -> "PlaceSet":
        return cls(tuple(primes), spectral_kappa=kappa)

    def is_s_unit_denominator(self, n: int) -> bool:
        for p in self.primes:
            while n % p == 0:
                n //= p
        return n == 1

    def coprime_to(self, q: int) -> bool:
        return all(q % p for p in self.primes)


@dataclass(frozen=True, order=True)
class RealizableHeight:
    value: int
    exponents: tuple[tuple[int, int], ...] = field(compare=False)

    def __post_init__(self):
        v = 1
        for p, k in self.exponents:
            if k < 0:
                raise DomainError(f"negative exponent {k} at p={p}")
            v *= p**k
        if v != self.value:
            raise DomainError(f"height {self.value} does not match exponents {self.exponents}")

    @classmethod
    def from_exponents(cls, exps: Mapping[int, int]) -> "RealizableHeight":
        items = tuple(sorted((int(p), int(k)) for p, k in exps.items()))
        value = 1
        for p, k in items:
            value *= p**k
        return cls(value, items)

    @classmethod
    def from_value(cls, h: int, S: PlaceSet) -> "RealizableHeight":
        """Factor ``h`` over S; raises if h is not a product of primes in S."""
        if h < 1:
            raise DomainError(f"height must be >= 1, got {h}")
        rest, exps = int(h), {}
        for p in S.primes:
            k = 0
            while rest % p == 0:
                rest //= p
                k += 1
            exps[p] = k
        if rest != 1:
            raise DomainError(f"{h} is not a realizable height for S={S.primes}")
        return cls.from_exponents(exps)

    def exponent(self, p: int) -> int:
        return dict(self.exponents).get(p, 0)

    def __int__(self) -> int:
        return self.value


def _as_height(h: RealizableHeight | int, S: PlaceSet) -> RealizableHeight:
    return h if isinstance(h, RealizableHeight) else RealizableHeight.from_value(int(h), S)


def height(r: RationalMatrix, S: PlaceSet) -> int:
    """Product over p in S of ``max(1, ||r||_p)`` as an exact integer."""
    for name, e in zip("abcd", r.entries):
        if not S.is_s_unit_denominator(e.denominator):
            raise DomainError(
                f"entry {name}={e} has a denominator outside S={S.primes}; point is not S-integral"
            )
    h = Fraction(1)
    for p in S.primes:
        h *= max(Fraction(1), padic_norm_matrix(r, p))
    assert h.denominator == 1
    return int(h)


def realizable_heights(S: PlaceSet, T: int) -> list[RealizableHeight]:
    """All ``prod p**k_p <= T`` in increasing order."""
    if T < 1:
        return []
    out: list[dict[int, int]] = [{}]
    values = [1]
    for p in S.primes:
        new_out, new_values = [], []
        for exps, v in zip(out, values):
            k, pv = 0, v
            while pv <= T:
                new_out.append({**exps, p: k})
                new_values.append(pv)
                pv *= p
                k += 1
        out, values = new_out, new_values
    heights = [RealizableHeight.from_exponents(e) for e in out]
    return sorted(heights)


def height_witness(h: RealizableHeight) -> RationalMatrix:
    """``diag(h, 1/h)``, a point of height exactly h."""
    return RationalMatrix.diag(h.value, Fraction(1, h.value))


def height_shell_test(r: RationalMatrix, h: RealizableHeight | int, S: PlaceSet) -> bool:
    return height(r, S) == _as_height(h, S).value


def heights_up_to(S: PlaceSet, T: int) -> Iterable[int]:
    return (h.value for h in realizable_heights(S, T))
