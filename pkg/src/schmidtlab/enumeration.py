"""Exhaustive enumeration of S-integral points of SL2 in a height shell and a bounded region.

A point of exact height ``h`` is ``M / h`` with ``M`` an integer matrix,
``det M = h**2`` and, for every ``p`` in S, some entry of ``M`` prime to ``p``.
The entries ``a, b, c`` are looped over and ``d`` is solved from the
determinant; the ``a = 0`` stratum is handled through the divisors of ``h**2``.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import __version__
from .arch import Region, default_threads
from .arith import RationalMatrix, parse_matrix
from .errors import DomainError, OracleUnavailableError, RangeError
from .heights import PlaceSet, RealizableHeight, _as_height, height, realizable_heights
from .padic_volume import CongruenceCondition

INT_GUARD = 1 << 62
A_CHUNK = 8
GRID_LIMIT = 1 << 22
ORACLE_LIMIT = 10**9


@dataclass(frozen=True)
class ShellQuery:
    place_set: PlaceSet
    height: RealizableHeight
    region: Region
    congruence: CongruenceCondition | None = None

    def __post_init__(self):
        if not isinstance(self.height, RealizableHeight):
            object.__setattr__(self, "height", _as_height(self.height, self.place_set))
        if self.congruence is not None:
            self.congruence.validate_for(self.place_set)

    def fingerprint(self) -> str:
        cong = self.congruence.fingerprint() if self.congruence is not None else "none"
        text = f"S={self.place_set.primes};h={self.height.value};E={self.region.fingerprint()};W={cong}"
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class ShellResult:
    """Points ``M / h`` of one shell; ``numerators`` holds ``M`` row-major, sorted."""

    query: ShellQuery
    numerators: np.ndarray
    candidates_scanned: int = 0
    wall_time: float = 0.0

    @property
    def scale(self) -> int:
        return self.query.height.value

    @property
    def count(self) -> int:
        return len(self.numerators)

    def __len__(self) -> int:
        return self.count

    @property
    def points(self) -> list[RationalMatrix]:
        h = self.scale
        return [RationalMatrix.from_integers(row, h) for row in self.numerators.tolist()]

    def as_floats(self) -> np.ndarray:
        return self.numerators.reshape(-1, 2, 2).astype(float) / self.scale


# --- helpers ---------------------------------------------------------------


def _integer_bounds(region: Region, h: int) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = region.entry_bounds()
    pad = 1e-9 * np.maximum(1.0, h * np.maximum(np.abs(lo), np.abs(hi)))
    ilo = np.floor(h * lo - pad).astype(np.int64)
    ihi = np.ceil(h * hi + pad).astype(np.int64)
    biggest = int(max(np.abs(ilo).max(), np.abs(ihi).max()))
    if biggest * biggest + h * h >= INT_GUARD:
        raise RangeError(
            f"candidate bound {biggest} at height {h} overflows the 2^62 guard; "
            "use a smaller region or the shell cache"
        )
    return ilo.reshape(4), ihi.reshape(4)


def _divisors(h: RealizableHeight) -> list[int]:
    """Divisors of ``h**2``, read off the exponents of h."""
    divs = [1]
    for p, k in h.exponents:
        divs = [d * p**i for d in divs for i in range(2 * k + 1)]
    return sorted(divs)


def _exact_height_mask(M: np.ndarray, S: PlaceSet) -> np.ndarray:
    ok = np.ones(len(M), dtype=bool)
    for p in S.primes:
        ok &= np.any(M % p != 0, axis=1)
    return ok


def _congruence_mask(M: np.ndarray, h: int, W: CongruenceCondition | None) -> np.ndarray:
    if W is None or W.is_full:
        return np.ones(len(M), dtype=bool)
    q = W.modulus
    hinv = pow(h, -1, q)
    R = (M % q) * hinv % q
    codes = R[:, 0] + q * (R[:, 1] + q * (R[:, 2] + q * R[:, 3]))
    return np.isin(codes, W.codes())


def _region_mask(M: np.ndarray, h: int, region: Region) -> np.ndarray:
    if len(M) == 0:
        return np.zeros(0, dtype=bool)
    return np.asarray(region.contains(M.reshape(-1, 2, 2).astype(float) / h), dtype=bool)


def _sort_rows(M: np.ndarray) -> np.ndarray:
    if len(M) == 0:
        return M.reshape(0, 4)
    order = np.lexsort((M[:, 3], M[:, 2], M[:, 1], M[:, 0]))
    return M[order]


def _solve_chunk(a_values, h: int, h2: int, divisors, ilo, ihi) -> tuple[np.ndarray, int]:
    (a_lo, b_lo, c_lo, d_lo), (a_hi, b_hi, c_hi, d_hi) = ilo, ihi
    bs = np.arange(b_lo, b_hi + 1, dtype=np.int64)
    cs = np.arange(c_lo, c_hi + 1, dtype=np.int64)
    ds = np.arange(d_lo, d_hi + 1, dtype=np.int64)
    found, scanned = [], 0
    rows_per_block = max(1, GRID_LIMIT // max(1, len(cs)))
    for a in a_values:
        if a == 0:
            for delta in divisors:
                for b in (delta, -delta):
                    c = -h2 // b
                    scanned += 1
                    if b_lo <= b <= b_hi and c_lo <= c <= c_hi and len(ds):
                        found.append(np.column_stack([np.zeros_like(ds), np.full_like(ds, b), np.full_like(ds, c), ds]))
            continue
        for start in range(0, len(bs), rows_per_block):
            bb = bs[start:start + rows_per_block, None]
            num = h2 + bb * cs[None, :]
            scanned += num.size
            ok = num % a == 0
            d = num // a
            ok &= (d >= d_lo) & (d <= d_hi)
            if ok.any():
                bi, ci = np.nonzero(ok)
                found.append(np.column_stack([np.full(len(bi), a, dtype=np.int64), bb[bi, 0], cs[ci], d[bi, ci]]))
    M = np.concatenate(found) if found else np.zeros((0, 4), dtype=np.int64)
    return M, scanned


# --- shell cache --------------------------------------------------------------


@dataclass
class ShellCache:
    """On-disk shell store: a JSON header line, then one serialized matrix per line."""

    directory: Path
    threshold: int = 1000

    def __post_init__(self):
        self.directory = Path(self.directory)

    def path(self, q: ShellQuery) -> Path:
        return self.directory / f"shell-{q.fingerprint()[:24]}.txt"

    def load(self, q: ShellQuery) -> ShellResult | None:
        p = self.path(q)
        if not p.exists():
            return None
        with open(p) as fh:
            header = json.loads(fh.readline())
            if header.get("fingerprint") != q.fingerprint() or header.get("version") != __version__:
                return None
            h = q.height.value
            rows = []
            for line in fh:
                m = parse_matrix(line)
                rows.append([int(e * h) for e in m.entries])
        M = np.array(rows, dtype=np.int64).reshape(-1, 4)
        return ShellResult(q, M, header.get("candidates_scanned", 0), 0.0)

    def store(self, res: ShellResult) -> None:
        if res.count < self.threshold:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        header = {
            "fingerprint": res.query.fingerprint(),
            "version": __version__,
            "height": res.scale,
            "count": res.count,
            "candidates_scanned": res.candidates_scanned,
        }
        with open(self.path(res.query), "w") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for m in res.points:
                fh.write(m.serialize() + "\n")

    def fingerprints(self) -> dict[str, str]:
        out = {}
        if self.directory.exists():
            for p in sorted(self.directory.glob("shell-*.txt")):
                out[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
        return out


# --- public operations ----------------------------------------------------------


def enumerate_shell(q: ShellQuery, threads: int | None = None, cache: ShellCache | None = None) -> ShellResult:
    """Every point of exact height ``q.height`` in ``q.region`` satisfying ``q.congruence``."""
    if cache is not None:
        hit = cache.load(q)
        if hit is not None:
            return hit
    t0 = time.perf_counter()
    h = q.height.value
    S = q.place_set
    if q.region.measure_zero:
        M = _enumerate_point_set(q)
        return ShellResult(q, M, len(M), time.perf_counter() - t0)
    ilo, ihi = _integer_bounds(q.region, h)
    a_values = list(range(int(ilo[0]), int(ihi[0]) + 1))
    chunks = [a_values[i:i + A_CHUNK] for i in range(0, len(a_values), A_CHUNK)]
    divisors = _divisors(q.height)
    h2 = h * h
    with ThreadPoolExecutor(max_workers=threads or default_threads()) as ex:
        parts = list(ex.map(lambda ch: _solve_chunk(ch, h, h2, divisors, ilo, ihi), chunks))
    M = np.concatenate([p[0] for p in parts]) if parts else np.zeros((0, 4), dtype=np.int64)
    scanned = sum(p[1] for p in parts)
    M = M[_exact_height_mask(M, S)]
    M = M[_region_mask(M, h, q.region)]
    M = M[_congruence_mask(M, h, q.congruence)]
    res = ShellResult(q, _sort_rows(M), scanned, time.perf_counter() - t0)
    if cache is not None:
        cache.store(res)
    return res


def _enumerate_point_set(q: ShellQuery) -> np.ndarray:
    """Measure-zero regions: test the region's own points that are S-integral of height h."""
    from fractions import Fraction

    h = q.height.value
    rows = []
    for p in np.reshape(q.region.points if hasattr(q.region, "points") else (), (-1, 4)):
        M = [Fraction(float(v)).limit_denominator(10**6) * h for v in p]
        if all(m.denominator == 1 for m in M):
            rows.append([int(m) for m in M])
    M = np.array(rows, dtype=np.int64).reshape(-1, 4)
    M = M[(M[:, 0] * M[:, 3] - M[:, 1] * M[:, 2]) == h * h]
    M = M[_exact_height_mask(M, q.place_set)]
    M = M[_region_mask(M, h, q.region)]
    return _sort_rows(M[_congruence_mask(M, h, q.congruence)])


def enumerate_up_to(
    S: PlaceSet,
    T: int,
    region: Region,
    congruence: CongruenceCondition | None = None,
    threads: int | None = None,
    cache: ShellCache | None = None,
) -> dict[int, ShellResult]:
    """One shell per realizable ``h <= T``; their union is ``R_S(T)`` inside the region."""
    return {
        h.value: enumerate_shell(ShellQuery(S, h, region, congruence), threads, cache)
        for h in realizable_heights(S, T)
    }


def cumulative_counts(shells: dict[int, ShellResult]) -> list[tuple[int, int]]:
    """``(h, |R_S(h) cap region|)`` for each shell height in increasing order."""
    out, total = [], 0
    for h in sorted(shells):
        total += shells[h].count
        out.append((h, total))
    return out


def brute_force_recount(q: ShellQuery) -> int:
    """Slow independent count: all four entries looped, exact rational checks on survivors."""
    h = q.height.value
    if q.region.measure_zero:
        return len(_enumerate_point_set(q))
    lo, hi = q.region.entry_bounds()
    ilo = np.floor(h * lo.reshape(4)).astype(np.int64) - 1
    ihi = np.ceil(h * hi.reshape(4)).astype(np.int64) + 1
    sizes = ihi - ilo + 1
    if math.prod(int(s) for s in sizes) > ORACLE_LIMIT:
        raise OracleUnavailableError(f"four-entry loop of {math.prod(int(s) for s in sizes)} iterations exceeds 1e9")
    cs = np.arange(ilo[2], ihi[2] + 1)
    ds = np.arange(ilo[3], ihi[3] + 1)
    cc, dd = np.meshgrid(cs, ds, indexing="ij")
    count = 0
    for a in range(int(ilo[0]), int(ihi[0]) + 1):
        for b in range(int(ilo[1]), int(ihi[1]) + 1):
            hit = a * dd - b * cc == h * h
            for c, d in zip(cc[hit].tolist(), dd[hit].tolist()):
                m = RationalMatrix.from_integers((a, b, c, d), h)
                if height(m, q.place_set) != h:
                    continue
                if not bool(q.region.contains(m.to_array())):
                    continue
                if q.congruence is not None and not q.congruence.contains(m):
                    continue
                count += 1
    return count


def iter_points(shells: dict[int, ShellResult]) -> Iterator[tuple[int, RationalMatrix]]:
    for h in sorted(shells):
        for m in shells[h].points:
            yield h, m
