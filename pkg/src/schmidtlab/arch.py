"""Archimedean side: metrics on SL2(R), calibrated Haar measure, regions and ball volumes.

Haar measure is written in Iwasawa coordinates ``g = n(u) a(y) k(theta)`` with
``g . i = u + i y`` and density ``du dy / y**2 * dtheta / (2 pi)``.  The
calibrated measure is ``kappa`` times that, with ``kappa`` chosen so SL2(Z)
has covolume one.
"""

from __future__ import annotations

import csv
import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate

from .arith import RationalMatrix, parse_real_matrix
from .errors import CalibrationError, DomainError, RangeError, UnsupportedRegionError

DET_TOL = 1e-9
LOG_SAFE_TRACE = -2.0 + 1e-9
SQRT2 = math.sqrt(2.0)
BLOCK_SIZE = 1 << 18
IDENTITY = np.eye(2)


def default_threads() -> int:
    return os.cpu_count() or 1


# --- points ----------------------------------------------------------------


def project_sl2(g) -> np.ndarray:
    """Divide by ``sqrt(det)`` so the determinant is 1 up to rounding."""
    g = np.asarray(g, dtype=float)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    if np.any(det <= 0):
        raise DomainError("matrix with non-positive determinant cannot be projected to SL2(R)")
    return g / np.sqrt(det)[..., None, None]


def as_real_point(x) -> np.ndarray:
    """Coerce a RationalMatrix, nested sequence or ``"a,b;c,d"`` text to a 2x2 SL2(R) array."""
    if isinstance(x, RationalMatrix):
        g = x.to_array()
    elif isinstance(x, str):
        g = parse_real_matrix(x)
    else:
        g = np.array(x, dtype=float).reshape(2, 2)
    det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    if abs(det - 1) > 1e-6:
        raise DomainError(f"point has determinant {det}, not 1")
    g = project_sl2(g)
    return g


def sl2_inverse(g: np.ndarray) -> np.ndarray:
    out = np.empty_like(g)
    out[..., 0, 0] = g[..., 1, 1]
    out[..., 1, 1] = g[..., 0, 0]
    out[..., 0, 1] = -g[..., 0, 1]
    out[..., 1, 0] = -g[..., 1, 0]
    return out


def frobenius(g: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.asarray(g) ** 2, axis=(-2, -1)))


def op_norm(g: np.ndarray) -> float:
    return float(np.linalg.norm(g, 2))


# --- metrics ---------------------------------------------------------------


class MetricChoice(str, enum.Enum):
    FROBENIUS = "frobenius"
    LOG_INVARIANT = "log_invariant"

    @classmethod
    def parse(cls, text: "str | MetricChoice") -> "MetricChoice":
        if isinstance(text, MetricChoice):
            return text
        aliases = {"frobenius": cls.FROBENIUS, "frob": cls.FROBENIUS, "log": cls.LOG_INVARIANT,
                   "log_invariant": cls.LOG_INVARIANT}
        try:
            return aliases[text.lower()]
        except KeyError:
            raise DomainError(f"unknown metric {text!r}") from None


def log_sl2(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Principal logarithm of SL2(R) matrices, vectorized.

    Uses ``exp(X) = cosh(l) I + sinh(l)/l X`` for traceless X.  Returns
    ``(X, unsafe)``; where the trace is at most ``-2 + 1e-9`` no real
    principal logarithm exists and ``unsafe`` is True (X is then NaN).
    """
    g = np.asarray(g, dtype=float)
    t = 0.5 * (g[..., 0, 0] + g[..., 1, 1])
    unsafe = 2 * t <= LOG_SAFE_TRACE
    coef = np.ones_like(t)
    near = np.abs(t - 1) < 1e-8
    hyp = (t > 1) & ~near
    ell = (t < 1) & ~near & ~unsafe
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = np.arccosh(np.where(hyp, t, 2.0))
        coef = np.where(hyp, lam / np.sinh(lam), coef)
        phi = np.arccos(np.clip(np.where(ell, t, 0.0), -1, 1))
        coef = np.where(ell, phi / np.sin(phi), coef)
    coef = np.where(near, 1 - (t - 1) / 3, coef)
    coef = np.where(unsafe, np.nan, coef)
    X = coef[..., None, None] * (g - t[..., None, None] * IDENTITY)
    return X, unsafe


def distances(points: np.ndarray, center, metric: MetricChoice | str) -> tuple[np.ndarray, np.ndarray]:
    """Distances from each of ``points`` (shape ``(..., 2, 2)``) to ``center``.

    Returns ``(dist, fallback)``; fallback marks log-metric samples that
    were measured with the Frobenius distance instead.
    """
    metric = MetricChoice.parse(metric)
    points = np.asarray(points, dtype=float)
    center = np.asarray(center, dtype=float)
    frob = frobenius(points - center)
    if metric is MetricChoice.FROBENIUS:
        return frob, np.zeros(frob.shape, dtype=bool)
    X, unsafe = log_sl2(points @ sl2_inverse(center))
    d = np.where(unsafe, frob, frobenius(np.nan_to_num(X)))
    return d, unsafe


def distance(x, y, metric: MetricChoice | str = MetricChoice.FROBENIUS) -> float:
    d, _ = distances(as_real_point(x), as_real_point(y), metric)
    return float(d)


def distance_with_flag(x, y, metric: MetricChoice | str) -> tuple[float, bool]:
    d, flag = distances(as_real_point(x), as_real_point(y), metric)
    return float(d), bool(flag)


def log_ball_frobenius_radius(r: float) -> float:
    """Sup of ``||exp(X) - I||_F`` over traceless ``||X||_F <= r``."""
    s = r / SQRT2
    return math.sqrt(2 * (math.cosh(s) - 1) ** 2 + 2 * math.sinh(s) ** 2)


def log_ball_norm_bound(r: float) -> float:
    """Sup of ``||exp(X)||_F`` over traceless ``||X||_F <= r``."""
    return math.sqrt(2 * math.cosh(SQRT2 * r))


# --- Iwasawa coordinates and sampling ---------------------------------------


def iwasawa_matrix(u, y, theta) -> np.ndarray:
    u, y, theta = np.broadcast_arrays(np.asarray(u, float), np.asarray(y, float), np.asarray(theta, float))
    sy = np.sqrt(y)
    c, s = np.cos(theta), np.sin(theta)
    g = np.empty(u.shape + (2, 2))
    g[..., 0, 0] = sy * c + u * s / sy
    g[..., 0, 1] = -sy * s + u * c / sy
    g[..., 1, 0] = s / sy
    g[..., 1, 1] = c / sy
    return g


def iwasawa_coords(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    g = np.asarray(g, dtype=float)
    a, b, c, d = g[..., 0, 0], g[..., 0, 1], g[..., 1, 0], g[..., 1, 1]
    n = c * c + d * d
    return (a * c + b * d) / n, 1.0 / n, np.arctan2(c, d)


@dataclass(frozen=True)
class IwasawaBox:
    """A coordinate box, optionally clipped in ``u`` by the norm envelope ``||g||_F <= norm_cap``.

    ``||n(u) a(y) k||_F**2 = y + (1 + u**2) / y``, so the envelope is exact
    for Frobenius-norm balls.
    """

    u_lo: float
    u_hi: float
    y_lo: float
    y_hi: float
    theta_lo: float = -math.pi
    theta_hi: float = math.pi
    norm_cap: float | None = None

    def __post_init__(self):
        if not (self.u_lo < self.u_hi and 0 < self.y_lo < self.y_hi and self.theta_lo < self.theta_hi):
            raise DomainError(f"degenerate Iwasawa box {self}")

    @property
    def theta_fraction(self) -> float:
        return (self.theta_hi - self.theta_lo) / (2 * math.pi)

    @property
    def mass(self) -> float:
        """Uncalibrated Haar mass of the unclipped box."""
        return (self.u_hi - self.u_lo) * (1 / self.y_lo - 1 / self.y_hi) * self.theta_fraction

    def _u_range(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lo = np.full_like(y, self.u_lo)
        hi = np.full_like(y, self.u_hi)
        if self.norm_cap is not None:
            w = np.sqrt(np.maximum(self.norm_cap**2 * y - y * y - 1, 0.0))
            lo, hi = np.maximum(lo, -w), np.minimum(hi, w)
        return lo, np.maximum(hi, lo)

    def sample_weighted(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``n`` points; each weight is an unbiased Haar-mass contribution.

        ``y`` follows the Haar marginal ``dy / y**2``; ``u`` is uniform on its
        (possibly clipped) range; the weight carries the range length.
        """
        iy_lo, iy_hi = 1 / self.y_lo, 1 / self.y_hi
        y = 1.0 / (iy_lo - rng.random(n) * (iy_lo - iy_hi))
        lo, hi = self._u_range(y)
        u = lo + rng.random(n) * (hi - lo)
        theta = self.theta_lo + rng.random(n) * (self.theta_hi - self.theta_lo)
        weight = (hi - lo) * (iy_lo - iy_hi) * self.theta_fraction
        return iwasawa_matrix(u, y, theta), weight

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Haar-uniform points in the (clipped) box, by rejection on the clip."""
        out, have = [], 0
        full = self.u_hi - self.u_lo
        while have < n:
            g, w = self.sample_weighted(max(2 * (n - have), 64), rng)
            keep = rng.random(len(w)) * full * (1 / self.y_lo - 1 / self.y_hi) * self.theta_fraction < w
            out.append(g[keep])
            have += int(keep.sum())
        return np.concatenate(out)[:n]


def identity_neighbourhood_box(rho: float, norm_cap: float) -> IwasawaBox:
    """A box containing ``{h : ||h - I||_F <= rho, ||h||_F <= norm_cap}``."""
    norm_cap = min(norm_cap, SQRT2 + rho)
    disc = norm_cap**4 - 4
    if disc <= 0:
        raise DomainError(f"norm cap {norm_cap} is below the minimum SL2 norm sqrt(2)")
    y_lo = (norm_cap**2 - math.sqrt(disc)) / 2
    y_hi = (norm_cap**2 + math.sqrt(disc)) / 2
    u_half = norm_cap**2 / 2
    th_lo, th_hi = -math.pi, math.pi
    if rho < 1:
        y_lo = max(y_lo, 1 / (1 + rho) ** 2)
        y_hi = min(y_hi, 1 / (1 - rho) ** 2)
        u_half = min(u_half, (SQRT2 * rho + rho * rho / 2) / (1 - rho) ** 2)
        th = math.asin(rho)
        th_lo, th_hi = -th, th
    return IwasawaBox(-u_half, u_half, y_lo, y_hi, th_lo, th_hi, norm_cap=norm_cap)


# --- regions ---------------------------------------------------------------


def _tuple4(x) -> tuple[float, float, float, float]:
    return tuple(float(v) for v in np.asarray(x, dtype=float).reshape(4))


class Region:
    """A bounded measurable subset of SL2(R).

    Sampling contract: ``self * anchor**-1`` lies in
    ``{h : ||h - I||_F <= anchor_radius, ||h||_F <= anchor_norm}``.
    """

    kind = "region"

    def contains(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def entry_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def norm_bound(self) -> float:
        lo, hi = self.entry_bounds()
        return float(np.sqrt(np.sum(np.maximum(np.abs(lo), np.abs(hi)) ** 2)))

    @property
    def anchor(self) -> np.ndarray:
        return IDENTITY

    @property
    def anchor_radius(self) -> float:
        return self.norm_bound() + SQRT2

    @property
    def anchor_norm(self) -> float:
        return self.norm_bound()

    @property
    def measure_zero(self) -> bool:
        return False

    def translated(self, x) -> "Region":
        x = as_real_point(x)
        if np.allclose(x, IDENTITY, atol=0, rtol=0):
            return self
        return TranslatedRegion(self, _tuple4(x))

    def fingerprint(self) -> str:
        return repr(self)


@dataclass(frozen=True)
class MetricBall(Region):
    center: tuple[float, float, float, float]
    radius: float
    metric: MetricChoice = MetricChoice.FROBENIUS
    kind = "metric_ball"

    def __post_init__(self):
        object.__setattr__(self, "center", _tuple4(as_real_point(np.reshape(self.center, (2, 2)))))
        object.__setattr__(self, "metric", MetricChoice.parse(self.metric))
        if not self.radius > 0:
            raise DomainError(f"ball radius must be positive, got {self.radius}")

    @classmethod
    def at_identity(cls, radius: float, metric=MetricChoice.FROBENIUS) -> "MetricBall":
        return cls((1.0, 0.0, 0.0, 1.0), radius, MetricChoice.parse(metric))

    @property
    def center_matrix(self) -> np.ndarray:
        return np.reshape(self.center, (2, 2))

    def with_radius(self, r: float) -> "MetricBall":
        return MetricBall(self.center, r, self.metric)

    def contains(self, g):
        d, _ = distances(g, self.center_matrix, self.metric)
        return d <= self.radius

    def _offset(self) -> float:
        if self.metric is MetricChoice.FROBENIUS:
            return self.radius
        return log_ball_frobenius_radius(self.radius)

    def entry_bounds(self):
        c = self.center_matrix
        if self.metric is MetricChoice.FROBENIUS:
            w = np.full((2, 2), self.radius)
        else:
            col = np.sqrt(np.sum(c * c, axis=0))
            w = self._offset() * np.vstack([col, col])
        return c - w, c + w

    @property
    def anchor(self):
        return self.center_matrix

    @property
    def anchor_radius(self):
        if self.metric is MetricChoice.LOG_INVARIANT:
            return self._offset()
        return self.radius * op_norm(sl2_inverse(self.center_matrix))

    @property
    def anchor_norm(self):
        if self.metric is MetricChoice.LOG_INVARIANT:
            return log_ball_norm_bound(self.radius)
        return SQRT2 + self.anchor_radius


@dataclass(frozen=True)
class FrobeniusBox(Region):
    center: tuple[float, float, float, float]
    half_widths: tuple[float, float, float, float]
    kind = "frobenius_box"

    def __post_init__(self):
        object.__setattr__(self, "center", _tuple4(as_real_point(np.reshape(self.center, (2, 2)))))
        hw = _tuple4(self.half_widths)
        if min(hw) <= 0:
            raise DomainError("box half-widths must be positive")
        object.__setattr__(self, "half_widths", hw)

    def contains(self, g):
        g = np.asarray(g, dtype=float)
        c = np.reshape(self.center, (2, 2))
        w = np.reshape(self.half_widths, (2, 2))
        return np.all(np.abs(g - c) <= w, axis=(-2, -1))

    def entry_bounds(self):
        c = np.reshape(self.center, (2, 2))
        w = np.reshape(self.half_widths, (2, 2))
        return c - w, c + w

    @property
    def anchor(self):
        return np.reshape(self.center, (2, 2))

    @property
    def anchor_radius(self):
        return math.hypot(*self.half_widths) * op_norm(sl2_inverse(self.anchor))

    @property
    def anchor_norm(self):
        return SQRT2 + self.anchor_radius


@dataclass(frozen=True)
class NormBall(Region):
    """``{g : ||g||_F <= radius}``, centred at the zero matrix."""

    radius: float
    kind = "norm_ball"

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("norm ball radius must be positive")

    def contains(self, g):
        return frobenius(g) <= self.radius

    def entry_bounds(self):
        w = np.full((2, 2), float(self.radius))
        return -w, w

    def norm_bound(self):
        return float(self.radius)


@dataclass(frozen=True)
class PointSet(Region):
    """A finite set of points: measure zero, trivially right-stable."""

    points: tuple[tuple[float, float, float, float], ...]
    tol: float = 1e-12
    kind = "point_set"

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(_tuple4(as_real_point(np.reshape(p, (2, 2)))) for p in self.points))
        if not self.points:
            raise DomainError("point set must be nonempty")

    @property
    def measure_zero(self):
        return True

    def contains(self, g):
        g = np.asarray(g, dtype=float)
        pts = np.reshape(self.points, (-1, 2, 2))
        hit = np.zeros(g.shape[:-2], dtype=bool)
        for p in pts:
            hit |= frobenius(g - p) <= self.tol
        return hit

    def entry_bounds(self):
        pts = np.reshape(self.points, (-1, 2, 2))
        return pts.min(axis=0) - self.tol, pts.max(axis=0) + self.tol


@dataclass(frozen=True)
class TranslatedRegion(Region):
    """``E(x) = E x``, the right translate."""

    base: Region
    shift: tuple[float, float, float, float]
    kind = "translated"

    @property
    def shift_matrix(self) -> np.ndarray:
        return np.reshape(self.shift, (2, 2))

    @property
    def measure_zero(self):
        return self.base.measure_zero

    def contains(self, g):
        return self.base.contains(np.asarray(g, dtype=float) @ sl2_inverse(self.shift_matrix))

    def entry_bounds(self):
        lo, hi = self.base.entry_bounds()
        x = self.shift_matrix
        out_lo, out_hi = np.zeros((2, 2)), np.zeros((2, 2))
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    p, q = lo[i, k] * x[k, j], hi[i, k] * x[k, j]
                    out_lo[i, j] += min(p, q)
                    out_hi[i, j] += max(p, q)
        return out_lo, out_hi

    @property
    def anchor(self):
        return self.base.anchor @ self.shift_matrix

    @property
    def anchor_radius(self):
        return self.base.anchor_radius

    @property
    def anchor_norm(self):
        return self.base.anchor_norm


def region_inner_outer(E: Region, eps: float) -> tuple[MetricBall, MetricBall]:
    """``(E_eps^-, E_eps^+)`` for metric balls: radius shrunk and grown by eps."""
    if not isinstance(E, MetricBall):
        raise UnsupportedRegionError(f"inner/outer thickenings are implemented for metric balls, not {E.kind}")
    if not 0 < eps < E.radius:
        raise DomainError(f"eps={eps} must lie in (0, radius={E.radius}); inner ball would be degenerate")
    return E.with_radius(E.radius - eps), E.with_radius(E.radius + eps)


# --- calibration and Monte Carlo volumes ------------------------------------


@dataclass(frozen=True)
class HaarCalibration:
    """``m_inf = kappa * du dy/y^2 dtheta/2pi``; cross-check fields are optional."""

    kappa: float
    cross_check_radius: float | None = None
    cross_check_count: int | None = None
    cross_check_volume: float | None = None
    cross_check_ratio: float | None = None

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "kappa_times_covolume": self.kappa * modular_covolume_iwasawa(),
            "cross_check_radius": self.cross_check_radius,
            "cross_check_count": self.cross_check_count,
            "cross_check_volume": self.cross_check_volume,
            "cross_check_ratio": self.cross_check_ratio,
        }


def modular_domain_area() -> float:
    """Hyperbolic area of the standard fundamental domain for the modular group."""
    val, _ = integrate.quad(lambda x: 1.0 / math.sqrt(1.0 - x * x), -0.5, 0.5)
    return val


def modular_covolume_iwasawa() -> float:
    """Covolume of SL2(Z) in the uncalibrated Iwasawa measure.

    ``-I`` lies in SL2(Z) and acts on the fibre by ``theta -> theta + pi``,
    so the fibre over the fundamental domain has mass 1/2.
    """
    return modular_domain_area() / 2


@dataclass(frozen=True)
class VolumeEstimate:
    volume: float
    stderr: float
    n_samples: int
    seed: int


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _blocks(n_samples: int, block_size: int) -> list[tuple[int, int]]:
    n_blocks = max(1, math.ceil(n_samples / block_size))
    return [(i, min(block_size, n_samples - i * block_size)) for i in range(n_blocks)]


def monte_carlo_volume(
    indicator: Callable[[np.ndarray], np.ndarray],
    box: IwasawaBox,
    n_samples: int,
    seed: int,
    kappa: float,
    threads: int | None = None,
    block_size: int = BLOCK_SIZE,
) -> VolumeEstimate:
    """Calibrated Haar volume of ``{h in box : indicator(h)}``.

    Blocks have fixed sizes and per-block seeds, and are reduced in block
    order, so the result does not depend on ``threads``.
    """

    def run(block):
        i, n = block
        g, w = box.sample_weighted(n, _block_rng(seed, i))
        v = np.where(indicator(g), w, 0.0)
        return float(v.sum()), float((v * v).sum())

    blocks = _blocks(n_samples, block_size)
    with ThreadPoolExecutor(max_workers=threads or default_threads()) as ex:
        parts = list(ex.map(run, blocks))
    s = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s / n_samples
    var = max(s2 / n_samples - mean * mean, 0.0)
    return VolumeEstimate(kappa * mean, kappa * math.sqrt(var / n_samples), n_samples, seed)


def region_sampling_box(E: Region) -> IwasawaBox:
    return identity_neighbourhood_box(E.anchor_radius, E.anchor_norm)


def region_volume(
    E: Region, cal: HaarCalibration, n_samples: int = 4_000_000, seed: int = 0, threads: int | None = None
) -> VolumeEstimate:
    """Calibrated Haar volume of ``E`` by importance sampling near the identity."""
    if E.measure_zero:
        return VolumeEstimate(0.0, 0.0, 0, seed)
    anchor = E.anchor
    box = region_sampling_box(E)
    return monte_carlo_volume(lambda h: E.contains(h @ anchor), box, n_samples, seed, cal.kappa, threads)


def sl2z_norm_ball(R: float) -> np.ndarray:
    """All integer matrices of determinant 1 with ``||g||_F <= R``, shape ``(n, 4)``."""
    B = int(math.floor(R))
    r = np.arange(-B, B + 1, dtype=np.int64)
    bb, cc = np.meshgrid(r, r, indexing="ij")
    bb, cc = bb.ravel(), cc.ravel()
    R2 = R * R
    out = []
    for a in range(-B, B + 1):
        if a == 0:
            for b, c in ((1, -1), (-1, 1)):
                d = r[(b * b + c * c + r * r) <= R2]
                out.append(np.column_stack([np.zeros_like(d), np.full_like(d, b), np.full_like(d, c), d]))
            continue
        num = 1 + bb * cc
        ok = num % a == 0
        d = num[ok] // a
        b, c = bb[ok], cc[ok]
        keep = a * a + b * b + c * c + d * d <= R2
        out.append(np.column_stack([np.full(keep.sum(), a), b[keep], c[keep], d[keep]]))
    return np.concatenate(out) if out else np.zeros((0, 4), dtype=np.int64)


def calibrate_haar(
    R: float = 50.0,
    n_samples: int = 2_000_000,
    seed: int = 0,
    check: bool = True,
    threads: int | None = None,
) -> HaarCalibration:
    """``kappa = 1 / covol(SL2(Z))``, cross-checked by counting integer points in a norm ball."""
    kappa = 1.0 / modular_covolume_iwasawa()
    if not check:
        return HaarCalibration(kappa)
    count = len(sl2z_norm_ball(R))
    vol = region_volume(NormBall(R), HaarCalibration(kappa), n_samples, seed, threads).volume
    ratio = count / vol
    if not 0.85 <= ratio <= 1.15:
        raise CalibrationError(f"point-count/volume ratio {ratio:.4f} at R={R} is outside [0.85, 1.15]")
    return HaarCalibration(kappa, R, count, vol, ratio)


@lru_cache(maxsize=1)
def default_calibration() -> HaarCalibration:
    return calibrate_haar(check=False)


# --- ball volume table ------------------------------------------------------


@dataclass
class BallVolumeTable:
    """Calibrated volumes of ``B(e, r)`` on a log-spaced grid, interpolated in log-log."""

    metric: MetricChoice
    radii: np.ndarray
    volumes: np.ndarray
    stderrs: np.ndarray
    n_samples: int
    seed: int
    kappa: float

    @classmethod
    def build(
        cls,
        metric: MetricChoice | str = MetricChoice.FROBENIUS,
        cal: HaarCalibration | None = None,
        r_min: float = 0.005,
        r_max: float = 1.0,
        n_points: int = 41,
        n_samples: int = 1_000_000,
        seed: int = 0,
        threads: int | None = None,
    ) -> "BallVolumeTable":
        metric = MetricChoice.parse(metric)
        cal = cal or default_calibration()
        radii = np.geomspace(r_min, r_max, n_points)
        vols, errs = [], []
        for i, r in enumerate(radii):
            est = region_volume(MetricBall.at_identity(float(r), metric), cal, n_samples, seed + i, threads)
            vols.append(est.volume)
            errs.append(est.stderr)
        return cls(metric, radii, np.array(vols), np.array(errs), n_samples, seed, cal.kappa)

    def volume(self, r: float) -> float:
        if r == 0:
            return 0.0
        lo, hi = self.radii[0], self.radii[-1]
        if not lo * (1 - 1e-12) <= r <= hi * (1 + 1e-12):
            raise RangeError(f"radius {r} outside the cached table range [{lo}, {hi}]")
        return float(np.exp(np.interp(np.log(r), np.log(self.radii), np.log(self.volumes))))

    def stderr(self, r: float) -> float:
        return float(np.interp(np.log(r), np.log(self.radii), self.stderrs / self.volumes)) * self.volume(r)

    def to_csv(self, path: Path | str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(f"# metric={self.metric.value} kappa={self.kappa!r}\n")
            w = csv.writer(fh)
            w.writerow(["r", "volume", "stderr", "n_samples", "seed"])
            for i, (r, v, e) in enumerate(zip(self.radii, self.volumes, self.stderrs)):
                w.writerow([repr(float(r)), repr(float(v)), repr(float(e)), self.n_samples, self.seed + i])

    @classmethod
    def from_csv(cls, path: Path | str) -> "BallVolumeTable":
        with open(path) as fh:
            meta = dict(kv.split("=", 1) for kv in fh.readline().lstrip("# ").split())
            rows = list(csv.DictReader(fh))
        return cls(
            MetricChoice.parse(meta["metric"]),
            np.array([float(r["r"]) for r in rows]),
            np.array([float(r["volume"]) for r in rows]),
            np.array([float(r["stderr"]) for r in rows]),
            int(rows[0]["n_samples"]),
            int(rows[0]["seed"]),
            float(meta["kappa"]),
        )

    @classmethod
    def cached(cls, path: Path | str | None, **kwargs) -> "BallVolumeTable":
        """Load from ``path`` when it matches ``kwargs``; otherwise build and persist."""
        if path is not None and Path(path).exists():
            table = cls.from_csv(path)
            metric = MetricChoice.parse(kwargs.get("metric", MetricChoice.FROBENIUS))
            if table.metric is metric and table.n_samples == kwargs.get("n_samples", 1_000_000) \
                    and table.seed == kwargs.get("seed", 0):
                return table
        table = cls.build(**kwargs)
        if path is not None:
            table.to_csv(path)
        return table


def ball_volume_arch(
    r: float,
    metric: MetricChoice | str = MetricChoice.FROBENIUS,
    cal: HaarCalibration | None = None,
    table: BallVolumeTable | None = None,
    r_max: float = 1.0,
) -> tuple[float, float]:
    """``(volume, stderr)`` of ``B(e, r)``; direct Monte Carlo when no table is given."""
    if r == 0:
        return 0.0, 0.0
    if not 0 < r <= r_max:
        raise RangeError(f"radius {r} outside (0, {r_max}]")
    if table is not None:
        return table.volume(r), table.stderr(r)
    est = region_volume(MetricBall.at_identity(r, metric), cal or default_calibration())
    return est.volume, est.stderr


# --- N(E) --------------------------------------------------------------------


def sample_in_region(E: Region, n: int, seed: int) -> np.ndarray:
    """Haar-uniform points of ``E`` (rejection from its sampling box)."""
    rng = np.random.default_rng(seed)
    box = region_sampling_box(E)
    anchor = E.anchor
    out, have, tries = [], 0, 0
    while have < n:
        h = box.sample_uniform(max(4 * (n - have), 1024), rng) @ anchor
        h = h[E.contains(h)]
        out.append(h)
        have += len(h)
        tries += 1
        if tries > 200 and have == 0:
            raise DomainError("region appears to have zero volume; cannot sample it")
    return np.concatenate(out)[:n]


def n_of_e(E: Region, n_samples: int = 20_000, seed: int = 0, min_hits: int = 10) -> int:
    """``#{gamma in SL2(Z) : m(E cap gamma E) > 0}``, overlaps detected by Monte Carlo hits."""
    if E.measure_zero:
        return 0
    N = E.norm_bound()
    if not math.isfinite(N):
        raise UnsupportedRegionError("N(E) needs a bounded region")
    # z = gamma w with z, w in E gives ||gamma||_F <= ||z||_F ||w^-1||_F = ||z||_F ||w||_F
    candidates = sl2z_norm_ball(N * N)
    pts = sample_in_region(E, n_samples, seed)
    count = 0
    for a, b, c, d in candidates:
        gamma_inv = np.array([[d, -b], [-c, a]], dtype=float)
        hits = int(E.contains(gamma_inv @ pts).sum())
        if hits >= min_hits:
            count += 1
    return count


# --- metric equivalence -------------------------------------------------------


@dataclass(frozen=True)
class MetricEquivalenceReport:
    constant: float
    ratio_min: float
    ratio_max: float
    n_pairs: int
    n_fallback: int
    sharp_linear_bound: float


def sample_sl2_algebra(n: int, rng: np.random.Generator, max_norm: float) -> np.ndarray:
    """Traceless matrices with isotropic direction and Frobenius norm uniform in ``[0, max_norm]``."""
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    v *= rng.uniform(0, max_norm, size=(n, 1))
    X = np.empty((n, 2, 2))
    X[:, 0, 0] = v[:, 0] / SQRT2
    X[:, 1, 1] = -v[:, 0] / SQRT2
    X[:, 0, 1] = v[:, 1]
    X[:, 1, 0] = v[:, 2]
    return X


def expm_sl2(X: np.ndarray) -> np.ndarray:
    det = X[..., 0, 0] * X[..., 1, 1] - X[..., 0, 1] * X[..., 1, 0]
    lam2 = -det
    lam = np.sqrt(np.abs(lam2))
    with np.errstate(invalid="ignore", divide="ignore"):
        ch = np.where(lam2 >= 0, np.cosh(lam), np.cos(lam))
        sh = np.where(lam2 >= 0, np.sinh(lam), np.sin(lam)) / np.where(lam > 0, lam, 1.0)
    sh = np.where(lam > 1e-12, sh, 1.0)
    return ch[..., None, None] * IDENTITY + sh[..., None, None] * X


def metric_equivalence(
    n_pairs: int = 10_000, max_frobenius: float = 0.5, norm_window: float = 3.0, seed: int = 0
) -> MetricEquivalenceReport:
    """Empirical ``C`` with ``1/C <= rho_log / rho_frob <= C``.

    ``x`` is Haar-uniform in ``{||x||_F <= norm_window}``; ``y = exp(Z) x`` with
    isotropic ``Z``, kept when ``0 < ||x - y||_F <= max_frobenius`` and ``y``
    stays inside the window.
    """
    rng = np.random.default_rng(seed)
    box = identity_neighbourhood_box(norm_window + SQRT2, norm_window)
    xs, ys = [], []
    have = 0
    while have < n_pairs:
        m = 2 * (n_pairs - have) + 16
        x = box.sample_uniform(m, rng)
        y = expm_sl2(sample_sl2_algebra(m, rng, 2 * max_frobenius)) @ x
        fd = frobenius(x - y)
        keep = (fd > 0) & (fd <= max_frobenius) & (frobenius(y) <= norm_window)
        xs.append(x[keep])
        ys.append(y[keep])
        have += int(keep.sum())
    x = np.concatenate(xs)[:n_pairs]
    y = np.concatenate(ys)[:n_pairs]
    frob = frobenius(x - y)
    dlog, fallback = log_sl2(x @ sl2_inverse(y))
    logd = frobenius(np.nan_to_num(dlog))
    ratio = logd[~fallback] / frob[~fallback]
    s2 = (norm_window**2 + math.sqrt(norm_window**4 - 4)) / 2
    return MetricEquivalenceReport(
        constant=float(max(ratio.max(), 1 / ratio.min())),
        ratio_min=float(ratio.min()),
        ratio_max=float(ratio.max()),
        n_pairs=int(len(x)),
        n_fallback=int(fallback.sum()),
        sharp_linear_bound=math.sqrt(s2),
    )


def haar_points_in_box(Q: IwasawaBox, n: int, seed: int) -> np.ndarray:
    return Q.sample_uniform(n, np.random.default_rng(seed))

