"""Counting experiments: approximation counts, volume sums, discrepancy in three regimes."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .arch import (
    BallVolumeTable,
    HaarCalibration,
    IwasawaBox,
    MetricBall,
    MetricChoice,
    Region,
    as_real_point,
    default_calibration,
    default_threads,
    region_volume,
)
from .enumeration import ShellCache, ShellQuery, enumerate_shell, enumerate_up_to
from .errors import DomainError
from .fitting import PowerLawFit, fit_exponent
from .heights import PlaceSet, realizable_heights
from .padic_volume import CongruenceCondition, ball_volume_padic, congruence_measure, sphere_volume_product

__all__ = [
    "ApproximationParams",
    "SchmidtResult",
    "DiscrepancyRecord",
    "SweepRecord",
    "predicted_b0",
    "predicted_theta0",
    "count_NT",
    "volume_sum_VT",
    "discrepancy",
    "discrepancy_trajectory",
    "mean_square_discrepancy",
    "mean_square_trajectory",
    "sample_x",
    "envelope",
    "admissible",
    "uniform_error_exponent",
    "SchmidtExperiment",
    "uniform_discrepancy_sweep",
    "almost_sure_trajectory",
    "run_schmidt",
    "fit_exponent",
    "PowerLawFit",
]

DEFAULT_ETA = 0.1
DEFAULT_ELL0 = 1.0
DEFAULT_BOX = IwasawaBox(-0.5, 0.5, 1.0, 2.0)


def predicted_b0(a: float, kappa: float, d: int = 3) -> float:
    if a <= 0 or kappa < 0:
        raise DomainError(f"need a > 0 and kappa >= 0, got a={a}, kappa={kappa}")
    return 2.0 * a * kappa / d


def predicted_theta0(a: float, kappa: float, d: int, b: float) -> float:
    b0 = predicted_b0(a, kappa, d)
    if not 0 < b < b0:
        raise DomainError(f"scale b={b} must lie in (0, b0={b0:.6g})")
    return 0.5 + (0.5 - kappa) * a / (a - b * d)


@dataclass(frozen=True)
class ApproximationParams:
    b: float
    T: int
    metric: MetricChoice = MetricChoice.LOG_INVARIANT
    a_exponent: float = 2.0
    kappa: float = 0.5
    d: int = 3

    def __post_init__(self):
        if not self.b > 0:
            raise DomainError(f"approximation scale b must be positive, got {self.b}")
        object.__setattr__(self, "metric", MetricChoice.parse(self.metric))

    @property
    def b0(self) -> float:
        return predicted_b0(self.a_exponent, self.kappa, self.d)

    @property
    def in_proven_range(self) -> bool:
        return self.b < self.b0

    @property
    def range_label(self) -> str:
        return "proven range" if self.in_proven_range else "out of proven range"

    @property
    def theta0(self) -> float | None:
        return predicted_theta0(self.a_exponent, self.kappa, self.d, self.b) if self.in_proven_range else None

    def radius(self, h: int) -> float:
        return float(h) ** (-self.b)


@dataclass
class SchmidtResult:
    """Rows ``(T, N_T, V_T, N_T - V_T)`` over realizable T."""

    rows: list[tuple[int, int, float, float]]
    fitted_theta: float
    predicted_theta0: float | None
    x: tuple[float, float, float, float] | None = None
    seed: int | None = None


@dataclass(frozen=True)
class DiscrepancyRecord:
    h: int
    count: int
    v_S: int
    main_term: float
    D: float
    envelope: float
    regime: str
    seed: int | None = None

    def __post_init__(self):
        if self.D < 0:
            raise DomainError("discrepancy is nonnegative")

    @classmethod
    def build(cls, h, count, v_S, main_term, envelope, regime, seed=None) -> "DiscrepancyRecord":
        return cls(h, count, v_S, main_term, abs(count / v_S - main_term), envelope, regime, seed)

    def reconstructed(self) -> float:
        return abs(self.count / self.v_S - self.main_term)


@dataclass(frozen=True)
class SweepRecord(DiscrepancyRecord):
    ell: float = 0.0
    x_index: int = 0
    ball_volume: float = 0.0
    admissible: bool = True
    in_regime: bool = True
    predicted_error: float = 0.0


# --- counting ----------------------------------------------------------------


def count_NT(
    x,
    params: ApproximationParams,
    S: PlaceSet,
    congruence: CongruenceCondition | None = None,
    threads: int | None = 1,
    cache: ShellCache | None = None,
) -> list[tuple[int, int]]:
    """``(T, N_T(x))`` for every realizable ``T <= params.T``.

    Shell h contributes the points of exact height h inside ``B(x, h**-b)``.
    """
    x = as_real_point(x)
    out, total = [], 0
    for h in realizable_heights(S, params.T):
        ball = MetricBall(x, params.radius(h.value), params.metric)
        total += enumerate_shell(ShellQuery(S, h, ball, congruence), threads, cache).count
        out.append((h.value, total))
    return out


def _ball_volumes(
    radii,
    metric: MetricChoice,
    cal: HaarCalibration,
    table: BallVolumeTable | None,
    n_samples: int,
    seed: int,
) -> list[float]:
    if table is not None:
        return [table.volume(r) for r in radii]
    return [
        region_volume(MetricBall.at_identity(r, metric), cal, n_samples, seed + i).volume
        for i, r in enumerate(radii)
    ]


def volume_sum_VT(
    params: ApproximationParams,
    S: PlaceSet,
    cal: HaarCalibration | None = None,
    table: BallVolumeTable | None = None,
    n_samples: int = 2_000_000,
    seed: int = 0,
) -> list[tuple[int, float]]:
    """``(T, V_T)``: sum over realizable ``h <= T`` of ``m(B(e, h**-b)) * m_S(sphere h)``.

    Without a table each radius gets its own Monte Carlo estimate.
    """
    cal = cal or default_calibration()
    hs = realizable_heights(S, params.T)
    vols = _ball_volumes([params.radius(h.value) for h in hs], params.metric, cal, table, n_samples, seed)
    out, total = [], 0.0
    for h, v in zip(hs, vols):
        total += v * sphere_volume_product(S, h)
        out.append((h.value, total))
    return out


def _theta_fit(rows) -> float:
    pts = [(V, abs(d)) for _, _, V, d in rows if V > 0 and d != 0]
    if len(pts) < 3:
        return float("nan")
    return fit_exponent(pts).slope


def schmidt_rows(nt, vt) -> list[tuple[int, int, float, float]]:
    return [(T, N, V, N - V) for (T, N), (_, V) in zip(nt, vt)]


# --- discrepancy ---------------------------------------------------------------


def _main_factor(W: CongruenceCondition | None, S: PlaceSet) -> Fraction:
    return Fraction(1) if W is None else congruence_measure(W, S)


def discrepancy_trajectory(
    hs,
    E: Region,
    W: CongruenceCondition | None,
    S: PlaceSet,
    m_E: float,
    regime: str = "almost_sure",
    eta: float = DEFAULT_ETA,
    seed: int | None = None,
    threads: int | None = 1,
    cache: ShellCache | None = None,
) -> list[DiscrepancyRecord]:
    """Records at each requested h, sharing one enumeration up to ``max(hs)``."""
    hs = sorted(int(h) for h in hs)
    if not hs:
        return []
    shells = enumerate_up_to(S, hs[-1], E, W, threads, cache)
    main = m_E * float(_main_factor(W, S))
    out = []
    for h in hs:
        count = sum(r.count for hh, r in shells.items() if hh <= h)
        v = ball_volume_padic(S, h)
        out.append(DiscrepancyRecord.build(h, count, v, main, envelope(v, S.spectral_kappa, eta, regime), regime, seed))
    return out


def envelope(v: int, kappa: float, eta: float = DEFAULT_ETA, regime: str = "almost_sure") -> float:
    """Predicted decay scale of D: ``(log v)**(1.5 + eta) v**-kappa`` almost surely, ``v**-kappa`` in mean square."""
    if regime == "mean_square":
        return v ** (-kappa)
    return math.log(v) ** (1.5 + eta) * v ** (-kappa)


def discrepancy(
    h: int,
    E: Region,
    W: CongruenceCondition | None,
    S: PlaceSet,
    cal: HaarCalibration | None = None,
    m_E: float | None = None,
    n_samples: int = 4_000_000,
    seed: int = 0,
    regime: str = "almost_sure",
    eta: float = DEFAULT_ETA,
    threads: int | None = 1,
) -> DiscrepancyRecord:
    if m_E is None:
        m_E = region_volume(E, cal or default_calibration(), n_samples, seed).volume
    return discrepancy_trajectory([h], E, W, S, m_E, regime, eta, seed, threads)[0]


def sample_x(Q: IwasawaBox, n: int, seed: int) -> list[np.ndarray]:
    """``n`` Haar-uniform points of Q, point i drawn from its own child seed."""
    out = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        out.append(Q.sample_uniform(1, rng)[0])
    return out


def mean_square_trajectory(
    hs,
    E: Region,
    W: CongruenceCondition | None,
    S: PlaceSet,
    Q: IwasawaBox = DEFAULT_BOX,
    n_samples: int = 10,
    seed: int = 0,
    m_E: float | None = None,
    cal: HaarCalibration | None = None,
    volume_samples: int = 10_000_000,
    threads: int | None = None,
) -> list[tuple[int, int, float]]:
    """``(h, v_S(h), sqrt(mean D**2))`` over x Haar-uniform in Q, for each h."""
    if m_E is None:
        m_E = region_volume(E, cal or default_calibration(), volume_samples, seed).volume
    xs = sample_x(Q, n_samples, seed)

    def one(x):
        return discrepancy_trajectory(hs, E.translated(x), W, S, m_E, "mean_square", seed=seed, threads=1)

    with ThreadPoolExecutor(max_workers=threads or default_threads()) as ex:
        runs = list(ex.map(one, xs))
    out = []
    for j, h in enumerate(sorted(int(h) for h in hs)):
        d2 = [run[j].D ** 2 for run in runs]
        out.append((h, runs[0][j].v_S, math.sqrt(sum(d2) / len(d2))))
    return out


def mean_square_discrepancy(
    h: int,
    E: Region,
    W: CongruenceCondition | None,
    S: PlaceSet,
    Q: IwasawaBox = DEFAULT_BOX,
    n_samples: int = 10,
    seed: int = 0,
    m_E: float | None = None,
    cal: HaarCalibration | None = None,
    threads: int | None = None,
) -> float:
    return mean_square_trajectory([h], E, W, S, Q, n_samples, seed, m_E, cal, threads=threads)[0][2]


def uniform_discrepancy_sweep(
    xs,
    ells,
    W: CongruenceCondition | None,
    S: PlaceSet,
    h: int,
    metric: MetricChoice | str = MetricChoice.LOG_INVARIANT,
    cal: HaarCalibration | None = None,
    ell0: float = DEFAULT_ELL0,
    n_samples: int = 2_000_000,
    seed: int = 0,
    threads: int | None = 1,
) -> list[SweepRecord]:
    """Counts in ``B(x, ell) x W`` against ``m(B(e, ell)) m_S(W) v_S(h)``.

    Each row carries the admissibility flag ``m(B)**2 m_S(W) >= v**(-2 kappa)``
    and the predicted error scale
    ``m(B)**(d/(d+2)) m_S(W)**((d+1)/(d+2)) v**(1 - 2 kappa/(d+2))``.
    """
    metric = MetricChoice.parse(metric)
    cal = cal or default_calibration()
    d, k = S.dim_d, S.spectral_kappa
    v = ball_volume_padic(S, h)
    mW = float(_main_factor(W, S))
    vols = _ball_volumes(list(ells), metric, cal, None, n_samples, seed)
    out = []
    for i, x in enumerate(xs):
        for ell, mB in zip(ells, vols):
            E = MetricBall(as_real_point(x), ell, metric)
            rec = discrepancy_trajectory([h], E, W, S, mB * mW, "uniform", seed=seed, threads=threads)[0]
            pred = mB ** (d / (d + 2)) * mW ** ((d + 1) / (d + 2)) * v ** (1 - 2 * k / (d + 2))
            out.append(
                SweepRecord(
                    **asdict(rec),
                    ell=ell,
                    x_index=i,
                    ball_volume=mB,
                    admissible=admissible(mB, mW, v, k),
                    in_regime=ell <= ell0,
                    predicted_error=pred,
                )
            )
    return out


def admissible(ball_volume: float, mW: float, v: int, kappa: float) -> bool:
    return ball_volume**2 * mW >= v ** (-2 * kappa)


def uniform_error_exponent(kappa: float, d: int = 3) -> float:
    return 1 - 2 * kappa / (d + 2)


def almost_sure_trajectory(
    x,
    E: Region,
    W: CongruenceCondition | None,
    S: PlaceSet,
    max_h: int,
    eta: float = DEFAULT_ETA,
    cal: HaarCalibration | None = None,
    m_E: float | None = None,
    n_samples: int = 4_000_000,
    seed: int = 0,
    threads: int | None = 1,
) -> list[DiscrepancyRecord]:
    """D for ``E(x)`` at every realizable ``h <= max_h``, with the envelope column."""
    if m_E is None:
        m_E = region_volume(E, cal or default_calibration(), n_samples, seed).volume
    hs = [h.value for h in realizable_heights(S, max_h)]
    return discrepancy_trajectory(hs, E.translated(x), W, S, m_E, "almost_sure", eta, seed, threads)


# --- the approximation-counting experiment --------------------------------------


@dataclass
class SchmidtExperiment:
    params: ApproximationParams
    S: PlaceSet
    volume_sum: list[tuple[int, float]]
    results: list[SchmidtResult]
    seed: int
    meta: dict = field(default_factory=dict)

    def final_ratios(self) -> np.ndarray:
        return np.array([r.rows[-1][1] / r.rows[-1][2] for r in self.results])

    def median_abs_diff(self) -> list[tuple[int, float, float]]:
        """``(T, V_T, median over x of |N_T - V_T|)``."""
        out = []
        for j, (T, V) in enumerate(self.volume_sum):
            out.append((T, V, float(np.median([abs(r.rows[j][3]) for r in self.results]))))
        return out

    def median_slope(self) -> PowerLawFit:
        pts = [(V, m) for _, V, m in self.median_abs_diff() if m > 0]
        return fit_exponent(pts)

    def to_csv(self, header_line: str | None = None) -> str:
        buf = io.StringIO()
        if header_line:
            buf.write(header_line + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample", "T", "N_T", "V_T", "diff", "theta_fit_so_far"])
        for i, res in enumerate(self.results):
            for j, (T, N, V, dlt) in enumerate(res.rows):
                w.writerow([i, T, N, f"{V:.10g}", f"{dlt:.10g}", f"{_theta_fit(res.rows[: j + 1]):.6g}"])
        return buf.getvalue()


def run_schmidt(
    S: PlaceSet,
    params: ApproximationParams,
    Q: IwasawaBox = DEFAULT_BOX,
    n_x: int = 20,
    seed: int = 0,
    cal: HaarCalibration | None = None,
    table: BallVolumeTable | None = None,
    volume_samples: int = 2_000_000,
    threads: int | None = None,
    cache: ShellCache | None = None,
) -> SchmidtExperiment:
    """``N_T(x)`` against ``V_T`` for ``n_x`` Haar-random x in Q; x number i uses child seed i."""
    cal = cal or default_calibration()
    vt = volume_sum_VT(params, S, cal, table, volume_samples, seed)
    xs = sample_x(Q, n_x, seed)

    def one(x):
        return count_NT(x, params, S, None, 1, cache)

    with ThreadPoolExecutor(max_workers=threads or default_threads()) as ex:
        counts = list(ex.map(one, xs))
    results = []
    for x, nt in zip(xs, counts):
        rows = schmidt_rows(nt, vt)
        results.append(
            SchmidtResult(rows, _theta_fit(rows), params.theta0, tuple(float(v) for v in x.reshape(4)), seed)
        )
    return SchmidtExperiment(params, S, vt, results, seed)
