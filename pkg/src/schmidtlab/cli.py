"""Command-line harness: reproducible runs writing CSV artifacts and a JSON manifest."""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy
import sympy

from . import __version__
from .arch import (
    MetricBall,
    MetricChoice,
    NormBall,
    as_real_point,
    calibrate_haar,
    default_calibration,
    region_volume,
)
from .arith import format_matrix
from .enumeration import ShellCache, ShellQuery, brute_force_recount, enumerate_shell, enumerate_up_to
from .errors import ConfigurationError, SchmidtLabError
from .experiments import (
    DEFAULT_BOX,
    ApproximationParams,
    almost_sure_trajectory,
    count_NT,
    discrepancy_trajectory,
    run_schmidt,
    sample_x,
    uniform_discrepancy_sweep,
)
from .heights import PlaceSet
from .padic_volume import CongruenceCondition, SphereVolumeTable, sphere_volume, sphere_volume_oracle

VERBS = ("calibrate", "volumes", "enumerate", "count", "schmidt", "discrepancy", "sweep", "selftest")


@dataclass
class RunConfig:
    verb: str
    primes: str = "2"
    b: float = 0.4
    T: int = 128
    max_height: int = 16
    metric: str = "auto"
    mod: int | None = None
    residues: str = "full"
    center: str = "1,0;0,1"
    radius: str = "1.0"
    samples: int = 2_000_000
    seed: int = 0
    eta: float = 0.1
    kappa: float = 0.5
    n_x: int = 20
    regime: str = "almost_sure"
    threads: int | None = None
    out: str = "runs"
    cache: str | None = None

    def public(self) -> dict:
        """Fields that determine the output; the pool size and paths do not."""
        d = asdict(self)
        for k in ("threads", "out", "cache"):
            d.pop(k)
        return d

    def digest(self) -> str:
        text = json.dumps(self.public(), sort_keys=True)
        return hashlib.sha256(f"{__version__}|{text}".encode()).hexdigest()[:16]

    # validated views

    def place_set(self) -> PlaceSet:
        try:
            return PlaceSet(tuple(int(p) for p in str(self.primes).split(",") if p.strip()), spectral_kappa=self.kappa)
        except (ValueError, SchmidtLabError) as exc:
            raise ConfigurationError(f"--primes/--kappa: {exc}") from None

    def metric_choice(self) -> MetricChoice:
        # approximation counts need a right-invariant ball; other verbs default to frobenius
        if self.metric == "auto":
            return MetricChoice.LOG_INVARIANT if self.verb in ("count", "schmidt") else MetricChoice.FROBENIUS
        try:
            return MetricChoice.parse(self.metric)
        except (ValueError, KeyError):
            raise ConfigurationError(f"--metric: expected frobenius or log, got {self.metric!r}") from None

    def congruence(self, S: PlaceSet) -> CongruenceCondition | None:
        if self.mod is None:
            return None
        q = int(self.mod)
        try:
            name = self.residues.strip()
            if name in ("full", "identity", "upper_triangular"):
                W = CongruenceCondition.named(name, q)
            else:
                rows = [tuple(int(v) for v in part.replace(";", ",").split(",")) for part in name.split("|")]
                W = CongruenceCondition(q, frozenset(rows), "custom")
            return W.validate_for(S)
        except (ValueError, SchmidtLabError) as exc:
            raise ConfigurationError(f"--mod/--residues: {exc}") from None

    def centers(self) -> list[np.ndarray]:
        try:
            return [as_real_point(c) for c in str(self.center).split("|")]
        except (ValueError, SchmidtLabError) as exc:
            raise ConfigurationError(f"--center: {exc}") from None

    def radii(self) -> list[float]:
        try:
            out = [float(r) for r in str(self.radius).split(",")]
        except ValueError:
            raise ConfigurationError(f"--radius: not a number list: {self.radius!r}") from None
        if any(r <= 0 for r in out):
            raise ConfigurationError("--radius: radii must be positive")
        return out


def _typed(name: str, text: str):
    f = {f.name: f for f in fields(RunConfig)}.get(name)
    if f is None:
        raise ConfigurationError(f"config file: unknown key {name!r}")
    kind = str(f.type)
    try:
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigurationError(f"config file: {name}={text!r} is not a valid {kind.split(' ')[0]}") from None
    return text


def read_config_file(path: str) -> dict:
    """``key = value`` lines, optionally under a ``[run]`` section."""
    text = Path(path).read_text()
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string(text)
    out = {}
    for section in cp.sections():
        for k, v in cp[section].items():
            key = k.replace("-", "_")
            out[key] = _typed(key, v)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--primes", help="comma-separated primes of S")
    common.add_argument("--b", type=float, help="approximation scale")
    common.add_argument("--T", type=int, help="largest height for counting runs")
    common.add_argument("--max-height", dest="max_height", type=int, help="largest height for shells and tables")
    common.add_argument("--metric", choices=["frobenius", "log"])
    common.add_argument("--mod", type=int, help="congruence modulus q")
    common.add_argument("--residues", help="full, identity, upper_triangular or 'a,b,c,d|a,b,c,d'")
    common.add_argument("--center", help="matrix 'a,b;c,d'; several joined by '|'")
    common.add_argument("--radius", help="radius or comma-separated radii")
    common.add_argument("--samples", type=int, help="Monte Carlo samples")
    common.add_argument("--seed", type=int, help="64-bit master seed")
    common.add_argument("--eta", type=float)
    common.add_argument("--kappa", type=float, help="spectral exponent in (0, 1/2]")
    common.add_argument("--n-x", dest="n_x", type=int, help="number of random base points")
    common.add_argument("--regime", choices=["almost_sure", "mean_square"])
    common.add_argument("--threads", type=int, help="worker pool size")
    common.add_argument("--out", help="output directory")
    common.add_argument("--cache", help="shell cache directory")
    parser = argparse.ArgumentParser(prog="schmidtlab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"schmidtlab {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        sub.add_parser(verb, parents=[common])
    return parser


def resolve_config(argv: list[str] | None) -> RunConfig:
    ns = build_parser().parse_args(argv)
    values = read_config_file(ns.config) if ns.config else {}
    for k, v in vars(ns).items():
        if k != "config" and v is not None:
            values[k] = v
    values.pop("verb", None)
    return RunConfig(verb=ns.verb, **values)


# --- artifacts ------------------------------------------------------------------


@dataclass
class RunManifest:
    config: dict
    digest: str
    versions: dict
    cache_fingerprints: dict = field(default_factory=dict)
    wall_times: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    acceptance: dict = field(default_factory=dict)
    status: int = 0


def versions() -> dict:
    return {
        "schmidtlab": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "sympy": sympy.__version__,
    }


def csv_text(digest: str, header: list[str], rows) -> str:
    buf = io.StringIO()
    buf.write(f"# run {digest}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return v


class Run:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.manifest = RunManifest(cfg.public(), cfg.digest(), versions())
        self.cache = ShellCache(Path(cfg.cache)) if cfg.cache else None

    def write_csv(self, name: str, header, rows) -> Path:
        return self.write_text(name, csv_text(self.manifest.digest, header, rows))

    def write_text(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text(text, encoding="utf-8")
        self.manifest.artifacts.append(name)
        return path

    def timed(self, label: str, fn, *a, **kw):
        t0 = time.perf_counter()
        res = fn(*a, **kw)
        self.manifest.wall_times[label] = round(time.perf_counter() - t0, 4)
        return res

    def finish(self, status: int) -> None:
        self.manifest.status = status
        if self.cache is not None:
            self.manifest.cache_fingerprints = self.cache.fingerprints()
        self.out.mkdir(parents=True, exist_ok=True)
        with open(self.out / "manifest.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(asdict(self.manifest), sort_keys=True) + "\n")


# --- verbs ----------------------------------------------------------------------


def cmd_calibrate(run: Run) -> int:
    c = run.cfg
    R = c.radii()[0] if c.radius != RunConfig.radius else 50.0
    cal = run.timed("calibrate", calibrate_haar, R, c.samples, c.seed, True, c.threads)
    d = cal.to_dict()
    run.write_csv("calibrate.csv", list(d), [list(d.values())])
    return 0


def cmd_volumes(run: Run) -> int:
    S = run.cfg.place_set()
    table = SphereVolumeTable.build(S, run.cfg.max_height)
    run.write_csv("volumes.csv", ["h", "sphere_volume", "v_S"], table.cumulative())
    return 0


def _region(cfg: RunConfig) -> MetricBall:
    return MetricBall(cfg.centers()[0], cfg.radii()[0], cfg.metric_choice())


def cmd_enumerate(run: Run) -> int:
    c = run.cfg
    S = c.place_set()
    shells = run.timed("enumerate", enumerate_up_to, S, c.max_height, _region(c), c.congruence(S), c.threads, run.cache)
    rows = [(h, format_matrix(m)) for h in sorted(shells) for m in shells[h].points]
    run.write_csv("enumerate.csv", ["h", "point"], rows)
    return 0


def cmd_count(run: Run) -> int:
    c = run.cfg
    S = c.place_set()
    params = ApproximationParams(c.b, c.T, c.metric_choice(), kappa=c.kappa)
    nt = run.timed("count", count_NT, c.centers()[0], params, S, c.congruence(S), c.threads, run.cache)
    run.write_csv("count.csv", ["T", "N_T"], nt)
    return 0


def schmidt_csv(cfg: RunConfig, digest: str, threads: int | None = None) -> str:
    S = cfg.place_set()
    params = ApproximationParams(cfg.b, cfg.T, cfg.metric_choice(), kappa=cfg.kappa)
    ex = run_schmidt(S, params, DEFAULT_BOX, cfg.n_x, cfg.seed, volume_samples=cfg.samples, threads=threads)
    return ex.to_csv(f"# run {digest}")


def cmd_schmidt(run: Run) -> int:
    text = run.timed("schmidt", schmidt_csv, run.cfg, run.manifest.digest, run.cfg.threads)
    run.write_text("schmidt.csv", text)
    return 0


DISC_HEADER = ["h", "count", "v_S", "main_term", "D", "envelope", "regime", "seed"]


def cmd_discrepancy(run: Run) -> int:
    c = run.cfg
    S = c.place_set()
    W = c.congruence(S)
    E = MetricBall.at_identity(c.radii()[0], c.metric_choice())
    m_E = run.timed("volume", region_volume, E, default_calibration(), c.samples, c.seed, c.threads).volume
    if c.regime == "mean_square":
        from .heights import realizable_heights

        hs = [h.value for h in realizable_heights(S, c.max_height)]
        recs = []
        for i, x in enumerate(sample_x(DEFAULT_BOX, c.n_x, c.seed)):
            recs += discrepancy_trajectory(hs, E.translated(x), W, S, m_E, "mean_square", c.eta, c.seed, c.threads)
    else:
        recs = run.timed(
            "trajectory", almost_sure_trajectory, c.centers()[0], E, W, S, c.max_height, c.eta, m_E=m_E,
            seed=c.seed, threads=c.threads,
        )
    run.write_csv("discrepancy.csv", DISC_HEADER, [[getattr(r, k) for k in DISC_HEADER] for r in recs])
    return 0


def cmd_sweep(run: Run) -> int:
    c = run.cfg
    S = c.place_set()
    recs = run.timed(
        "sweep", uniform_discrepancy_sweep, c.centers(), c.radii(), c.congruence(S), S, c.max_height,
        c.metric_choice(), None, 1.0, c.samples, c.seed, c.threads,
    )
    header = DISC_HEADER + ["ell", "x_index", "ball_volume", "admissible", "in_regime", "predicted_error"]
    run.write_csv("sweep.csv", header, [[getattr(r, k) for k in header] for r in recs])
    return 0


def selftest_checks(samples: int = 400_000) -> list[tuple[str, bool, str]]:
    out = []
    for p in (2, 3, 5):
        for k in (1, 2):
            a, b = sphere_volume(p, k), sphere_volume_oracle(p, k)
            out.append((f"sphere volume p={p} k={k}", a == b, f"{a} vs oracle {b}"))
    S = PlaceSet.of(2)
    for h in (1, 2, 4):
        for W in (None, CongruenceCondition.identity(3)):
            q = ShellQuery(S, h, NormBall(3.0), W)
            a, b = enumerate_shell(q).count, brute_force_recount(q)
            out.append((f"recount h={h} W={'I mod 3' if W else 'full'}", a == b, f"{a} vs oracle {b}"))
    try:
        cal = calibrate_haar(R=20.0, n_samples=samples, seed=0)
        out.append(("calibration cross-check R=20", True, f"ratio {cal.cross_check_ratio:.4f}"))
    except SchmidtLabError as exc:
        out.append(("calibration cross-check R=20", False, str(exc)))
    return out


def cmd_selftest(run: Run) -> int:
    checks = run.timed("selftest", selftest_checks)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    run.manifest.acceptance = {name: ok for name, ok, _ in checks}
    run.write_csv("selftest.csv", ["check", "ok", "detail"], checks)
    return 0 if all(ok for _, ok, _ in checks) else 1


COMMANDS = {v: globals()[f"cmd_{v}"] for v in VERBS}


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = resolve_config(argv)
        run = Run(cfg)
        status = COMMANDS[cfg.verb](run)
    except (SchmidtLabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    run.finish(status)
    return status


if __name__ == "__main__":
    sys.exit(main())
