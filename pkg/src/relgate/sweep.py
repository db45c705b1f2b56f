"""Sweeps over probe trajectories ``(a, T)`` and target initial states.

Each ``(a, T)`` point builds one :class:`~relgate.dyson.TargetResponse` and
applies it to every target state of the grid at once, so the amplitude table
is shared read-only across targets.  Points run on a thread pool; results
are collected in submission order, so output does not depend on the thread
count.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import amplitudes as amp
from .dyson import TargetResponse
from .model import ConfigError, NumericalError, SimulationConfig, target_state, validate
from .observables import batch_angles

log = logging.getLogger(__name__)

CSV_COLUMNS = ("a", "T", "theta0", "phi0", "d_theta", "d_phi", "purity", "argmax_a", "argmax_T", "flags")
OBJECTIVES = ("phi", "theta")

# objective_fn(a, T, rho0_stack) -> (d_theta, d_phi, purity, info) with arrays over targets
ObjectiveFn = Callable[[float, float, np.ndarray], tuple]


class SweepError(NumericalError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    a_min: float = 0.0
    a_max: float = 2.3
    a_steps: int = 47
    T_min: float = 0.0
    T_max: float = 1.5
    T_steps: int = 31
    theta_steps: int = 24
    phi_steps: int = 24
    objective: str = "phi"
    refine_rounds: int = 3

    def __post_init__(self):
        for name in ("a", "T"):
            lo, hi, n = getattr(self, f"{name}_min"), getattr(self, f"{name}_max"), getattr(self, f"{name}_steps")
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo < 0 or hi < lo:
                raise ConfigError(f"sweep.{name}_min", f"need 0 <= {name}_min <= {name}_max")
            if n < 1 or (n == 1 and hi != lo) or (hi > lo and n < 2):
                raise ConfigError(f"sweep.{name}_steps", "need >= 2 steps on a swept axis (1 only if min == max)")
        if self.theta_steps < 1 or self.phi_steps < 1:
            raise ConfigError("sweep.theta_steps", "target grid needs at least one point per axis")
        if self.objective not in OBJECTIVES:
            raise ConfigError("sweep.objective", f"objective must be one of {OBJECTIVES}")
        if self.refine_rounds < 0:
            raise ConfigError("sweep.refine_rounds", "must be non-negative")

    @property
    def a_values(self) -> np.ndarray:
        return np.linspace(self.a_min, self.a_max, self.a_steps)

    @property
    def T_values(self) -> np.ndarray:
        return np.linspace(self.T_min, self.T_max, self.T_steps)

    def targets(self) -> list[tuple[float, float]]:
        """Cell-centred polar angles (poles excluded), uniform azimuths from 0."""
        th = [(i + 0.5) * math.pi / self.theta_steps for i in range(self.theta_steps)]
        ph = [2.0 * math.pi * k / self.phi_steps for k in range(self.phi_steps)]
        return [(t, p) for t in th for p in ph]

    @classmethod
    def from_dict(cls, data: Mapping) -> "SweepSpec":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for k, v in data.items():
            if k not in known:
                raise ConfigError(f"sweep.{k}", "unknown key")
            default = known[k].default
            if isinstance(default, str):
                if not isinstance(v, str):
                    raise ConfigError(f"sweep.{k}", "expected a string")
            elif isinstance(default, int):
                if isinstance(v, bool) or not isinstance(v, int):
                    raise ConfigError(f"sweep.{k}", "expected an integer")
            elif isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"sweep.{k}", "expected a number")
            else:
                v = float(v)
            kwargs[k] = v
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class SweepRecord:
    a: float
    T: float
    theta0: float
    phi0: float
    d_theta: float
    d_phi: float
    purity: float
    argmax_a: float = math.nan
    argmax_T: float = math.nan
    flags: tuple[str, ...] = ()

    def row(self) -> list[str]:
        vals = [self.a, self.T, self.theta0, self.phi0, self.d_theta, self.d_phi, self.purity, self.argmax_a, self.argmax_T]
        return [_fmt(v) for v in vals] + [";".join(self.flags)]


def _fmt(v: float) -> str:
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def write_csv(records: Iterable[SweepRecord], fh=None) -> str:
    """CSV text (LF line endings, round-trip floats); also written to ``fh``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.row())
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


# --- point evaluation ---------------------------------------------------------------


@dataclass
class PointResult:
    a: float
    T: float
    d_theta: np.ndarray
    d_phi: np.ndarray
    purity: np.ndarray
    flags: tuple[str, ...] = ()
    quadrature_error: float = 0.0
    mode_delta: float | None = None


def response_objective(config: SimulationConfig) -> ObjectiveFn:
    """Default objective: perturbative response of the target at ``(a, T)``."""
    vc = validate(config)
    num = vc.config.numerics

    def fn(a: float, T: float, rho0: np.ndarray):
        cfg = vc.config.replace(**{"probe.a": float(a), "probe.T": float(T)})
        n = cfg.cavity.modes
        info = {"quadrature_error": 0.0, "mode_delta": None, "flags": ()}
        if num.mode_check and 2 * n <= num.max_modes:
            table = amp.build_table(cfg, modes=range(1, 2 * n + 1))
            resp = TargetResponse.build(cfg, table)
            coarse = _evolve_modes(resp, rho0, n)
            fine = resp.evolve(rho0)
            delta = float(np.max(np.abs(fine - coarse))) if len(rho0) else 0.0
            info["mode_delta"] = delta
            if delta > num.mode_tol:
                info["flags"] = ("mode_unconverged",)
            rho = coarse
        else:
            table = amp.build_table(cfg)
            rho = TargetResponse.build(cfg, table).evolve(rho0)
        info["quadrature_error"] = table.max_error
        d_theta, d_phi, pur = batch_angles(rho0, rho)
        return d_theta, d_phi, pur, info

    return fn


def _evolve_modes(resp: TargetResponse, rho0: np.ndarray, n: int) -> np.ndarray:
    """Like ``resp.evolve`` but with the second-order sum cut at ``n`` modes."""
    from .dyson import TracedMap

    cut = TracedMap({k: v[:n] for k, v in resp.traced.entries.items()}, n)
    return TargetResponse(resp.M, cut).evolve(rho0)


def _evaluate(fn: ObjectiveFn, a: float, T: float, rho0: np.ndarray) -> PointResult:
    n = len(rho0)
    if T == 0.0:
        z = np.zeros(n)
        return PointResult(a, T, z, z.copy(), np.ones(n), ("no_interaction",))
    try:
        d_theta, d_phi, pur, info = fn(a, T, rho0)
    except (NumericalError, ConfigError, FloatingPointError) as exc:
        log.warning("point a=%r T=%r failed: %s", a, T, exc)
        nan = np.full(n, math.nan)
        return PointResult(a, T, nan, nan.copy(), nan.copy(), (f"failed:{type(exc).__name__}",))
    info = info or {}
    return PointResult(
        a, T, np.asarray(d_theta, float), np.asarray(d_phi, float), np.asarray(pur, float),
        tuple(info.get("flags", ())), float(info.get("quadrature_error", 0.0)), info.get("mode_delta"),
    )


def _run_points(fn, points: Sequence[tuple[float, float]], rho0: np.ndarray, threads: int) -> list[PointResult]:
    if threads <= 1 or len(points) <= 1:
        return [_evaluate(fn, a, T, rho0) for a, T in points]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda p: _evaluate(fn, p[0], p[1], rho0), points))


def _stack(targets: Sequence[tuple[float, float]]) -> np.ndarray:
    return np.stack([target_state(t, p) for t, p in targets]) if targets else np.zeros((0, 2, 2), complex)


# --- curve sweep -----------------------------------------------------------------------


@dataclass
class SweepResult:
    records: list[SweepRecord]
    quadrature_error: float
    mode_delta: float | None
    failures: int

    def to_csv(self, fh=None) -> str:
        return write_csv(self.records, fh)


def curve_sweep(
    config: SimulationConfig,
    a_list: Iterable[float],
    T_grid: Iterable[float],
    *,
    threads: int = 1,
    objective: str = "phi",
    objective_fn: ObjectiveFn | None = None,
) -> SweepResult:
    """``d_theta``, ``d_phi`` and purity along ``T`` for each ``a``, for the
    target state in ``config``.  Rows are ordered by ``a`` then ``T``; the row
    with the largest ``|objective|`` on each curve carries the ``argmax_T`` flag."""
    vc = validate(config)
    a_vals = sorted(float(a) for a in a_list)
    T_vals = sorted(float(t) for t in T_grid)
    theta0, phi0 = vc.config.target.theta, vc.config.target.phi
    rho0 = _stack([(theta0, phi0)])
    fn = objective_fn or response_objective(vc.config)
    points = [(a, T) for a in a_vals for T in T_vals]
    results = _run_points(fn, points, rho0, threads)
    records = []
    key = "d_phi" if objective == "phi" else "d_theta"
    for i, a in enumerate(a_vals):
        curve = results[i * len(T_vals):(i + 1) * len(T_vals)]
        vals = np.array([abs(getattr(r, key)[0]) for r in curve])
        best = int(np.nanargmax(vals)) if np.any(np.isfinite(vals)) else -1
        for k, r in enumerate(curve):
            flags = r.flags + (("argmax_T",) if k == best else ())
            records.append(SweepRecord(a, r.T, theta0, phi0, float(r.d_theta[0]), float(r.d_phi[0]), float(r.purity[0]), flags=flags))
    return SweepResult(records, *_summary(results))


def _summary(results: Sequence[PointResult]):
    qerr = max((r.quadrature_error for r in results), default=0.0)
    deltas = [r.mode_delta for r in results if r.mode_delta is not None]
    fails = sum(1 for r in results if any(f.startswith("failed") for f in r.flags))
    return qerr, (max(deltas) if deltas else None), fails


# --- maximization ----------------------------------------------------------------------


@dataclass
class MaximizeResult:
    records: list[SweepRecord]
    grid: list[SweepRecord]
    quadrature_error: float
    mode_delta: float | None
    failures: int
    evaluations: int

    def to_csv(self, fh=None) -> str:
        return write_csv(self.records, fh)

    def grid_csv(self, fh=None) -> str:
        return write_csv(self.grid, fh)


def _better(v: float, a: float, T: float, best: tuple[float, float, float]) -> bool:
    """Larger ``v`` wins; ties go to smaller ``a``, then smaller ``T``."""
    bv, ba, bT = best
    if math.isnan(v):
        return False
    if math.isnan(bv) or v > bv:
        return True
    return v == bv and (a, T) < (ba, bT)


def maximize(
    config: SimulationConfig,
    spec: SweepSpec | None = None,
    *,
    threads: int = 1,
    objective_fn: ObjectiveFn | None = None,
    keep_grid: bool = False,
) -> MaximizeResult:
    """Per target state, maximize ``|d_phi|`` (or ``|d_theta|``) over ``(a, T)``.

    Exhaustive search on the spec grid, then ``refine_rounds`` rounds of a
    3x3 stencil around the incumbent with the step halved each round
    (clipped to the box).  Each output row gives the coarse-grid argmax in
    ``a``/``T``, the refined argmax in ``argmax_a``/``argmax_T`` and the
    signed ``d_theta``, ``d_phi`` and purity at the refined point.
    """
    spec = spec or SweepSpec()
    vc = validate(config)
    fn = objective_fn or response_objective(vc.config)
    targets = spec.targets()
    rho0 = _stack(targets)
    key = "d_phi" if spec.objective == "phi" else "d_theta"
    cache: dict[tuple[float, float], PointResult] = {}

    def ensure(points):
        todo = [p for p in dict.fromkeys(points) if p not in cache]
        for p, r in zip(todo, _run_points(fn, todo, rho0, threads)):
            cache[p] = r

    a_vals = [float(a) for a in spec.a_values]
    T_vals = [float(t) for t in spec.T_values]
    grid_points = [(a, T) for a in a_vals for T in T_vals]
    ensure(grid_points)

    n_t = len(targets)
    coarse: list[tuple[float, float, float]] = []
    for i in range(n_t):
        best = (math.nan, math.inf, math.inf)
        for p in grid_points:
            v = abs(float(getattr(cache[p], key)[i]))
            if _better(v, p[0], p[1], best):
                best = (v, p[0], p[1])
        if math.isnan(best[0]):
            raise SweepError(f"all grid points failed or undefined for target {targets[i]}")
        coarse.append(best)

    da = (a_vals[1] - a_vals[0]) if len(a_vals) > 1 else 0.0
    dT = (T_vals[1] - T_vals[0]) if len(T_vals) > 1 else 0.0
    incumbent = list(coarse)
    for rnd in range(1, spec.refine_rounds + 1):
        sa, sT = da / 2**rnd, dT / 2**rnd
        stencils = []
        for _, a0, T0 in incumbent:
            cand = []
            for i in (-1, 0, 1):
                for k in (-1, 0, 1):
                    a = min(spec.a_max, max(spec.a_min, a0 + i * sa))
                    T = min(spec.T_max, max(spec.T_min, T0 + k * sT))
                    cand.append((a, T))
            stencils.append(cand)
        ensure([p for cand in stencils for p in cand])
        for i, cand in enumerate(stencils):
            best = incumbent[i]
            for p in cand:
                v = abs(float(getattr(cache[p], key)[i]))
                if _better(v, p[0], p[1], best):
                    best = (v, p[0], p[1])
            incumbent[i] = best

    records = []
    for i, (theta0, phi0) in enumerate(targets):
        _, ca, cT = coarse[i]
        _, ra, rT = incumbent[i]
        r = cache[(ra, rT)]
        flags = r.flags + (("refined",) if (ra, rT) != (ca, cT) else ())
        records.append(SweepRecord(ca, cT, theta0, phi0, float(r.d_theta[i]), float(r.d_phi[i]), float(r.purity[i]), ra, rT, flags))

    grid = []
    if keep_grid:
        for p in grid_points:
            r = cache[p]
            for i, (theta0, phi0) in enumerate(targets):
                grid.append(SweepRecord(p[0], p[1], theta0, phi0, float(r.d_theta[i]), float(r.d_phi[i]), float(r.purity[i]), flags=r.flags))
    ordered = [cache[p] for p in sorted(cache)]
    return MaximizeResult(records, grid, *_summary(ordered), evaluations=len(cache))
