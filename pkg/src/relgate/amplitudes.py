"""First- and second-order amplitudes of the probe/target/cavity system.

``I[d; s, j](T)`` is the time integral of one detector-mode coupling,

    I = int_0^T dt  xi_d(t) sin(k_j x_d(t)) / sqrt(w_j L) * exp(i(s W_d tau_d(t) + w_j t)),

and ``J[mu, nu; s1, s2, j](T)`` the time-ordered double integral over
``0 <= t2 <= t1 <= T`` of the product of the ``mu`` factor at ``t1`` (gap sign
carried by the label, creation-operator phase ``+w_j t1``) with the ``nu``
factor at ``t2`` (gap sign ``s1``, field phase ``s2 w_j t2``).  Labels are
``A`` (probe), ``B`` (target) and ``-A``/``-B`` for the gap-flipped versions.

The probe couples with its redshift ``d tau/dt`` as switching function while
it is inside the cavity; the target couples with unit switching on ``[0, T]``.

Quadrature: composite Gauss-Legendre on panels sized to the fastest local
oscillation of each mode.  The inner integral of ``J`` is the running
integral of the per-panel interpolating polynomial, so one pass over the nodes
produces every ``I`` and ``J`` of a mode.  Each mode is integrated at two
resolutions (panel halving) and refined until they agree.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, NamedTuple

import numpy as np
from numpy.polynomial import legendre

from . import _kernels, kinematics
from .model import NumericalError, SimulationConfig, ValidatedConfig, config_hash, validate

LABELS = ("A", "-A", "B", "-B")
SIGNS = (1, -1)


class QuadratureError(NumericalError):
    """Quadrature failed to converge; carries the best estimate and its error."""

    def __init__(self, what: str, estimate, error: float):
        self.estimate = estimate
        self.error = error
        super().__init__(f"{what}: quadrature did not converge (error estimate {error:.3e})")


class AmplitudeKey(NamedTuple):
    kind: str  # "I" or "J"
    mu: str
    nu: str | None
    s1: int
    s2: int | None
    mode: int

    def __str__(self) -> str:
        sign = lambda s: "+" if s > 0 else "-"  # noqa: E731
        if self.kind == "I":
            return f"I[{sign(self.s1)};{self.mu};{self.mode}]"
        return f"J[{sign(self.s1)},{sign(self.s2)};{self.mu},{self.nu};{self.mode}]"


def parse_label(label: str) -> tuple[int, int]:
    """``"A" -> (0, +1)``, ``"-B" -> (1, -1)``: detector index and gap sign."""
    try:
        return {"A": (0, 1), "-A": (0, -1), "B": (1, 1), "-B": (1, -1)}[label]
    except KeyError:
        raise ValueError(f"unknown detector label {label!r}") from None


def column(d: int, s: int, f: int) -> int:
    """Kernel index of ``g`` for detector ``d``, gap sign ``s``, field sign ``f``."""
    return 4 * d + (0 if s > 0 else 2) + (0 if f > 0 else 1)


def sinpi(r):
    """``sin(pi r)`` with exact zeros at integer ``r``."""
    r = np.asarray(r, dtype=float)
    out = np.sin(np.pi * np.fmod(r, 2.0))
    return np.where(r == np.round(r), 0.0, out)


def mode_fn(j: int, x, L: float):
    """Normalized cavity mode profile ``sin(j pi x / L) / sqrt(w_j L)``."""
    omega = j * math.pi / L
    return sinpi(j * np.asarray(x, dtype=float) / L) / math.sqrt(omega * L)


@lru_cache(maxsize=None)
def gauss_rule(q: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [-1, 1] and the running-integral matrix."""
    x, w = legendre.leggauss(q)
    V = legendre.legvander(x, q - 1)
    Q = np.empty((q, q))
    for n in range(q):
        c = np.zeros(q)
        c[n] = 1.0
        Q[:, n] = legendre.legval(x, legendre.legint(c, lbnd=-1.0))
    S = np.linalg.solve(V.T, Q.T).T
    for arr in (x, w, S):
        arr.setflags(write=False)
    return x, w, S


def _panel_counts(segments, omega: float, gap_max: float, ppp: int) -> list[int]:
    freq = 2.0 * (gap_max + 2.0 * omega)
    return [max(1, math.ceil(ppp * (b - a) * freq / (2.0 * math.pi))) for a, b in segments]


def _nodes(segments, counts, q):
    x, _, _ = gauss_rule(q)
    mids, halves = [], []
    for (a, b), n in zip(segments, counts):
        edges = np.linspace(a, b, n + 1)
        mids.append(0.5 * (edges[:-1] + edges[1:]))
        halves.append(0.5 * (edges[1:] - edges[:-1]))
    mid = np.concatenate(mids)
    half = np.concatenate(halves)
    return mid[:, None] + half[:, None] * x[None, :], half


@dataclass(frozen=True)
class _Setup:
    L: float
    a: float
    gap_a: float
    gap_b: float
    x_b: float
    T: float
    window: float
    q: int
    ppp: int
    rtol: float
    atol: float
    max_refine: int

    @classmethod
    def from_config(cls, vc: ValidatedConfig) -> "_Setup":
        c = vc.config
        n = c.numerics
        return cls(
            L=c.cavity.length, a=c.probe.a, gap_a=c.probe.gap, gap_b=c.target.gap,
            x_b=c.target.x, T=c.probe.T, window=vc.probe_window, q=n.gauss_order,
            ppp=n.panels_per_period, rtol=n.rtol, atol=n.atol, max_refine=n.max_refine,
        )

    @property
    def segments(self):
        if self.window < self.T:
            segs = [(0.0, self.window), (self.window, self.T)]
        else:
            segs = [(0.0, self.T)]
        return [(a, b) for a, b in segs if b > a]


def _integrate_mode(setup: _Setup, j: int, counts, kernel):
    omega = j * math.pi / setup.L
    t, half = _nodes(setup.segments, counts, setup.q)
    _, w, S = gauss_rule(setup.q)
    norm = 1.0 / math.sqrt(omega * setup.L)
    inside = t <= setup.window
    amp = np.empty((2,) + t.shape)
    phase = np.empty((2,) + t.shape)
    amp[0] = np.where(inside, kinematics.redshift(setup.a, t) * sinpi(j * kinematics.position(setup.a, t) / setup.L), 0.0) * norm
    phase[0] = setup.gap_a * kinematics.proper_time(setup.a, t)
    amp[1] = float(sinpi(j * setup.x_b / setup.L)) * norm
    phase[1] = setup.gap_b * t
    return kernel(t, half, w, S, amp, phase, omega)


def integrate_mode(setup: _Setup, j: int, kernel=None):
    """Return ``(totals[8], K[4, 8], error_estimate, panels)`` for mode ``j``."""
    kernel = kernel or _kernels.mode_integrals
    if not setup.segments:
        return np.zeros(8, complex), np.zeros((4, 8), complex), 0.0, 0
    omega = j * math.pi / setup.L
    target = _panel_counts(setup.segments, omega, max(setup.gap_a, setup.gap_b), setup.ppp)
    coarse = [max(1, (n + 1) // 2) for n in target]
    tot_c, K_c = _integrate_mode(setup, j, coarse, kernel)
    err = math.inf
    for _ in range(setup.max_refine):
        fine = [2 * n for n in coarse]
        tot_f, K_f = _integrate_mode(setup, j, fine, kernel)
        err = max(np.max(np.abs(tot_f - tot_c)), np.max(np.abs(K_f - K_c)))
        scale = max(np.max(np.abs(tot_f)), np.max(np.abs(K_f)))
        if err <= setup.atol + setup.rtol * scale:
            return tot_f, K_f, float(err), sum(fine)
        coarse, tot_c, K_c = fine, tot_f, K_f
    raise QuadratureError(f"mode {j}", (tot_c, K_c), float(err))


def _prepare(config, T):
    if isinstance(config, ValidatedConfig):
        vc = config
    else:
        vc = validate(config)
    if T is not None and T != vc.config.probe.T:
        vc = validate(vc.config.replace(**{"probe.T": float(T)}))
    return vc


def compute_I(config: SimulationConfig | ValidatedConfig, label: str, s: int, j: int, T: float | None = None) -> complex:
    """Single first-order amplitude ``I[label; s, j](T)``."""
    vc = _prepare(config, T)
    d, sign = parse_label(label)
    try:
        totals, _, _, _ = integrate_mode(_Setup.from_config(vc), j)
    except QuadratureError as exc:
        raise QuadratureError(str(AmplitudeKey("I", label, None, s, None, j)), exc.estimate, exc.error) from None
    return complex(totals[column(d, sign * s, 1)])


def compute_J(config: SimulationConfig | ValidatedConfig, mu: str, nu: str, s1: int, s2: int, j: int, T: float | None = None) -> complex:
    """Single second-order amplitude ``J[mu, nu; s1, s2, j](T)``."""
    vc = _prepare(config, T)
    d1, g1 = parse_label(mu)
    d2, g2 = parse_label(nu)
    try:
        _, K, _, _ = integrate_mode(_Setup.from_config(vc), j)
    except QuadratureError as exc:
        raise QuadratureError(str(AmplitudeKey("J", mu, nu, s1, s2, j)), exc.estimate, exc.error) from None
    return complex(K[column(d1, g1, 1) // 2, column(d2, s1 * g2, s2)])


@dataclass(frozen=True, eq=False)
class AmplitudeTable:
    """All ``I`` and ``J`` values for modes ``1..N`` at one flight time.

    Values are stored per mode as the 8 single integrals and the 4x8 block of
    ordered double integrals; keyed access goes through :meth:`I`, :meth:`J`
    and :meth:`get`.  Conjugates are formed by callers.
    """

    T: float
    totals: np.ndarray  # (N, 8)
    K: np.ndarray  # (N, 4, 8)
    errors: np.ndarray  # (N,)
    panels: np.ndarray  # (N,)
    config_hash: str
    backend: str

    @property
    def n_modes(self) -> int:
        return self.totals.shape[0]

    def I(self, label: str, s: int, j: int | None = None):  # noqa: E743
        d, sign = parse_label(label)
        col = self.totals[:, column(d, sign * s, 1)]
        return col if j is None else complex(col[j - 1])

    def J(self, mu: str, nu: str, s1: int, s2: int, j: int | None = None):
        d1, g1 = parse_label(mu)
        d2, g2 = parse_label(nu)
        col = self.K[:, column(d1, g1, 1) // 2, column(d2, s1 * g2, s2)]
        return col if j is None else complex(col[j - 1])

    def get(self, key: AmplitudeKey):
        if key.kind == "I":
            return self.I(key.mu, key.s1, key.mode)
        return self.J(key.mu, key.nu, key.s1, key.s2, key.mode)

    def keys(self) -> list[AmplitudeKey]:
        out = []
        for j in range(1, self.n_modes + 1):
            out += [AmplitudeKey("I", mu, None, s, None, j) for mu in LABELS for s in SIGNS]
            out += [
                AmplitudeKey("J", mu, nu, s1, s2, j)
                for mu in LABELS for nu in ("A", "B") for s1 in SIGNS for s2 in SIGNS
            ]
        return out

    def as_dict(self) -> dict[AmplitudeKey, complex]:
        return {k: self.get(k) for k in self.keys()}

    @property
    def max_error(self) -> float:
        return float(self.errors.max()) if self.errors.size else 0.0

    def to_csv(self, fh=None) -> str:
        """Write ``kind,mu,nu,s1,s2,mode,re,im`` rows; returns the text."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["kind", "mu", "nu", "s1", "s2", "mode", "re", "im"])
        for k in self.keys():
            v = self.get(k)
            writer.writerow([k.kind, k.mu, k.nu or "", k.s1, "" if k.s2 is None else k.s2, k.mode, repr(v.real), repr(v.imag)])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def build_table(config: SimulationConfig | ValidatedConfig, T: float | None = None, modes: Iterable[int] | None = None, kernel=None) -> AmplitudeTable:
    """Evaluate every amplitude for modes ``1..N`` (or the given ``modes``)."""
    vc = _prepare(config, T)
    setup = _Setup.from_config(vc)
    modes = list(range(1, vc.config.cavity.modes + 1)) if modes is None else list(modes)
    totals = np.zeros((len(modes), 8), complex)
    K = np.zeros((len(modes), 4, 8), complex)
    errors = np.zeros(len(modes))
    panels = np.zeros(len(modes), dtype=int)
    for i, j in enumerate(modes):
        try:
            totals[i], K[i], errors[i], panels[i] = integrate_mode(setup, j, kernel)
        except QuadratureError as exc:
            raise QuadratureError(f"amplitude table, mode {j}", exc.estimate, exc.error) from None
    return AmplitudeTable(setup.T, totals, K, errors, panels, config_hash(vc.config), _kernels.BACKEND if kernel is None else getattr(kernel, "__name__", "custom"))


def extend_table(table: AmplitudeTable, config: SimulationConfig | ValidatedConfig, n_modes: int) -> AmplitudeTable:
    """Append modes ``table.n_modes + 1 .. n_modes``; existing values are kept."""
    if n_modes <= table.n_modes:
        return table
    extra = build_table(config, table.T, range(table.n_modes + 1, n_modes + 1))
    return AmplitudeTable(
        table.T,
        np.concatenate([table.totals, extra.totals]),
        np.concatenate([table.K, extra.K]),
        np.concatenate([table.errors, extra.errors]),
        np.concatenate([table.panels, extra.panels]),
        table.config_hash,
        table.backend,
    )


# --- closed forms for stationary detectors ----------------------------------------


def _mp_segment(nu, T):
    import mpmath as mp

    return T if nu == 0 else (mp.expj(nu * T) - 1) / (1j * nu)


def stationary_I_closed(phase_rate: float, profile: float, T: float, dps: int = 40) -> complex:
    """``profile * int_0^T exp(i phase_rate t) dt`` in extended precision."""
    import mpmath as mp

    with mp.workdps(dps):
        return complex(mp.mpf(profile) * _mp_segment(mp.mpf(phase_rate), mp.mpf(T)))


def stationary_J_closed(rate1: float, rate2: float, profile1: float, profile2: float, T: float, dps: int = 40) -> complex:
    """``p1 p2 int_0^T dt1 e^{i rate1 t1} int_0^{t1} dt2 e^{i rate2 t2}`` exactly.

    Uses the iterated antiderivatives, with the resonant (zero-rate) cases
    handled separately.
    """
    import mpmath as mp

    with mp.workdps(dps):
        r1, r2, T_ = mp.mpf(rate1), mp.mpf(rate2), mp.mpf(T)
        if r2 != 0:
            val = (_mp_segment(r1 + r2, T_) - _mp_segment(r1, T_)) / (1j * r2)
        elif r1 != 0:
            # int_0^T t e^{i r1 t} dt
            val = T_ * mp.expj(r1 * T_) / (1j * r1) - _mp_segment(r1, T_) / (1j * r1)
        else:
            val = T_ * T_ / 2
        return complex(mp.mpf(profile1) * mp.mpf(profile2) * val)
