"""Second-order Dyson expansion and the reduced state of the target qubit.

The interaction Hamiltonian is a sum of elementary pieces
``lambda_d g(t) sigma_d^s a_j^f`` (detector ``d``, ladder sign ``s``, field
operator ``f``: ``c`` for creation, ``a`` for annihilation).  Operator words
for ``U1 rho0``, ``U2 rho0``, ``rho0 U2^dag`` and ``U1 rho0 U1^dag`` are
generated from these pieces rather than written out by hand; each generated
term carries its amplitude keys so it can be compared with printed
expressions (see :mod:`relgate.fixtures`).

Tokens: ``"A+"``, ``"A-"``, ``"B+"``, ``"B-"`` for atomic ladder operators,
``"c"``/``"a"`` for the field operators of the term's mode.  Amplitude keys
inside terms use ``mode = 0`` to mean "the term's own mode".

Tracing uses ``Tr(L rho R) = <R L>`` for the field and the probe; the target
keeps ``L_B rho_B R_B``.  Only equal-mode products survive the field trace
(mode 1 is coherent, the others are in vacuum), so every term refers to a
single mode.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np

from . import amplitudes as amp
from .amplitudes import AmplitudeKey, AmplitudeTable
from .model import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    NumericalError,
    SimulationConfig,
    ValidatedConfig,
    probe_state,
    target_state,
    validate,
)

log = logging.getLogger(__name__)

PIECES = tuple((d, s, f) for d in "AB" for s in (1, -1) for f in (1, -1))
_DAGGER = {"A+": "A-", "A-": "A+", "B+": "B-", "B-": "B+", "c": "a", "a": "c"}


class ModeConvergenceError(NumericalError):
    def __init__(self, modes: int, delta: float):
        self.modes = modes
        self.delta = delta
        super().__init__(f"vacuum-mode sum not converged at {modes} modes (change {delta:.3e})")


@dataclass(frozen=True)
class AmpFactor:
    key: AmplitudeKey
    conj: bool = False

    def __str__(self) -> str:
        text = str(self.key).replace(";0]", ";j]")
        return text.replace("[", "*[", 1) if self.conj else text


@dataclass(frozen=True)
class OperatorTerm:
    """One generated contribution ``prefactor * prod(lambda) * prod(factors) * left rho0 right``."""

    family: str  # "U1", "U2", "U2dag", "U1U1"
    prefactor: complex
    couplings: tuple[str, ...]
    factors: tuple[AmpFactor, ...]
    left: tuple[str, ...]
    right: tuple[str, ...]

    @property
    def placement(self) -> str:
        if self.left and self.right:
            return "sandwich"
        return "left" if self.left else "right"

    def word(self, system: str, side: str) -> tuple[str, ...]:
        ops = self.left if side == "left" else self.right
        if system == "f":
            return tuple(t for t in ops if t in ("c", "a"))
        return tuple(t for t in ops if t[0] == system)

    def traced_word(self, system: str) -> tuple[str, ...]:
        """Word whose expectation value results from tracing ``system``."""
        return self.word(system, "right") + self.word(system, "left")

    def __str__(self) -> str:
        coeff = " ".join(str(f) for f in self.factors)
        lam = "".join(f"l{c}" for c in self.couplings)
        return f"{self.family}: {self.prefactor} {lam} {coeff} [{' '.join(self.left)}] rho0 [{' '.join(self.right)}]"


def _label(d: str, s: int) -> str:
    return d if s > 0 else "-" + d


def _tokens(piece) -> tuple[str, str]:
    d, s, f = piece
    return (d + ("+" if s > 0 else "-"), "c" if f > 0 else "a")


def dagger(word: Iterable[str]) -> tuple[str, ...]:
    return tuple(_DAGGER[t] for t in reversed(tuple(word)))


def first_order_factor(piece) -> AmpFactor:
    d, s, f = piece
    if f > 0:
        return AmpFactor(AmplitudeKey("I", d, None, s, None, 0))
    return AmpFactor(AmplitudeKey("I", d, None, -s, None, 0), True)


def second_order_factor(p1, p2) -> AmpFactor:
    """Ordered double integral of piece ``p1`` at ``t1`` and ``p2`` at ``t2``."""
    (d1, s1, f1), (d2, s2, f2) = p1, p2
    if f1 > 0:
        return AmpFactor(AmplitudeKey("J", _label(d1, s1), d2, s2, f2, 0))
    return AmpFactor(AmplitudeKey("J", _label(d1, -s1), d2, -s2, -f2, 0), True)


def _conj(f: AmpFactor) -> AmpFactor:
    return AmpFactor(f.key, not f.conj)


@lru_cache(maxsize=None)
def expand_terms(order: int) -> tuple[OperatorTerm, ...]:
    """Generate the operator terms of the given perturbative order.

    ``order=1`` gives the eight pieces of ``U1`` (acting on ``rho0`` from the
    left).  ``order=2`` gives the ``U2 rho0``, ``rho0 U2^dag`` and
    ``U1 rho0 U1^dag`` families with ``(sigma^pm)^2 = 0`` terms removed.
    """
    if order == 1:
        return tuple(
            OperatorTerm("U1", -1j, (p[0],), (first_order_factor(p),), _tokens(p), ())
            for p in PIECES
        )
    if order != 2:
        raise ValueError("order must be 1 or 2")
    u2, u2dag, sandwich = [], [], []
    for p1 in PIECES:
        for p2 in PIECES:
            if p1[0] == p2[0] and p1[1] == p2[1]:
                continue  # (sigma^pm)^2 = 0
            fac = second_order_factor(p1, p2)
            word = _tokens(p1) + _tokens(p2)
            lam = (p1[0], p2[0])
            u2.append(OperatorTerm("U2", -1.0 + 0j, lam, (fac,), word, ()))
            u2dag.append(OperatorTerm("U2dag", -1.0 + 0j, lam, (_conj(fac),), (), dagger(word)))
    for p1 in PIECES:
        for p2 in PIECES:
            sandwich.append(
                OperatorTerm(
                    "U1U1", 1.0 + 0j, (p1[0], p2[0]),
                    (first_order_factor(p1), _conj(first_order_factor(p2))),
                    _tokens(p1), dagger(_tokens(p2)),
                )
            )
    return tuple(u2 + u2dag + sandwich)


# --- expectations --------------------------------------------------------------------


def field_expectation(word: tuple[str, ...], j: int, alpha: complex) -> complex:
    """``<word>`` in mode ``j``: coherent ``|alpha>`` for ``j == 1``, vacuum otherwise."""
    if len(word) > 2:
        raise ValueError("field words longer than 2 are unsupported")
    al = complex(alpha) if j == 1 else 0j
    table = {
        (): 1.0 + 0j,
        ("a",): al,
        ("c",): al.conjugate(),
        ("c", "a"): abs(al) ** 2 + 0j,
        ("a", "c"): 1.0 + abs(al) ** 2 + 0j,
        ("a", "a"): al * al,
        ("c", "c"): al.conjugate() ** 2,
    }
    return table[tuple(word)]


_MATS = {"+": SIGMA_PLUS, "-": SIGMA_MINUS}


def atomic_matrix(word: Iterable[str]) -> np.ndarray:
    out = np.eye(2, dtype=complex)
    for tok in word:
        out = out @ _MATS[tok[1]]
    return out


def probe_expectation(word: tuple[str, ...], rho_a: np.ndarray) -> complex:
    """``Tr(word rho_a)``; e.g. ``("A+",) -> gamma``."""
    return complex(np.trace(atomic_matrix(word) @ rho_a))


# --- evaluation ------------------------------------------------------------------------


def _factor_series(table: AmplitudeTable, f: AmpFactor) -> np.ndarray:
    k = f.key
    vals = table.I(k.mu, k.s1) if k.kind == "I" else table.J(k.mu, k.nu, k.s1, k.s2)
    return vals.conj() if f.conj else vals


def _couplings(vc: ValidatedConfig) -> dict[str, float]:
    return {"A": vc.config.probe.coupling, "B": vc.config.target.coupling}


def term_series(term: OperatorTerm, table: AmplitudeTable, vc: ValidatedConfig, rho_a: np.ndarray) -> np.ndarray:
    """Per-mode scalar multiplying ``L_B rho_B R_B`` for one term."""
    lam = _couplings(vc)
    alpha = vc.config.field.alpha
    n = table.n_modes
    scalar = term.prefactor * probe_expectation(term.traced_word("A"), rho_a)
    for d in term.couplings:
        scalar *= lam[d]
    if scalar == 0:
        return np.zeros(n, complex)
    fw = term.traced_word("f")
    fexp = np.full(n, field_expectation(fw, 2, alpha))
    fexp[0] = field_expectation(fw, 1, alpha)
    series = scalar * fexp
    for f in term.factors:
        series = series * _factor_series(table, f)
    return series


@dataclass
class TracedMap:
    """``rho_B -> sum_k c_k L_k rho_B R_k`` with per-mode coefficient arrays."""

    entries: dict[tuple[tuple[str, ...], tuple[str, ...]], np.ndarray]
    n_modes: int

    def coefficients(self, modes: int | None = None) -> list[tuple[np.ndarray, np.ndarray, complex]]:
        n = self.n_modes if modes is None else modes
        return [
            (atomic_matrix(L), atomic_matrix(R), complex(np.sum(c[:n])))
            for (L, R), c in self.entries.items()
        ]

    def apply(self, rho: np.ndarray, modes: int | None = None) -> np.ndarray:
        """Apply to one ``(2, 2)`` state or a stack ``(..., 2, 2)``."""
        out = np.zeros(np.shape(rho), complex)
        for Lm, Rm, c in self.coefficients(modes):
            if c != 0:
                out = out + c * (Lm @ rho @ Rm)
        return out


def traced_map(terms: Iterable[OperatorTerm], table: AmplitudeTable, vc: ValidatedConfig, rho_a: np.ndarray) -> TracedMap:
    entries: dict = {}
    for term in terms:
        series = term_series(term, table, vc, rho_a)
        if not np.any(series):
            continue
        key = (term.word("B", "left"), term.word("B", "right"))
        entries[key] = entries[key] + series if key in entries else series
    return TracedMap(entries, table.n_modes)


def first_order_operator(vc: ValidatedConfig, table: AmplitudeTable, rho_a: np.ndarray) -> np.ndarray:
    """Target operator ``M`` with ``Tr_{A,f}(U1 rho0) = -i M rho_B``."""
    M = np.zeros((2, 2), complex)
    for term in expand_terms(1):
        c = complex(np.sum(term_series(term, table, vc, rho_a))) / term.prefactor
        M += c * atomic_matrix(term.word("B", "left"))
    return M


def pauli_vector(op: np.ndarray) -> np.ndarray:
    """Real Pauli components of the Hermitian part of ``op``."""
    return np.array([
        0.5 * (op[0, 1] + op[1, 0]).real,
        0.5 * (op[1, 0] - op[0, 1]).imag,
        0.5 * (op[0, 0] - op[1, 1]).real,
    ])


def commutator_correction(M: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``-i [H, rho]`` for the Hermitian part ``H`` of ``M``, built from Pauli
    vectors so the result is exactly traceless and Hermitian."""
    m = pauli_vector(M)
    r = pauli_vector(rho) * 2.0
    return _traceless_from_bloch(2.0 * np.cross(m, r))


def _traceless_from_bloch(dr: np.ndarray) -> np.ndarray:
    """``dr . sigma / 2`` for one vector or a stack ``(..., 3)``; diagonal is exactly ``(+z, -z)/2``."""
    dr = np.asarray(dr, dtype=float)
    out = np.zeros(dr.shape[:-1] + (2, 2), complex)
    out[..., 0, 0] = 0.5 * dr[..., 2]
    out[..., 1, 1] = -out[..., 0, 0]
    out[..., 0, 1] = 0.5 * (dr[..., 0] - 1j * dr[..., 1])
    out[..., 1, 0] = 0.5 * (dr[..., 0] + 1j * dr[..., 1])
    return out


def _rho_a(vc: ValidatedConfig) -> np.ndarray:
    pr = vc.config.probe
    return probe_state(complex(pr.p_re, pr.p_im))


def _rho_b(vc: ValidatedConfig) -> np.ndarray:
    tg = vc.config.target
    return target_state(tg.theta, tg.phi)


def reduced_first_order(config, table: AmplitudeTable, rho_b: np.ndarray | None = None) -> np.ndarray:
    """First-order correction to the target state (a pure commutator)."""
    vc = validate(config)
    M = first_order_operator(vc, table, _rho_a(vc))
    return commutator_correction(M, _rho_b(vc) if rho_b is None else rho_b)


@dataclass
class SecondOrderResult:
    rho2: np.ndarray
    modes_used: int
    mode_delta: float | None
    traced: TracedMap


def reduced_second_order(
    config, table: AmplitudeTable, rho_b: np.ndarray | None = None, check_modes: bool | None = None
) -> SecondOrderResult:
    """Second-order correction to the target state.

    With ``check_modes`` the vacuum-mode sum is compared against twice the
    cutoff, doubling until the change drops below ``numerics.mode_tol``.
    """
    vc = validate(config)
    num = vc.config.numerics
    check = num.mode_check if check_modes is None else check_modes
    rho_b = _rho_b(vc) if rho_b is None else rho_b
    rho_a = _rho_a(vc)
    terms = expand_terms(2)
    n = table.n_modes
    if not check:
        tm = traced_map(terms, table, vc, rho_a)
        return SecondOrderResult(tm.apply(rho_b), n, None, tm)
    delta = math.inf
    while 2 * n <= num.max_modes:
        table = amp.extend_table(table, vc, 2 * n)
        tm = traced_map(terms, table, vc, rho_a)
        coarse, fine = tm.apply(rho_b, n), tm.apply(rho_b, 2 * n)
        delta = float(np.max(np.abs(fine - coarse)))
        if delta <= num.mode_tol:
            return SecondOrderResult(coarse, n, delta, tm)
        n *= 2
    raise ModeConvergenceError(n, delta)


@dataclass
class ReducedState:
    rho0: np.ndarray
    rho1: np.ndarray
    rho2: np.ndarray
    rho: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def assemble(config: SimulationConfig | ValidatedConfig, check_modes: bool | None = None, table: AmplitudeTable | None = None) -> ReducedState:
    """Target state to second order, ``rho0 + rho1 + rho2``, Hermitized."""
    vc = validate(config)
    if table is None:
        table = amp.build_table(vc)
    rho0 = _rho_b(vc)
    rho_a = _rho_a(vc)
    M = first_order_operator(vc, table, rho_a)
    rho1 = commutator_correction(M, rho0)
    second = reduced_second_order(vc, table, rho0, check_modes)
    raw = rho0 + rho1 + second.rho2
    herm_defect = float(np.max(np.abs(raw - raw.conj().T)))
    rho = 0.5 * (raw + raw.conj().T)
    min_eig = float(np.linalg.eigvalsh(rho).min())
    lam = max(vc.config.probe.coupling, vc.config.target.coupling)
    budget = -10.0 * lam**3
    if min_eig < budget:
        log.warning("negative eigenvalue %.3e below perturbative budget %.3e", min_eig, budget)
    diagnostics = {
        "trace_rho1": complex(np.trace(rho1)),
        "trace_rho2": complex(np.trace(second.rho2)),
        "hermiticity_defect": herm_defect,
        "first_order_antihermitian": float(np.max(np.abs(M - M.conj().T))),
        "min_eigenvalue": min_eig,
        "eigenvalue_budget_ok": min_eig >= budget,
        "modes_used": second.modes_used,
        "mode_delta": second.mode_delta,
        "quadrature_error": table.max_error,
    }
    return ReducedState(rho0, rho1, second.rho2, rho, diagnostics)


@dataclass
class TargetResponse:
    """Precomputed linear response of the target to one probe pass.

    Shared across many initial target states (sweeps).
    """

    M: np.ndarray
    traced: TracedMap

    @classmethod
    def build(cls, config, table: AmplitudeTable | None = None) -> "TargetResponse":
        vc = validate(config)
        table = amp.build_table(vc) if table is None else table
        rho_a = _rho_a(vc)
        return cls(first_order_operator(vc, table, rho_a), traced_map(expand_terms(2), table, vc, rho_a))

    def evolve(self, rho0: np.ndarray) -> np.ndarray:
        """Hermitized second-order final states for a stack ``(n, 2, 2)``."""
        rho0 = np.asarray(rho0)
        m = pauli_vector(self.M)
        r = np.stack([
            (rho0[..., 0, 1] + rho0[..., 1, 0]).real,
            (rho0[..., 1, 0] - rho0[..., 0, 1]).imag,
            (rho0[..., 0, 0] - rho0[..., 1, 1]).real,
        ], axis=-1)
        rho1 = _traceless_from_bloch(2.0 * np.cross(m, r))
        raw = rho0 + rho1 + self.traced.apply(rho0)
        return 0.5 * (raw + np.conj(np.swapaxes(raw, -1, -2)))


def required_keys(order: int = 2) -> list[AmplitudeKey]:
    """Distinct amplitude keys referenced by the generated terms (mode 0 = any)."""
    seen = dict.fromkeys(f.key for t in expand_terms(order) for f in t.factors)
    return list(seen)


TERM_COLUMNS = (
    "family", "prefactor", "couplings", "factors", "left", "right",
    "probe_word", "probe_expectation", "field_word", "field_mode1", "field_vacuum", "target_left", "target_right",
)


def terms_csv(config, fh=None) -> str:
    """Generated term list with probe and field expectations at ``config``."""
    import csv
    import io

    vc = validate(config)
    rho_a = _rho_a(vc)
    alpha = vc.config.field.alpha
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TERM_COLUMNS)
    for order in (1, 2):
        for t in expand_terms(order):
            fw = t.traced_word("f")
            w.writerow([
                t.family, repr(t.prefactor), "".join(t.couplings), " ".join(str(f) for f in t.factors),
                " ".join(t.left), " ".join(t.right), " ".join(t.traced_word("A")),
                repr(probe_expectation(t.traced_word("A"), rho_a)), " ".join(fw),
                repr(field_expectation(fw, 1, alpha)), repr(field_expectation(fw, 2, alpha)),
                " ".join(t.word("B", "left")), " ".join(t.word("B", "right")),
            ])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text
