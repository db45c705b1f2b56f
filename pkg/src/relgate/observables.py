"""Bloch-sphere quantities of a qubit state.

Basis is excited-first, so the north pole (``theta = 0``) is ``|e>``.  The
polar angle comes from the normalized Bloch vector, so loss of purity does
not show up as a change in ``theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

UNDEFINED_RADIUS = 1e-12
THETA_CONVENTION = "direction"  # theta from r/|r|, not from raw z


class UndefinedAngleError(ValueError):
    pass


@dataclass(frozen=True)
class BlochRecord:
    r: tuple[float, float, float]
    theta: float | None
    phi: float | None
    purity: float
    min_eigenvalue: float

    @property
    def radius(self) -> float:
        return math.sqrt(sum(c * c for c in self.r))


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    """``r`` with ``rho = (I + r.sigma)/2``; works on stacks ``(..., 2, 2)``."""
    rho = np.asarray(rho)
    return np.stack([
        2.0 * rho[..., 1, 0].real,
        2.0 * rho[..., 1, 0].imag,
        (rho[..., 0, 0] - rho[..., 1, 1]).real,
    ], axis=-1)


def _angles(r: np.ndarray) -> tuple[float | None, float | None]:
    radius = float(np.linalg.norm(r))
    if radius < UNDEFINED_RADIUS:
        return None, None
    theta = math.acos(min(1.0, max(-1.0, float(r[2]) / radius)))
    return theta, math.atan2(float(r[1]), float(r[0]))


def bloch(rho: np.ndarray) -> BlochRecord:
    """Bloch record of ``rho``; angles are ``None`` when ``|r| < 1e-12``."""
    r = bloch_vector(rho)
    theta, phi = _angles(r)
    herm = 0.5 * (rho + np.conj(rho).T)
    return BlochRecord(
        tuple(float(c) for c in r), theta, phi,
        purity=0.5 * (1.0 + float(r @ r)),
        min_eigenvalue=float(np.linalg.eigvalsh(herm).min()),
    )


def wrap_angle(x):
    """Map to ``(-pi, pi]``."""
    y = np.mod(np.asarray(x, float) + math.pi, 2.0 * math.pi) - math.pi
    y = np.where(y == -math.pi, math.pi, y)
    return float(y) if np.ndim(y) == 0 else y


def delta_angles(rho_initial: np.ndarray, rho_final: np.ndarray) -> tuple[float, float]:
    """``(theta_f - theta_i, wrap(phi_f - phi_i))``."""
    ti, pi_ = _angles(bloch_vector(rho_initial))
    tf, pf = _angles(bloch_vector(rho_final))
    if ti is None or tf is None:
        raise UndefinedAngleError("Bloch angles undefined for a maximally mixed state")
    return tf - ti, wrap_angle(pf - pi_)


def purity(rho: np.ndarray) -> float:
    """``Tr rho^2`` from the Bloch vector."""
    r = bloch_vector(rho)
    return 0.5 * (1.0 + float(r @ r))


def batch_angles(rho0: np.ndarray, rho: np.ndarray):
    """Vectorized ``(d_theta, d_phi, purity)`` for stacks of states.

    Entries are ``nan`` where an angle is undefined.  ``d_phi`` is also ``nan``
    when either state sits on a pole (``theta`` of 0 or pi within 1e-12),
    where the azimuth carries no information.
    """
    r0 = bloch_vector(rho0)
    r1 = bloch_vector(rho)
    n0 = np.linalg.norm(r0, axis=-1)
    n1 = np.linalg.norm(r1, axis=-1)
    ok = (n0 >= UNDEFINED_RADIUS) & (n1 >= UNDEFINED_RADIUS)
    with np.errstate(invalid="ignore", divide="ignore"):
        t0 = np.arccos(np.clip(r0[..., 2] / n0, -1.0, 1.0))
        t1 = np.arccos(np.clip(r1[..., 2] / n1, -1.0, 1.0))
    p0 = np.arctan2(r0[..., 1], r0[..., 0])
    p1 = np.arctan2(r1[..., 1], r1[..., 0])
    d_theta = np.where(ok, t1 - t0, np.nan)
    transverse = (np.hypot(r0[..., 0], r0[..., 1]) >= UNDEFINED_RADIUS * np.maximum(n0, 1.0)) & (
        np.hypot(r1[..., 0], r1[..., 1]) >= UNDEFINED_RADIUS * np.maximum(n1, 1.0)
    )
    d_phi = np.where(ok & transverse, wrap_angle(p1 - p0), np.nan)
    pur = 0.5 * (1.0 + np.sum(r1 * r1, axis=-1))
    return d_theta, d_phi, pur
