"""Uniformly accelerated probe worldline in the cavity frame.

The probe starts at rest at ``x = 0`` and follows
``t(tau) = sinh(a tau)/a``, ``x(tau) = (cosh(a tau) - 1)/a``.  All functions
accept scalars or arrays for ``t``.  Below ``SERIES_THRESHOLD`` the closed
forms are replaced by their Taylor series in ``a``.
"""

from __future__ import annotations

import math

import numpy as np

SERIES_THRESHOLD = 1e-6
SPEED_OF_LIGHT = 299_792_458.0  # m/s
STANDARD_G = 9.8  # m/s^2


def proper_time(a: float, t):
    """Probe proper time ``arcsinh(a t)/a`` elapsed at cavity time ``t``."""
    t = np.asarray(t, dtype=float)
    if a < SERIES_THRESHOLD:
        u = (a * t) ** 2
        return t * (1.0 - u / 6.0 + 3.0 * u * u / 40.0)
    return np.arcsinh(a * t) / a


def coordinate_time(a: float, tau):
    """Inverse of :func:`proper_time`."""
    tau = np.asarray(tau, dtype=float)
    if a < SERIES_THRESHOLD:
        u = (a * tau) ** 2
        return tau * (1.0 + u / 6.0 + u * u / 120.0)
    return np.sinh(a * tau) / a


def position(a: float, t):
    """Probe position ``(sqrt(1 + a^2 t^2) - 1)/a``."""
    t = np.asarray(t, dtype=float)
    if a < SERIES_THRESHOLD:
        u = (a * t) ** 2
        return 0.5 * a * t * t * (1.0 - u / 4.0 + u * u / 8.0)
    # rationalized form; no cancellation for small a t
    return a * t * t / (np.sqrt(1.0 + (a * t) ** 2) + 1.0)


def redshift(a: float, t):
    """``d tau / d t = 1/sqrt(1 + a^2 t^2)``."""
    t = np.asarray(t, dtype=float)
    return 1.0 / np.sqrt(1.0 + (a * t) ** 2)


def velocity(a: float, t):
    t = np.asarray(t, dtype=float)
    return a * t / np.sqrt(1.0 + (a * t) ** 2)


def crossing_time(a: float, L: float) -> float:
    """Probe proper time ``arccosh(aL + 1)/a`` at which it reaches ``x = L``.

    This is the flight time of the worldline parametrized by ``tau``.  The
    matching cavity time is :func:`exit_time`.  Returns ``inf`` for ``a == 0``.
    """
    if a == 0.0:
        return math.inf
    u = a * L
    if a < SERIES_THRESHOLD:
        return math.sqrt(2.0 * L / a) * (1.0 - u / 12.0 + 3.0 * u * u / 160.0)
    # arccosh(1 + u) without cancellation for small u
    return math.log1p(u + math.sqrt(u * (2.0 + u))) / a


def exit_time(a: float, L: float) -> float:
    """Cavity time at which the probe reaches ``x = L``: ``sqrt(u(2+u))/a``, ``u = aL``."""
    if a == 0.0:
        return math.inf
    u = a * L
    if a < SERIES_THRESHOLD:
        return math.sqrt(2.0 * L / a) * (1.0 + u / 4.0 - u * u / 32.0)
    return math.sqrt(u * (2.0 + u)) / a


def si_acceleration(a: float, omega: float) -> tuple[float, float]:
    """Convert a dimensionless acceleration to SI.

    ``omega`` is the reference gap in rad/s.  Returns ``(m/s^2, multiples of g)``.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    si = a * omega * SPEED_OF_LIGHT / math.pi
    return si, si / STANDARD_G
