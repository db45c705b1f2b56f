"""Hot quadrature kernel for one cavity mode, in numba and plain numpy.

The backend is chosen once at import time from ``RELGATE_BACKEND``
(``numba`` or ``numpy``; default ``numba``).  If numba cannot be imported the
numpy path is used.  Both paths compute the same quantities; they agree to
rounding but are not bit-identical to each other.

Layout shared by both kernels
-----------------------------
Nodes are Gauss-Legendre points on ``P`` panels: ``t[p, k]`` with panel
half-lengths ``h[p]`` and reference weights ``w[k]``.  ``S[k, m]`` integrates
the Lagrange basis polynomial ``m`` from -1 to node ``k``, so
``h[p] * S @ f[p]`` is the running integral of ``f`` inside panel ``p``.

For detector ``d`` (0 = probe, 1 = target) the integrand factors are
``amp[d] = xi_d sin(k x_d) / sqrt(omega L)`` and ``phase[d] = Omega_d tau_d``.
Index ``c = 4*d + 2*si + fi`` enumerates
``g_c(t) = amp_d exp(i(s Omega_d tau_d + f omega t))`` with ``s = +1`` for
``si = 0`` and ``f = +1`` (creation operator) for ``fi = 0``.

Outputs: ``total[c] = int_0^T g_c`` and, for the four rows with ``f = +1``,
``K[r, c] = int_0^T dt1 g_{row r}(t1) int_0^{t1} dt2 g_c(t2)``.
"""

from __future__ import annotations

import os

import numpy as np

ROWS = np.array([0, 2, 4, 6])


def mode_integrals_numpy(t, h, w, S, amp, phase, omega):
    P, q = t.shape
    ew = np.exp(1j * omega * t)
    g = np.empty((8, P, q), dtype=np.complex128)
    for d in range(2):
        eo = np.exp(1j * phase[d])
        g[4 * d + 0] = amp[d] * eo * ew
        g[4 * d + 1] = amp[d] * eo * ew.conj()
        g[4 * d + 2] = amp[d] * eo.conj() * ew
        g[4 * d + 3] = amp[d] * (eo * ew).conj()
    hw = h[:, None] * w[None, :]
    panel = (g * hw).sum(axis=2)
    prefix = np.zeros((8, P), dtype=np.complex128)
    np.cumsum(panel[:, :-1], axis=1, out=prefix[:, 1:])
    G = prefix[:, :, None] + h[None, :, None] * np.einsum("cpm,km->cpk", g, S)
    total = prefix[:, -1] + panel[:, -1]
    rows = (g[ROWS] * hw).reshape(4, P * q)
    K = rows @ G.reshape(8, P * q).T
    return total, K


def _mode_integrals_loops(t, h, w, S, amp, phase, omega):
    P, q = t.shape
    g = np.empty((8, q), dtype=np.complex128)
    G = np.empty((8, q), dtype=np.complex128)
    acc = np.zeros(8, dtype=np.complex128)
    K = np.zeros((4, 8), dtype=np.complex128)
    for p in range(P):
        hp = h[p]
        for k in range(q):
            ew = np.exp(1j * omega * t[p, k])
            for d in range(2):
                eo = np.exp(1j * phase[d, p, k])
                base = amp[d, p, k]
                g[4 * d + 0, k] = base * eo * ew
                g[4 * d + 1, k] = base * eo * np.conj(ew)
                g[4 * d + 2, k] = base * np.conj(eo) * ew
                g[4 * d + 3, k] = base * np.conj(eo * ew)
        for c in range(8):
            for k in range(q):
                s = 0j
                for m in range(q):
                    s += S[k, m] * g[c, m]
                G[c, k] = acc[c] + hp * s
        for r in range(4):
            row = 2 * r
            for c in range(8):
                s = 0j
                for k in range(q):
                    s += w[k] * g[row, k] * G[c, k]
                K[r, c] += hp * s
        for c in range(8):
            s = 0j
            for k in range(q):
                s += w[k] * g[c, k]
            acc[c] += hp * s
    return acc.copy(), K


mode_integrals_python = _mode_integrals_loops

try:  # pragma: no cover - exercised implicitly depending on environment
    import numba

    mode_integrals_numba = numba.njit(cache=True, nogil=True)(_mode_integrals_loops)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    mode_integrals_numba = None
    HAVE_NUMBA = False


def _select(name: str):
    name = name.strip().lower()
    if name == "numpy" or not HAVE_NUMBA:
        return "numpy", mode_integrals_numpy
    if name == "numba":
        return "numba", mode_integrals_numba
    raise ValueError(f"RELGATE_BACKEND must be 'numba' or 'numpy', got {name!r}")


BACKEND, mode_integrals = _select(os.environ.get("RELGATE_BACKEND", "numba"))
