"""Configuration schema, validation and qubit-state conventions.

Basis convention used throughout the package: the first basis vector is the
excited state ``|e>``, the second the ground state ``|g>``, and
``sigma_plus = |e><g|``.  The north pole of the Bloch sphere is ``|e>``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass
from dataclasses import field as _field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import kinematics

SIGMA_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
SIGMA_MINUS = SIGMA_PLUS.T.copy()
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

COHERENT_MODE = 1


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending schema key."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class NumericalError(RuntimeError):
    """Base class for numerical non-convergence."""


@dataclass(frozen=True)
class CavityConfig:
    length: float = math.pi
    modes: int = 20


@dataclass(frozen=True)
class ProbeConfig:
    a: float = 1.0
    T: float = 1.0
    gap: float = 1.0
    coupling: float = 0.01
    p_re: float = 0.0
    p_im: float = 1.0 / math.pi
    # When true the probe must still be inside the cavity at t = T.
    full_crossing: bool = True


@dataclass(frozen=True)
class TargetConfig:
    x: float = math.pi / 2
    gap: float = 1.0
    coupling: float = 0.01
    theta: float = math.pi / 2
    phi: float = 0.0


@dataclass(frozen=True)
class FieldConfig:
    alpha_re: float = 1.0
    alpha_im: float = 0.0

    @property
    def alpha(self) -> complex:
        return complex(self.alpha_re, self.alpha_im)


@dataclass(frozen=True)
class NumericsConfig:
    rtol: float = 1e-12
    atol: float = 1e-14
    panels_per_period: int = 8
    gauss_order: int = 12
    max_refine: int = 6
    mode_check: bool = True
    mode_tol: float = 1e-6
    max_modes: int = 320


@dataclass(frozen=True)
class SimulationConfig:
    cavity: CavityConfig = _field(default_factory=CavityConfig)
    probe: ProbeConfig = _field(default_factory=ProbeConfig)
    target: TargetConfig = _field(default_factory=TargetConfig)
    field: FieldConfig = _field(default_factory=FieldConfig)
    numerics: NumericsConfig = _field(default_factory=NumericsConfig)

    def replace(self, **dotted: Any) -> "SimulationConfig":
        """Return a copy with ``section.key`` style overrides applied.

        >>> SimulationConfig().replace(**{"probe.a": 2.0}).probe.a
        2.0
        """
        sections: dict[str, dict[str, Any]] = {}
        for key, value in dotted.items():
            section, _, name = key.partition(".")
            if section not in _SECTIONS or not name:
                raise ConfigError(key, "unknown key")
            sections.setdefault(section, {})[name] = value
        updated = {}
        for section, changes in sections.items():
            current = getattr(self, section)
            for name in changes:
                if name not in {f.name for f in dataclasses.fields(current)}:
                    raise ConfigError(f"{section}.{name}", "unknown key")
            updated[section] = dataclasses.replace(current, **changes)
        return dataclasses.replace(self, **updated)

    def with_couplings(self, coupling: float) -> "SimulationConfig":
        return self.replace(**{"probe.coupling": coupling, "target.coupling": coupling})


_SECTIONS = {
    "cavity": CavityConfig,
    "probe": ProbeConfig,
    "target": TargetConfig,
    "field": FieldConfig,
    "numerics": NumericsConfig,
}


@dataclass(frozen=True, eq=False)
class ValidatedConfig:
    """A checked configuration plus derived tables.

    ``probe_window`` is the cavity-frame time during which the probe couples
    to the field: ``T`` itself, or the exit time if the probe leaves the
    cavity earlier (only possible when ``full_crossing`` is false).
    """

    config: SimulationConfig
    omegas: np.ndarray
    probe_exit_time: float
    probe_window: float
    probe_end_position: float

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ValidatedConfig):
            return NotImplemented
        return (
            self.config == other.config
            and np.array_equal(self.omegas, other.omegas)
            and self.probe_exit_time == other.probe_exit_time
            and self.probe_window == other.probe_window
            and self.probe_end_position == other.probe_end_position
        )

    __hash__ = None  # type: ignore[assignment]


def _require(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(key, message)


def _finite(value: float, key: str) -> None:
    _require(math.isfinite(value), key, "must be finite")


def validate(config: SimulationConfig | ValidatedConfig) -> ValidatedConfig:
    """Check every invariant of ``config`` and populate derived quantities."""
    if isinstance(config, ValidatedConfig):
        config = config.config
    cav, pr, tg, fd, num = config.cavity, config.probe, config.target, config.field, config.numerics

    for section in _SECTIONS:
        obj = getattr(config, section)
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            if isinstance(value, float):
                _finite(value, f"{section}.{f.name}")

    _require(cav.length > 0, "cavity.length", "length must be positive")
    _require(isinstance(cav.modes, int) and cav.modes >= 1, "cavity.modes", "mode cutoff must be an integer >= 1")
    _require(pr.gap > 0, "probe.gap", "gap must be positive")
    _require(tg.gap > 0, "target.gap", "gap must be positive")
    _require(pr.coupling >= 0, "probe.coupling", "coupling must be non-negative")
    _require(tg.coupling >= 0, "target.coupling", "coupling must be non-negative")
    _require(pr.a >= 0, "probe.a", "acceleration must be non-negative")
    _require(pr.T >= 0, "probe.T", "flight time must be non-negative")
    _require(0 < tg.x < cav.length, "target.x", "target must sit strictly inside the cavity (0 < x < L)")
    _require(0 <= tg.theta <= math.pi, "target.theta", "polar angle must lie in [0, pi]")
    _require(num.rtol > 0, "numerics.rtol", "tolerance must be positive")
    _require(num.atol > 0, "numerics.atol", "tolerance must be positive")
    _require(num.mode_tol > 0, "numerics.mode_tol", "tolerance must be positive")
    _require(num.panels_per_period >= 4, "numerics.panels_per_period", "need at least 4 panels per period")
    _require(2 <= num.gauss_order <= 40, "numerics.gauss_order", "Gauss order must lie in [2, 40]")
    _require(num.max_refine >= 1, "numerics.max_refine", "need at least one refinement level")
    _require(num.max_modes >= cav.modes, "numerics.max_modes", "max mode cutoff must be >= cavity.modes")

    exit_time = float(kinematics.exit_time(pr.a, cav.length))
    end_position = float(kinematics.position(pr.a, pr.T))
    if pr.full_crossing and end_position > cav.length:
        raise ConfigError(
            "probe.T",
            f"probe leaves the cavity at t={exit_time!r} before T={pr.T!r} "
            f"(x(T)={end_position!r} > L={cav.length!r})",
        )
    window = min(pr.T, exit_time)
    omegas = np.arange(1, cav.modes + 1) * (math.pi / cav.length)
    return ValidatedConfig(config, omegas, exit_time, window, end_position)


# --- serialization -----------------------------------------------------------


def _coerce(section: str, name: str, template: Any, value: Any) -> Any:
    key = f"{section}.{name}"
    if isinstance(template, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, "expected a boolean")
        return value
    if isinstance(template, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, "expected an integer")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, "expected a number")
    return float(value)


def config_from_dict(data: Mapping[str, Any]) -> SimulationConfig:
    """Build a config from nested mappings; unknown keys are rejected."""
    sections = {}
    for section, body in data.items():
        if section not in _SECTIONS:
            raise ConfigError(section, "unknown section")
        if not isinstance(body, Mapping):
            raise ConfigError(section, "expected a table of keys")
        cls = _SECTIONS[section]
        defaults = cls()
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for name, value in body.items():
            if name not in names:
                raise ConfigError(f"{section}.{name}", "unknown key")
            kwargs[name] = _coerce(section, name, getattr(defaults, name), value)
        sections[section] = cls(**kwargs)
    return SimulationConfig(**sections)


def config_to_dict(config: SimulationConfig) -> dict[str, dict[str, Any]]:
    return {name: dataclasses.asdict(getattr(config, name)) for name in _SECTIONS}


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = repr(value)
        if math.isfinite(value) and "." not in text and "e" not in text:
            text += ".0"
        return text
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {value!r}")


def dumps_toml(data: Mapping[str, Mapping[str, Any]]) -> str:
    """Serialize a two-level mapping of scalars as TOML."""
    chunks = []
    for section, body in data.items():
        lines = [f"[{section}]"]
        lines += [f"{k} = {_format_value(v)}" for k, v in body.items()]
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + "\n"


def dumps_config(config: SimulationConfig) -> str:
    return dumps_toml(config_to_dict(config))


def loads_toml(text: str) -> dict[str, Any]:
    import tomli

    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"malformed TOML: {exc}") from exc


def loads_config(text: str) -> SimulationConfig:
    return config_from_dict(loads_toml(text))


def load_config(path: str | Path) -> SimulationConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    return loads_config(text)


def save_config(config: SimulationConfig, path: str | Path) -> None:
    Path(path).write_text(dumps_config(config), encoding="utf-8", newline="\n")


def config_hash(config: SimulationConfig) -> str:
    return hashlib.sha256(dumps_config(config).encode("utf-8")).hexdigest()


# --- qubit states --------------------------------------------------------------


def probe_amplitudes(p: complex) -> tuple[complex, complex]:
    """Normalized ``(ground, excited)`` amplitudes of the probe.

    The unnormalized state is ``p|g> + sqrt(1 - p**2)|e>`` (principal branch);
    for complex ``p`` this is not unit norm, so it is rescaled.
    """
    p = complex(p)
    q = np.sqrt(complex(1.0) - p * p)
    norm = math.sqrt(abs(p) ** 2 + abs(q) ** 2)
    if norm == 0.0:
        raise ConfigError("probe.p", "probe amplitudes vanish")
    return p / norm, complex(q) / norm


def probe_state(p: complex) -> np.ndarray:
    """Probe density matrix (excited-first basis)."""
    pg, pe = probe_amplitudes(p)
    psi = np.array([pe, pg])
    return np.outer(psi, psi.conj())


def probe_entries(rho_a: np.ndarray) -> tuple[float, float, complex]:
    """Return ``(eta, beta, gamma)``: ground population, excited population
    and ``gamma = Tr(sigma_plus rho_a)``."""
    return float(rho_a[1, 1].real), float(rho_a[0, 0].real), complex(rho_a[1, 0])


def target_state(theta: float, phi: float) -> np.ndarray:
    """Pure target state with Bloch angles ``(theta, phi)``."""
    psi = np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])
    return np.outer(psi, psi.conj())


def density_from_bloch(r: np.ndarray) -> np.ndarray:
    """``(I + r.sigma)/2``; traceless part built entrywise so the trace is exact."""
    x, y, z = (float(c) for c in r)
    return np.array(
        [[0.5 + 0.5 * z, 0.5 * complex(x, -y)], [0.5 * complex(x, y), 0.5 - 0.5 * z]],
        dtype=complex,
    )


def check_density(rho: np.ndarray, *, tol: float = 1e-12, min_eig: float = -1e-10, name: str = "rho") -> None:
    """Raise ``ValueError`` unless ``rho`` is a 2x2 Hermitian unit-trace matrix
    with eigenvalues above ``min_eig``."""
    rho = np.asarray(rho)
    if rho.shape != (2, 2):
        raise ValueError(f"{name}: expected a 2x2 matrix, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError(f"{name}: not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValueError(f"{name}: trace {np.trace(rho).real!r} != 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < min_eig:
        raise ValueError(f"{name}: negative eigenvalue")
