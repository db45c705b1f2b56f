"""Command-line entry point.

Exit status: 0 on success, 1 on invalid or unreadable configuration, 2 when
a numerical stage fails to converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, amplitudes, dyson, kinematics, oracle, sweep
from ._kernels import BACKEND
from .model import ConfigError, NumericalError, SimulationConfig, config_from_dict, config_hash, dumps_config, loads_toml
from .observables import THETA_CONVENTION, bloch

log = logging.getLogger("relgate")

COMMANDS = ("simulate", "sweep", "maximize", "oracle-check", "convert-units", "dump-amplitudes")


def load_run_config(path: str | None) -> tuple[SimulationConfig, sweep.SweepSpec]:
    """Simulation config plus the optional ``[sweep]`` table of the same file."""
    if path is None:
        return SimulationConfig(), sweep.SweepSpec()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from exc
    data = loads_toml(text)
    spec_data = data.pop("sweep", {})
    return config_from_dict(data), sweep.SweepSpec.from_dict(spec_data)


def _apply_overrides(config: SimulationConfig, args) -> SimulationConfig:
    over = {}
    if getattr(args, "a", None) is not None:
        over["probe.a"] = args.a
    if getattr(args, "T", None) is not None:
        over["probe.T"] = args.T
    return config.replace(**over) if over else config


def _fmt_matrix(rho: np.ndarray) -> str:
    return "\n".join("  [" + ", ".join(repr(complex(v)) for v in row) + "]" for row in rho)


def _json_default(obj):
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


class Manifest:
    def __init__(self, command: str, config: SimulationConfig, argv: Sequence[str]):
        self.data = {
            "command": command,
            "argv": list(argv),
            "version": __version__,
            "backend": BACKEND,
            "config_hash": config_hash(config),
            "config": dumps_config(config),
            "theta_convention": THETA_CONVENTION,
            "tolerances": {},
            "outputs": [],
        }
        self.start = time.perf_counter()

    def write(self, out: Path, stem: str) -> Path:
        self.data["wall_time_s"] = time.perf_counter() - self.start
        path = out / f"{stem}.manifest.json"
        text = json.dumps(self.data, indent=2, sort_keys=True, default=_json_default)
        path.write_text(text + "\n", encoding="utf-8", newline="\n")
        return path


def _write(out: Path, name: str, text: str, manifest: Manifest) -> Path:
    path = out / name
    path.write_text(text, encoding="utf-8", newline="\n")
    manifest.data["outputs"].append(name)
    return path


def cmd_simulate(args, config, spec, argv) -> int:
    state = dyson.assemble(config)
    rec = bloch(state.rho)
    rec0 = bloch(state.rho0)
    print("initial target state:")
    print(_fmt_matrix(state.rho0))
    print("final target state:")
    print(_fmt_matrix(state.rho))
    print(f"bloch r = {rec.r!r}")
    print(f"theta = {rec.theta!r}  phi = {rec.phi!r}  purity = {rec.purity!r}  min_eig = {rec.min_eigenvalue!r}")
    if rec.theta is not None and rec0.theta is not None:
        from .observables import delta_angles

        dt, dp = delta_angles(state.rho0, state.rho)
        print(f"d_theta = {dt!r}  d_phi = {dp!r}")
    print("diagnostics:")
    for k, v in state.diagnostics.items():
        print(f"  {k} = {v!r}")
    return 0


def _sweep_tolerances(res, manifest: Manifest) -> None:
    manifest.data["tolerances"] = {
        "quadrature_error": res.quadrature_error,
        "mode_delta": res.mode_delta,
        "failures": res.failures,
    }
    if res.failures:
        log.warning("%d sweep points failed and are flagged", res.failures)


def cmd_sweep(args, config, spec, argv) -> int:
    out = _outdir(args)
    manifest = Manifest("sweep", config, argv)
    manifest.data["sweep"] = spec.to_dict()
    res = sweep.curve_sweep(config, spec.a_values, spec.T_values, threads=args.threads, objective=spec.objective)
    _write(out, "sweep.csv", res.to_csv(), manifest)
    _sweep_tolerances(res, manifest)
    manifest.write(out, "sweep")
    print(f"wrote {out / 'sweep.csv'} ({len(res.records)} rows, {res.failures} failed)")
    return 0


def cmd_maximize(args, config, spec, argv) -> int:
    out = _outdir(args)
    manifest = Manifest("maximize", config, argv)
    manifest.data["sweep"] = spec.to_dict()
    res = sweep.maximize(config, spec, threads=args.threads, keep_grid=args.grid)
    _write(out, "maximize.csv", res.to_csv(), manifest)
    if args.grid:
        _write(out, "maximize_grid.csv", res.grid_csv(), manifest)
    _sweep_tolerances(res, manifest)
    manifest.data["evaluations"] = res.evaluations
    manifest.write(out, "maximize")
    print(f"wrote {out / 'maximize.csv'} ({len(res.records)} targets, {res.evaluations} (a, T) points)")
    return 0


def cmd_oracle(args, config, spec, argv) -> int:
    out = _outdir(args)
    manifest = Manifest("oracle-check", config, argv)
    space = oracle.TruncatedSpace(args.modes, args.nmax)
    rep = oracle.residual_scaling(config, tuple(args.lambdas), space)
    text = rep.to_text()
    _write(out, "oracle_report.csv", text, manifest)
    manifest.data["tolerances"] = {"details": rep.details}
    manifest.write(out, "oracle_report")
    sys.stdout.write(text)
    if not rep.ok:
        log.error("residual exponent %.4f outside the expected range", rep.exponent)
        return 2
    return 0


def cmd_convert(args, config, spec, argv) -> int:
    a = args.a if args.a is not None else config.probe.a
    si, g = kinematics.si_acceleration(a, args.omega)
    print(f"a = {a!r} at Omega = {args.omega!r} rad/s -> {si!r} m/s^2 = {g!r} g")
    return 0


def cmd_dump(args, config, spec, argv) -> int:
    out = _outdir(args)
    manifest = Manifest("dump-amplitudes", config, argv)
    table = amplitudes.build_table(config)
    _write(out, "amplitudes.csv", table.to_csv(), manifest)
    _write(out, "terms.csv", dyson.terms_csv(config), manifest)
    manifest.data["tolerances"] = {"quadrature_error": table.max_error}
    manifest.write(out, "amplitudes")
    print(f"wrote {out / 'amplitudes.csv'} and {out / 'terms.csv'}")
    return 0


HANDLERS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "maximize": cmd_maximize,
    "oracle-check": cmd_oracle,
    "convert-units": cmd_convert,
    "dump-amplitudes": cmd_dump,
}


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file (defaults if omitted)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--seed", type=int, default=None, help="reserved; the pipeline is deterministic")
    common.add_argument("--a", type=float, default=None, help="override probe acceleration")
    common.add_argument("--T", type=float, default=None, help="override flight time")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="relgate", description="Remote qubit rotations by an accelerated probe atom in a cavity.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="final target state for one trajectory")
    sub.add_parser("sweep", parents=[common], help="rotation curves over (a, T)")
    m = sub.add_parser("maximize", parents=[common], help="best (a, T) per target state")
    m.add_argument("--grid", action="store_true", help="also write the full grid")
    o = sub.add_parser("oracle-check", parents=[common], help="compare with exact truncated-space evolution")
    o.add_argument("--modes", type=int, default=2)
    o.add_argument("--nmax", type=int, default=10)
    o.add_argument("--lambdas", type=float, nargs="+", default=[0.02, 0.01, 0.005])
    c = sub.add_parser("convert-units", parents=[common], help="dimensionless acceleration to SI")
    c.add_argument("--omega", type=float, required=True, help="reference gap in rad/s")
    sub.add_parser("dump-amplitudes", parents=[common], help="write the amplitude table and term list")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        config, spec = load_run_config(args.config)
        config = _apply_overrides(config, args)
        if args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
        return HANDLERS[args.command](args, config, spec, argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
