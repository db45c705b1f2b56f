"""Regenerate the golden maximize grid for the active backend.

Usage: RELGATE_BACKEND=numba python3 tests/data/make_golden.py
"""

from pathlib import Path

from relgate import _kernels, sweep
from relgate.model import SimulationConfig

SPEC = sweep.SweepSpec(a_steps=6, T_steps=4, theta_steps=3, phi_steps=4, refine_rounds=1)


def golden_path(backend: str) -> Path:
    return Path(__file__).with_name(f"golden_maximize_grid_{backend}.csv")


def generate() -> str:
    return sweep.maximize(SimulationConfig(), SPEC, keep_grid=True).grid_csv()


if __name__ == "__main__":
    path = golden_path(_kernels.BACKEND)
    path.write_text(generate(), encoding="utf-8", newline="\n")
    print(f"wrote {path}")
