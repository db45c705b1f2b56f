import math

import pytest

from relgate.model import SimulationConfig


@pytest.fixture
def config():
    return SimulationConfig()


@pytest.fixture
def small_config():
    """Few modes, no mode doubling: fast enough for per-test assembly."""
    return SimulationConfig().replace(**{"cavity.modes": 4, "numerics.mode_check": False})


def stationary_config(**over):
    """Resonant cavity (omega_1 = Omega_B) with only the target coupled."""
    base = {"probe.coupling": 0.0, "probe.a": 0.0, "cavity.length": math.pi, "cavity.modes": 3}
    base.update(over)
    return SimulationConfig().replace(**base)
