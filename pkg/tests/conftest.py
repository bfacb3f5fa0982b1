import numpy as np
import pytest

from aerial_impedance.config import apply_overrides, load_config
from aerial_impedance.dynamics import PlantParameters

HOVER_OVERRIDES = [
    "scenario.start=[0, 0, 1, 0]",
    "scenario.position_waypoints={times: [0, 1], points: [[0, 0, 1], [0, 0, 1]]}",
    "scenario.arm_waypoints={times: [0, 1], points_deg: [[165, 140], [165, 140]]}",
]


def hover_catch_config(horizon=1.0, catch_time=0.5, mass=0.1, extra=()):
    """Short hover with a catch; cheap enough for unit tests."""
    return apply_overrides(load_config(), [
        *HOVER_OVERRIDES,
        f"scenario.horizon={horizon}",
        f"catch.time={catch_time}",
        f"catch.mass={mass}",
        *extra,
    ])


@pytest.fixture
def plant():
    return PlantParameters(payload_mass=0.15)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict[str, str] = {}


def record_acceptance(key: str, passed: bool, detail: str) -> str:
    line = f"{key} {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES[key] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
