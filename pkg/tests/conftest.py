import math
from pathlib import Path

import pytest

from spadrx.core import ReceiverConfig

CONFIGS_DIR = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="session")
def configs_dir() -> Path:
    return CONFIGS_DIR


@pytest.fixture
def low_speed_config() -> ReceiverConfig:
    return ReceiverConfig(pde=0.5, array_scale=8, dead_time_ns=1.0, symbol_ns=10.0,
                          background_rate_cns=0.01, dark_rate_cns=1e-4)


@pytest.fixture
def high_speed_config() -> ReceiverConfig:
    return ReceiverConfig(pde=0.5, array_scale=64, dead_time_ns=10.0, symbol_ns=1.0,
                          background_rate_cns=0.01, dark_rate_cns=1e-4)


def quadrature_mass(fn, lo: float, hi: float, **kwargs) -> float:
    from scipy.integrate import quad

    val, _ = quad(fn, lo, hi, limit=500, **kwargs)
    return val


def assert_close(got: float, want: float, tol: float, label: str = "") -> None:
    assert math.isfinite(got), f"{label}: got {got}"
    assert abs(got - want) <= tol, f"{label}: |{got} - {want}| > {tol}"
