from functools import lru_cache
from pathlib import Path

import pytest

from canard.expr import SystemDef

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

VDP_F = "y - x^3/3 + x"
VDP_G = "eps*(z - x)"
ROT_F = "(2*x - (x - y)^3/3)/2 + eps*(z - (x - y))/2"
ROT_G = "-(2*x - (x - y)^3/3)/2 + eps*(z - (x - y))/2"
TEMPLATOR_F = "k_u*y^2 + k_T*y^2*x - q*x/(K + x)"
TEMPLATOR_G = "z - k_u*y^2 - k_T*y^2*x"
TEMPLATOR_CONSTANTS = dict(k_u=0.01, k_T=1.0, q=1.0, K=0.02)


@lru_cache(maxsize=None)
def vdp(eps: float) -> SystemDef:
    return SystemDef.from_strings(VDP_F, VDP_G, {"eps": eps})


@lru_cache(maxsize=None)
def rotated_vdp(eps: float) -> SystemDef:
    return SystemDef.from_strings(ROT_F, ROT_G, {"eps": eps})


@lru_cache(maxsize=None)
def templator() -> SystemDef:
    return SystemDef.from_strings(TEMPLATOR_F, TEMPLATOR_G, TEMPLATOR_CONSTANTS)


@pytest.fixture(scope="session")
def configs_dir() -> Path:
    return CONFIGS


# Acceptance criteria report one line each in the terminal summary.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
