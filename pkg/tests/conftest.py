import dataclasses

import pytest

from cmtfiber.config import reference_config
from cmtfiber.equivalent import run_equivalent
from cmtfiber.integrator import build_context
from cmtfiber.modes import solve_modes


@pytest.fixture(scope="session")
def tm_cfg():
    return reference_config("tm")


@pytest.fixture(scope="session")
def yb_cfg():
    return reference_config("yb")


@pytest.fixture(scope="session")
def tm_modes(tm_cfg):
    return solve_modes(tm_cfg.fiber)


@pytest.fixture(scope="session")
def yb_modes(yb_cfg):
    return solve_modes(yb_cfg.fiber)


@pytest.fixture(scope="session")
def tm_ctx(tm_cfg, tm_modes):
    return build_context(tm_cfg, modes=tm_modes)


@pytest.fixture(scope="session")
def yb_ctx(yb_cfg, yb_modes):
    return build_context(yb_cfg, modes=yb_modes)


@pytest.fixture(scope="session")
def single_mode_cfg(tm_cfg):
    """Tm fiber with the aperture lowered below the LP11 cutoff (V ~ 1.86)."""
    fb = dataclasses.replace(tm_cfg.fiber, numerical_aperture=0.05, launch_fractions=(1.0,))
    return tm_cfg.replace(fiber=fb)


# full-length runs, shared by the slow invariants and the acceptance suite

@pytest.fixture(scope="session")
def tm_equiv(tm_cfg, tm_ctx):
    """Tm, configured launch (100% LP01), L = 10 m against L_tilde = 0.1 m."""
    return run_equivalent(tm_cfg, 0.1, ctx=tm_ctx)


@pytest.fixture(scope="session")
def tm_equiv_mixed(tm_cfg, tm_ctx):
    return run_equivalent(tm_cfg, 0.1, ctx=tm_ctx, fractions=(0.5, 0.5))


@pytest.fixture(scope="session")
def yb_equiv(yb_cfg, yb_ctx):
    return run_equivalent(yb_cfg, 0.1, ctx=yb_ctx)


@pytest.fixture(scope="session")
def yb_equiv_mixed(yb_cfg, yb_ctx):
    return run_equivalent(yb_cfg, 0.1, ctx=yb_ctx, fractions=(0.25,) * 4)


# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
