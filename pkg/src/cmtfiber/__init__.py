"""Coupled-mode simulation of rare-earth-doped fiber amplifiers and their
equivalent short fibers."""

__version__ = "0.1.0"

from .config import (Config, ConfigError, FiberSpec, NumericsSpec, TmDopantSpec,  # noqa: E402
                     YbDopantSpec, load_config, reference_config)
from .modes import ModeFamily, GuidedMode, solve_modes  # noqa: E402
from .integrator import PowerTrace, build_context, integrate, simulate  # noqa: E402
from .equivalent import (epsilon_sweep, restore_dopant, run_equivalent,  # noqa: E402
                         transform_dopant)

__all__ = [
    "Config", "ConfigError", "FiberSpec", "NumericsSpec", "TmDopantSpec",
    "YbDopantSpec", "load_config", "reference_config", "ModeFamily",
    "GuidedMode", "solve_modes", "PowerTrace", "build_context", "integrate",
    "simulate", "epsilon_sweep", "restore_dopant", "run_equivalent",
    "transform_dopant",
]
