"""Fiber, dopant and numerics parameters.

Everything downstream reads physical and numerical settings from the
frozen dataclasses defined here.  Configuration files are JSON with four
top-level objects (``fiber``, ``dopant``, ``launch``, ``numerics``); all
quantities are SI.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Union

import scipy.constants as _sc


class ConfigError(ValueError):
    """Raised when a configuration file is malformed or violates an invariant."""


@dataclass(frozen=True)
class PhysicalConstants:
    c: float = _sc.c
    mu0: float = _sc.mu_0
    hbar: float = _sc.hbar


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class FiberSpec:
    r_core: float
    r_clad: float
    n_core: float
    numerical_aperture: float
    lambda_s: float
    lambda_p: float
    L: float
    dopant: str
    P_s0: float
    P_p0: float
    launch_fractions: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        _require(0 < self.r_core < self.r_clad, "0 < r_core < r_clad")
        _require(0 <= self.numerical_aperture < self.n_core, "0 <= NA < n_core")
        _require(self.lambda_s > 0 and self.lambda_p > 0, "wavelengths > 0")
        _require(self.lambda_p < self.lambda_s, "lambda_p < lambda_s")
        _require(self.L > 0, "L > 0")
        _require(self.dopant in ("Tm", "Yb"), "dopant in {Tm, Yb}")
        _require(self.P_s0 >= 0 and self.P_p0 >= 0, "launch powers >= 0")
        fr = tuple(float(f) for f in self.launch_fractions)
        object.__setattr__(self, "launch_fractions", fr)
        _require(len(fr) >= 1 and all(f >= 0 for f in fr),
                 "launch_fractions nonnegative")
        _require(abs(math.fsum(fr) - 1.0) <= 1e-12, "launch_fractions sum to 1")

    @property
    def n_clad(self) -> float:
        return math.sqrt(self.n_core**2 - self.numerical_aperture**2)

    @property
    def k_s(self) -> float:
        return 2 * math.pi / self.lambda_s

    @property
    def k_p(self) -> float:
        return 2 * math.pi / self.lambda_p

    @property
    def omega_s(self) -> float:
        return CONSTANTS.c * self.k_s

    @property
    def omega_p(self) -> float:
        return CONSTANTS.c * self.k_p

    @property
    def area(self) -> float:
        """Cross-section area out to the cladding radius."""
        return math.pi * self.r_clad**2


@dataclass(frozen=True)
class TmDopantSpec:
    sigma_abs_p: float
    sigma_ems_p: float
    sigma_abs_s: float
    sigma_ems_s: float
    tau_10: float
    tau_20: float
    tau_21: float
    tau_30: float
    tau_31: float
    tau_32: float
    Gamma_1: float
    Gamma_2: float
    Gamma_3: float
    N_total: float
    kappa_R: float  # m^3/s

    kind = "Tm"

    def __post_init__(self):
        for f in dataclasses.fields(self):
            _require(getattr(self, f.name) >= 0, f"{f.name} >= 0")
        for name in ("tau_10", "tau_20", "tau_21", "tau_30", "tau_31", "tau_32"):
            _require(getattr(self, name) > 0, f"{name} > 0")
        _require(self.N_total > 0, "N_total > 0")


@dataclass(frozen=True)
class YbDopantSpec:
    sigma_abs_p: float
    sigma_ems_p: float
    sigma_abs_s: float
    sigma_ems_s: float
    tau: float
    N_total: float

    kind = "Yb"

    def __post_init__(self):
        for f in dataclasses.fields(self):
            _require(getattr(self, f.name) >= 0, f"{f.name} >= 0")
        _require(self.tau > 0, "tau > 0")
        _require(self.N_total > 0, "N_total > 0")


DopantSpec = Union[TmDopantSpec, YbDopantSpec]

SOLVERS = ("rk4", "dopri")


@dataclass(frozen=True)
class NumericsSpec:
    steps_per_beat: int = 50
    radial_quad_order: int = 24
    angular_quad_points: int = 64
    solver: str = "rk4"
    L_tilde: float | None = None
    output_stride: int | None = None
    steps_per_meter_single_mode: int = 10_000

    def __post_init__(self):
        _require(self.steps_per_beat >= 1, "steps_per_beat >= 1")
        _require(self.radial_quad_order >= 4, "radial_quad_order >= 4")
        _require(self.angular_quad_points >= 4, "angular_quad_points >= 4")
        _require(self.solver in SOLVERS, f"solver in {SOLVERS}")
        _require(self.L_tilde is None or self.L_tilde > 0, "L_tilde > 0")
        _require(self.output_stride is None or self.output_stride >= 1,
                 "output_stride >= 1")
        _require(self.steps_per_meter_single_mode >= 1,
                 "steps_per_meter_single_mode >= 1")


@dataclass(frozen=True)
class Config:
    fiber: FiberSpec
    dopant: DopantSpec
    numerics: NumericsSpec = field(default_factory=NumericsSpec)

    def __post_init__(self):
        _require(self.dopant.kind == self.fiber.dopant,
                 "dopant block matches fiber.dopant")
        Lt = self.numerics.L_tilde
        _require(Lt is None or Lt <= self.fiber.L, "L_tilde <= L")

    def replace(self, fiber=None, dopant=None, numerics=None, **fiber_changes):
        """Return a copy with whole blocks and/or individual fiber fields swapped."""
        fb = fiber or self.fiber
        if fiber_changes:
            fb = dataclasses.replace(fb, **fiber_changes)
        return Config(fb, dopant or self.dopant, numerics or self.numerics)

    def to_dict(self) -> dict:
        fb = self.fiber
        return {
            "fiber": {
                "r_core": fb.r_core,
                "r_clad": fb.r_clad,
                "n_core": fb.n_core,
                "numerical_aperture": fb.numerical_aperture,
                "lambda_s": fb.lambda_s,
                "lambda_p": fb.lambda_p,
                "L": fb.L,
                "dopant": fb.dopant,
            },
            "dopant": dataclasses.asdict(self.dopant),
            "launch": {
                "P_s0": fb.P_s0,
                "P_p0": fb.P_p0,
                "fractions": list(fb.launch_fractions),
            },
            "numerics": dataclasses.asdict(self.numerics),
        }

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; identifies a run's inputs."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _require(cond: bool, what: str) -> None:
    if not cond:
        raise ConfigError(f"invariant violated: {what}")


def config_from_dict(data: dict) -> Config:
    """Build and validate a :class:`Config` from the JSON-compatible dict form."""
    try:
        fb = dict(data["fiber"])
        launch = dict(data["launch"])
        dop = dict(data["dopant"])
        num = dict(data.get("numerics", {}))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"missing or malformed block: {exc}") from None
    if "n_clad" in fb:
        raise ConfigError("n_clad is derived from n_core and numerical_aperture; "
                          "do not set it")
    try:
        fiber = FiberSpec(
            **fb,
            P_s0=launch["P_s0"],
            P_p0=launch["P_p0"],
            launch_fractions=tuple(launch.get("fractions", (1.0,))),
        )
        cls = TmDopantSpec if fiber.dopant == "Tm" else YbDopantSpec
        dopant = cls(**dop)
        numerics = NumericsSpec(**num)
    except TypeError as exc:
        raise ConfigError(f"unexpected or missing field: {exc}") from None
    return Config(fiber, dopant, numerics)


def load_config(path) -> Config:
    """Read a JSON configuration file.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    ConfigError
        If the file does not parse or a parameter invariant fails.
    """
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return config_from_dict(data)


def dump_config(cfg: Config, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


def reference_config(name: str) -> Config:
    """Load one of the bundled reference fibers: ``"tm"`` or ``"yb"``."""
    return load_config(reference_config_path(name))


def reference_config_path(name: str) -> Path:
    fname = {"tm": "tm_nufern.json", "yb": "yb_nufern.json"}[name.lower()]
    return Path(str(resources.files("cmtfiber") / "data" / fname))


def derive_wave_numbers(spec: FiberSpec) -> tuple[float, float]:
    """Vacuum wavenumbers ``(k_s, k_p)`` in rad/m."""
    return spec.k_s, spec.k_p
