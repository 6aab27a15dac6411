"""Guided LP modes of a weakly guiding step-index fiber.

Modes are the closed-form Bessel profiles

    phi(r, theta) = K_i(G a) J_i(R r) cos(i theta)     r <  a
                  = J_i(R a) K_i(G r) cos(i theta)     a <= r < r_clad

with ``R = u/a``, ``G = w/a`` and ``u`` a root of the weakly guiding
dispersion relation.  Each mode is rescaled to carry unit power, i.e.
``int n/(mu0 c) |phi|^2 dA = 1`` over the cladding disk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .config import CONSTANTS, FiberSpec
from .quadrature import radial_panels

# radial Gauss points per panel used for the unit-power rescaling
_NORM_POINTS = 96


def bessel_j(order: int, x):
    """Bessel function of the first kind, integer order (negative allowed)."""
    return special.jv(order, x)


def bessel_k(order: int, x):
    """Modified Bessel function of the second kind, integer order."""
    return special.kv(order, x)


class ModeSolverError(RuntimeError):
    pass


class SingleModeError(ModeSolverError):
    """Beat length requested for a fiber guiding a single mode."""


@dataclass(frozen=True)
class GuidedMode:
    i: int
    j: int
    beta: float
    u: float
    w: float
    r_core: float
    core_scale: float   # K_i(G a)
    clad_scale: float   # J_i(R a)
    amplitude: float = 1.0
    norm: float = 1.0         # int n/(mu0 c) phi^2 dA, after rescaling
    l2_norm_sq: float = 1.0   # int phi^2 dA, after rescaling

    @property
    def name(self) -> str:
        return f"LP{self.i}{self.j}"

    @property
    def R(self) -> float:
        return self.u / self.r_core

    @property
    def G(self) -> float:
        return self.w / self.r_core

    def radial(self, r):
        """Radial factor of the (rescaled) profile."""
        r = np.asarray(r, dtype=float)
        core = self.core_scale * bessel_j(self.i, self.R * r)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            clad = self.clad_scale * bessel_k(self.i, self.G * np.maximum(r, self.r_core))
        return self.amplitude * np.where(r < self.r_core, core, clad)

    def __call__(self, r, theta):
        return self.radial(r) * np.cos(self.i * np.asarray(theta, dtype=float))

    def field_xy(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self(np.hypot(x, y), np.arctan2(y, x))


@dataclass(frozen=True)
class ModeFamily:
    modes: tuple[GuidedMode, ...]
    V: float

    @property
    def M(self) -> int:
        return len(self.modes)

    @property
    def betas(self) -> np.ndarray:
        return np.array([m.beta for m in self.modes])

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.modes]

    @property
    def beat_length(self) -> float:
        """Mode beat length; ``inf`` for a single-mode fiber."""
        if self.M < 2:
            return math.inf
        return beat_length(self.modes)

    def __iter__(self):
        return iter(self.modes)

    def __len__(self):
        return self.M

    def __getitem__(self, k):
        return self.modes[k]


def normalized_frequency(spec: FiberSpec) -> float:
    return spec.k_s * spec.r_core * spec.numerical_aperture


def characteristic_function(i: int, u, V: float):
    """``u J_{i-1}(u) K_i(w) + w J_i(u) K_{i-1}(w)`` with ``w = sqrt(V^2 - u^2)``.

    Product form of the LP dispersion relation; it has no poles in ``(0, V)``.
    """
    u = np.asarray(u, dtype=float)
    w = np.sqrt(V * V - u * u)
    return (u * bessel_j(i - 1, u) * bessel_k(i, w)
            + w * bessel_j(i, u) * bessel_k(i - 1, w))


def characteristic_roots(i: int, V: float, n_scan: int = 2000) -> list[float]:
    """All roots of the characteristic function in ``(0, V)``, ascending.

    Sign changes on a uniform scan are refined by bisection until the
    bracket is narrower than ``1e-12 V``.  The scan is closed at ``u = V``
    by the sign of the limit there, which the diverging ``K_i(w)`` term
    fixes to ``sign(J_{i-1}(V))``; this catches roots squeezed against
    ``V`` (LP01 at small ``V``).
    """
    if V <= 0:
        return []
    grid = np.linspace(0.0, V, n_scan + 2)[1:-1]
    with np.errstate(over="ignore", invalid="ignore"):
        f = characteristic_function(i, grid, V)
    brackets = [(grid[k], grid[k + 1], f[k])
                for k in np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0]]
    end = np.sign(bessel_j(i - 1, V))
    if end != 0 and np.sign(f[-1]) == -end:
        brackets.append((grid[-1], V, f[-1]))
    roots = []
    tol = 1e-12 * V
    for a, b, fa in brackets:
        while b - a > tol:
            mid = 0.5 * (a + b)
            fm = characteristic_function(i, mid, V)
            if fm == 0.0:
                a = b = mid
                break
            if np.sign(fm) == np.sign(fa):
                a, fa = mid, fm
            else:
                b = mid
        roots.append(0.5 * (a + b))
    return roots


def build_mode(i: int, u: float, spec: FiberSpec, j: int = 1) -> GuidedMode:
    """Closed-form LP mode for root ``u``, rescaled to unit power."""
    ks = spec.k_s
    a = spec.r_core
    V = normalized_frequency(spec)
    # G a = sqrt(V^2 - u^2) equals sqrt(beta^2 - n_clad^2 k^2) a; this form
    # avoids cancelling two ~1e13 numbers near cutoff
    if not 0 < u < V:
        raise ModeSolverError(
            f"root u={u!r} (i={i}) is not guided: beta^2 <= n_clad^2 k_s^2")
    beta = math.sqrt(spec.n_core**2 * ks**2 - (u / a) ** 2)
    w = math.sqrt(V * V - u * u)
    raw = GuidedMode(i=i, j=j, beta=beta, u=u, w=w, r_core=a,
                     core_scale=float(bessel_k(i, w)),
                     clad_scale=float(bessel_j(i, u)))
    power, l2 = _radial_norms(raw, spec)
    s = 1.0 / math.sqrt(power)
    return GuidedMode(i=i, j=j, beta=beta, u=u, w=w, r_core=a,
                      core_scale=raw.core_scale, clad_scale=raw.clad_scale,
                      amplitude=s, norm=1.0, l2_norm_sq=l2 * s * s)


def _radial_norms(mode: GuidedMode, spec: FiberSpec) -> tuple[float, float]:
    # angular factor of cos^2(i theta) over a full turn
    ang = 2 * math.pi if mode.i == 0 else math.pi
    x, wts = np.polynomial.legendre.leggauss(_NORM_POINTS)
    power = l2 = 0.0
    for lo, hi, in_core in radial_panels(spec):
        n = spec.n_core if in_core else spec.n_clad
        r = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        wr = 0.5 * (hi - lo) * wts * r
        sq = float(np.sum(wr * mode.radial(r) ** 2)) * ang
        l2 += sq
        power += sq * n / (CONSTANTS.mu0 * CONSTANTS.c)
    return power, l2


def solve_modes(spec: FiberSpec, n_scan: int = 2000) -> ModeFamily:
    """Every guided LP mode at the signal wavelength, LP01 first then by
    decreasing propagation constant (ascending cutoff)."""
    V = normalized_frequency(spec)
    modes = []
    i = 0
    while True:
        roots = characteristic_roots(i, V, n_scan)
        if not roots:
            break
        # the largest u is the highest radial order; LPi1 has the smallest u
        for j, u in enumerate(sorted(roots), start=1):
            modes.append(build_mode(i, u, spec, j=j))
        i += 1
    modes.sort(key=lambda m: -m.beta)
    return ModeFamily(tuple(modes), V)


def beat_length(modes) -> float:
    betas = [m.beta for m in modes]
    if len(betas) < 2:
        raise SingleModeError("beat length is undefined for a single guided mode")
    return 2 * math.pi / (max(betas) - min(betas))


def step_count(L: float, beat: float, steps_per_beat: int) -> int:
    """Number of fixed steps to cover ``L`` at ``steps_per_beat`` per beat length."""
    return math.ceil(L * steps_per_beat / beat)
