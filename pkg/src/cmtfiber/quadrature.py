"""Tensor quadrature over the fiber cross-section.

Gauss-Legendre in ``r`` on the core panel and on geometrically growing
cladding panels ``[a, 2a], [2a, 4a], ...`` (the refractive index jumps at
``r_core``, so no node sits on the interface; the short inner cladding
panels resolve the evanescent tails) times the periodic trapezoid rule in
``theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import CONSTANTS, FiberSpec


@dataclass(frozen=True)
class CrossSectionRule:
    r: np.ndarray
    theta: np.ndarray
    weights: np.ndarray
    in_core: np.ndarray
    n: np.ndarray          # refractive index at each node
    folded: bool = False

    @property
    def size(self) -> int:
        return self.r.size

    @property
    def x(self) -> np.ndarray:
        return self.r * np.cos(self.theta)

    @property
    def y(self) -> np.ndarray:
        return self.r * np.sin(self.theta)

    def integrate(self, values) -> float | np.ndarray:
        """Sum ``weights * values`` over nodes (last axis of ``values``)."""
        return np.asarray(values) @ self.weights

    def core(self) -> "CrossSectionRule":
        """Sub-rule restricted to the core panel."""
        m = self.in_core
        return CrossSectionRule(self.r[m], self.theta[m], self.weights[m],
                                self.in_core[m], self.n[m], self.folded)

    def fold(self) -> "CrossSectionRule":
        """Equivalent rule for integrands even in ``theta`` (mirror about y=0).

        Nodes with ``theta`` in ``(pi, 2 pi)`` are dropped and their mirror
        partners carry double weight.  Exact for every integrand built from
        ``cos(i theta)`` modes.
        """
        if self.folded:
            return self
        th = self.theta
        eps = 1e-12
        keep = th <= math.pi + eps
        on_axis = (th < eps) | (np.abs(th - math.pi) < eps)
        w = np.where(on_axis, 1.0, 2.0) * self.weights
        return CrossSectionRule(self.r[keep], th[keep], w[keep],
                                self.in_core[keep], self.n[keep], True)


def radial_panels(spec: FiberSpec):
    """``(lo, hi, in_core)`` radial intervals: the core, then cladding
    panels doubling in outer radius until ``r_clad``."""
    a, b = spec.r_core, spec.r_clad
    panels = [(0.0, a, True)]
    lo = a
    while 2 * lo < b * (1 - 1e-12):
        panels.append((lo, 2 * lo, False))
        lo *= 2
    panels.append((lo, b, False))
    return panels


def build_rule(spec: FiberSpec, radial_order: int = 24,
               angular_points: int = 64) -> CrossSectionRule:
    if radial_order < 4 or angular_points < 4:
        raise ValueError("quadrature orders must be >= 4")
    x, wx = np.polynomial.legendre.leggauss(radial_order)
    rs, wrs, core = [], [], []
    for lo, hi, is_core in radial_panels(spec):
        r = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        rs.append(r)
        wrs.append(0.5 * (hi - lo) * wx * r)
        core.append(np.full(radial_order, is_core))
    r = np.concatenate(rs)
    wr = np.concatenate(wrs)
    core = np.concatenate(core)
    theta = 2 * math.pi * np.arange(angular_points) / angular_points
    wt = 2 * math.pi / angular_points
    R, T = np.meshgrid(r, theta, indexing="ij")
    W = np.outer(wr, np.full(angular_points, wt))
    C = np.repeat(core, angular_points)
    nn = np.where(C, spec.n_core, spec.n_clad)
    return CrossSectionRule(R.ravel(), T.ravel(), W.ravel(), C, nn)


def irradiance_factor(n):
    """``n / (mu0 c)``: converts squared field envelope to irradiance."""
    return n / (CONSTANTS.mu0 * CONSTANTS.c)


def mode_values(modes, rule: CrossSectionRule) -> np.ndarray:
    """Matrix of mode values at the rule nodes, shape ``(nodes, M)``."""
    return np.column_stack([m(rule.r, rule.theta) for m in modes])


def mode_norm(mode, rule: CrossSectionRule) -> float:
    """Power-normalization integral ``int n/(mu0 c) |phi|^2 dA``."""
    v = mode(rule.r, rule.theta)
    return float(rule.integrate(irradiance_factor(rule.n) * np.abs(v) ** 2))


def gram_matrix(modes, rule: CrossSectionRule) -> np.ndarray:
    """``G[l, m] = int n/(mu0 c) phi_l phi_m dA``; identity for orthonormal modes."""
    phi = mode_values(modes, rule)
    return (phi * (rule.weights * irradiance_factor(rule.n))[:, None]).T @ phi


def modal_coefficients(A, modes, z) -> np.ndarray:
    """``A_m exp(i beta_m z)``, with the common phase of mode 0 removed.

    Only phase differences enter any irradiance, and ``beta z`` alone
    reaches ~1e8 rad over a fiber, so the reference phase is dropped.
    """
    A = np.asarray(A, dtype=complex)
    betas = np.array([m.beta for m in modes])
    dbeta = betas - betas[0]
    z = np.asarray(z, dtype=float)
    return A * np.exp(1j * np.multiply.outer(z, dbeta))


def signal_irradiance(x, y, z, A, modes, spec: FiberSpec):
    """Signal irradiance at points ``(x, y)`` for modal amplitudes ``A`` at ``z``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c = modal_coefficients(A, modes, z)
    u = sum(cm * m.field_xy(x, y) for cm, m in zip(c, modes))
    n = np.where(np.hypot(x, y) < spec.r_core, spec.n_core, spec.n_clad)
    return irradiance_factor(n) * np.abs(u) ** 2


def signal_irradiance_nodes(c, phi, rule: CrossSectionRule) -> np.ndarray:
    """Irradiance at rule nodes from phased coefficients ``c`` and mode matrix ``phi``."""
    u = phi @ np.asarray(c, dtype=complex)
    return irradiance_factor(rule.n) * (u.real**2 + u.imag**2)
