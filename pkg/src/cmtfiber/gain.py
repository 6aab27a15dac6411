"""Steady-state dopant populations and active gain for Tm and Yb.

The closed forms are written once as scalar ``numba`` functions so the
propagation kernel and the public array API run the same code.  The
``*_oracle`` functions solve the rate equations directly by damped Newton
and share nothing with the closed forms beyond the physical parameters.

Dopant parameters are packed into flat float arrays (see
:func:`pack_params`); the Tm layout is

    0 hw_s  1 hw_p  2 sa_s  3 se_s  4 sa_p  5 se_p  6 d1  7 d2  8 d3
    9 r21   10 r31  11 r32  12 kappa_R  13 N_total

with ``d_i`` the total decay rate out of level i, ``r21 = 1/tau21 + Gamma2``,
``r31 = 1/tau31``, ``r32 = 1/tau32 + Gamma3``.  The Yb layout is

    0 hw_s  1 hw_p  2 sa_s  3 se_s  4 sa_p  5 se_p  6 1/tau  7 N_total
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .config import CONSTANTS, FiberSpec, TmDopantSpec, YbDopantSpec

TM, YB, CONSTANT = 0, 1, 2


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class TmPopulations:
    N0: np.ndarray
    N1: np.ndarray
    N2: np.ndarray
    N3: np.ndarray

    @property
    def total(self):
        return self.N0 + self.N1 + self.N2 + self.N3

    def as_array(self) -> np.ndarray:
        return np.stack([self.N0, self.N1, self.N2, self.N3])


@dataclass(frozen=True)
class YbPopulations:
    N_ground: np.ndarray
    N_excited: np.ndarray

    @property
    def total(self):
        return self.N_ground + self.N_excited

    def as_array(self) -> np.ndarray:
        return np.stack([self.N_ground, self.N_excited])


@dataclass(frozen=True)
class ConstantGain:
    """Stub gain medium: fixed ``g_s``, ``g_p`` (1/m) on the doped region."""

    g_s: float = 0.0
    g_p: float = 0.0

    kind = "const"


def dopant_kind(dopant) -> int:
    if isinstance(dopant, ConstantGain):
        return CONSTANT
    return TM if isinstance(dopant, TmDopantSpec) else YB


def pack_params(dopant, spec: FiberSpec) -> np.ndarray:
    if isinstance(dopant, ConstantGain):
        return np.array([dopant.g_s, dopant.g_p], dtype=float)
    hw_s = CONSTANTS.hbar * spec.omega_s
    hw_p = CONSTANTS.hbar * spec.omega_p
    head = [hw_s, hw_p, dopant.sigma_abs_s, dopant.sigma_ems_s,
            dopant.sigma_abs_p, dopant.sigma_ems_p]
    if isinstance(dopant, TmDopantSpec):
        d = dopant
        d1 = 1 / d.tau_10 + d.Gamma_1
        d2 = 1 / d.tau_20 + 1 / d.tau_21 + d.Gamma_2
        d3 = 1 / d.tau_30 + 1 / d.tau_31 + 1 / d.tau_32 + d.Gamma_3
        tail = [d1, d2, d3, 1 / d.tau_21 + d.Gamma_2, 1 / d.tau_31,
                1 / d.tau_32 + d.Gamma_3, d.kappa_R, d.N_total]
    else:
        tail = [1 / dopant.tau, dopant.N_total]
    return np.array(head + tail, dtype=float)


def photon_flux(I, omega):
    """Photon flux ``I / (hbar omega)`` in photons/m^2/s."""
    return np.asarray(I) / (CONSTANTS.hbar * omega)


# -- closed forms (scalar, jitted) -------------------------------------------

@njit(cache=True, inline="always")
def tm_populations_scalar(Is, Ip, p):
    nu_s = Is / p[0]
    nu_p = Ip / p[1]
    pas = p[2] * nu_s
    pes = p[3] * nu_s
    pap = p[4] * nu_p
    pep = p[5] * nu_p
    d1, d2, d3 = p[6], p[7], p[8]
    r21, r31, r32 = p[9], p[10], p[11]
    kap, Nt = p[12], p[13]
    g0 = 1.0 / (pep + d3)
    g1 = pap * g0
    g2 = r32 / d2
    den1 = pes + d1
    # g1*g3 and g1*g4 formed directly: g3, g4 alone blow up as pump -> 0
    g1g3 = (g1 * (r31 + g2 * r21) + pas) / den1
    g1g4 = g0 * (2.0 * pap + pas) / den1
    a = kap * (g0 + g1g4)
    b = 1.0 + g1 + g1 * g2 + g1g3 - g0 * kap * Nt
    sq = math.sqrt(b * b + 4.0 * a * Nt)
    if b >= 0.0:
        N0 = 2.0 * Nt / (b + sq)
    else:
        N0 = (sq - b) / (2.0 * a)
    D = 1.0 + g0 * kap * N0
    N3 = g1 * N0 / D
    N2 = g2 * N3
    N1 = (g1g3 + g1g4 * kap * N0) * N0 / D
    return N0, N1, N2, N3


@njit(cache=True, inline="always")
def yb_populations_scalar(Is, Ip, p):
    nu_s = Is / p[0]
    nu_p = Ip / p[1]
    up = p[2] * nu_s + p[4] * nu_p
    down = p[3] * nu_s + p[5] * nu_p + p[6]
    Ne = p[7] * up / (up + down)
    return p[7] - Ne, Ne


@njit(cache=True, inline="always")
def gains_scalar(kind, Is, Ip, p):
    """``(g_s, g_p)`` at one point for dopant ``kind`` (TM, YB or CONSTANT)."""
    if kind == 2:
        return p[0], p[1]
    if kind == 0:
        N0, N1, N2, N3 = tm_populations_scalar(Is, Ip, p)
        return p[3] * N1 - p[2] * N0, p[5] * N3 - p[4] * N0
    Ng, Ne = yb_populations_scalar(Is, Ip, p)
    return p[3] * Ne - p[2] * Ng, p[5] * Ne - p[4] * Ng


@njit(cache=True)
def gains_nodes(kind, Is, Ip, p, gs, gp):
    """Fill ``gs``, ``gp`` at irradiances ``Is`` sharing one pump ``Ip``.

    Same arithmetic as :func:`gains_scalar`; for Tm the pump-only
    coefficients are computed once instead of per node.
    """
    n = Is.size
    if kind != 0:
        for q in range(n):
            gs[q], gp[q] = gains_scalar(kind, Is[q], Ip, p)
        return
    nu_p = Ip / p[1]
    pap = p[4] * nu_p
    pep = p[5] * nu_p
    d1, d2, d3 = p[6], p[7], p[8]
    r21, r31, r32 = p[9], p[10], p[11]
    kap, Nt = p[12], p[13]
    g0 = 1.0 / (pep + d3)
    g1 = pap * g0
    g2 = r32 / d2
    num3 = g1 * (r31 + g2 * r21)
    b0 = 1.0 + g1 + g1 * g2 - g0 * kap * Nt
    for q in range(n):
        nu_s = Is[q] / p[0]
        pas = p[2] * nu_s
        den1 = p[3] * nu_s + d1
        g1g3 = (num3 + pas) / den1
        g1g4 = g0 * (2.0 * pap + pas) / den1
        a = kap * (g0 + g1g4)
        b = b0 + g1g3
        sq = math.sqrt(b * b + 4.0 * a * Nt)
        if b >= 0.0:
            N0 = 2.0 * Nt / (b + sq)
        else:
            N0 = (sq - b) / (2.0 * a)
        D = 1.0 + g0 * kap * N0
        N3 = g1 * N0 / D
        N1 = (g1g3 + g1g4 * kap * N0) * N0 / D
        gs[q] = p[3] * N1 - p[2] * N0
        gp[q] = p[5] * N3 - p[4] * N0


@njit(cache=True)
def _tm_array(Is, Ip, p):
    n = Is.size
    out = np.empty((4, n))
    for q in range(n):
        N0, N1, N2, N3 = tm_populations_scalar(Is[q], Ip[q], p)
        out[0, q] = N0
        out[1, q] = N1
        out[2, q] = N2
        out[3, q] = N3
    return out


@njit(cache=True)
def _yb_array(Is, Ip, p):
    n = Is.size
    out = np.empty((2, n))
    for q in range(n):
        Ng, Ne = yb_populations_scalar(Is[q], Ip[q], p)
        out[0, q] = Ng
        out[1, q] = Ne
    return out


@njit(cache=True)
def gains_array(kind, Is, Ip, p):
    n = Is.size
    gs = np.empty(n)
    gp = np.empty(n)
    for q in range(n):
        gs[q], gp[q] = gains_scalar(kind, Is[q], Ip[q], p)
    return gs, gp


def _flat(I_s, I_p):
    Is, Ip = np.broadcast_arrays(np.asarray(I_s, dtype=float),
                                 np.asarray(I_p, dtype=float))
    if np.any(Is < 0) or np.any(Ip < 0):
        raise ValueError("irradiances must be nonnegative")
    return Is.shape, np.ascontiguousarray(Is).ravel(), np.ascontiguousarray(Ip).ravel()


def _unflat(arr, shape):
    return arr.reshape(shape) if shape else float(arr[0])


# -- public API ----------------------------------------------------------------

def tm_steady_state(I_s, I_p, dopant: TmDopantSpec, spec: FiberSpec) -> TmPopulations:
    shape, Is, Ip = _flat(I_s, I_p)
    out = _tm_array(Is, Ip, pack_params(dopant, spec))
    return TmPopulations(*(_unflat(o, shape) for o in out))


def yb_steady_state(I_s, I_p, dopant: YbDopantSpec, spec: FiberSpec) -> YbPopulations:
    shape, Is, Ip = _flat(I_s, I_p)
    out = _yb_array(Is, Ip, pack_params(dopant, spec))
    return YbPopulations(*(_unflat(o, shape) for o in out))


def steady_state(I_s, I_p, dopant, spec: FiberSpec):
    if isinstance(dopant, TmDopantSpec):
        return tm_steady_state(I_s, I_p, dopant, spec)
    return yb_steady_state(I_s, I_p, dopant, spec)


def tm_gain(pop: TmPopulations, dopant: TmDopantSpec):
    g_s = dopant.sigma_ems_s * pop.N1 - dopant.sigma_abs_s * pop.N0
    g_p = dopant.sigma_ems_p * pop.N3 - dopant.sigma_abs_p * pop.N0
    return g_s, g_p


def yb_gain(pop: YbPopulations, dopant: YbDopantSpec):
    g_s = dopant.sigma_ems_s * pop.N_excited - dopant.sigma_abs_s * pop.N_ground
    g_p = dopant.sigma_ems_p * pop.N_excited - dopant.sigma_abs_p * pop.N_ground
    return g_s, g_p


def gains(I_s, I_p, dopant, spec: FiberSpec):
    """Signal and pump gain (1/m) at the given irradiances."""
    shape, Is, Ip = _flat(I_s, I_p)
    gs, gp = gains_array(dopant_kind(dopant), Is, Ip, pack_params(dopant, spec))
    return _unflat(gs, shape), _unflat(gp, shape)


# -- rate-equation oracles -------------------------------------------------------

def _rates(I_s, I_p, dopant, spec):
    nu_s = float(photon_flux(I_s, spec.omega_s))
    nu_p = float(photon_flux(I_p, spec.omega_p))
    return (dopant.sigma_abs_s * nu_s, dopant.sigma_ems_s * nu_s,
            dopant.sigma_abs_p * nu_p, dopant.sigma_ems_p * nu_p)


def tm_rate_residual(N, I_s, I_p, dopant: TmDopantSpec, spec: FiberSpec):
    """Right-hand sides of the Tm rate equations (time derivatives of N3, N2,
    N1) and the conservation defect, for populations ``N = (N0, N1, N2, N3)``."""
    d = dopant
    pas, pes, pap, pep = _rates(I_s, I_p, d, spec)
    N0, N1, N2, N3 = N
    k = d.kappa_R
    f3 = pap * N0 - (pep + 1 / d.tau_32 + 1 / d.tau_31 + 1 / d.tau_30
                     + d.Gamma_3 + k * N0) * N3
    f2 = (1 / d.tau_32 + d.Gamma_3) * N3 - (1 / d.tau_21 + 1 / d.tau_20 + d.Gamma_2) * N2
    f1 = (pas * N0 + (1 / d.tau_21 + d.Gamma_2) * N2
          + (1 / d.tau_31 + 2 * k * N0) * N3 - (1 / d.tau_10 + d.Gamma_1 + pes) * N1)
    f0 = N0 + N1 + N2 + N3 - d.N_total
    return np.array([f3, f2, f1, f0])


def _tm_jacobian(N, I_s, I_p, dopant, spec):
    d = dopant
    pas, pes, pap, pep = _rates(I_s, I_p, d, spec)
    N0, N1, N2, N3 = N
    k = d.kappa_R
    out3 = pep + 1 / d.tau_32 + 1 / d.tau_31 + 1 / d.tau_30 + d.Gamma_3
    return np.array([
        [pap - k * N3, 0.0, 0.0, -(out3 + k * N0)],
        [0.0, 0.0, -(1 / d.tau_21 + 1 / d.tau_20 + d.Gamma_2), 1 / d.tau_32 + d.Gamma_3],
        [pas + 2 * k * N3, -(1 / d.tau_10 + d.Gamma_1 + pes), 1 / d.tau_21 + d.Gamma_2,
         1 / d.tau_31 + 2 * k * N0],
        [1.0, 1.0, 1.0, 1.0],
    ])


def _tm_max_rate(I_s, I_p, dopant, spec):
    d = dopant
    pas, pes, pap, pep = _rates(I_s, I_p, d, spec)
    return max(pap, pas, pes + 1 / d.tau_10 + d.Gamma_1,
               pep + 1 / d.tau_32 + 1 / d.tau_31 + 1 / d.tau_30 + d.Gamma_3,
               1 / d.tau_21 + 1 / d.tau_20 + d.Gamma_2,
               2 * d.kappa_R * d.N_total)


def _damped_newton(F, J, x0, scale, tol, size, max_iter=200):
    """Newton with step halving on residual increase.

    Stops once the scaled residual is below ``tol`` and the last full step
    moved the iterate by less than ``1e-15 * size``.
    """
    x = np.array(x0, dtype=float)
    f = F(x)
    for _ in range(max_iter):
        norm = np.max(np.abs(f) / scale)
        dx = np.linalg.solve(J(x), -f)
        if norm < tol and np.max(np.abs(dx)) <= 1e-15 * size:
            return x
        t = 1.0
        while True:
            trial = x + t * dx
            ft = F(trial)
            if np.max(np.abs(ft) / scale) <= norm or t < 1e-6:
                break
            t *= 0.5
        x, f = trial, ft
    if np.max(np.abs(f) / scale) < tol:
        return x
    raise OracleError(f"damped Newton did not converge in {max_iter} iterations")


def tm_oracle(I_s, I_p, dopant: TmDopantSpec, spec: FiberSpec,
              tol: float = 1e-12) -> TmPopulations:
    """Solve the steady Tm rate equations by damped Newton from ``N0 = N_total``."""
    if I_s < 0 or I_p < 0:
        raise ValueError("irradiances must be nonnegative")
    Nt = dopant.N_total
    rate = _tm_max_rate(I_s, I_p, dopant, spec)
    # rows 0-2 are rates (ions/m^3/s); row 3 is a population
    scale = np.array([Nt * rate, Nt * rate, Nt * rate, Nt])
    x = _damped_newton(lambda N: tm_rate_residual(N, I_s, I_p, dopant, spec),
                       lambda N: _tm_jacobian(N, I_s, I_p, dopant, spec),
                       [Nt, 0.0, 0.0, 0.0], scale, tol, Nt)
    return TmPopulations(*x)


def yb_rate_residual(N, I_s, I_p, dopant: YbDopantSpec, spec: FiberSpec):
    pas, pes, pap, pep = _rates(I_s, I_p, dopant, spec)
    Ng, Ne = N
    return np.array([
        pas * Ng - pes * Ne + pap * Ng - pep * Ne - Ne / dopant.tau,
        Ng + Ne - dopant.N_total,
    ])


def yb_oracle(I_s, I_p, dopant: YbDopantSpec, spec: FiberSpec,
              tol: float = 1e-12) -> YbPopulations:
    if I_s < 0 or I_p < 0:
        raise ValueError("irradiances must be nonnegative")
    pas, pes, pap, pep = _rates(I_s, I_p, dopant, spec)
    Nt = dopant.N_total
    rate = max(pas + pap, pes + pep + 1 / dopant.tau)
    jac = np.array([[pas + pap, -(pes + pep + 1 / dopant.tau)], [1.0, 1.0]])
    x = _damped_newton(lambda N: yb_rate_residual(N, I_s, I_p, dopant, spec),
                       lambda N: jac, [Nt, 0.0],
                       np.array([Nt * rate, Nt]), tol, Nt)
    return YbPopulations(*x)


def oracle(I_s, I_p, dopant, spec: FiberSpec):
    if isinstance(dopant, TmDopantSpec):
        return tm_oracle(I_s, I_p, dopant, spec)
    return yb_oracle(I_s, I_p, dopant, spec)


@dataclass(frozen=True)
class OracleAgreement:
    I_s: np.ndarray
    I_p: np.ndarray
    rel_diff: np.ndarray    # max_i |N_i(closed) - N_i(oracle)| / N_total
    residual: np.ndarray    # closed-form rate residual / (N_total * max rate)

    @property
    def max_rel_diff(self) -> float:
        return float(np.max(self.rel_diff))


def oracle_agreement(dopant, spec: FiberSpec, samples: int = 1000, seed: int = 0,
                     I_max: float = 1e14) -> OracleAgreement:
    """Closed form against the Newton oracle at log-uniform random irradiances
    on ``[1, I_max]`` W/m^2."""
    rng = np.random.default_rng(seed)
    Is = 10.0 ** rng.uniform(0, math.log10(I_max), samples)
    Ip = 10.0 ** rng.uniform(0, math.log10(I_max), samples)
    closed = steady_state(Is, Ip, dopant, spec).as_array()
    Nt = dopant.N_total
    diff = np.empty(samples)
    res = np.empty(samples)
    tm = isinstance(dopant, TmDopantSpec)
    for k in range(samples):
        ref = oracle(Is[k], Ip[k], dopant, spec).as_array()
        diff[k] = np.max(np.abs(closed[:, k] - ref)) / Nt
        if tm:
            r = tm_rate_residual(closed[:, k], Is[k], Ip[k], dopant, spec)
            rate = _tm_max_rate(Is[k], Ip[k], dopant, spec)
        else:
            r = yb_rate_residual(closed[:, k], Is[k], Ip[k], dopant, spec)
            pas, pes, pap, pep = _rates(Is[k], Ip[k], dopant, spec)
            rate = max(pas + pap, pes + pep + 1 / dopant.tau)
        res[k] = np.max(np.abs(r[:-1])) / (Nt * rate)
    return OracleAgreement(Is, Ip, diff, res)
