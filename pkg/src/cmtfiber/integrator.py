"""Coupled-mode propagation of pump irradiance and signal mode amplitudes.

The state is ``Y = [I_p, A_1, ..., A_M]`` (complex).  Per RHS evaluation the
signal irradiance is formed on the doped-core quadrature nodes, the gain
model is evaluated node by node, and the coupling matrix

    K[l, m] = k_s / (2 beta_l ||phi_l||^2) * int g_s n phi_m phi_l dA

is accumulated in the same pass.  ``||phi_l||^2`` is the plain L2 norm; it
appears because modes carry unit *power* (``int n/(mu0 c) phi^2 = 1``)
rather than unit L2 norm.  Mode phases ``exp(i beta_l z)`` stay analytic:
only ``beta_m - beta_0`` ever multiplies ``z``.

The stepping loops are compiled with numba; one 10 m run is ~1e6 RHS
evaluations.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import gain as _gain
from .config import CONSTANTS, Config
from .modes import ModeFamily, solve_modes, step_count
from .quadrature import (CrossSectionRule, build_rule, gram_matrix,
                         irradiance_factor, mode_values)

RK4, DOPRI = 0, 1
_SOLVER_CODES = {"rk4": RK4, "dopri": DOPRI}


class IntegrationError(RuntimeError):
    def __init__(self, msg, z=None):
        super().__init__(msg)
        self.z = z


@dataclass(frozen=True)
class CouplingMatrix:
    K: np.ndarray
    mean_gp: float


@dataclass
class PowerTrace:
    z: np.ndarray
    P_pump: np.ndarray
    P_mode: np.ndarray        # (samples, M)
    P_signal: np.ndarray
    I_p: np.ndarray
    A: np.ndarray             # (samples, M) complex amplitudes
    mode_names: list[str]
    n_steps: int
    step: float
    solver: str
    wall_time: float = 0.0
    max_error_estimate: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.P_mode.shape[1]

    @property
    def powers(self) -> np.ndarray:
        """``[P_0 = pump, P_1, ..., P_M]`` per sample, shape ``(samples, M+1)``."""
        return np.column_stack([self.P_pump, self.P_mode])


@dataclass(frozen=True)
class PropagationContext:
    """Everything the RHS needs, precomputed once per fiber/dopant pair."""

    cfg: Config
    dopant: object
    modes: ModeFamily
    rule: CrossSectionRule
    doped: CrossSectionRule
    phi: np.ndarray           # modes at doped nodes, (M, nodes)
    kcoef: np.ndarray
    dbeta: np.ndarray
    irr: float
    gp_scale: float
    kind: int
    params: np.ndarray
    gram: np.ndarray

    @property
    def spec(self):
        return self.cfg.fiber

    @property
    def M(self) -> int:
        return self.modes.M

    def with_dopant(self, dopant) -> "PropagationContext":
        """Same fiber and quadrature, different gain medium."""
        return PropagationContext(
            self.cfg, dopant, self.modes, self.rule, self.doped, self.phi,
            self.kcoef, self.dbeta, self.irr, self.gp_scale,
            _gain.dopant_kind(dopant), _gain.pack_params(dopant, self.cfg.fiber),
            self.gram)


def build_context(cfg: Config, dopant=None, modes: ModeFamily | None = None,
                  radial_order: int | None = None,
                  angular_points: int | None = None) -> PropagationContext:
    spec = cfg.fiber
    num = cfg.numerics
    dopant = cfg.dopant if dopant is None else dopant
    modes = solve_modes(spec) if modes is None else modes
    rule = build_rule(spec, radial_order or num.radial_quad_order,
                      angular_points or num.angular_quad_points)
    # dopant is confined to the core; every integrand is even in theta
    doped = rule.core().fold()
    phi = np.ascontiguousarray(mode_values(modes, doped).T)
    betas = modes.betas
    l2 = np.array([m.l2_norm_sq for m in modes])
    kcoef = spec.k_s * spec.n_core / (2 * betas * l2)
    return PropagationContext(
        cfg=cfg, dopant=dopant, modes=modes, rule=rule, doped=doped, phi=phi,
        kcoef=kcoef, dbeta=betas - betas[0],
        irr=float(irradiance_factor(spec.n_core)), gp_scale=1.0 / spec.area,
        kind=_gain.dopant_kind(dopant), params=_gain.pack_params(dopant, spec),
        gram=gram_matrix(modes, rule))


# -- compiled kernels ------------------------------------------------------------

@njit(cache=True)
def _kmatrix(Is, Ip, phi, w, kcoef, kind, p, K):
    """Fill ``K`` from signal irradiance ``Is`` at the nodes; return ``int g_p dA``.

    ``phi`` is the mode matrix transposed to ``(M, nodes)``.
    """
    M = phi.shape[0]
    nq = w.size
    gs = np.empty(nq)
    gp = np.empty(nq)
    _gain.gains_nodes(kind, Is, Ip, p, gs, gp)
    gp_int = 0.0
    for q in range(nq):
        gp_int += w[q] * gp[q]
        gs[q] *= w[q]
    for l in range(M):
        for m in range(l, M):
            acc = 0.0
            for q in range(nq):
                acc += gs[q] * phi[l, q] * phi[m, q]
            K[l, m] = acc * kcoef[l]
            K[m, l] = acc * kcoef[m]
    return gp_int


@njit(cache=True)
def _couple(z, Ip, A, phi, w, irr, kcoef, dbeta, kind, p, K, c):
    """Fill ``K`` and phased coefficients ``c``; return ``int g_p dA``."""
    M = A.size
    nq = w.size
    ur = np.zeros(nq)
    ui = np.zeros(nq)
    for m in range(M):
        cm = A[m] * complex(math.cos(dbeta[m] * z), math.sin(dbeta[m] * z))
        c[m] = cm
        for q in range(nq):
            ur[q] += cm.real * phi[m, q]
            ui[q] += cm.imag * phi[m, q]
    for q in range(nq):
        ur[q] = irr * (ur[q] * ur[q] + ui[q] * ui[q])
    return _kmatrix(ur, Ip, phi, w, kcoef, kind, p, K)


@njit(cache=True)
def _rhs(z, y, out, phi, w, irr, kcoef, dbeta, gp_scale, kind, p, K, c):
    M = y.size - 1
    A = y[1:]
    Ip = y[0].real
    gp_int = _couple(z, Ip, A, phi, w, irr, kcoef, dbeta, kind, p, K, c)
    out[0] = gp_scale * gp_int * Ip
    for l in range(M):
        s = 0j
        for m in range(M):
            s += K[l, m] * c[m]
        out[l + 1] = s * complex(math.cos(dbeta[l] * z), -math.sin(dbeta[l] * z))


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
_DP_B = _DP_A[6].copy()
_DP_E = _DP_B - np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640,
                          -92097 / 339200, 187 / 2100, 1 / 40])[:6]
_DP_E7 = -1 / 40


@njit(cache=True)
def _all_finite(y):
    for v in y:
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            return False
    return True


@njit(cache=True)
def _propagate(y0, z0, h, n_steps, stride, method, phi, w, irr, kcoef, dbeta,
               gp_scale, kind, p, dpA, dpC, dpB, dpE, dpE7):
    n = y0.size
    M = n - 1
    n_samples = n_steps // stride + 1
    if n_steps % stride != 0:
        n_samples += 1
    zs = np.empty(n_samples)
    ys = np.empty((n_samples, n), dtype=np.complex128)
    K = np.zeros((M, M))
    c = np.empty(M, dtype=np.complex128)
    y = y0.copy()
    tmp = np.empty(n, dtype=np.complex128)
    ks = np.empty((7, n), dtype=np.complex128)
    zs[0] = z0
    ys[0] = y
    s = 1
    err_max = 0.0
    fsal = False
    for step in range(n_steps):
        z = z0 + step * h
        if method == 0:
            _rhs(z, y, ks[0], phi, w, irr, kcoef, dbeta, gp_scale, kind, p, K, c)
            for i in range(n):
                tmp[i] = y[i] + 0.5 * h * ks[0, i]
            _rhs(z + 0.5 * h, tmp, ks[1], phi, w, irr, kcoef, dbeta, gp_scale, kind, p, K, c)
            for i in range(n):
                tmp[i] = y[i] + 0.5 * h * ks[1, i]
            _rhs(z + 0.5 * h, tmp, ks[2], phi, w, irr, kcoef, dbeta, gp_scale, kind, p, K, c)
            for i in range(n):
                tmp[i] = y[i] + h * ks[2, i]
            _rhs(z + h, tmp, ks[3], phi, w, irr, kcoef, dbeta, gp_scale, kind, p, K, c)
            for i in range(n):
                y[i] += h / 6.0 * (ks[0, i] + 2.0 * ks[1, i] + 2.0 * ks[2, i] + ks[3, i])
        else:
            if fsal:
                for i in range(n):
                    ks[0, i] = ks[6, i]
            else:
                _rhs(z, y, ks[0], phi, w, irr, kcoef, dbeta, gp_scale, kind, p, K, c)
            for st in range(1, 6):
                for i in range(n):
                    acc = 0j
                    for j in range(st):
                        acc += dpA[st, j] * ks[j, i]
                    tmp[i] = y[i] + h * acc
                _rhs(z + dpC[st] * h, tmp, ks[st], phi, w, irr, kcoef, dbeta,
                     gp_scale, kind, p, K, c)
            for i in range(n):
                acc = 0j
                for j in range(6):
                    acc += dpB[j] * ks[j, i]
                tmp[i] = y[i] + h * acc
            _rhs(z + h, tmp, ks[6], phi, w, irr, kcoef, dbeta, gp_scale, kind, p, K, c)
            fsal = True
            scale = 0.0
            err = 0.0
            for i in range(n):
                e = 0j
                for j in range(6):
                    e += dpE[j] * ks[j, i]
                e = h * (e + dpE7 * ks[6, i])
                err = max(err, abs(e))
                scale = max(scale, abs(tmp[i]))
                y[i] = tmp[i]
            if scale > 0.0:
                err_max = max(err_max, err / scale)
        if not _all_finite(y):
            return zs[:s], ys[:s], step + 1, err_max
        if (step + 1) % stride == 0 or step + 1 == n_steps:
            zs[s] = z0 + (step + 1) * h
            ys[s] = y
            s += 1
    return zs, ys, -1, err_max


# -- public API ------------------------------------------------------------------

def initial_state(ctx: PropagationContext, fractions=None, P_s0=None,
                  P_p0=None) -> np.ndarray:
    """``Y(0)``: uniform pump irradiance and real nonnegative mode amplitudes."""
    spec = ctx.spec
    fr = np.zeros(ctx.M)
    given = np.asarray(spec.launch_fractions if fractions is None else fractions, float)
    if given.size > ctx.M:
        if np.any(given[ctx.M:] != 0):
            raise ValueError(f"launch names {given.size} modes; fiber guides {ctx.M}")
        given = given[:ctx.M]
    fr[:given.size] = given
    Ps = spec.P_s0 if P_s0 is None else P_s0
    Pp = spec.P_p0 if P_p0 is None else P_p0
    y = np.empty(ctx.M + 1, dtype=complex)
    y[0] = Pp / spec.area
    y[1:] = np.sqrt(fr * Ps)
    return y


def coupling_matrix(z: float, Y, ctx: PropagationContext) -> CouplingMatrix:
    Y = np.asarray(Y, dtype=complex)
    K = np.zeros((ctx.M, ctx.M))
    c = np.empty(ctx.M, dtype=complex)
    gp_int = _couple(float(z), float(Y[0].real), np.ascontiguousarray(Y[1:]),
                     ctx.phi, ctx.doped.weights, ctx.irr, ctx.kcoef, ctx.dbeta,
                     ctx.kind, ctx.params, K, c)
    return CouplingMatrix(K, gp_int * ctx.gp_scale)


def coupling_from_irradiance(I_s_nodes, I_p: float,
                             ctx: PropagationContext) -> CouplingMatrix:
    """Coupling matrix for a prescribed signal irradiance on the doped nodes."""
    K = np.zeros((ctx.M, ctx.M))
    Is = np.ascontiguousarray(I_s_nodes, dtype=float)
    gp_int = _kmatrix(Is, float(I_p), ctx.phi, ctx.doped.weights, ctx.kcoef,
                      ctx.kind, ctx.params, K)
    return CouplingMatrix(K, gp_int * ctx.gp_scale)


def rhs(z: float, Y, ctx: PropagationContext) -> np.ndarray:
    """``dY/dz`` at position ``z``."""
    Y = np.ascontiguousarray(Y, dtype=complex)
    out = np.empty_like(Y)
    K = np.zeros((ctx.M, ctx.M))
    c = np.empty(ctx.M, dtype=complex)
    _rhs(float(z), Y, out, ctx.phi, ctx.doped.weights, ctx.irr, ctx.kcoef,
         ctx.dbeta, ctx.gp_scale, ctx.kind, ctx.params, K, c)
    return out


def default_steps(ctx: PropagationContext, length: float) -> int:
    num = ctx.cfg.numerics
    if ctx.M < 2:
        return max(1, math.ceil(length * num.steps_per_meter_single_mode))
    return step_count(length, ctx.modes.beat_length, num.steps_per_beat)


def integrate(ctx: PropagationContext, y0=None, length: float | None = None,
              n_steps: int | None = None, solver: str | None = None,
              output_stride: int | None = None, target_samples: int = 2000,
              z0: float = 0.0) -> PowerTrace:
    """Fixed-step integration over ``[z0, z0 + length]``.

    The step is ``length / n_steps`` with ``n_steps`` defaulting to the
    configured steps per mode beat length.
    """
    length = ctx.spec.L if length is None else float(length)
    y0 = initial_state(ctx) if y0 is None else np.asarray(y0, dtype=complex)
    n_steps = default_steps(ctx, length) if n_steps is None else int(n_steps)
    solver = (solver or ctx.cfg.numerics.solver).lower()
    if solver not in _SOLVER_CODES:
        raise ValueError(f"unknown solver {solver!r}")
    stride = output_stride or ctx.cfg.numerics.output_stride
    if stride is None:
        stride = max(1, n_steps // target_samples)
    h = length / n_steps
    t0 = time.perf_counter()
    zs, ys, status, err = _propagate(
        y0.astype(complex), z0, h, n_steps, int(stride), _SOLVER_CODES[solver],
        ctx.phi, ctx.doped.weights, ctx.irr, ctx.kcoef, ctx.dbeta, ctx.gp_scale,
        ctx.kind, ctx.params, _DP_A, _DP_C, _DP_B, _DP_E, _DP_E7)
    wall = time.perf_counter() - t0
    if status >= 0:
        zf = z0 + status * h
        raise IntegrationError(f"non-finite state at z = {zf:.6g} m (step {status})", zf)
    return make_trace(ctx, zs, ys, n_steps=n_steps, step=h, solver=solver,
                      wall_time=wall,
                      max_error_estimate=err if solver == "dopri" else float("nan"))


def make_trace(ctx: PropagationContext, zs, ys, **kw) -> PowerTrace:
    A = ys[:, 1:]
    Ip = ys[:, 0].real
    c = A * np.exp(1j * np.multiply.outer(zs, ctx.dbeta))
    P_signal = np.einsum("sl,lm,sm->s", c.conj(), ctx.gram, c).real
    return PowerTrace(z=zs, P_pump=Ip * ctx.spec.area, P_mode=np.abs(A) ** 2,
                      P_signal=P_signal, I_p=Ip, A=A, mode_names=ctx.modes.names,
                      **kw)


def simulate(cfg: Config, **kw) -> PowerTrace:
    """Build the context for ``cfg`` and integrate the full fiber."""
    return integrate(build_context(cfg), **kw)


@dataclass(frozen=True)
class PowerOdeReport:
    residual: np.ndarray      # (samples, M)
    max_residual: float
    max_rate: float


def power_terms(trace: PowerTrace, ctx: PropagationContext):
    """Autonomous term ``2 K_ll P_l`` and exchange term ``rho_l`` at each sample."""
    S, M = trace.P_mode.shape
    auto = np.empty((S, M))
    rho = np.empty((S, M))
    for s in range(S):
        Y = np.concatenate([[trace.I_p[s]], trace.A[s]])
        K = coupling_matrix(trace.z[s], Y, ctx).K
        c = trace.A[s] * np.exp(1j * ctx.dbeta * trace.z[s])
        auto[s] = 2 * np.diag(K) * trace.P_mode[s]
        X = K * np.outer(c.conj(), c)
        rho[s] = 2 * (X.real.sum(axis=1) - np.diag(X).real)
    return auto, rho


def per_mode_power_ode_check(trace: PowerTrace, ctx: PropagationContext) -> PowerOdeReport:
    """Compare finite-difference ``dP_l/dz`` with ``2 K_ll P_l + rho_l``."""
    auto, rho = power_terms(trace, ctx)
    dP = np.gradient(trace.P_mode, trace.z, axis=0, edge_order=2)
    res = dP - (auto + rho)
    return PowerOdeReport(res, float(np.max(np.abs(res))),
                          float(np.max(np.abs(auto + rho))))
