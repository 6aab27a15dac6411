"""Equivalent short fiber: parameter transform, comparison and error sweep.

A fiber of length ``L`` is emulated by one of length ``L_tilde`` whose
dopant concentration is raised by ``L / L_tilde`` (Tm additionally lowers
the cross-relaxation constant by the same factor so that every population
scales uniformly).  The short fiber keeps the original propagation
constants, so it is integrated with the original step and costs roughly
``L_tilde / L`` of the full run.

Comparisons use the pullback ``zeta(zt) = zt * L / L_tilde``.  Step counts
are chosen so that the long-fiber samples fall exactly on ``zeta`` of the
short-fiber samples; the linear interpolation used for the pullback is then
exact at every compared point.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from . import gain as _gain
from .config import Config, TmDopantSpec, YbDopantSpec
from .integrator import (IntegrationError, PowerTrace, PropagationContext,
                         build_context, coupling_from_irradiance,
                         coupling_matrix, default_steps, initial_state,
                         integrate, power_terms)
from .quadrature import irradiance_factor, mode_values

# largest denominator accepted when reading L / L_tilde as a ratio p/q
_MAX_DENOMINATOR = 1000


@dataclass(frozen=True)
class EquivalentTransform:
    L: float
    L_tilde: float
    original: object
    dopant: object

    @property
    def scale(self) -> float:
        return self.L / self.L_tilde


def transform_dopant(dopant, L: float, L_tilde: float):
    """Dopant of the equivalent fiber of length ``L_tilde``.

    Tm: ``N_total -> N_total L / L_tilde`` and ``kappa_R -> kappa_R L_tilde / L``.
    Yb: ``N_total -> N_total L / L_tilde``.
    """
    if not 0 < L_tilde <= L:
        raise ValueError("need 0 < L_tilde <= L")
    s = L / L_tilde
    if isinstance(dopant, TmDopantSpec):
        return dataclasses.replace(dopant, N_total=dopant.N_total * s,
                                   kappa_R=dopant.kappa_R / s)
    if isinstance(dopant, YbDopantSpec):
        return dataclasses.replace(dopant, N_total=dopant.N_total * s)
    raise TypeError(f"no equivalent-fiber transform for {type(dopant).__name__}")


def restore_dopant(dopant, L: float, L_tilde: float):
    """Inverse of :func:`transform_dopant`: the original dopant of length ``L``."""
    if not 0 < L_tilde <= L:
        raise ValueError("need 0 < L_tilde <= L")
    s = L / L_tilde
    if isinstance(dopant, TmDopantSpec):
        return dataclasses.replace(dopant, N_total=dopant.N_total / s,
                                   kappa_R=dopant.kappa_R * s)
    if isinstance(dopant, YbDopantSpec):
        return dataclasses.replace(dopant, N_total=dopant.N_total / s)
    raise TypeError(f"no equivalent-fiber transform for {type(dopant).__name__}")


def equivalent_transform(cfg: Config, L_tilde: float) -> EquivalentTransform:
    L = cfg.fiber.L
    return EquivalentTransform(L, L_tilde, cfg.dopant,
                               transform_dopant(cfg.dopant, L, L_tilde))


@dataclass(frozen=True)
class GainScalingReport:
    scale: float
    samples: int
    max_violation: float    # max relative deviation of g(transformed) / g from scale


def gain_scaling_check(dopant, spec, scale: float, samples: int = 1000,
                       seed: int = 0, I_max: float = 1e14) -> GainScalingReport:
    """Check ``g(transformed) = scale * g(original)`` at random irradiances.

    Irradiances are log-uniform on ``[1, I_max]`` W/m^2.  The transformed
    dopant corresponds to ``L / L_tilde = scale``.
    """
    if scale < 1:
        raise ValueError("scale must be >= 1")
    rng = np.random.default_rng(seed)
    Is = 10.0 ** rng.uniform(0, math.log10(I_max), samples)
    Ip = 10.0 ** rng.uniform(0, math.log10(I_max), samples)
    tr = transform_dopant(dopant, scale, 1.0)
    worst = 0.0
    for a, b in zip(_gain.gains(Is, Ip, dopant, spec), _gain.gains(Is, Ip, tr, spec)):
        ref = scale * a
        mag = np.maximum(np.abs(ref), 1e-300)
        nz = ref != 0
        worst = max(worst, float(np.max(np.abs(b - ref)[nz] / mag[nz], initial=0.0)),
                    float(np.max(np.abs(b[~nz]), initial=0.0)))
    return GainScalingReport(scale, samples, worst)


# -- aligned grids ---------------------------------------------------------------

def _ratio(L: float, L_tilde: float) -> Fraction | None:
    f = Fraction(L / L_tilde).limit_denominator(_MAX_DENOMINATOR)
    if abs(float(f) - L / L_tilde) > 1e-12 * (L / L_tilde):
        return None
    return f


@dataclass(frozen=True)
class GridPlan:
    """Step counts and output strides making short samples map onto long ones."""

    n_long: int
    long_stride: int
    n_short: tuple[int, ...]
    short_stride: tuple[int, ...]
    aligned: bool


def plan_grids(n_base: int, L: float, L_tildes, min_samples: int = 2000) -> GridPlan:
    """Round ``n_base`` up so every ``n_long * L_tilde / L`` is an integer.

    Each short run is sampled with stride ``q`` and the long run with stride
    ``gcd(p_i)`` where ``L / L_tilde_i = p_i / q_i``, so every short sample
    has a long sample at exactly ``zeta`` of it.  Falls back to independent
    grids and interpolation when some ratio is not a small rational.
    """
    ratios = [_ratio(L, Lt) for Lt in L_tildes]
    if any(r is None for r in ratios):
        n_short = tuple(max(1, round(n_base * Lt / L)) for Lt in L_tildes)
        long_stride = max(1, n_base // min_samples)
        return GridPlan(n_base, long_stride, n_short,
                        tuple(max(1, n // min_samples) for n in n_short), False)
    P = math.lcm(*(r.numerator for r in ratios))
    n_long = -(-n_base // P) * P
    g = math.gcd(*(r.numerator for r in ratios))
    n_short = tuple(n_long * r.denominator // r.numerator for r in ratios)
    return GridPlan(n_long, g, n_short, tuple(r.denominator for r in ratios), True)


# -- comparison ------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonReport:
    """Long trace pulled back onto the short grid, compared with the short trace.

    Column 0 of the power arrays is the pump, columns 1..M the signal modes.
    """

    z_tilde: np.ndarray
    difference: np.ndarray      # (samples, M+1): P o zeta - P_tilde
    max_abs: np.ndarray         # (M+1,)
    argmax_z: np.ndarray        # (M+1,) z_tilde where max_abs is attained
    sign_changes: np.ndarray    # (M+1,)
    numerator: float
    denominator: float
    names: list[str]

    @property
    def relative(self) -> float:
        return self.numerator / self.denominator if self.denominator > 0 else math.inf

    @property
    def max_mode_abs(self) -> float:
        """Largest difference over the signal modes only."""
        return float(np.max(self.max_abs[1:]))


def _sign_changes(d: np.ndarray) -> int:
    s = np.sign(d)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def compare_traces(long: PowerTrace, short: PowerTrace, L: float,
                   L_tilde: float) -> ComparisonReport:
    """``P_l o zeta - P_tilde_l`` on the short samples, ``zeta(zt) = zt L / L_tilde``.

    The long trace is linearly interpolated at ``zeta(zt)``; on aligned grids
    every evaluation point is a stored sample.
    """
    zt = short.z
    zeta = np.minimum(zt * (L / L_tilde), long.z[-1])
    P = long.powers
    pulled = np.column_stack([np.interp(zeta, long.z, P[:, k]) for k in range(P.shape[1])])
    diff = pulled - short.powers
    absd = np.abs(diff)
    imax = np.argmax(absd, axis=0)
    max_abs = absd[imax, np.arange(diff.shape[1])]
    return ComparisonReport(
        z_tilde=zt, difference=diff, max_abs=max_abs, argmax_z=zt[imax],
        sign_changes=np.array([_sign_changes(diff[:, k]) for k in range(diff.shape[1])]),
        numerator=float(max_abs.max()), denominator=float(np.max(np.abs(P))),
        names=["pump"] + list(long.mode_names))


@dataclass
class EquivalentRun:
    transform: EquivalentTransform
    short: PowerTrace
    long: PowerTrace | None
    report: ComparisonReport | None
    plan: GridPlan


def run_equivalent(cfg: Config, L_tilde: float | None = None, compare: bool = True,
                   fractions=None, P_p0: float | None = None,
                   ctx: PropagationContext | None = None,
                   solver: str | None = None) -> EquivalentRun:
    """Integrate the equivalent short fiber and optionally the original.

    Both runs use the original step ``h``; the long step count is rounded
    up so that ``L_tilde / h`` is an integer.
    """
    L = cfg.fiber.L
    L_tilde = cfg.numerics.L_tilde if L_tilde is None else float(L_tilde)
    if L_tilde is None:
        raise ValueError("L_tilde not given and not set in the config")
    ctx = build_context(cfg) if ctx is None else ctx
    tf = equivalent_transform(cfg, L_tilde)
    plan = plan_grids(default_steps(ctx, L), L, [L_tilde])
    y0 = initial_state(ctx, fractions=fractions, P_p0=P_p0)
    short = integrate(ctx.with_dopant(tf.dopant), y0, length=L_tilde,
                      n_steps=plan.n_short[0], solver=solver,
                      output_stride=plan.short_stride[0])
    long = report = None
    if compare:
        long = integrate(ctx, y0, length=L, n_steps=plan.n_long, solver=solver,
                         output_stride=plan.long_stride)
        report = compare_traces(long, short, L, L_tilde)
    return EquivalentRun(tf, short, long, report, plan)


# -- launch enumeration and sweep ------------------------------------------------

def enumerate_launches(M: int, increment: float = 0.1) -> list[tuple[float, ...]]:
    """All splits of the signal power over ``M`` modes in steps of ``increment``.

    Returned as power fractions (amplitudes are taken real and nonnegative),
    in lexicographically decreasing order of the LP01 share.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    n = round(1 / increment)
    if n < 1 or abs(n * increment - 1) > 1e-9:
        raise ValueError("increment must divide 1")
    out = []
    # stars and bars: choose M-1 bar positions among n+M-1 slots
    for bars in combinations(range(n + M - 1), M - 1):
        parts, prev = [], -1
        for b in bars + (n + M - 1,):
            parts.append(b - prev - 1)
            prev = b
        out.append(tuple(k / n for k in parts))
    out.sort(reverse=True)
    return out


@dataclass
class SweepResult:
    P_p0: np.ndarray
    L_tilde: np.ndarray
    eps: np.ndarray             # (len(P_p0), len(L_tilde)); nan where invalid
    worst_launch: np.ndarray    # index into launches of the maximizing launch
    launches: list[tuple[float, ...]]
    failures: list[dict]
    n_long: int

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.eps)


def epsilon_sweep(cfg: Config, Pp0_grid, Ltilde_grid, launches=None,
                  increment: float = 0.1, ctx: PropagationContext | None = None,
                  solver: str | None = None, progress=None) -> SweepResult:
    """Worst-case relative power deviation over launches for each ``(P_p0, L_tilde)``.

    For every launch the long fiber is integrated once and compared with each
    short fiber on the short samples.  The deviation is the largest
    ``|P_l o zeta - P_tilde_l|`` over ``l = 0..M`` (pump included) divided by
    the largest ``|P_l|`` of the long run.  A cell whose runs fail is set to
    ``nan`` and the failure recorded.  ``progress(i, n)`` is called after
    each launch.
    """
    Pp0_grid = np.asarray(Pp0_grid, dtype=float)
    Ltilde_grid = np.asarray(Ltilde_grid, dtype=float)
    if Pp0_grid.size == 0 or Ltilde_grid.size == 0:
        raise ValueError("empty sweep grid")
    L = cfg.fiber.L
    ctx = build_context(cfg) if ctx is None else ctx
    launches = enumerate_launches(ctx.M, increment) if launches is None else list(launches)
    plan = plan_grids(default_steps(ctx, L), L, Ltilde_grid)
    short_ctx = [ctx.with_dopant(transform_dopant(cfg.dopant, L, Lt)) for Lt in Ltilde_grid]
    eps = np.zeros((Pp0_grid.size, Ltilde_grid.size))
    worst = np.full(eps.shape, -1)
    failures = []
    total = Pp0_grid.size * len(launches)
    done = 0
    for i, Pp0 in enumerate(Pp0_grid):
        for a, fr in enumerate(launches):
            y0 = initial_state(ctx, fractions=fr, P_p0=Pp0)
            try:
                long = integrate(ctx, y0, length=L, n_steps=plan.n_long,
                                 solver=solver, output_stride=plan.long_stride)
            except IntegrationError as exc:
                failures.append({"P_p0": float(Pp0), "launch": a, "L_tilde": None,
                                 "error": str(exc)})
                eps[i, :] = np.nan
                long = None
            for j, Lt in enumerate(Ltilde_grid):
                if long is None:
                    continue
                try:
                    short = integrate(short_ctx[j], y0, length=Lt, n_steps=plan.n_short[j],
                                      solver=solver, output_stride=plan.short_stride[j])
                except IntegrationError as exc:
                    failures.append({"P_p0": float(Pp0), "launch": a,
                                     "L_tilde": float(Lt), "error": str(exc)})
                    eps[i, j] = np.nan
                    continue
                e = compare_traces(long, short, L, Lt).relative
                if e > eps[i, j] or worst[i, j] < 0:
                    eps[i, j] = e
                    worst[i, j] = a
            done += 1
            if progress is not None:
                progress(done, total)
    return SweepResult(Pp0_grid, Ltilde_grid, eps, worst, launches, failures, plan.n_long)


# -- autonomy diagnostics --------------------------------------------------------

@dataclass
class AutonomyReport:
    """Per-sample measures of how far the power system is from autonomous.

    ``auto`` holds the autonomous terms ``2 K_ll P_l``; ``rho`` the mode
    exchange terms; ``eta_K`` the differences ``K_ll(Y) - kappa_ll(P)`` times
    ``2 P_l``; ``eta_gp`` the difference of mean pump gains.
    """

    z: np.ndarray
    irradiance_gap: np.ndarray      # ||I_s - I_s(P)||_2 over the cross-section
    irradiance_norm: np.ndarray     # ||I_s||_2
    auto: np.ndarray
    rho: np.ndarray
    eta_K: np.ndarray
    eta_gp: np.ndarray
    mean_gp: np.ndarray

    def _rel(self, x):
        scale = np.max(np.abs(self.auto))
        return float(np.max(np.abs(x)) / scale) if scale > 0 else float(np.max(np.abs(x)))

    @property
    def rho_relative(self) -> float:
        return self._rel(self.rho)

    @property
    def eta_K_relative(self) -> float:
        return self._rel(self.eta_K)

    @property
    def eta_gp_relative(self) -> float:
        scale = np.max(np.abs(self.mean_gp))
        return float(np.max(np.abs(self.eta_gp)) / scale) if scale > 0 else 0.0

    @property
    def irradiance_relative(self) -> float:
        n = np.max(self.irradiance_norm)
        return float(np.max(self.irradiance_gap) / n) if n > 0 else 0.0


def autonomy_diagnostics(trace: PowerTrace, ctx: PropagationContext) -> AutonomyReport:
    """Compare the coupled system with its power-only (autonomous) surrogate.

    The surrogate irradiance drops the cross terms between modes,
    ``I_s(P) = sum_m n/(mu0 c) P_m phi_m^2``, and ``kappa``, ``gamma_p`` are
    the coupling matrix and mean pump gain recomputed from it.
    """
    rule = ctx.rule
    phi_all = mode_values(ctx.modes, rule)
    irr_all = irradiance_factor(rule.n)
    phi_d = ctx.phi.T
    S = trace.z.size
    gap = np.empty(S)
    norm = np.empty(S)
    eta_K = np.empty((S, ctx.M))
    eta_gp = np.empty(S)
    mean_gp = np.empty(S)
    auto, rho = power_terms(trace, ctx)
    for s in range(S):
        z = trace.z[s]
        c = trace.A[s] * np.exp(1j * ctx.dbeta * z)
        P = trace.P_mode[s]
        Is = irr_all * np.abs(phi_all @ c) ** 2
        Ia = irr_all * (phi_all**2 @ P)
        gap[s] = math.sqrt(rule.integrate((Is - Ia) ** 2))
        norm[s] = math.sqrt(rule.integrate(Is**2))
        Y = np.concatenate([[trace.I_p[s]], trace.A[s]])
        full = coupling_matrix(z, Y, ctx)
        surrogate = coupling_from_irradiance(ctx.irr * (phi_d**2 @ P), trace.I_p[s], ctx)
        eta_K[s] = 2 * (np.diag(full.K) - np.diag(surrogate.K)) * P
        eta_gp[s] = full.mean_gp - surrogate.mean_gp
        mean_gp[s] = full.mean_gp
    return AutonomyReport(trace.z, gap, norm, auto, rho, eta_K, eta_gp, mean_gp)
