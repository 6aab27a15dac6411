import math

import numpy as np
import pytest

from cmtfiber.gain import ConstantGain, gains
from cmtfiber.integrator import (IntegrationError, build_context, coupling_from_irradiance,
                                 coupling_matrix, default_steps, initial_state, integrate,
                                 per_mode_power_ode_check, power_terms, rhs)
from cmtfiber.quadrature import build_rule, mode_values, signal_irradiance


def _core_area(cfg):
    return math.pi * cfg.fiber.r_core**2


@pytest.fixture(scope="module")
def tm_mixed(tm_ctx):
    return initial_state(tm_ctx, fractions=(0.5, 0.5))


def test_initial_state(tm_ctx, tm_cfg):
    y = initial_state(tm_ctx)
    assert y[0].real * tm_cfg.fiber.area == pytest.approx(1100.0, rel=1e-15)
    assert np.sum(np.abs(y[1:]) ** 2) == pytest.approx(30.0, rel=1e-15)
    assert np.all(y[1:].imag == 0) and np.all(y[1:].real >= 0)
    with pytest.raises(ValueError):
        initial_state(tm_ctx, fractions=(0.5, 0.25, 0.25))


def test_undoped_fiber_has_no_coupling(tm_ctx, tm_mixed):
    ctx = tm_ctx.with_dopant(ConstantGain(0.0, 0.0))
    cm = coupling_matrix(0.3, tm_mixed, ctx)
    assert np.all(cm.K == 0) and cm.mean_gp == 0
    assert np.all(rhs(0.3, tm_mixed, ctx) == 0)


@pytest.mark.parametrize("which", ["tm", "yb"])
def test_constant_gain_coupling(which, request):
    cfg = request.getfixturevalue(f"{which}_cfg")
    modes = request.getfixturevalue(f"{which}_modes")
    ctx = request.getfixturevalue(f"{which}_ctx")
    g = 0.7
    K = coupling_matrix(0.0, initial_state(ctx), ctx.with_dopant(ConstantGain(g, 0.0))).K
    core = build_rule(cfg.fiber, 48, 128).core()
    phi = mode_values(modes, core)
    fb = cfg.fiber
    for l, ml in enumerate(modes):
        for m in range(modes.M):
            overlap = core.integrate(core.n * phi[:, m] * phi[:, l])
            expected = fb.k_s * g / (2 * ml.beta * ml.l2_norm_sq) * overlap
            assert K[l, m] == pytest.approx(expected, rel=1e-10, abs=1e-12 * abs(K[l, l]))
    off = K - np.diag(np.diag(K))
    assert np.max(np.abs(off)) < np.min(np.abs(np.diag(K)))


def test_launch_coupling_against_direct_evaluation(tm_cfg, tm_modes, tm_ctx):
    """Kernel K at the Tm launch against a pure-numpy evaluation on a finer rule."""
    y = initial_state(tm_ctx)
    K = coupling_matrix(0.0, y, tm_ctx).K
    fb = tm_cfg.fiber
    core = build_rule(fb, 48, 128).core()
    Is = signal_irradiance(core.x, core.y, 0.0, y[1:], tm_modes, fb)
    gs, gp = gains(Is, y[0].real, tm_cfg.dopant, fb)
    phi = mode_values(tm_modes, core)
    for l, ml in enumerate(tm_modes):
        for m in range(tm_modes.M):
            ref = fb.k_s / (2 * ml.beta * ml.l2_norm_sq) * core.integrate(gs * core.n * phi[:, l] * phi[:, m])
            assert K[l, m] == pytest.approx(ref, rel=1e-6, abs=1e-9 * abs(K[0, 0]))
    assert np.all(np.isfinite(K))
    assert K[0, 0] > 0
    # regression value from the oracle-validated gain
    assert K[0, 0] == pytest.approx(3.8760064085, rel=1e-9)


def test_coupling_from_irradiance_matches_state_path(tm_ctx, tm_mixed):
    z = 0.0042
    a = coupling_matrix(z, tm_mixed, tm_ctx)
    c = tm_mixed[1:] * np.exp(1j * tm_ctx.dbeta * z)
    u = tm_ctx.phi.T @ c
    Is = tm_ctx.irr * np.abs(u) ** 2
    b = coupling_from_irradiance(Is, tm_mixed[0].real, tm_ctx)
    np.testing.assert_allclose(a.K, b.K, rtol=1e-13)
    assert a.mean_gp == pytest.approx(b.mean_gp, rel=1e-13)


def test_rhs_structure(tm_ctx, tm_mixed):
    z = 0.0137
    cm = coupling_matrix(z, tm_mixed, tm_ctx)
    d = rhs(z, tm_mixed, tm_ctx)
    assert d[0] == pytest.approx(cm.mean_gp * tm_mixed[0], rel=1e-13)
    b = tm_ctx.modes.betas
    phase = np.exp(1j * (b[None, :] - b[:, None]) * z)  # e^{i(beta_m - beta_l) z}
    expected = (phase * cm.K) @ tm_mixed[1:]
    np.testing.assert_allclose(d[1:], expected, rtol=1e-9)


def test_single_mode_rhs_is_diagonal(single_mode_cfg):
    ctx = build_context(single_mode_cfg)
    assert ctx.M == 1
    y = initial_state(ctx)
    K = coupling_matrix(2.0, y, ctx).K
    assert rhs(2.0, y, ctx)[1] == pytest.approx(K[0, 0] * y[1], rel=1e-14)
    assert default_steps(ctx, 1.0) == single_mode_cfg.numerics.steps_per_meter_single_mode


def test_pump_decays_exponentially(tm_cfg, tm_ctx):
    alpha = 0.5
    # the stub acts on the core only; the mean over the cross-section is -alpha
    g_p = -alpha * tm_cfg.fiber.area / _core_area(tm_cfg)
    ctx = tm_ctx.with_dopant(ConstantGain(0.0, g_p))
    assert coupling_matrix(0.0, initial_state(ctx), ctx).mean_gp == pytest.approx(-alpha, rel=1e-12)
    tr = integrate(ctx, length=1.0, n_steps=2000)
    assert tr.P_pump[-1] == pytest.approx(1100.0 * math.exp(-alpha), rel=1e-10)
    np.testing.assert_allclose(tr.P_mode[-1], tr.P_mode[0], rtol=1e-14)


@pytest.mark.parametrize("which", ["tm", "yb"])
def test_reference_step_counts(which, request):
    ctx = request.getfixturevalue(f"{which}_ctx")
    ref = {"tm": 302340, "yb": 421014}[which]
    assert abs(default_steps(ctx, 10.0) - ref) <= 0.01 * ref


def _amps(tr):
    return tr.A[-1]


@pytest.mark.parametrize("which,spb", [("tm", 64), ("yb", 32)])
def test_rk4_order(which, spb, request):
    ctx = request.getfixturevalue(f"{which}_ctx")
    y0 = initial_state(ctx, fractions=np.full(ctx.M, 1 / ctx.M))
    L = 0.01
    n = round(L / ctx.modes.beat_length * spb)
    a, b, c = (_amps(integrate(ctx, y0, L, k * n)) for k in (1, 2, 4))
    ratio = np.max(np.abs(a - b)) / np.max(np.abs(b - c))
    assert 12 < ratio < 20, ratio


@pytest.mark.parametrize("which", ["tm", "yb"])
def test_step_halving_and_solvers_short(which, request):
    ctx = request.getfixturevalue(f"{which}_ctx")
    y0 = initial_state(ctx)
    L = 0.2
    n = default_steps(ctx, L)
    a = integrate(ctx, y0, L, n).powers[-1]
    b = integrate(ctx, y0, L, 2 * n).powers[-1]
    d = integrate(ctx, y0, L, n, solver="dopri")
    scale = np.max(np.abs(b))
    assert np.max(np.abs(a - b)) < 1e-8 * scale
    assert np.max(np.abs(a - d.powers[-1])) < 1e-8 * scale
    assert d.solver == "dopri" and np.isfinite(d.max_error_estimate)


def test_gauge_invariance(tm_ctx, tm_mixed):
    L = 0.05
    a = integrate(tm_ctx, tm_mixed, L)
    y = tm_mixed.copy()
    y[1:] *= np.exp(0.813j)
    b = integrate(tm_ctx, y, L)
    np.testing.assert_allclose(b.powers, a.powers, rtol=1e-12, atol=1e-12 * a.powers.max())


def test_power_trace_bookkeeping(tm_ctx, tm_mixed, tm_cfg):
    tr = integrate(tm_ctx, tm_mixed, 0.05)
    assert tr.z[0] == 0 and tr.z[-1] == pytest.approx(0.05, rel=1e-12)
    assert tr.P_pump[0] == pytest.approx(1100.0)
    assert tr.P_mode[0].sum() == pytest.approx(30.0)
    # distinct azimuthal orders: the total signal has no cross terms
    np.testing.assert_allclose(tr.P_signal, tr.P_mode.sum(axis=1), rtol=1e-10)
    assert np.all(np.diff(tr.P_pump) <= 0)
    assert np.all(tr.powers >= 0)
    assert 1500 <= tr.z.size <= 2100


def test_power_ode_residual_is_second_order(tm_ctx, tm_mixed):
    L = 0.004
    n = round(L / tm_ctx.modes.beat_length * 50)
    res = []
    for k in (1, 2):
        tr = integrate(tm_ctx, tm_mixed, L, k * n, output_stride=1)
        res.append(per_mode_power_ode_check(tr, tm_ctx).max_residual)
    assert 3.0 < res[0] / res[1] < 5.0


def test_power_ode_zero_coupling(tm_ctx, tm_mixed):
    ctx = tm_ctx.with_dopant(ConstantGain(0.0, 0.0))
    tr = integrate(ctx, tm_mixed, 0.01, output_stride=1)
    rep = per_mode_power_ode_check(tr, ctx)
    # what remains is finite-difference roundoff on the sampled z grid
    assert rep.max_rate == 0
    assert rep.max_residual < 1e-9


def test_single_mode_exchange_vanishes(single_mode_cfg):
    ctx = build_context(single_mode_cfg)
    tr = integrate(ctx, length=0.05)
    auto, rho = power_terms(tr, ctx)
    assert np.all(rho == 0)
    assert np.all(auto > 0)


def test_non_finite_state_reports_position(tm_ctx):
    ctx = tm_ctx.with_dopant(ConstantGain(1e6, 0.0))
    with pytest.raises(IntegrationError) as info:
        integrate(ctx, length=1.0, n_steps=1000)
    assert 0 < info.value.z < 1.0
    assert "non-finite" in str(info.value)


def test_unknown_solver(tm_ctx):
    with pytest.raises(ValueError):
        integrate(tm_ctx, length=0.01, solver="euler")


@pytest.mark.slow
@pytest.mark.parametrize("which", ["tm", "yb"])
def test_full_length_step_halving(which, request):
    run = request.getfixturevalue(f"{which}_equiv").long
    ctx = request.getfixturevalue(f"{which}_ctx")
    fine = integrate(ctx, initial_state(ctx), ctx.spec.L, 2 * run.n_steps,
                     target_samples=10)
    a, b = run.powers[-1], fine.powers[-1]
    assert np.max(np.abs(a - b)) < 1e-8 * np.max(np.abs(b))


@pytest.mark.slow
def test_tm_pump_monotone_full(tm_equiv):
    tr = tm_equiv.long
    assert np.all(np.diff(tr.P_pump) <= 0)
    assert np.all(np.diff(tr.P_signal) >= 0)
