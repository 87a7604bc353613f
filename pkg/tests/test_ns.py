import math

import numpy as np
import pytest
import sympy as sp

from relaxns.initial import make_ns_initial
from relaxns.model import ns_flux
from relaxns.ns import (NsSolverConfig, NsTrajectory, SolverDivergence, ns_pressure, ns_state, ns_step,
                        ns_time_derivatives, reference_run, run_ns, taylor_green_exact)
from relaxns.spectral import TorusGrid, VectorField, norm


def test_taylor_green_solves_navier_stokes_symbolically():
    x1, x2, t = sp.symbols("x1 x2 t")
    a, b = 2 * sp.pi * x1, 2 * sp.pi * x2
    F = sp.exp(-8 * sp.pi**2 * t)
    u = [sp.sin(a) * sp.cos(b) * F, -sp.cos(a) * sp.sin(b) * F]
    p = sp.Rational(1, 4) * (sp.cos(2 * a) + sp.cos(2 * b)) * F**2
    xs = (x1, x2)
    for j in range(2):
        adv = sum(u[i] * sp.diff(u[j], xs[i]) for i in range(2))
        lap = sum(sp.diff(u[j], x, 2) for x in xs)
        assert sp.simplify(sp.diff(u[j], t) + adv + sp.diff(p, xs[j]) - lap) == 0
    assert sp.simplify(sum(sp.diff(u[i], xs[i]) for i in range(2))) == 0


def test_pressure_poisson_matches_exact(grid32):
    u, p = taylor_green_exact(grid32, 0.0)
    assert np.allclose(ns_pressure(u).values, p.values, atol=1e-13)


def test_taylor_green_run_matches_exact(grid32):
    u0, _ = taylor_green_exact(grid32, 0.0)
    traj, rows = run_ns(u0, NsSolverConfig(32, 1e-3, dt_out=1e-2), 0.05)
    u_ex, p_ex = taylor_green_exact(grid32, 0.05)
    st = traj.state_at(0.05)
    assert norm(st.u - u_ex) / norm(u_ex) < 1e-10
    assert norm(st.p - p_ex) / norm(p_ex) < 1e-10
    assert [r["t"] for r in rows] == pytest.approx([0, 0.01, 0.02, 0.03, 0.04, 0.05])
    assert max(r["max_div"] for r in rows) < 1e-12
    # energy decays like exp(-16 pi^2 t)
    assert rows[-1]["energy"] == pytest.approx(0.25 * math.exp(-16 * math.pi**2 * 0.05), rel=1e-9)


def test_fourth_order_time_accuracy():
    # random data: halving dt should reduce the error by about 16
    grid = TorusGrid(32)
    u0 = make_ns_initial("random-smooth", grid, seed=3)
    fine = reference_run(u0, 0.04, dt=2.5e-4).velocity(0.04)
    errs = []
    for dt in (4e-3, 2e-3):
        errs.append(norm(reference_run(u0, 0.04, dt=dt).velocity(0.04) - fine))
    assert math.log2(errs[0] / errs[1]) > 3.5


def test_energy_monotone_and_divergence_free_random(grid32):
    u0 = make_ns_initial("random-smooth", grid32, seed=1)
    _, rows = run_ns(u0, NsSolverConfig(32, 1e-3), 0.05)
    e = [r["energy"] for r in rows]
    assert all(b <= a + 1e-15 for a, b in zip(e, e[1:]))
    assert max(r["max_div"] for r in rows) < 1e-11


def test_friction_mean_flow_decay(grid32):
    u0 = make_ns_initial("taylor-green", grid32, mean=(0.3, -0.2))
    traj, _ = run_ns(u0, NsSolverConfig(32, 1e-3, friction=True), 0.1)
    mean = traj.u_hats[-1][:, 0, 0].real
    assert np.allclose(mean, np.array([0.3, -0.2]) * math.exp(-0.1), rtol=1e-12)


def _richardson(f, t, h, order):
    """Fourth-order first or second time derivative from centred differences at h and 2h."""
    def diff(k):
        if order == 1:
            return (f(t + k) - f(t - k)) * (1 / (2 * k))
        return (f(t + k) - f(t) * 2.0 + f(t - k)) * (1 / k**2)
    return diff(h) * (4 / 3) - diff(2 * h) * (1 / 3)


def test_time_derivatives_against_differences(tg_ref32):
    t, h = 0.02, 2.5e-4
    st = tg_ref32.state_at(t)
    d = ns_time_derivatives(st)
    p = lambda s: tg_ref32.state_at(s).p  # noqa: E731
    assert norm(d.dp - _richardson(p, t, h, 1)) / norm(d.dp) < 1e-5
    assert norm(d.ddp - _richardson(p, t, h, 2)) / norm(d.ddp) < 1e-5
    # Taylor-Green pressure decays exactly like exp(-16 pi^2 t)
    assert norm(d.dp + st.p * (16 * math.pi**2)) / norm(d.dp) < 1e-10
    assert norm(d.ddp - st.p * (16 * math.pi**2) ** 2) / norm(d.ddp) < 1e-10


def test_time_derivatives_random_field():
    grid = TorusGrid(32)
    u0 = make_ns_initial("random-smooth", grid, seed=5)
    traj = reference_run(u0, 0.02, dt=2.5e-4)
    t, h = 0.01, 2.5e-4
    d = ns_time_derivatives(traj.state_at(t))
    p = lambda s: traj.state_at(s).p  # noqa: E731
    U = lambda s: ns_flux(traj.state_at(s).u)  # noqa: E731
    assert norm(d.dp - _richardson(p, t, h, 1)) / norm(d.dp) < 1e-5
    assert norm(d.ddp - _richardson(p, t, h, 2)) / norm(d.ddp) < 1e-4
    assert norm(d.dU - _richardson(U, t, h, 1)) / norm(d.dU) < 1e-5


def test_trajectory_interpolation_and_io(tmp_path, tg_ref32):
    # a coarser copy interpolated back onto a stored time
    coarse = NsTrajectory(tg_ref32.grid, tg_ref32.times[::8], tg_ref32.u_hats[::8])
    t = float(tg_ref32.times[100])  # interior, between coarse knots
    err = norm(coarse.velocity(t) - tg_ref32.velocity(t)) / norm(tg_ref32.velocity(t))
    assert err < 1e-5
    assert np.array_equal(coarse.u_hat_at(coarse.times[3]), coarse.u_hats[3])
    with pytest.raises(ValueError):
        coarse.u_hat_at(1.0)
    path = coarse.save(tmp_path / "traj.npz")
    back = NsTrajectory.load(path)
    assert np.array_equal(back.u_hats, coarse.u_hats) and back.grid == coarse.grid


def test_config_validation(grid32):
    with pytest.raises(ValueError):
        NsSolverConfig(32, -1.0)
    with pytest.raises(ValueError):
        NsSolverConfig(32, 1e-3, dt_out=1.5e-3)
    with pytest.raises(ValueError):
        NsSolverConfig(32, 1e-3, order=2)
    u0 = make_ns_initial("taylor-green", grid32)
    with pytest.raises(ValueError):
        run_ns(u0, NsSolverConfig(64, 1e-3), 0.01)
    with pytest.raises(ValueError):
        run_ns(u0, NsSolverConfig(32, 3e-3), 0.01)


def test_single_step_and_divergence(grid32):
    u0 = make_ns_initial("shear", grid32)
    st = ns_step(ns_state(u0), NsSolverConfig(32, 1e-3))
    # shear flow sin(2 pi x2) e1 is an exact solution decaying at 4 pi^2
    assert np.allclose(st.u.values[0], u0.values[0] * math.exp(-4 * math.pi**2 * 1e-3), atol=1e-13)
    bad = VectorField(grid32, hat=np.full((2, 32, 17), np.nan + 0j))
    with pytest.raises(SolverDivergence):
        ns_step(ns_state(bad), NsSolverConfig(32, 1e-3))
