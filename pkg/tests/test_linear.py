import math

import numpy as np
import pytest

from relaxns.initial import make_ns_initial, make_well_prepared
from relaxns.linear import (LINEAR_COLUMNS, divergence_bound, linear_step, pressure_aux, pressure_ode_residual,
                            run_linear, third_derivative, vorticity_aux)
from relaxns.model import RelaxParams, SystemState
from relaxns.ns import NsTrajectory, ns_time_derivatives
from relaxns.relax import Trajectory, relax_step
from relaxns.spectral import ScalarField, TensorField, TorusGrid, VectorField, curl_vector, norm


@pytest.fixture(scope="module")
def tg_linear(tg_ref32):
    params = RelaxParams(1e-3, 1e-3)
    u0 = tg_ref32.velocity(0.0)
    res = run_linear(make_well_prepared(u0, params), params, 0.04, tg_ref32, dt=2.5e-4, dt_out=5e-4)
    return params, res


def test_columns(tg_linear):
    _, res = tg_linear
    assert res.report.columns == LINEAR_COLUMNS
    assert len(res.report.rows) == len(res.trajectory) == 81


def test_third_derivative_stencil_exact_on_cubics():
    t = np.linspace(0, 1, 11)
    h = t[1] - t[0]
    y = 2 * t**3 - t**2 + 5
    assert np.allclose(third_derivative(y, h), 12.0, atol=1e-9)
    # second order: error on sin scales like h^2
    errs = []
    for n in (41, 81):
        s = np.linspace(0, 1, n)
        errs.append(np.abs(third_derivative(np.sin(s), s[1] - s[0]) + np.cos(s[2:-2])).max())
    assert math.log2(errs[0] / errs[1]) > 1.9


def test_zero_forcing_zero_data_stays_zero():
    grid = TorusGrid(16)
    z = np.zeros((7, 16, 9), dtype=complex)
    st = SystemState.from_packed(grid, 0.0, z)
    out = linear_step(st, RelaxParams(1e-2, 1e-2), TensorField(grid, np.zeros((2, 2, 16, 16))), 1e-3)
    assert np.abs(out.packed_hat()).max() == 0


def test_linear_step_agrees_with_relax_step_when_forcing_is_own_flux(tg_ref32):
    # with u' = u^NS at t and constant-in-time forcing, the linear step's first stage is the relaxation one
    grid = tg_ref32.grid
    params = RelaxParams(1e-2, 1e-2)
    st = make_well_prepared(tg_ref32.velocity(0.0), params)
    F = TensorField(grid, hat=tg_ref32.flux_hat_at(0.0))
    a = linear_step(st, params, F, 1e-4)
    b = linear_step(st, params, (F, F), 1e-4)
    assert np.array_equal(a.packed_hat(), b.packed_hat())
    c = relax_step(st, params, 1e-4)
    assert norm(a.u - c.u) < 1e-6


def test_divergence_identity_against_differences(tg_linear):
    # eps ||dp'/dt|| = ||div u'||: compare with centred differences of the stored pressure
    params, res = tg_linear
    traj = res.trajectory
    times, div, ratio = divergence_bound(traj, params)
    assert np.allclose(ratio, div / params.total)
    h = times[1] - times[0]
    grid = traj.grid
    for i in range(10, 70, 10):
        dp = (traj.data[i + 1, 0] - traj.data[i - 1, 0]) / (2 * h)
        lhs = params.epsilon * math.sqrt(grid.l2sq_hat(dp))
        assert lhs == pytest.approx(div[i], rel=0.05)


def test_pressure_aux_initial_values(tg_linear, tg_ref32):
    # well-prepared data: f(0) = 0, g(0) = 0, df/dt(0) = -dp^NS/dt(0)
    params, res = tg_linear
    aux = pressure_aux(res.trajectory, tg_ref32, params)
    a0 = aux[0]
    assert norm(a0.f, "H1") < 1e-12 and norm(a0.g) < 1e-12
    dp_ns = ns_time_derivatives(tg_ref32.state_at(0.0)).dp
    assert norm(a0.df + dp_ns) < 1e-9
    assert a0.E_fg == pytest.approx(params.epsilon * norm(dp_ns) ** 2, rel=1e-10)
    assert all(a.E_fg >= 0 for a in aux)


def test_pressure_aux_stationary_pressure_is_trivial():
    # equal stationary pressures and u' = 0: f = g = 0 and E_fg = 0
    grid = TorusGrid(16)
    ref = NsTrajectory(grid, [0.0, 1.0, 2.0, 3.0], np.zeros((4, 2, 16, 9), dtype=complex))
    traj = Trajectory(grid, [0.0, 1.0], np.zeros((2, 7, 16, 9), dtype=complex))
    for a in pressure_aux(traj, ref, RelaxParams(1e-2, 0.3)):
        assert a.E_fg == 0 and norm(a.f) == 0


def test_pressure_ode_residual_second_order(tg_ref32):
    params = RelaxParams(1e-3, 1e-3)
    ic = make_well_prepared(tg_ref32.velocity(0.0), params)
    peaks = []
    for dt in (2.5e-4, 1.25e-4):
        res = run_linear(ic, params, 0.02, tg_ref32, dt=dt, dt_out=2 * dt)
        t, r = pressure_ode_residual(res.trajectory, tg_ref32, params)
        peaks.append(r[(t >= 0.005 - 1e-12) & (t <= 0.015 + 1e-12)].max())
    assert math.log2(peaks[0] / peaks[1]) > 1.8


def test_pressure_ode_residual_preconditions(tg_linear, tg_ref32):
    params, res = tg_linear
    short = Trajectory(res.trajectory.grid, res.trajectory.times[:4], res.trajectory.data[:4])
    with pytest.raises(ValueError, match="5 output"):
        pressure_ode_residual(short, tg_ref32, params)
    sparse = Trajectory(res.trajectory.grid, res.trajectory.times[::5], res.trajectory.data[::5], dt=2.5e-4)
    with pytest.raises(ValueError, match="exceeds"):
        pressure_ode_residual(sparse, tg_ref32, params)
    uneven = Trajectory(res.trajectory.grid, res.trajectory.times[[0, 1, 2, 4, 5, 6]],
                        res.trajectory.data[[0, 1, 2, 4, 5, 6]])
    with pytest.raises(ValueError, match="uniform"):
        pressure_ode_residual(uneven, tg_ref32, params)


def test_vorticity_layer_variables(tg_linear, tg_ref32):
    params, res = tg_linear
    series, ratio = vorticity_aux(res.trajectory, tg_ref32, params)
    # well-prepared: no initial layer, X(0) = 0, and xi starts at 0
    assert norm(series[0].X) < 1e-12 and norm(series[0].xi) < 1e-12
    assert ratio == pytest.approx(max(s.curl_gap for s in series) / params.total)
    # the reported gap is the distance to the reference vorticity
    i = int(np.argmin(np.abs(res.trajectory.times - 0.02)))
    w_ns = curl_vector(tg_ref32.velocity(0.02))
    assert series[i].curl_gap == pytest.approx(norm(series[i].omega - w_ns), rel=1e-12)
    assert norm(series[i].xi) == pytest.approx(series[i].curl_gap / math.sqrt(params.delta), rel=1e-12)


def test_run_linear_checks_reference(tg_ref32):
    params = RelaxParams(1e-2, 1e-2)
    ic = make_well_prepared(tg_ref32.velocity(0.0), params)
    with pytest.raises(ValueError, match="ends at"):
        run_linear(ic, params, 0.1, tg_ref32)
    g16 = TorusGrid(16)
    ic16 = make_well_prepared(make_ns_initial("taylor-green", g16), params)
    with pytest.raises(ValueError, match="grid"):
        run_linear(ic16, params, 0.01, tg_ref32)


def test_linear_error_shrinks_with_parameters(tg_ref32):
    sups = []
    for eps in (1e-2, 1e-3):
        params = RelaxParams(eps, eps)
        ic = make_well_prepared(tg_ref32.velocity(0.0), params)
        sups.append(run_linear(ic, params, 0.02, tg_ref32).report.sup("err_u_H1"))
    assert sups[1] < sups[0] / 5


def test_scalar_vector_types(tg_linear, tg_ref32):
    params, res = tg_linear
    a = pressure_aux(res.trajectory, tg_ref32, params)[3]
    assert isinstance(a.f, ScalarField) and isinstance(a.g, VectorField)
