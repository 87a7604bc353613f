"""The intermediate linear system forced by the Navier-Stokes flux, and its pressure/vorticity diagnostics.

Same unknowns and propagator as :mod:`relaxns.relax`; only the source changes
from ``u' (x) u'`` to the reference ``u^NS (x) u^NS``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import RelaxParams, SystemState, ns_flux
from .ns import NsTrajectory, SolverDivergence, ns_time_derivatives
from .relax import (DiagnosticsReport, RunResult, Trajectory, _from_layout, _to_layout, default_dt,
                    etd2_step, get_propagator, time_grid)
from .spectral import ScalarField, TensorField, VectorField, norm


def _flux_layout(hat: np.ndarray) -> np.ndarray:
    return _to_layout(hat.reshape((4,) + hat.shape[2:]))


def linear_step(state: SystemState, params: RelaxParams, ns_forcing, dt: float) -> SystemState:
    """One ETD2RK step of the linear system.

    ``ns_forcing`` is the spectral ``u^NS (x) u^NS`` as a TensorField (held constant
    over the step) or a pair of TensorFields at the start and end of the step;
    the Duhamel integral uses the linear-in-time interpolant between them.
    """
    grid = state.grid
    if isinstance(ns_forcing, TensorField):
        f0 = f1 = ns_forcing
    else:
        f0, f1 = ns_forcing
    ends = {state.t: _flux_layout(f0.hat), state.t + dt: _flux_layout(f1.hat)}
    prop = get_propagator(grid, params, dt)
    z = etd2_step(prop, _to_layout(state.packed_hat()), lambda z, t: ends[t], state.t)
    if not np.all(np.isfinite(z)):
        raise SolverDivergence(state.t, "non-finite state")
    return SystemState.from_packed(grid, state.t + dt, _from_layout(z))


LINEAR_COLUMNS = ["t", "err_u_H1", "err_p_H1_scaled", "f_H1", "g_L2", "E_fg", "pressure_ode_residual",
                  "curl_gap_L2", "div_u_L2"]


def run_linear(initial: SystemState, params: RelaxParams, T: float, ns_trajectory: NsTrajectory,
               dt: float | None = None, dt_out: float | None = None, threshold: float = 1e6) -> RunResult:
    """Integrate the linear system to ``T`` with forcing taken from ``ns_trajectory``."""
    grid = initial.grid
    if ns_trajectory.grid != grid:
        raise ValueError("reference trajectory uses a different grid")
    if ns_trajectory.T < initial.t + T - 1e-12:
        raise ValueError(f"reference trajectory ends at {ns_trajectory.T}, run needs {initial.t + T}")
    report = DiagnosticsReport(list(LINEAR_COLUMNS))
    z0 = initial.packed_hat()
    if T <= 0:
        return RunResult(Trajectory(grid, [initial.t], [z0]), report)
    dt, every, nsteps = time_grid(T, dt or default_dt(params), dt_out)
    prop = get_propagator(grid, params, dt)
    t0 = initial.t
    cache: dict[float, np.ndarray] = {}

    def source(z, t):
        key = round(t, 12)
        if key not in cache:
            if len(cache) > 1:
                cache.pop(next(iter(cache)))
            cache[key] = _flux_layout(ns_trajectory.flux_hat_at(t))
        return cache[key]

    z = _to_layout(z0)
    times, data = [t0], [z0]
    for i in range(1, nsteps + 1):
        t = t0 + (i - 1) * dt
        z = etd2_step(prop, z, source, t)
        if not np.all(np.isfinite(z)) or np.abs(z[..., 1:3]).sum() > threshold:
            report.blowup_time = t + dt
            report.last_stable_time = t
            err = SolverDivergence(t + dt, f"velocity above {threshold:g} or non-finite")
            err.report = report
            raise err
        if i % every == 0:
            times.append(t0 + i * dt)
            data.append(_from_layout(z))
    traj = Trajectory(grid, times, np.array(data), dt=dt)
    for row in linear_diagnostics(traj, ns_trajectory, params):
        report.add(row)
    return RunResult(traj, report)


# pressure diagnostics -----------------------------------------------------------

@dataclass(frozen=True)
class PressureAux:
    t: float
    f: ScalarField
    g: VectorField
    df: ScalarField
    E_fg: float


def _pressure_rates(state: SystemState, params: RelaxParams):
    """Exact d/dt p' and d^2/dt^2 p' from the first two linear equations."""
    g = state.grid
    eps = params.epsilon
    div_u = g.div_hat(state.u.hat)
    dp = -div_u / eps
    ddp = (g.div_hat(g.div_hat(state.U.hat)) + g.lap_hat(state.p.hat)) / eps
    return div_u, dp, ddp


def _check_aligned(trajectory: Trajectory, ns_trajectory: NsTrajectory):
    if trajectory.grid != ns_trajectory.grid:
        raise ValueError("trajectories use different grids")
    if trajectory.times[0] < ns_trajectory.times[0] - 1e-12 or trajectory.times[-1] > ns_trajectory.T + 1e-12:
        raise ValueError("reference trajectory does not cover the run")


def pressure_aux(trajectory: Trajectory, ns_trajectory: NsTrajectory, params: RelaxParams) -> list[PressureAux]:
    """``f = delta dp'/dt + p' - p^NS``, ``g = sqrt(eps delta) d(grad p')/dt`` and the
    energy ``eps ||df/dt||^2 + ||grad f||^2 + ||g||^2`` at each output time.

    All time derivatives of ``p'`` and ``p^NS`` are evaluated by substituting the
    equations, so no differencing error enters.
    """
    _check_aligned(trajectory, ns_trajectory)
    grid = trajectory.grid
    eps, dlt = params.epsilon, params.delta
    out = []
    for i in range(len(trajectory)):
        st = trajectory.state(i)
        ns = ns_trajectory.state_at(st.t)
        _, dp, ddp = _pressure_rates(st, params)
        dp_ns = ns_time_derivatives(ns, ns_trajectory.friction).dp.hat
        f = dlt * dp + st.p.hat - ns.p.hat
        df = dlt * ddp + dp - dp_ns
        gv = math.sqrt(eps * dlt) * grid.grad_hat(dp)
        E = eps * grid.l2sq_hat(df) + grid.h1semi_sq_hat(f) + grid.l2sq_hat(gv)
        out.append(PressureAux(st.t, ScalarField(grid, hat=f), VectorField(grid, hat=gv),
                               ScalarField(grid, hat=df), E))
    return out


def third_derivative(samples: np.ndarray, h: float) -> np.ndarray:
    """Centred 5-point second-order stencil; returns values at interior indices 2..N-3."""
    s = samples
    return (s[4:] - 2 * s[3:-1] + 2 * s[1:-3] - s[:-4]) / (2 * h**3)


def pressure_ode_residual(trajectory: Trajectory, ns_trajectory: NsTrajectory, params: RelaxParams,
                          max_stride: int = 4):
    """L2 norm of ``eps delta p''' - (eps+delta) lap p'_t + eps p'' - lap(p' - p^NS)``.

    ``p'_t`` and ``p''`` are substituted from the linear system; only ``p'''``
    is differenced.  Returns ``(times, residual)`` for interior output times.
    """
    _check_aligned(trajectory, ns_trajectory)
    n_out = len(trajectory)
    if n_out < 5:
        raise ValueError("need at least 5 output times for the third-derivative stencil")
    h = np.diff(trajectory.times)
    if np.ptp(h) > 1e-9 * h.mean():
        raise ValueError("output times must be uniformly spaced")
    h = float(h.mean())
    if trajectory.dt is not None and h > max_stride * trajectory.dt * (1 + 1e-9):
        raise ValueError(f"output spacing {h:g} exceeds {max_stride} solver steps; resample more densely")
    grid = trajectory.grid
    eps, dlt = params.epsilon, params.delta
    d3 = third_derivative(trajectory.data[:, 0], h)
    times, res = [], []
    for j, i in enumerate(range(2, n_out - 2)):
        st = trajectory.state(i)
        ns_p = ns_trajectory.state_at(st.t).p.hat
        div_u, dp, ddp = _pressure_rates(st, params)
        r = (eps * dlt * d3[j] - (eps + dlt) * grid.lap_hat(dp) + eps * ddp
             - grid.lap_hat(st.p.hat - ns_p))
        times.append(st.t)
        res.append(math.sqrt(grid.l2sq_hat(r)))
    return np.array(times), np.array(res)


# vorticity and divergence ------------------------------------------------------

@dataclass(frozen=True)
class VorticityAux:
    t: float
    omega: ScalarField
    Omega: VectorField
    xi: ScalarField
    X: VectorField
    curl_gap: float


def vorticity_aux(trajectory: Trajectory, ns_trajectory: NsTrajectory, params: RelaxParams):
    """Vorticities of the linear and reference flows and the layer-corrected pair ``(xi, X)``.

    Returns ``(series, sup_ratio)`` where ``sup_ratio`` is
    ``max_t ||curl(u' - u^NS)|| / (eps + delta)``.
    """
    _check_aligned(trajectory, ns_trajectory)
    grid = trajectory.grid
    dlt = params.delta
    t0 = float(trajectory.times[0])
    gap0 = None
    series = []
    for i in range(len(trajectory)):
        st = trajectory.state(i)
        ns_u = ns_trajectory.u_hat_at(st.t)
        w = grid.curl_hat(st.u.hat)
        W = grid.curl_hat(st.U.hat)
        w_ns = grid.curl_hat(ns_u)
        W_ns = grid.curl_hat(ns_flux(VectorField(grid, hat=ns_u)).hat)
        if gap0 is None:
            gap0 = W - W_ns
        xi = (w - w_ns) / math.sqrt(dlt)
        X = W - W_ns - math.exp(-(st.t - t0) / dlt) * gap0
        series.append(VorticityAux(st.t, ScalarField(grid, hat=w), VectorField(grid, hat=W),
                                   ScalarField(grid, hat=xi), VectorField(grid, hat=X),
                                   math.sqrt(grid.l2sq_hat(w - w_ns))))
    sup_ratio = max(v.curl_gap for v in series) / params.total
    return series, sup_ratio


def divergence_bound(trajectory: Trajectory, params: RelaxParams):
    """``||div u'||(t)`` and its ratio to ``eps + delta``."""
    grid = trajectory.grid
    div = np.array([math.sqrt(grid.l2sq_hat(grid.div_hat(trajectory.data[i, 1:3])))
                    for i in range(len(trajectory))])
    return trajectory.times.copy(), div, div / params.total


def linear_diagnostics(trajectory: Trajectory, ns_trajectory: NsTrajectory, params: RelaxParams) -> list[dict]:
    aux = pressure_aux(trajectory, ns_trajectory, params)
    vort, _ = vorticity_aux(trajectory, ns_trajectory, params)
    _, div, _ = divergence_bound(trajectory, params)
    residual = {}
    if len(trajectory) >= 5:
        try:
            for t, r in zip(*pressure_ode_residual(trajectory, ns_trajectory, params, max_stride=10**9)):
                residual[round(t, 12)] = r
        except ValueError:
            pass
    rows = []
    for i in range(len(trajectory)):
        st = trajectory.state(i)
        ns = ns_trajectory.state_at(st.t)
        rows.append({
            "t": st.t,
            "err_u_H1": norm(st.u - ns.u, "H1"),
            "err_p_H1_scaled": math.sqrt(params.epsilon) * norm(st.p - ns.p, "H1"),
            "f_H1": norm(aux[i].f, "H1"),
            "g_L2": norm(aux[i].g),
            "E_fg": aux[i].E_fg,
            "pressure_ode_residual": residual.get(round(st.t, 12), float("nan")),
            "curl_gap_L2": vort[i].curl_gap,
            "div_u_L2": div[i],
        })
    return rows
