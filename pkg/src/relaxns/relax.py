"""Exponential integrator for the two-parameter relaxation system.

Unknowns per Fourier mode are packed as ``(p, u1, u2, U11, U12, U21, U22)``.
The linear part (wave terms, flux relaxation, optional friction) is propagated
exactly with per-mode matrix exponentials; the quadratic source ``u (x) u / delta``
enters through an exponential Runge-Kutta (ETD2RK) Duhamel correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expm as _expm
from .model import RelaxParams, SystemState, ns_flux, residual_from
from .ns import NsTrajectory, SolverDivergence, ns_state
from .spectral import TorusGrid, VectorField, compound_norm, norm

NVAR = 7
# packed index of U_ij is 3 + 2 i + j
U_INDEX = {(i, j): 3 + 2 * i + j for i in range(2) for j in range(2)}


def linear_symbol(k, params: RelaxParams) -> np.ndarray:
    """Real 7x7 matrix ``A(k)`` of the linearised system, ``dZ/dt = -A(k) Z``.

    ``Z = (p_hat, i u1_hat, i u2_hat, U11_hat, U12_hat, U21_hat, U22_hat)``: the
    velocity coefficients are rotated by ``i`` so that the symbol is real.  ``k``
    is an integer wavenumber pair (or an array of pairs with shape (..., 2)).
    """
    k = np.asarray(k, dtype=float)
    K = 2 * np.pi * k
    return _symbol(K[..., 0], K[..., 1], params)


def _symbol(K1, K2, params: RelaxParams) -> np.ndarray:
    K1 = np.asarray(K1, dtype=float)
    K2 = np.asarray(K2, dtype=float)
    eps, dlt = params.epsilon, params.delta
    A = np.zeros(K1.shape + (NVAR, NVAR))
    K = (K1, K2)
    for j in range(2):
        A[..., 0, 1 + j] = K[j] / eps           # eps p_t + div u = 0
        A[..., 1 + j, 0] = -K[j]               # + grad p
        for i in range(2):
            A[..., 1 + j, U_INDEX[i, j]] = -K[i]   # + div U
            A[..., U_INDEX[i, j], 1 + j] = K[i] / dlt  # delta U_t + grad u
        if params.friction:
            A[..., 1 + j, 1 + j] = 1.0
    for idx in U_INDEX.values():
        A[..., idx, idx] = 1.0 / dlt
    return A


def _symmetrizer(params: RelaxParams) -> np.ndarray:
    return np.array([math.sqrt(params.epsilon), 1, 1] + [math.sqrt(params.delta)] * 4)


def symmetrized_symbol(k, params: RelaxParams) -> np.ndarray:
    """``D A(k) D^-1`` with ``D = diag(sqrt(eps), 1, 1, sqrt(delta) x4)``:
    skew-symmetric wave part plus a nonnegative diagonal."""
    d = _symmetrizer(params)
    return d[:, None] * linear_symbol(k, params) / d[None, :]


_ROTATION = np.array([1, 1j, 1j, 1, 1, 1, 1])


class Propagator:
    """Per-mode ``exp(-A dt)`` and the ETD2RK forcing weights for one (grid, params, dt).

    ``E`` has shape (n, m, 7, 7) and acts on physical (unrotated) coefficients;
    ``phi1``/``phi2`` have shape (n, m, 7, 4) and multiply the spectral forcing
    ``u (x) u`` (the 1/delta factor is folded in).
    """

    def __init__(self, grid: TorusGrid, params: RelaxParams, dt: float):
        self.grid = grid
        self.params = params
        self.dt = dt
        d = _symmetrizer(params)
        A = _symbol(grid.K1, grid.K2, params)
        As = d[:, None] * A / d[None, :]
        M = -dt * As
        C = np.zeros(A.shape[:-2] + (NVAR, 4))
        for col, idx in enumerate(U_INDEX.values()):
            C[..., idx, col] = dt * d[idx] / params.delta
        E, P1, P2 = _expm.phi_blocks(M, C)
        t = d * _ROTATION
        self.E = E * (1.0 / t)[:, None] * t[None, :]
        self.phi1 = P1 * (1.0 / t)[:, None]
        self.phi2 = P2 * (1.0 / t)[:, None]

    def apply(self, z: np.ndarray) -> np.ndarray:
        """``E z`` for packed coefficients in (n, m, 7) layout."""
        return np.einsum("xyab,xyb->xya", self.E, z)

    def force(self, weights: np.ndarray, f: np.ndarray) -> np.ndarray:
        return np.einsum("xyab,xyb->xya", weights, f)


_CACHE: dict = {}


def get_propagator(grid: TorusGrid, params: RelaxParams, dt: float) -> Propagator:
    key = (grid.n, params.epsilon, params.delta, params.friction, float(dt))
    prop = _CACHE.get(key)
    if prop is None:
        if len(_CACHE) > 16:
            _CACHE.clear()
        prop = _CACHE[key] = Propagator(grid, params, dt)
    return prop


def default_dt(params: RelaxParams) -> float:
    return min(1e-3, params.delta / 4)


def _to_layout(z: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(z, 0, -1))


def _from_layout(z: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(z, -1, 0))


def _flux_source(grid: TorusGrid, z: np.ndarray):
    """Dealiased ``u (x) u`` in (n, m, 4) layout and max |u| on the grid."""
    u = grid.ifft(np.moveaxis(z[..., 1:3], -1, 0))
    prod = (u[:, None] * u[None, :]).reshape((4, grid.n, grid.n))
    return _to_layout(grid.dealias(grid.fft(prod))), float(np.max(np.abs(u)))


def etd2_step(prop: Propagator, z: np.ndarray, source, t: float) -> np.ndarray:
    """One ETD2RK step for layout-(n, m, 7) coefficients.

    ``source(z, t)`` returns the (n, m, 4) forcing; None disables it.
    """
    if source is None:
        return prop.apply(z)
    f0 = source(z, t)
    a = prop.apply(z) + prop.force(prop.phi1, f0)
    f1 = source(a, t + prop.dt)
    return a + prop.force(prop.phi2, f1 - f0)


def relax_step(state: SystemState, params: RelaxParams, dt: float, nonlinear: bool = True) -> SystemState:
    grid = state.grid
    prop = get_propagator(grid, params, dt)
    src = (lambda z, t: _flux_source(grid, z)[0]) if nonlinear else None
    z = etd2_step(prop, _to_layout(state.packed_hat()), src, state.t)
    if not np.all(np.isfinite(z)):
        raise SolverDivergence(state.t, "non-finite state")
    return SystemState.from_packed(grid, state.t + dt, _from_layout(z))


# trajectories and diagnostics ----------------------------------------------------

class Trajectory:
    """Packed spectral states at output times."""

    def __init__(self, grid: TorusGrid, times, data, dt: float | None = None):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self.data = np.asarray(data)
        self.dt = dt

    def __len__(self):
        return len(self.times)

    def state(self, i: int) -> SystemState:
        return SystemState.from_packed(self.grid, float(self.times[i]), self.data[i])

    @property
    def final(self) -> SystemState:
        return self.state(len(self) - 1)


@dataclass
class DiagnosticsReport:
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    blowup_time: float | None = None
    last_stable_time: float | None = None

    def add(self, row: dict):
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def sup(self, name: str) -> float:
        """Running maximum over recorded times (NaN-free)."""
        vals = self.column(name)
        return float(np.max(vals)) if len(vals) else 0.0

    def write_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.columns)
            w.writeheader()
            for r in self.rows:
                w.writerow({c: repr(float(r[c])) for c in self.columns})


RELAX_COLUMNS = ["t", "err_u_L2", "err_u_H1", "err_p_L2", "err_p_H1_scaled", "E_L2", "E_H1",
                 "div_u_L2", "max_u_inf", "err_p_H1"]


def time_grid(T: float, dt: float, dt_out: float | None):
    """Steps and output stride; dt is shrunk so that it divides dt_out."""
    if dt_out is None:
        dt_out = T / 200
    every = max(1, math.ceil(dt_out / dt - 1e-9))
    dt = dt_out / every
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(T, 1.0) or nsteps % every:
        raise ValueError(f"T={T} is not a multiple of dt_out={dt_out}")
    return dt, every, nsteps


def relax_diagnostics(state: SystemState, params: RelaxParams, ref: SystemState | None) -> dict:
    grid = state.grid
    row = {
        "t": state.t,
        "div_u_L2": math.sqrt(grid.l2sq_hat(grid.div_hat(state.u.hat))),
        "max_u_inf": norm(state.u, "Linf"),
    }
    if ref is not None:
        row.update(error_norms(state, ref, params))
    return row


def error_norms(state: SystemState, ref: SystemState, params: RelaxParams) -> dict:
    du = state.u - ref.u
    dp = state.p - ref.p
    w = residual_from((state, ref), params, "unit")
    return {
        "err_u_L2": norm(du, "L2"),
        "err_u_H1": norm(du, "H1"),
        "err_p_L2": norm(dp, "L2"),
        "err_p_H1": norm(dp, "H1"),
        "err_p_H1_scaled": math.sqrt(params.epsilon) * norm(dp, "H1"),
        "E_L2": energy(w, params, "L2"),
        "E_H1": energy(w, params, "H1"),
    }


def energy(w, params: RelaxParams, which: str = "L2") -> float:
    """``||W||^2 + (eps+delta)^a ||lap W||^2`` with the L2 or H1 norm for the first term."""
    fields = (w.q, w.v, w.V)
    g = w.q.grid
    lap = sum(g.h2semi_sq_hat(f.hat) for f in fields)
    return compound_norm(fields, which) ** 2 + params.total**params.a * lap


@dataclass
class RunResult:
    trajectory: Trajectory
    report: DiagnosticsReport


def relax_run(initial: SystemState, params: RelaxParams, T: float, dt: float | None = None,
              dt_out: float | None = None, reference: NsTrajectory | None = None,
              threshold: float = 1e6, nonlinear: bool = True) -> RunResult:
    """Advance the relaxation system to ``T``, recording every ``dt_out``.

    With a ``reference`` Navier-Stokes trajectory the report carries error norms
    and the residual energies at each output time.  Raises
    :class:`~relaxns.ns.SolverDivergence` (with ``last_stable_time`` attached to
    the report) when max |u| exceeds ``threshold``.
    """
    grid = initial.grid
    report = DiagnosticsReport(list(RELAX_COLUMNS) if reference is not None else ["t", "div_u_L2", "max_u_inf"])
    z0 = initial.packed_hat()
    if T <= 0:
        return RunResult(Trajectory(grid, [initial.t], [z0]), report)
    if reference is not None and reference.grid != grid:
        raise ValueError("reference trajectory uses a different grid")
    if reference is not None and reference.T < initial.t + T - 1e-12:
        raise ValueError(f"reference trajectory ends at {reference.T}, run needs {initial.t + T}")
    dt, every, nsteps = time_grid(T, dt or default_dt(params), dt_out)
    prop = get_propagator(grid, params, dt)

    peak = [0.0]

    def source(z, t):
        f, umax = _flux_source(grid, z)
        peak[0] = max(peak[0], umax)
        return f

    def record(t, zl):
        st = SystemState.from_packed(grid, t, _from_layout(zl))
        ref = reference.state_at(t) if reference is not None else None
        report.add(relax_diagnostics(st, params, ref))

    z = _to_layout(z0)
    times, data = [initial.t], [z0]
    record(initial.t, z)
    t0 = initial.t
    for i in range(1, nsteps + 1):
        t = t0 + (i - 1) * dt
        peak[0] = 0.0
        z = etd2_step(prop, z, source if nonlinear else None, t)
        if not np.all(np.isfinite(z)) or peak[0] > threshold:
            report.blowup_time = t + dt
            report.last_stable_time = t
            err = SolverDivergence(t + dt, f"max|u| above {threshold:g}")
            err.report = report
            raise err
        if i % every == 0:
            tn = t0 + i * dt
            times.append(tn)
            data.append(_from_layout(z))
            record(tn, z)
    return RunResult(Trajectory(grid, times, np.array(data), dt=dt), report)
