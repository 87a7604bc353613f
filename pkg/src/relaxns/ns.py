"""Pseudo-spectral reference solver for incompressible Navier-Stokes on T^2 (unit viscosity)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .model import SystemState
from .spectral import ScalarField, TensorField, TorusGrid, VectorField


class SolverDivergence(RuntimeError):
    """Raised when a solution stops being finite or exceeds the blow-up threshold."""

    def __init__(self, t: float, message: str = ""):
        super().__init__(f"solution diverged at t={t:.6g}" + (f": {message}" if message else ""))
        self.t = t


@dataclass(frozen=True)
class NsSolverConfig:
    n: int
    dt: float
    dt_out: float | None = None
    order: int = 4
    friction: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.order != 4:
            raise ValueError("only the fourth-order integrating-factor scheme is available")
        if self.dt_out is not None:
            ratio = self.dt_out / self.dt
            if ratio < 1 - 1e-9 or abs(ratio - round(ratio)) > 1e-6:
                raise ValueError("dt_out must be an integer multiple of dt")

    @property
    def out_every(self) -> int:
        return 1 if self.dt_out is None else int(round(self.dt_out / self.dt))


def nonlinear_hat(grid: TorusGrid, u_hat: np.ndarray) -> np.ndarray:
    """-P div(u (x) u), dealiased."""
    flux = grid.outer_hat(u_hat)
    return -grid.project_hat(grid.div_hat(flux))


def _linear_rate(grid: TorusGrid, friction: bool) -> np.ndarray:
    return -grid.ksq - (1.0 if friction else 0.0)


def rhs_hat(grid: TorusGrid, u_hat: np.ndarray, friction: bool = False) -> np.ndarray:
    """Full time derivative of the (projected) velocity."""
    return nonlinear_hat(grid, u_hat) + _linear_rate(grid, friction) * u_hat


class _Stepper:
    """Lawson integrating-factor RK4 with exact viscous (and friction) decay."""

    def __init__(self, grid: TorusGrid, dt: float, friction: bool):
        self.grid = grid
        self.dt = dt
        rate = _linear_rate(grid, friction)
        self.e1 = np.exp(rate * dt)
        self.e2 = np.exp(rate * dt / 2)

    def step(self, u: np.ndarray) -> np.ndarray:
        g, h, e1, e2 = self.grid, self.dt, self.e1, self.e2
        k1 = nonlinear_hat(g, u)
        k2 = nonlinear_hat(g, e2 * (u + 0.5 * h * k1))
        k3 = nonlinear_hat(g, e2 * u + 0.5 * h * k2)
        k4 = nonlinear_hat(g, e1 * u + h * e2 * k3)
        out = e1 * u + (h / 6.0) * (e1 * k1 + 2.0 * e2 * (k2 + k3) + k4)
        return g.project_hat(out)


def ns_pressure(u: VectorField) -> ScalarField:
    """Zero-mean pressure solving -lap p = div div(u (x) u)."""
    g = u.grid
    return ScalarField(g, hat=_pressure_hat(g, u.hat))


def _pressure_hat(grid: TorusGrid, u_hat: np.ndarray, w_hat: np.ndarray | None = None) -> np.ndarray:
    # -lap p = div div T  <=>  p_hat = -K_i K_j T_ij / |K|^2 ; symmetrised when w is given
    t = grid.outer_hat(u_hat, w_hat)
    if w_hat is not None:
        t = t + np.swapaxes(t, 0, 1)
    dd = grid.div_hat(grid.div_hat(t))
    return grid.inv_lap_hat(dd) * -1.0


def ns_state(u: VectorField, t: float = 0.0) -> SystemState:
    return SystemState(t, ns_pressure(u), u)


def ns_step(state: SystemState, config: NsSolverConfig) -> SystemState:
    grid = state.grid
    u = _Stepper(grid, config.dt, config.friction).step(np.asarray(state.u.hat))
    t = state.t + config.dt
    if not np.all(np.isfinite(u)):
        raise SolverDivergence(t, "non-finite velocity")
    return ns_state(VectorField(grid, hat=u), t)


@dataclass(frozen=True)
class NsTimeDerivatives:
    dp: ScalarField
    dU: TensorField
    dgrad_p: VectorField
    ddp: ScalarField


def ns_time_derivatives(state: SystemState, friction: bool = False) -> NsTimeDerivatives:
    """Time derivatives of p, U = u(x)u - grad u, grad p and d^2 p / dt^2.

    Every derivative is obtained by substituting the equations (the velocity
    time derivative is the right-hand side); no finite differences are used.
    """
    g = state.grid
    u = np.asarray(state.u.hat)
    ut = rhs_hat(g, u, friction)
    # d/dt of (-P div(u(x)u) + L u) along the flow
    utt = -g.project_hat(g.div_hat(g.outer_hat(u, ut) + g.outer_hat(ut, u))) + _linear_rate(g, friction) * ut
    dp = _pressure_hat(g, u, ut)
    cross = g.outer_hat(u, utt)
    tt = 2.0 * g.outer_hat(ut) + cross + np.swapaxes(cross, 0, 1)
    ddp = -g.inv_lap_hat(g.div_hat(g.div_hat(tt)))
    flux = g.outer_hat(u, ut)
    dU = flux + np.swapaxes(flux, 0, 1) - g.grad_hat(ut)
    return NsTimeDerivatives(
        dp=ScalarField(g, hat=dp),
        dU=TensorField(g, hat=dU),
        dgrad_p=VectorField(g, hat=g.grad_hat(dp)),
        ddp=ScalarField(g, hat=ddp),
    )


class NsTrajectory:
    """Velocity snapshots of a reference run with cubic-spline time interpolation."""

    def __init__(self, grid: TorusGrid, times, u_hats, friction: bool = False):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self.u_hats = np.asarray(u_hats)
        self.friction = friction
        self._spline = None

    def __len__(self):
        return len(self.times)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def _index(self, t: float) -> int | None:
        i = int(np.searchsorted(self.times, t))
        for j in (i - 1, i):
            if 0 <= j < len(self.times) and abs(self.times[j] - t) <= 1e-12 * max(1.0, abs(t)):
                return j
        return None

    def u_hat_at(self, t: float) -> np.ndarray:
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise ValueError(f"t={t} outside reference trajectory [{self.times[0]}, {self.times[-1]}]")
        j = self._index(t)
        if j is not None:
            return self.u_hats[j]
        if self._spline is None:
            if len(self.times) < 4:
                raise ValueError("need at least 4 snapshots to interpolate")
            real = self.u_hats.view(float)
            self._spline = CubicSpline(self.times, real, axis=0)
        return np.ascontiguousarray(self._spline(t)).view(complex)

    def velocity(self, t: float) -> VectorField:
        return VectorField(self.grid, hat=self.u_hat_at(t))

    def state_at(self, t: float) -> SystemState:
        return ns_state(self.velocity(t), t)

    def flux_hat_at(self, t: float) -> np.ndarray:
        """Dealiased u (x) u at time t."""
        return self.grid.outer_hat(self.u_hat_at(t))

    def save(self, path) -> Path:
        path = Path(path)
        header = {"format": "relaxns-ns-trajectory", "n": self.grid.n, "friction": self.friction}
        with open(path, "wb") as fh:
            np.savez(fh, header=np.array(json.dumps(header)), times=self.times, u_hats=self.u_hats)
        return path

    @classmethod
    def load(cls, path) -> NsTrajectory:
        with np.load(Path(path), allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            if header.get("format") != "relaxns-ns-trajectory":
                raise ValueError(f"{path} is not a Navier-Stokes trajectory")
            return cls(TorusGrid(header["n"]), data["times"], data["u_hats"], header["friction"])


def run_ns(u0: VectorField, config: NsSolverConfig, T: float):
    """Integrate to ``T``; returns the trajectory and diagnostics rows.

    Rows carry ``t``, kinetic ``energy`` (1/2 ||u||^2) and ``max_div`` (max |div u|).
    """
    grid = u0.grid
    if grid.n != config.n:
        raise ValueError(f"config grid n={config.n} does not match data n={grid.n}")
    nsteps = int(round(T / config.dt))
    if abs(nsteps * config.dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    stepper = _Stepper(grid, config.dt, config.friction)
    u = grid.project_hat(np.array(u0.hat))
    every = config.out_every
    times, snaps, rows = [0.0], [u.copy()], [_ns_row(grid, 0.0, u)]
    for i in range(1, nsteps + 1):
        u = stepper.step(u)
        if not np.all(np.isfinite(u)):
            raise SolverDivergence(i * config.dt, "non-finite velocity")
        if i % every == 0 or i == nsteps:
            t = i * config.dt
            times.append(t)
            snaps.append(u.copy())
            rows.append(_ns_row(grid, t, u))
    return NsTrajectory(grid, times, np.array(snaps), config.friction), rows


def _ns_row(grid: TorusGrid, t: float, u_hat: np.ndarray) -> dict:
    div = grid.ifft(grid.div_hat(u_hat))
    return {"t": t, "energy": 0.5 * grid.l2sq_hat(u_hat), "max_div": float(np.max(np.abs(div)))}


def reference_run(u0: VectorField, T: float, dt: float = 2.5e-4, dt_out: float | None = None,
                  friction: bool = False) -> NsTrajectory:
    """Convenience wrapper used by experiments: store every step unless told otherwise."""
    config = NsSolverConfig(n=u0.grid.n, dt=dt, dt_out=dt_out, friction=friction)
    traj, _ = run_ns(u0, config, T)
    return traj


def taylor_green_exact(grid: TorusGrid, t: float) -> tuple[VectorField, ScalarField]:
    """Closed-form decaying Taylor-Green velocity and pressure on the unit torus."""
    x1, x2 = grid.x
    a, b = 2 * np.pi * x1, 2 * np.pi * x2
    decay = math.exp(-8 * np.pi**2 * t)
    u = np.stack([np.sin(a) * np.cos(b), -np.cos(a) * np.sin(b)]) * decay
    p = 0.25 * (np.cos(2 * a) + np.cos(2 * b)) * decay**2
    return VectorField(grid, u), ScalarField(grid, p)
