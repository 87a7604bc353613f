"""State containers shared by the Navier-Stokes, relaxation and linear solvers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral import ScalarField, TensorField, TorusGrid, VectorField


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class RelaxParams:
    """Relaxation parameters: ``epsilon`` (artificial compressibility),
    ``delta`` (flux relaxation), energy exponent ``a`` and the friction switch."""

    epsilon: float
    delta: float
    a: float = 1.0
    friction: bool = False

    def __post_init__(self):
        if not (self.epsilon > 0 and self.delta > 0):
            raise ValueError(f"epsilon and delta must be positive: {self.epsilon}, {self.delta}")
        if self.a < 1:
            raise ValueError(f"energy exponent a must be >= 1, got {self.a}")

    @property
    def total(self) -> float:
        return self.epsilon + self.delta

    @property
    def mu(self) -> float:
        return math.sqrt(max(self.epsilon, self.delta))

    def as_dict(self) -> dict:
        return {"epsilon": self.epsilon, "delta": self.delta, "a": self.a, "friction": self.friction}


@dataclass(frozen=True)
class SystemState:
    """``(p, u, U)`` at time ``t``.  ``U`` is None for Navier-Stokes states."""

    t: float
    p: ScalarField
    u: VectorField
    U: TensorField | None = None

    def __post_init__(self):
        grids = {f.grid for f in (self.p, self.u, self.U) if f is not None}
        if len(grids) != 1:
            raise GridMismatchError("all fields of a state must share one grid")

    @property
    def grid(self) -> TorusGrid:
        return self.p.grid

    def packed_hat(self) -> np.ndarray:
        """Spectral coefficients stacked as (p, u1, u2, U11, U12, U21, U22)."""
        if self.U is None:
            raise ValueError("state has no flux variable U")
        return np.concatenate([self.p.hat[None], self.u.hat, self.U.hat.reshape((4,) + self.p.hat.shape)])

    @classmethod
    def from_packed(cls, grid: TorusGrid, t: float, z: np.ndarray) -> SystemState:
        return cls(
            t=t,
            p=ScalarField(grid, hat=z[0]),
            u=VectorField(grid, hat=z[1:3]),
            U=TensorField(grid, hat=z[3:7].reshape((2, 2) + z.shape[1:])),
        )


def ns_flux(u: VectorField) -> TensorField:
    """``u (x) u - grad u`` with a 2/3-dealiased product."""
    g = u.grid
    return TensorField(g, hat=g.outer_hat(g.dealias(u.hat)) - g.grad_hat(u.hat))


@dataclass(frozen=True)
class ResidualState:
    """Scaled differences ``(q, v, V)`` between two states.

    ``scaling`` is ``"unit"`` for ``(sqrt(eps) dp, du, sqrt(delta) dU)`` or ``"mu"``
    for the same triple divided by ``mu = max(sqrt(eps), sqrt(delta))``.
    """

    q: ScalarField
    v: VectorField
    V: TensorField
    scaling: str
    factor: float = field(default=1.0)


def residual_from(states: tuple[SystemState, SystemState], params: RelaxParams,
                  scaling: str = "unit", *, time_tol: float = 1e-12) -> ResidualState:
    """Residual of ``states[0]`` relative to ``states[1]``.

    A Navier-Stokes state without ``U`` uses its derived flux ``ns_flux(u)``.
    """
    a, b = states
    if a.grid != b.grid:
        raise GridMismatchError(f"grids differ: {a.grid} vs {b.grid}")
    if abs(a.t - b.t) > time_tol * max(1.0, abs(a.t)):
        raise GridMismatchError(f"times differ: {a.t} vs {b.t}")
    if scaling == "unit":
        factor = 1.0
    elif scaling == "mu":
        factor = 1.0 / params.mu
    else:
        raise ValueError(f"unknown scaling {scaling!r}")
    Ua = a.U if a.U is not None else ns_flux(a.u)
    Ub = b.U if b.U is not None else ns_flux(b.u)
    se, sd = math.sqrt(params.epsilon), math.sqrt(params.delta)
    return ResidualState(
        q=(a.p - b.p) * (se * factor),
        v=(a.u - b.u) * factor,
        V=(Ua - Ub) * (sd * factor),
        scaling=scaling,
        factor=factor,
    )


# snapshot files ----------------------------------------------------------------

SNAPSHOT_FORMAT = "relaxns-snapshot"
SNAPSHOT_VERSION = 1


def save_snapshot(path, state: SystemState, params: RelaxParams | None = None, **meta) -> Path:
    """Write a state to an ``.npz`` container.

    Keys: ``header`` (JSON string: format, version, n, t, params, meta),
    ``p`` (n, n), ``u`` (2, n, n) and, when present, ``U`` (2, 2, n, n); all
    float64 samples at ``x_j = j / n``.
    """
    path = Path(path)
    header = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "n": state.grid.n,
        "t": state.t,
        "params": params.as_dict() if params is not None else None,
        "meta": meta,
    }
    arrays = {"header": np.array(json.dumps(header, sort_keys=True)), "p": state.p.values, "u": state.u.values}
    if state.U is not None:
        arrays["U"] = state.U.values
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_snapshot(path) -> tuple[SystemState, RelaxParams | None, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != SNAPSHOT_FORMAT:
            raise ValueError(f"{path} is not a state snapshot")
        grid = TorusGrid(header["n"])
        U = TensorField(grid, data["U"]) if "U" in data.files else None
        state = SystemState(header["t"], ScalarField(grid, data["p"]), VectorField(grid, data["u"]), U)
    params = RelaxParams(**header["params"]) if header["params"] else None
    return state, params, header["meta"]
