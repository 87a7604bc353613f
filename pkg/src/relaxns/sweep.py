"""Parameter sweeps over (epsilon, delta): sup-in-time errors and fitted convergence orders."""

from __future__ import annotations

import csv
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .initial import REGIMES, make_ns_initial, make_well_prepared
from .linear import run_linear, vorticity_aux
from .model import RelaxParams, residual_from
from .ns import NsTrajectory, SolverDivergence, reference_run
from .relax import Trajectory, energy, relax_run
from .spectral import TorusGrid, norm

# functional name -> what it is fitted against
FUNCTIONALS = {
    "u_L2": "eps+delta",
    "u_L2_sq": "eps+delta",
    "u_H1": "eps+delta",
    "p_H1_scaled": "eps+delta",
    "p_H1": "eps",
    "u_relax_linear_H1": "eps+delta",
    "u_linear_ns_H1": "eps+delta",
}
LINEAR_FUNCTIONALS = ("u_relax_linear_H1", "u_linear_ns_H1")

RAW_COLUMNS = [
    "epsilon", "delta", "status", "blowup_time",
    "u_L2", "u_L2_sq", "u_H1", "p_H1_scaled", "p_H1",
    "u_relax_linear_H1", "u_linear_ns_H1", "triangle_excess",
    "E0_L2", "E0_H1", "E_L2_ratio", "E_H1_ratio",
    "eps_E_fg", "eps_E_fg_ratio", "curl_ratio",
]


@dataclass(frozen=True)
class SweepPlan:
    """A ladder of ``epsilon`` values with a coupling rule for ``delta``.

    ``coupling`` is ``"delta=epsilon"``, ``"delta=epsilon^q"`` (uses ``q``) or
    ``"fixed"`` (uses ``delta``).  ``ns_dt`` is the reference step; ``dt`` is
    the relaxation/linear step (None picks ``min(1e-3, delta/4)`` per point).
    """

    ladder: tuple[float, ...]
    coupling: str = "delta=epsilon"
    q: float = 1.0
    delta: float | None = None
    n: int = 64
    T: float = 0.25
    ic: str = "taylor-green"
    seed: int = 0
    regime: str = "thm23"
    a: float = 1.0
    friction: bool = False
    dt: float | None = None
    ns_dt: float = 2.5e-4
    dt_out: float | None = None
    functionals: tuple[str, ...] = tuple(FUNCTIONALS)
    C: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "ladder", tuple(float(e) for e in self.ladder))
        object.__setattr__(self, "functionals", tuple(self.functionals))
        if len(self.ladder) < 3:
            raise ValueError("a sweep needs at least 3 ladder points")
        if any(e <= 0 for e in self.ladder):
            raise ValueError("ladder values must be positive")
        if self.coupling not in ("delta=epsilon", "delta=epsilon^q", "fixed"):
            raise ValueError(f"unknown coupling {self.coupling!r}")
        if self.coupling == "fixed" and not (self.delta and self.delta > 0):
            raise ValueError("fixed coupling needs a positive delta")
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        unknown = set(self.functionals) - set(FUNCTIONALS)
        if unknown:
            raise ValueError(f"unknown functionals {sorted(unknown)}")
        if self.regime == "thm23":
            for p in self.points():
                if p.delta > self.C * math.sqrt(p.epsilon):
                    raise ValueError(f"delta={p.delta:g} exceeds {self.C:g} sqrt(epsilon={p.epsilon:g})")

    def delta_for(self, eps: float) -> float:
        if self.coupling == "delta=epsilon":
            return eps
        if self.coupling == "delta=epsilon^q":
            return eps**self.q
        return float(self.delta)

    def points(self) -> list[RelaxParams]:
        return [RelaxParams(e, self.delta_for(e), self.a, self.friction) for e in self.ladder]

    @property
    def needs_linear(self) -> bool:
        return any(f in LINEAR_FUNCTIONALS for f in self.functionals)

    @classmethod
    def from_config(cls, cfg: dict) -> SweepPlan:
        """Build a plan from a parsed YAML/JSON config.

        Keys: ``coupling`` (``"delta=epsilon"``, ``"delta=epsilon^0.5"`` or
        ``"delta=1e-3"``), ``ladder``, ``grid``, ``dt`` (number or mapping with
        ``ns``, ``relax`` and ``out``), ``T``, ``ic`` (name or mapping with
        ``name`` and ``seed``), ``regime``, plus optional ``a``, ``friction``,
        ``functionals``.  ``outputs`` is read by the CLI.
        """
        cfg = dict(cfg)
        kw: dict = {"ladder": cfg.pop("ladder")}
        coupling = str(cfg.pop("coupling", "delta=epsilon")).replace(" ", "")
        if coupling == "delta=epsilon":
            kw["coupling"] = coupling
        elif m := re.fullmatch(r"delta=epsilon\^([0-9.eE+-]+)", coupling):
            kw.update(coupling="delta=epsilon^q", q=float(m.group(1)))
        elif m := re.fullmatch(r"delta=([0-9.eE+-]+)", coupling):
            kw.update(coupling="fixed", delta=float(m.group(1)))
        else:
            raise ValueError(f"cannot parse coupling {coupling!r}")
        if "grid" in cfg:
            kw["n"] = int(cfg.pop("grid"))
        dt = cfg.pop("dt", None)
        if isinstance(dt, dict):
            kw.update({k2: dt[k1] for k1, k2 in (("ns", "ns_dt"), ("relax", "dt"), ("out", "dt_out")) if k1 in dt})
        elif dt is not None:
            kw["dt"] = float(dt)
        ic = cfg.pop("ic", None)
        if isinstance(ic, dict):
            kw["ic"] = ic.get("name", "taylor-green")
            kw["seed"] = int(ic.get("seed", 0))
        elif ic is not None:
            kw["ic"] = ic
        cfg.pop("outputs", None)
        for key in ("T", "regime", "a", "friction", "functionals", "C", "q"):
            if key in cfg:
                kw[key] = cfg.pop(key)
        if cfg:
            raise ValueError(f"unknown config keys {sorted(cfg)}")
        return cls(**kw)


# rate fitting -------------------------------------------------------------------

class InsufficientSamples(ValueError):
    pass


@dataclass(frozen=True)
class RateFit:
    """``error ~ constant * param**order``; ``residual`` is the RMS of the natural-log misfit."""

    functional: str
    against: str
    order: float
    constant: float
    residual: float
    params: tuple[float, ...] = ()
    errors: tuple[float, ...] = ()
    note: str = ""

    def predict(self, x):
        return self.constant * np.asarray(x, dtype=float) ** self.order


def fit_rate(params, errors, functional: str = "", against: str = "") -> RateFit:
    """Least-squares line through ``(log param, log error)``.

    Zero or non-finite errors are dropped (and noted); fewer than 3 usable
    samples raises :class:`InsufficientSamples`.
    """
    x = np.asarray(params, dtype=float)
    y = np.asarray(errors, dtype=float)
    if x.shape != y.shape:
        raise ValueError("params and errors differ in length")
    ok = np.isfinite(y) & (y > 0) & (x > 0)
    dropped = int((~ok).sum())
    if ok.sum() < 3:
        raise InsufficientSamples(f"{functional or 'fit'}: {int(ok.sum())} usable samples, need 3")
    lx, ly = np.log(x[ok]), np.log(y[ok])
    order, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (order * lx + intercept)
    note = f"{dropped} zero or non-finite samples excluded" if dropped else ""
    return RateFit(functional, against, float(order), float(math.exp(intercept)),
                   float(math.sqrt(np.mean(resid**2))), tuple(x[ok]), tuple(y[ok]), note)


# energies -----------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyTrack:
    times: np.ndarray
    values: np.ndarray
    which: str
    total: float

    @property
    def initial(self) -> float:
        return float(self.values[0])

    @property
    def sup_ratio(self) -> float:
        return float(self.values.max() / self.total)


def energy_track(trajectory: Trajectory, reference: NsTrajectory, params: RelaxParams,
                 which: str = "L2") -> EnergyTrack:
    """Residual energy ``E(t)`` of a relaxation trajectory against the reference."""
    if trajectory.grid != reference.grid:
        raise ValueError("trajectories use different grids")
    if trajectory.times[-1] > reference.T + 1e-12 or trajectory.times[0] < reference.times[0] - 1e-12:
        raise ValueError("reference trajectory does not cover the run")
    vals = []
    for i in range(len(trajectory)):
        st = trajectory.state(i)
        w = residual_from((st, reference.state_at(st.t)), params, "unit")
        vals.append(energy(w, params, which))
    return EnergyTrack(trajectory.times.copy(), np.array(vals), which, params.total)


# sweeps ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    plan: SweepPlan
    raw: list[dict]
    fits: list[RateFit] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)

    def fit(self, functional: str) -> RateFit:
        for f in self.fits:
            if f.functional == functional:
                return f
        raise KeyError(functional)

    def column(self, name: str, ok_only: bool = True) -> np.ndarray:
        rows = [r for r in self.raw if r["status"] == "ok" or not ok_only]
        return np.array([r[name] for r in rows], dtype=float)

    def write_rates(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["functional", "against", "order", "constant", "fit_residual", "samples", "note"])
            for f in self.fits:
                w.writerow([f.functional, f.against, repr(f.order), repr(f.constant), repr(f.residual),
                            len(f.params), f.note])
        return path

    def write_raw(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=RAW_COLUMNS)
            w.writeheader()
            for r in self.raw:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        return path

    def write_plot_data(self, directory) -> list[Path]:
        """One ``(log x, log y)`` CSV per fitted functional."""
        directory = Path(directory)
        out = []
        for f in self.fits:
            path = directory / f"plot_{f.functional}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow([f"log_{f.against.replace('+', '_plus_')}", f"log_{f.functional}"])
                for x, y in zip(f.params, f.errors):
                    w.writerow([repr(math.log(x)), repr(math.log(y))])
            out.append(path)
        return out


def _sup(values) -> float:
    return float(np.max(values))


def run_point(plan: SweepPlan, params: RelaxParams, reference: NsTrajectory) -> dict:
    """All tracked sup-in-time values for one ladder point."""
    u0 = reference.velocity(0.0)
    row = {c: float("nan") for c in RAW_COLUMNS}
    row.update(epsilon=params.epsilon, delta=params.delta, status="ok", blowup_time=float("nan"))
    ic = make_well_prepared(u0, params, plan.regime)
    try:
        rr = relax_run(ic, params, plan.T, dt=plan.dt, dt_out=plan.dt_out, reference=reference)
        lr = run_linear(ic, params, plan.T, reference, dt=plan.dt, dt_out=plan.dt_out) if plan.needs_linear else None
    except SolverDivergence as err:
        row.update(status="diverged", blowup_time=err.t)
        return row
    rep = rr.report
    row.update(
        u_L2=rep.sup("err_u_L2"),
        u_L2_sq=rep.sup("err_u_L2") ** 2,
        u_H1=rep.sup("err_u_H1"),
        p_H1_scaled=rep.sup("err_p_H1_scaled"),
        p_H1=rep.sup("err_p_H1"),
        E0_L2=float(rep.rows[0]["E_L2"]),
        E0_H1=float(rep.rows[0]["E_H1"]),
        E_L2_ratio=rep.sup("E_L2") / params.total,
        E_H1_ratio=rep.sup("E_H1") / params.total,
    )
    if lr is not None:
        traj_r, traj_l = rr.trajectory, lr.trajectory
        if not np.allclose(traj_r.times, traj_l.times, rtol=0, atol=1e-12):
            raise RuntimeError("relaxation and linear output times differ")
        gap = np.array([norm(traj_r.state(i).u - traj_l.state(i).u, "H1") for i in range(len(traj_l))])
        lin_ns = lr.report.column("err_u_H1")
        full = rep.column("err_u_H1")
        _, curl_ratio = vorticity_aux(traj_l, reference, params)
        efg = params.epsilon * lr.report.column("E_fg")
        row.update(
            u_relax_linear_H1=_sup(gap),
            u_linear_ns_H1=_sup(lin_ns),
            triangle_excess=_sup(full - gap - lin_ns),
            eps_E_fg=_sup(efg),
            eps_E_fg_ratio=_sup(efg) / params.total**2,
            curl_ratio=curl_ratio,
        )
    return row


def _point_task(args):
    return run_point(*args)


def reference_for(plan: SweepPlan) -> NsTrajectory:
    grid = TorusGrid(plan.n)
    u0 = make_ns_initial(plan.ic, grid, seed=plan.seed)
    return reference_run(u0, plan.T, dt=plan.ns_dt, friction=plan.friction)


def run_sweep(plan: SweepPlan, reference: NsTrajectory | None = None, workers: int = 1) -> SweepResult:
    """Run every ladder point against one shared reference and fit the tracked functionals.

    Failed points are reported in ``raw`` and skipped by the fits.  Results do
    not depend on ``workers``.
    """
    if reference is None:
        reference = reference_for(plan)
    points = plan.points()
    tasks = [(plan, p, reference) for p in points]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_point_task, tasks))
    else:
        raw = [_point_task(t) for t in tasks]
    result = SweepResult(plan, raw)
    ok = [r for r in raw if r["status"] == "ok"]
    result.failures = [f"epsilon={r['epsilon']:g}: {r['status']} at t={r['blowup_time']:g}"
                       for r in raw if r["status"] != "ok"]
    for name in plan.functionals:
        against = FUNCTIONALS[name]
        x = [r["epsilon"] + r["delta"] if against == "eps+delta" else r["epsilon"] for r in ok]
        y = [r[name] for r in ok]
        try:
            result.fits.append(fit_rate(x, y, name, against))
        except InsufficientSamples as err:
            result.fits.append(RateFit(name, against, float("nan"), float("nan"), float("nan"),
                                       note=f"degenerate: {err}"))
    return result


def with_friction(plan: SweepPlan, friction: bool = True) -> SweepPlan:
    return replace(plan, friction=friction)
