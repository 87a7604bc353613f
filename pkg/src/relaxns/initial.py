"""Initial data for the three systems and hypothesis certificates for the convergence regimes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import RelaxParams, SystemState, ns_flux
from .ns import ns_pressure
from .spectral import ScalarField, TensorField, TorusGrid, VectorField, norm

INITIAL_DATA = ("taylor-green", "shear", "random-smooth")


def make_ns_initial(name: str, grid: TorusGrid, seed: int = 0, modes: int = 4,
                    mean=(0.0, 0.0)) -> VectorField:
    """Divergence-free velocity; zero mean unless ``mean`` is given.

    ``random-smooth`` draws standard-normal coefficients on 1 <= |k| <= modes,
    projects them and rescales to the Taylor-Green L2 norm sqrt(1/2).
    """
    x1, x2 = grid.x
    a, b = 2 * np.pi * x1, 2 * np.pi * x2
    if name == "taylor-green":
        hat = grid.fft(np.stack([np.sin(a) * np.cos(b), -np.cos(a) * np.sin(b)]))
    elif name == "shear":
        hat = grid.fft(np.stack([np.sin(b), np.zeros_like(b)]))
    elif name == "random-smooth":
        if modes > grid.n // 3:
            raise ValueError(f"modes={modes} exceeds the dealiased band of n={grid.n}")
        rng = np.random.default_rng(seed)
        band = (grid.kabs >= 1) & (grid.kabs <= modes)
        coef = rng.standard_normal((2, 2) + band.shape)
        hat = np.where(band, coef[0] + 1j * coef[1], 0.0)
        # make the rfft layout Hermitian-consistent by a round trip through real space
        hat = grid.fft(grid.ifft(hat))
        hat = grid.project_hat(hat)
        hat[:, 0, 0] = 0.0
        hat *= math.sqrt(0.5 / grid.l2sq_hat(hat))
    else:
        raise ValueError(f"unknown initial data {name!r}; choose from {INITIAL_DATA}")
    hat = grid.project_hat(hat)
    hat[:, 0, 0] = mean
    return VectorField(grid, hat=hat)


def make_well_prepared(u0_ns: VectorField, params: RelaxParams | None = None, regime: str = "thm23",
                       *, div_tol: float = 1e-10, mode: str = "equilibrium") -> SystemState:
    """``(p0^NS, u0^NS, u0 (x) u0 - grad u0)``: zero velocity gap, zero ``grad div u0``
    and ``U0`` at the flux equilibrium, so no initial layer is excited.

    ``mode="rough"`` keeps only an O(1) bound on ``(p0, U0)`` (U0 = 0); no rate is
    claimed for it.
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    g = u0_ns.grid
    div = math.sqrt(g.l2sq_hat(g.div_hat(u0_ns.hat)))
    if div > div_tol:
        raise ValueError(f"initial velocity is not divergence-free (||div u|| = {div:.3e})")
    p0 = ns_pressure(u0_ns)
    if mode == "equilibrium":
        U0 = ns_flux(u0_ns)
    elif mode == "rough":
        U0 = TensorField(g, np.zeros((2, 2, g.n, g.n)))
    else:
        raise ValueError(f"unknown preparation mode {mode!r}")
    return SystemState(0.0, p0, u0_ns, U0)


# hypothesis certificates -------------------------------------------------------

REGIMES = ("thm21", "thm22", "thm23")


@dataclass(frozen=True)
class Hypothesis:
    name: str
    value: float
    bound: float
    passed: bool
    scale: float = 1.0
    note: str = ""


def _lap_norm(fields) -> float:
    return math.sqrt(sum(f.grid.h2semi_sq_hat(f.hat) for f in fields))


def _grad_div(f) -> float:
    g = f.grid
    return math.sqrt(g.h1semi_sq_hat(g.div_hat(f.hat)))


def _regime_terms(state: SystemState, ns_state: SystemState, params: RelaxParams, regime: str):
    """(name, value, rate) triples; each hypothesis reads ``value <= C * scale * rate``."""
    p0, u0, U0 = state.p, state.u, state.U
    s = params.total
    a = params.a
    du = u0 - ns_state.u
    if regime == "thm21":
        return [
            ("||u0-u0NS||^2 + (e+d)^a ||lap u0||^2 <= C(e+d)",
             norm(du) ** 2 + s**a * _lap_norm([u0]) ** 2, s),
            ("||(p0,U0)||^2 + (e+d)^a ||lap(p0,U0)||^2 <= C",
             norm(p0) ** 2 + norm(U0) ** 2 + s**a * _lap_norm([p0, U0]) ** 2, 1.0),
        ]
    if regime == "thm22":
        return [
            ("||u0-u0NS||_H1^2 + (e+d)^a ||lap u0||^2 <= C(e+d)",
             norm(du, "H1") ** 2 + s**a * _lap_norm([u0]) ** 2, s),
            ("||(p0,U0)||_H1^2 + (e+d)^a ||lap(p0,U0)||^2 <= C",
             norm(p0, "H1") ** 2 + norm(U0, "H1") ** 2 + s**a * _lap_norm([p0, U0]) ** 2, 1.0),
        ]
    dp = p0 - ns_state.p
    return [
        ("||u0-u0NS||_H1 + sqrt(e)||p0-p0NS||_H1 + (e+d)||U0||_H1 <= C(e+d)",
         norm(du, "H1") + math.sqrt(params.epsilon) * norm(dp, "H1") + s * norm(U0, "H1"), s),
        ("||grad div u0|| + d(||lap p0|| + ||grad div U0||) <= C(e+d)",
         _grad_div(u0) + params.delta * (_lap_norm([p0]) + _grad_div(U0)), s),
        ("||lap(u0,p0,U0)|| <= C(e+d)^-a", _lap_norm([u0, p0, U0]), s ** (-a)),
    ]


def check_hypotheses(state: SystemState, ns_state: SystemState, params: RelaxParams,
                     regime: str = "thm23", C: float = 10.0) -> list[Hypothesis]:
    """Evaluate each data assumption of the chosen regime.

    The regime constants may depend on the Navier-Stokes datum, so each bound
    is ``C * scale * rate`` where ``scale = max(1, value_ref / rate)`` and
    ``value_ref`` is the same functional evaluated on the equilibrium-prepared
    datum built from ``ns_state.u``.  An extra line reports the distance of
    ``U0`` from the flux equilibrium ``u0 (x) u0 - grad u0`` (an initial-layer
    indicator, not a regime hypothesis).
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    if state.U is None:
        raise ValueError("relaxation initial state needs U")
    ref = make_well_prepared(ns_state.u, params, regime, div_tol=math.inf)
    ns_ref = SystemState(ns_state.t, ns_state.p, ns_state.u)
    terms = _regime_terms(state, ns_ref, params, regime)
    ref_terms = _regime_terms(ref, ns_ref, params, regime)
    cert = []
    for (name, value, rate), (_, ref_value, _) in zip(terms, ref_terms):
        scale = max(1.0, ref_value / rate)
        bound = C * scale * rate
        cert.append(Hypothesis(name, float(value), float(bound), bool(value <= bound), float(scale)))
    gap = norm(state.U - ns_flux(state.u))
    layer = gap > C * params.total * max(1.0, norm(ns_flux(state.u)))
    cert.append(Hypothesis("||U0 - (u0(x)u0 - grad u0)|| (equilibrium gap)", float(gap),
                           float(C * params.total * max(1.0, norm(ns_flux(state.u)))), not layer,
                           note="layer-inducing" if layer else "equilibrium"))
    return cert


def format_certificate(cert: list[Hypothesis], params: RelaxParams, regime: str) -> str:
    lines = [f"regime {regime}  epsilon={params.epsilon:g}  delta={params.delta:g}  a={params.a:g}"]
    for h in cert:
        flag = "PASS" if h.passed else "FAIL"
        extra = f"  [{h.note}]" if h.note else ""
        lines.append(f"{flag}  {h.name}: value={h.value:.6e} bound={h.bound:.6e} scale={h.scale:.6e}{extra}")
    return "\n".join(lines) + "\n"
