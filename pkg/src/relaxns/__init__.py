"""Relaxation approximations of the incompressible Navier-Stokes equations on the unit 2-torus.

Pseudo-spectral solvers for the reference flow, the two-parameter relaxation
system and the intermediate linear system, plus sweep and inequality tooling.
"""

from .initial import check_hypotheses, make_ns_initial, make_well_prepared
from .linear import divergence_bound, pressure_aux, pressure_ode_residual, run_linear, vorticity_aux
from .model import RelaxParams, SystemState, load_snapshot, residual_from, save_snapshot
from .ns import NsSolverConfig, NsTrajectory, SolverDivergence, reference_run, run_ns
from .relax import relax_run, relax_step
from .spectral import ScalarField, TensorField, TorusGrid, VectorField, norm
from .sweep import RateFit, SweepPlan, fit_rate, run_sweep

__version__ = "0.1.0"

__all__ = [
    "NsSolverConfig", "NsTrajectory", "RateFit", "RelaxParams", "ScalarField", "SolverDivergence",
    "SweepPlan", "SystemState", "TensorField", "TorusGrid", "VectorField", "check_hypotheses",
    "divergence_bound", "fit_rate", "load_snapshot", "make_ns_initial", "make_well_prepared", "norm",
    "pressure_aux", "pressure_ode_residual", "reference_run", "relax_run", "relax_step",
    "residual_from", "run_linear", "run_ns", "run_sweep", "save_snapshot", "vorticity_aux",
]
