"""Entropy-variable finite-volume solver for Poisson-Nernst-Planck systems with steric effects."""
from .config import ExperimentConfig, load_preset, parse_config
from .diagnostics import (DiagnosticsRecord, decay_theory_constant, entropy_BR, entropy_production,
                          entropy_R, equilibrium_state, fit_decay, relative_entropy_BR,
                          relative_entropy_R)
from .elliptic import (assemble_laplacian, harmonic_extension, solve_poisson_linear,
                       solve_poisson_semilinear)
from .grid import BoundarySpec, Grid, SideBC, build_grid, cell_integral, dirichlet_energy
from .model import F_map, ModelParams, NewtonSettings, invert_F, steric_potential
from .scheme import RunConfig, Sinks, State, initialize, run, solve_timestep

__version__ = "0.1.0"

__all__ = [
    "BoundarySpec", "DiagnosticsRecord", "ExperimentConfig", "F_map", "Grid", "ModelParams",
    "NewtonSettings", "RunConfig", "SideBC", "Sinks", "State", "assemble_laplacian", "build_grid",
    "cell_integral", "decay_theory_constant", "dirichlet_energy", "entropy_BR", "entropy_R",
    "entropy_production", "equilibrium_state", "fit_decay", "harmonic_extension", "initialize",
    "invert_F", "load_preset", "parse_config", "relative_entropy_BR", "relative_entropy_R", "run",
    "solve_poisson_linear", "solve_poisson_semilinear", "solve_timestep", "steric_potential",
]
