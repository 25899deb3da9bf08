"""Phase-field brittle fracture: monolithic Newton with dissipation-based arc-length
continuation, adaptive under-relaxation and hierarchical quad refinement."""

from .amr import AmrPolicy, amr_cycle
from .assembly import Discretization, assemble_global, element_system
from .config import RunConfig, load_config, preset_config
from .errors import AssemblyError, ConfigurationError, SolverFailure
from .material import Cubic, MaterialParams, Quadratic, Rational, Split, degradation, split_energy
from .mesh import DirichletBC, HierMesh, build_constraints, refine_elements, transfer_state
from .solver import Simulation, StepController, run_simulation
from .staggered import solve_staggered
from .state import SimState

__all__ = [
    "AmrPolicy", "AssemblyError", "ConfigurationError", "Cubic", "DirichletBC", "Discretization", "HierMesh",
    "MaterialParams", "Quadratic", "Rational", "RunConfig", "SimState", "Simulation", "SolverFailure", "Split",
    "StepController", "amr_cycle", "assemble_global", "build_constraints", "degradation", "element_system",
    "load_config", "preset_config", "refine_elements", "run_simulation", "solve_staggered", "split_energy",
    "transfer_state",
]
