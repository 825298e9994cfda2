"""2D forward-ECG toolkit.

Computes extracellular/extracardiac potentials from activation maps and
pre-shaped transmembrane-voltage fronts via two formulations (source and
balance), with a coupled heart-torso reference solver and an experiment
harness for verification, front-duration, and noise-sensitivity studies.
"""

__version__ = "0.1.0"

from .activation import ActivationMap, compute_activation, mean_front_speed
from .bidomain import BidomainConfig, BidomainRun, run_bidomain
from .config import RunConfig, parse_config, parse_config_file
from .formulations import RECIPES, RhsRecipe, solve_f1, solve_f2
from .fronts import MS0DFront, SmoothedHeaviside, build_vtilde
from .ionic import CubicIonic, MSParams, StimulusPulse, f_ms_reduced, ms_rhs, solve_ms_0d
from .mesh import TriMesh, generate_disk_in_disk, load_mesh, save_mesh
from .operators import (ConductivityMap, MassOperator, StiffnessOperator,
                        assemble_mass, assemble_stiffness, build_operators,
                        l1_boundary_norm, l2_norm, solve_neumann)

__all__ = [
    "ActivationMap", "BidomainConfig", "BidomainRun", "ConductivityMap",
    "CubicIonic", "MS0DFront", "MSParams", "MassOperator", "RECIPES",
    "RhsRecipe", "RunConfig", "SmoothedHeaviside", "StiffnessOperator",
    "StimulusPulse", "TriMesh", "assemble_mass", "assemble_stiffness",
    "build_operators", "build_vtilde", "compute_activation", "f_ms_reduced",
    "generate_disk_in_disk", "l1_boundary_norm", "l2_norm", "load_mesh",
    "mean_front_speed", "ms_rhs", "parse_config", "parse_config_file",
    "run_bidomain", "save_mesh", "solve_f1", "solve_f2", "solve_ms_0d",
    "solve_neumann",
]
