"""Desk-scale simulator for a polymeric Oldroyd-B fluid interacting with a
viscoelastic shell on a moving channel domain."""
from .coupling import (CoupledProblem, CoupledState, FixedPointConfig, Forcing, fixed_point_window,
                       run_global, solve_solute_window, solve_solvent_structure_window)
from .fluid import FluidState, compute_stress_S, compute_structure_traction, step_fluid
from .geometry import HanzawaMap, ReferenceGeometry, build_hanzawa_map, evaluate_map, transform_matrices
from .mesh import ChannelGrid, Discretization
from .shell import StructureLoad, StructureState, step_shell
from .solute import SoluteState, check_positivity, step_density, step_solute, step_stress

__version__ = "0.1.0"
