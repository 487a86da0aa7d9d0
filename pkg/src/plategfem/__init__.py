"""Flat-top partition-of-unity GFEM for clamped plate obstacle problems."""

from .assembly import assemble_load, assemble_stiffness, energy_norm, energy_value, seminorm
from .errors import (
    CapabilityError,
    ConstructionError,
    DataError,
    GfemError,
    NonconvergenceError,
    SingularityError,
)
from .experiments import EXAMPLES, coincidence_set, emit_report, exact_example1, rates, run_convergence
from .gfem_space import GfemSpace, SmoothFunction, evaluate_field, interpolate
from .obstacle_solver import BoxConstraints, PdasOptions, build_constraints, check_kkt, pdas, solve_fixed
from .pu_grid import FlatTopParams, LShape, Rectangle, build_patch_grid, pu_eval

__version__ = "0.1.0"
