"""Lie systems: bracket closure, derived flags, reduction by 1-D principal
actions and reconstruction of full solutions from reduced ones."""

from . import geometry, liealg, models, ode, principal, reconstruct, symexpr
from ._kernels import available_backends, get_backend
from .errors import *  # noqa: F401,F403
from .geometry import (
    Chart,
    KForm,
    VectorField,
    derived_flag_ranks,
    determinant,
    exterior_derivative,
    flag_profile,
    interior,
    lie_bracket,
    lie_derivative_form,
    pair,
    wedge,
)
from .liealg import LieBasis, NonClosureEvidence, close_under_brackets, structure_constants, verify_table
from .ode import RK4, Adaptive, ControlSignal, TDepVectorField, Trajectory, integrate, quadrature
from .principal import Connection1D, FiberAction, horizontal_lift_field, pushforward, verify_connection
from .reconstruct import ReconstructionReport, reconstruct as reconstruct_solution, residual_sup

__version__ = "0.1.0"
