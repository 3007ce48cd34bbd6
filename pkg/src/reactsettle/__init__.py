"""Moving-boundary finite-volume simulation of reactive settling in SBRs."""
from __future__ import annotations

from .constitutive import (SettlingParams, compression_primitive, diffusion_coefficient,
                           effective_stress_derivative, hindered_settling_velocity)
from .geometry import Geometry, SurfaceTracker, advance_surface, build_geometry, surface_cell
from .reactions import Asm1Params, ModifiedAsm1, ReactionModel, ZeroReactions, reaction_bounds, \
    reaction_increments, rate_vector
from .scheme import (CflInputs, Flows, SchemeContext, TankState, cfl_max_dt, derived_fields,
                     extraction_fluxes, full_step_unsplit, interface_fluxes, reaction_step,
                     split_step, transport_step)
from .mixing import MixedState, average_below_surface, mixed_ode_step, redistribute
from .simulator import RunRecord, Scenario, mass_balance_audit, relative_difference, run

__version__ = "0.1.0"
