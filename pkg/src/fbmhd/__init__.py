"""Numerical free-boundary incompressible ideal MHD in two dimensions."""
from .errors import (CollarMismatch, CollarViolation, DivergenceViolation, ExtrapolationTooFar,
                     FbmhdError, FixedPointDiverged, NonZeroMean, NotStarShaped, ScaleTooCoarse,
                     SolverDiverged, TangencyViolation, TaylorSignViolation, UnknownExpr)
from .functionals import distance, higher_energy
from .mhd_state import MhdState, StateConfig, assemble, diagnostics
from .stepper import RunLog, StepConfig, StepReport, run, self_convergence, step
from .surface_geometry import BoundarySeries, DomainChart, SurfaceGraph, build_surface

__version__ = "0.1.0"

__all__ = [
    "BoundarySeries", "CollarMismatch", "CollarViolation", "DivergenceViolation", "DomainChart",
    "ExtrapolationTooFar", "FbmhdError", "FixedPointDiverged", "MhdState", "NonZeroMean",
    "NotStarShaped", "RunLog", "ScaleTooCoarse", "SolverDiverged", "StateConfig", "StepConfig",
    "StepReport", "SurfaceGraph", "TangencyViolation", "TaylorSignViolation", "UnknownExpr",
    "assemble", "build_surface", "diagnostics", "distance", "higher_energy", "run",
    "self_convergence", "step",
]
