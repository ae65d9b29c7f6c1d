"""Multi-species cross-diffusion model of thin-film deposition.

The growing film is mapped onto ``(0, 1)``; species fractions evolve under
an entropy-structured cross-diffusion system with flux boundary conditions
at the free surface.  The package provides the implicit solver, entropy and
decay diagnostics, discrete-adjoint flux optimization, and a lattice
exchange model for comparison with the macroscopic equations.
"""
from ._backend import BACKEND
from .errors import (DegenerateCell, DegenerateFit, DomainError, LineSearchFailure,
                     NonConvergence, NonDifferentiablePoint, ParseError, PVDError,
                     SchemaError, SingularJacobian, ValidationError)
from .flux import FluxSchedule, sample_fluxes, thickness_track
from .model import (EllipticityConstants, diffusion_matrix, entropy, entropy_grad,
                    entropy_grad_inv, entropy_hessian, mobility_matrix, relative_entropy)
from .solver import (DEFAULT_SCHEME, Grid, NewtonConfig, Scheme, Trajectory,
                     discretize_initial, simulate, simulate_samples)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DEFAULT_SCHEME", "DegenerateCell", "DegenerateFit", "DomainError",
    "EllipticityConstants", "FluxSchedule", "Grid", "LineSearchFailure", "NewtonConfig",
    "NonConvergence", "NonDifferentiablePoint", "ParseError", "PVDError", "SchemaError",
    "Scheme", "SingularJacobian", "Trajectory", "ValidationError", "diffusion_matrix",
    "discretize_initial", "entropy", "entropy_grad", "entropy_grad_inv", "entropy_hessian",
    "mobility_matrix", "relative_entropy", "sample_fluxes", "simulate", "simulate_samples",
    "thickness_track",
]
