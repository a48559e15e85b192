"""Numerical lab for curvature flows of convex bodies given by support functions."""
from .elliptic import EllipticSolution, fourier_solve_circle, newton_solve
from .flow import FlowConfig, FlowState, RunOutcome, functional_J, run, speed, step, theta_bisection
from .geometry import BodyMetrics, SupportField, curvature_matrix, radii, steiner_point
from .sphere import SphereGrid
from .xi import XiResult, solve_xi

__version__ = "0.1.0"

__all__ = ["BodyMetrics", "EllipticSolution", "FlowConfig", "FlowState", "RunOutcome", "SphereGrid",
           "SupportField", "XiResult", "curvature_matrix", "fourier_solve_circle", "functional_J",
           "newton_solve", "radii", "run", "solve_xi", "speed", "steiner_point", "step", "theta_bisection"]
