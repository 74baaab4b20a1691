"""Discrete integral fractional Laplacian on long cylinders ``(-l, l) x omega``."""

from .constants import FracOrder, Normalization, QuadratureError, c_ns, theta_n, verify_reduction_identity
from .grid import (CrossSection, CylinderDomain, GeometryError, GridFunction, SubdomainMask, UniformGrid,
                   build_grid, cylinder_mask, end_slabs_mask, extrude, l2_norm_sq_on, restrict_extend)
from .operator import KernelWeights, apply_operator, apply_with_exterior, assemble_weights, gagliardo_seminorm_sq
from .solver import SolveReport, SolverError, poincare_lambda_min, solve_dirichlet, solve_lifted

__version__ = "0.1.0"
