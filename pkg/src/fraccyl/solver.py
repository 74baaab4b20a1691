"""Exterior-Dirichlet solves for the discrete fractional Laplacian."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .constants import Normalization
from .grid import GeometryError, GridFunction, UniformGrid, restrict_extend
from .operator import KernelWeights, apply_with_exterior, assemble_weights, matvec

__all__ = [
    "SolverError",
    "SolveReport",
    "pcg",
    "solve_dirichlet",
    "solve_with_weights",
    "solve_lifted",
    "poincare_lambda_min",
    "EigenReport",
]

DEFAULT_TOL = 1e-10


class SolverError(RuntimeError):
    """Krylov or eigen iteration did not converge within its cap."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


@dataclass(frozen=True)
class SolveReport:
    solution: GridFunction
    iterations: int
    residual: float
    wall_time: float
    history: tuple = field(default=(), repr=False)


def pcg(apply, b, diag, tol=DEFAULT_TOL, maxiter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients on flat or shaped arrays.

    Stops when ``||b - A x|| <= tol ||b||``.  Returns ``(x, iterations, history)``
    where ``history`` lists relative residuals, one per iteration.
    """
    b = np.asarray(b, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if maxiter is None:
        maxiter = max(50, int(50 * math.sqrt(b.size)))
    if bnorm == 0.0:
        return np.zeros_like(b), 0, [0.0]
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply(x) if x0 is not None else b.copy()
    inv_d = 1.0 / diag
    z = inv_d * r
    p = z.copy()
    rz = float(np.vdot(r, z))
    history = [float(np.linalg.norm(r)) / bnorm]
    for it in range(1, maxiter + 1):
        if history[-1] <= tol:
            return x, it - 1, history
        q = apply(p)
        alpha = rz / float(np.vdot(p, q))
        x += alpha * p
        r -= alpha * q
        if it % 50 == 0:
            r = b - apply(x)  # limit drift of the recursive residual
        history.append(float(np.linalg.norm(r)) / bnorm)
        z = inv_d * r
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    if history[-1] <= tol:
        return x, maxiter, history
    raise SolverError(
        f"PCG stopped after {maxiter} iterations at relative residual {history[-1]:.3e} (tol {tol:.1e})",
        history)


def _rhs(f: GridFunction, grid: UniformGrid) -> np.ndarray:
    if f.grid != grid:
        raise GeometryError("right-hand side lives on a different grid")
    return np.array(f.interior)


def solve_with_weights(w: KernelWeights, f: GridFunction, tol: float = DEFAULT_TOL,
                       x0=None) -> SolveReport:
    if not (0.0 < tol <= 1e-4):
        raise ValueError(f"tolerance must lie in (0, 1e-4], got {tol}")
    t0 = time.perf_counter()
    b = _rhs(f, w.grid)
    x, its, hist = pcg(lambda v: matvec(w, v), b, w.diagonal, tol=tol, x0=x0)
    bnorm = float(np.linalg.norm(b))
    res = float(np.linalg.norm(b - matvec(w, x))) / bnorm if bnorm else 0.0
    u = GridFunction.from_interior(w.grid, x)
    return SolveReport(u, its, res, time.perf_counter() - t0, tuple(hist))


def solve_dirichlet(grid: UniformGrid, s, f: GridFunction, norm=Normalization.StandardFourPow,
                    tol: float = DEFAULT_TOL, weights: KernelWeights | None = None) -> SolveReport:
    """Solve ``A u = f`` on interior nodes, ``u = 0`` off the domain."""
    w = weights if weights is not None else assemble_weights(grid, s, norm)
    return solve_with_weights(w, f, tol)


def solve_lifted(grid: UniformGrid, s, f: GridFunction, g: GridFunction,
                 norm=Normalization.StandardFourPow, tol: float = DEFAULT_TOL,
                 far_profile: GridFunction | None = None,
                 weights: KernelWeights | None = None) -> SolveReport:
    """Non-homogeneous exterior data ``u = g`` off the domain.

    ``g`` lives on an enclosing grid with the same spacing; beyond that grid it
    is zero, or (2D only) equal to ``far_profile(x2)`` for ``|x1|`` past the
    enclosing grid's x1 edge.  The returned solution lives on the enclosing
    grid, equals ``g`` outside ``grid`` and solves ``A u = f`` inside.
    """
    enc = g.grid
    w_enc = assemble_weights(enc, s, norm)
    ones = GridFunction.from_interior(grid, np.ones(grid.interior_shape))
    dom = restrict_extend(ones, enc).values > 0.5
    if int(dom.sum()) != grid.n_interior:
        raise GeometryError("domain grid is not contained in the enclosing grid")
    g_out = np.where(dom, 0.0, g.values)
    lift = GridFunction(enc, g_out)
    # A applied to the exterior data, read at the domain's interior nodes
    Ag = apply_with_exterior(w_enc, lift, far_profile)
    Ag_dom = restrict_extend(Ag, grid)
    rhs = f - GridFunction.from_interior(grid, Ag_dom.interior)
    rep = solve_dirichlet(grid, s, rhs, norm, tol, weights=weights)
    u = restrict_extend(rep.solution, enc).values + g_out
    return SolveReport(GridFunction(enc, u), rep.iterations, rep.residual, rep.wall_time, rep.history)


@dataclass(frozen=True)
class EigenReport:
    value: float
    vector: GridFunction
    iterations: int
    inner_iterations: int


def _positive_seed(grid: UniformGrid) -> np.ndarray:
    mesh = grid.mesh()
    v = np.ones(grid.shape)
    for x, L in zip(mesh, grid.half_lengths):
        v *= np.cos(0.5 * math.pi * x / L)
    return v[grid.interior_slices()]


def poincare_lambda_min(grid: UniformGrid, s, norm=Normalization.StandardFourPow, rtol: float = 1e-6,
                        maxiter: int = 2000, inner_tol: float = 1e-11,
                        weights: KernelWeights | None = None) -> EigenReport:
    """Smallest Rayleigh quotient ``<u, A u> / <u, u>`` by inverse iteration.

    Each step solves ``A y = x`` with :func:`pcg` warm-started from the
    previous iterate scaled by the current estimate.  The stopping test asks
    the Rayleigh quotient to move by less than ``rtol / 100`` relatively, which
    leaves a margin for the slow geometric convergence on long cylinders.
    """
    w = weights if weights is not None else assemble_weights(grid, s, norm)
    x = _positive_seed(grid)
    x /= np.linalg.norm(x)
    A = lambda v: matvec(w, v)
    lam = float(np.vdot(x, A(x)))
    inner = 0
    history = [lam]
    for it in range(1, maxiter + 1):
        y, k, _ = pcg(A, x, w.diagonal, tol=inner_tol, x0=x / lam)
        inner += k
        x = y / np.linalg.norm(y)
        lam_new = float(np.vdot(x, A(x)))
        history.append(lam_new)
        if abs(lam_new - lam) <= 1e-2 * rtol * lam_new:
            return EigenReport(lam_new, GridFunction.from_interior(grid, x), it, inner)
        lam = lam_new
    raise SolverError(f"inverse iteration did not settle in {maxiter} steps", history)
