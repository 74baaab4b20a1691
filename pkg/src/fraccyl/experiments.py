"""Ladder experiments on cylinders ``Omega_l = (-l, l) x omega`` at fixed spacing.

Each run solves one problem per ladder entry and tabulates a scalar per ``l``:

* cross-section force: ``E(l) = ||u_l - u_inf||^2`` on ``Omega_{alpha l}``;
* far-support force: ``D(l) = ||u_l||^2`` on ``Omega_1``;
* linear growth: ``G(l) = ||u_l||^2 / l`` on ``Omega_l``;
* weighted ratio ``R(l) = sum u_l^2 rho / sum f_l^2 rho``.

By default ``u_inf`` solves the cross-section problem with the reduced
operator of each 2D grid (x1 summed out of the 2D weights).  Its extrusion is
then an exact discrete solution on the infinite cylinder, so ``u_l - u_inf`` is
free of the O(h^s) mismatch between separately discretized 1D and 2D
operators.  ``cross_operator="native"`` uses the stand-alone 1D weights instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import FracOrder, Normalization
from .grid import (CrossSection, CylinderDomain, GeometryError, GridFunction, UniformGrid,
                   build_grid, cylinder_mask, extrude, l2_norm_sq_on, read_profile_csv)
from .operator import apply_with_exterior, assemble_weights, reduce_to_cross_section
from .solver import DEFAULT_TOL, poincare_lambda_min, solve_with_weights
from .weights import RhoEpsLambda, SmoothPsi, gamma_threshold, psi_capital

__all__ = [
    "LadderSpec",
    "ConvergenceTable",
    "RateFit",
    "fit_rate",
    "force_profile",
    "far_support_force",
    "CrossSectionRun",
    "cross_section_run",
    "run_cross_section",
    "run_linear_growth",
    "run_far_support",
    "WeightedCheck",
    "weighted_estimate_check",
    "ExtrusionRow",
    "extrusion_residual",
    "poincare_ladder",
    "psi_decay",
    "appendix_transform",
]

_EPS = 1e-9


def _on_lines(x: float, h: float) -> bool:
    r = x / h
    return abs(r - round(r)) <= _EPS * max(1.0, abs(r))


@dataclass(frozen=True)
class LadderSpec:
    s: float
    h: float
    ells: tuple
    alpha: float = 0.5
    force: str = "one"
    eps: float | None = None
    lam: float | None = None
    norm: Normalization = Normalization.StandardFourPow
    half_width: float = 1.0
    tol: float = DEFAULT_TOL
    cross_operator: str = "reduced"

    def __post_init__(self):
        object.__setattr__(self, "s", FracOrder(self.s).s)
        object.__setattr__(self, "norm", Normalization.parse(self.norm))
        ells = tuple(float(v) for v in self.ells)
        if not ells or any(not v > 0 for v in ells):
            raise ValueError("ladder must be a non-empty list of positive half-lengths")
        if list(ells) != sorted(set(ells)):
            raise ValueError("ladder values must be strictly increasing")
        object.__setattr__(self, "ells", ells)
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.cross_operator not in ("reduced", "native"):
            raise ValueError(f"cross_operator must be 'reduced' or 'native', got {self.cross_operator!r}")

    @property
    def cross_section(self) -> CrossSection:
        return CrossSection(self.half_width)

    def grid(self, ell) -> UniformGrid:
        return build_grid(CylinderDomain(ell, self.cross_section), self.h)

    def cross_grid(self) -> UniformGrid:
        return build_grid(self.cross_section, self.h)

    def check_geometry(self, far_support: bool = False):
        """Raise :class:`GeometryError` unless every ladder grid, ``Omega_{alpha l}``
        (and for far support ``Omega_{l-1}`` and ``Omega_1``) sits on grid lines."""
        self.cross_grid()
        for ell in self.ells:
            self.grid(ell)
            if not _on_lines(self.alpha * ell, self.h):
                raise GeometryError(f"alpha*ell = {self.alpha * ell:g} is not on a grid line for h={self.h:g}")
            if far_support:
                if ell <= 1.0 or not _on_lines(ell - 1.0, self.h):
                    raise GeometryError(f"ell - 1 = {ell - 1:g} must be positive and on a grid line")
        if far_support and not _on_lines(1.0, self.h):
            raise GeometryError("Omega_1 does not fit the grid")


# ---------------------------------------------------------------- tables

@dataclass(frozen=True)
class ConvergenceTable:
    """Rows ``(l, E(l), local rate)`` with local rate ``log(E_i/E_{i+1}) / log(l_{i+1}/l_i)``.

    For a doubling ladder the rate is ``log2(E(l)/E(2l))``; the last row has none.
    """

    ells: tuple
    values: tuple
    label: str = ""

    def __post_init__(self):
        ells = tuple(float(v) for v in self.ells)
        vals = tuple(float(v) for v in self.values)
        if len(ells) != len(vals):
            raise ValueError("ells and values differ in length")
        if list(ells) != sorted(ells):
            raise ValueError("table rows must be sorted by ell")
        object.__setattr__(self, "ells", ells)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.ells)

    @property
    def local_rates(self) -> tuple:
        out = []
        for i in range(len(self.ells) - 1):
            a, b = self.values[i], self.values[i + 1]
            if a > 0 and b > 0:
                out.append(math.log(a / b) / math.log(self.ells[i + 1] / self.ells[i]))
            else:
                out.append(math.nan)
        return tuple(out) + ((math.nan,) if self.ells else ())

    @property
    def rows(self) -> list:
        return list(zip(self.ells, self.values, self.local_rates))

    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.values, self.values[1:]))

    def spread(self) -> float:
        """``max / min`` of the tabulated values."""
        return max(self.values) / min(self.values)

    def to_csv(self) -> str:
        lines = ["ell,value,local_rate"]
        for ell, v, r in self.rows:
            rate = "" if math.isnan(r) else f"{r:.17g}"
            lines.append(f"{ell:.17g},{v:.17g},{rate}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RateFit:
    exponent: float
    r2: float


def fit_rate(table: ConvergenceTable) -> RateFit:
    """Least-squares slope of ``log E`` against ``log l`` and its R^2."""
    if len(table) < 3:
        raise ValueError("a rate fit needs at least 3 rows")
    v = np.array(table.values)
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ValueError("a rate fit needs positive finite values")
    x = np.log(np.array(table.ells))
    y = np.log(v)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return RateFit(float(slope), r2)


# ---------------------------------------------------------------- forces

def force_profile(spec: str, cross: UniformGrid) -> GridFunction:
    """Cross-section force from ``one`` or ``profile:<path.csv>``."""
    if spec == "one":
        return GridFunction.from_callable(cross, lambda x: np.ones_like(x))
    if spec.startswith("profile:"):
        path = spec[len("profile:"):]
        prof = read_profile_csv(path, cross)
        return GridFunction.from_interior(cross, prof.interior)
    raise ValueError(f"force {spec!r} is not a cross-section force (use 'one' or 'profile:<path>')")


def far_support_force(grid: UniformGrid, ell: float) -> GridFunction:
    """Indicator of ``Omega_l minus Omega_{l-1}`` on the interior nodes."""
    x1 = grid.mesh()[0]
    return GridFunction.from_callable(grid, lambda *_: (np.abs(x1) >= ell - 1.0 - _EPS * grid.h) * 1.0)


def _extruded_force(f: GridFunction, grid: UniformGrid) -> GridFunction:
    return GridFunction.from_interior(grid, extrude(f, grid).interior)


# ---------------------------------------------------------------- cross section

@dataclass(frozen=True)
class CrossSectionRun:
    spec: LadderSpec
    u_ell: dict = field(repr=False)
    u_inf: dict = field(repr=False)
    iterations: dict = field(default_factory=dict)

    @property
    def asserting(self) -> bool:
        """Rate assertions are only meaningful for ``s > 1/2``."""
        return self.spec.s > 0.5

    def difference(self, ell) -> GridFunction:
        u = self.u_ell[ell]
        return u - extrude(self.u_inf[ell], u.grid)

    def energy_table(self, alpha: float | None = None) -> ConvergenceTable:
        a = self.spec.alpha if alpha is None else alpha
        vals = [l2_norm_sq_on(self.difference(ell), cylinder_mask(a * ell, self.spec.half_width))
                for ell in self.spec.ells]
        return ConvergenceTable(self.spec.ells, vals, f"E on Omega_(alpha l), alpha={a:g}")

    def omega1_table(self) -> ConvergenceTable:
        vals = [l2_norm_sq_on(self.difference(ell), cylinder_mask(1.0, self.spec.half_width))
                for ell in self.spec.ells]
        return ConvergenceTable(self.spec.ells, vals, "E on Omega_1")

    def growth_table(self) -> ConvergenceTable:
        vals = [l2_norm_sq_on(self.u_ell[ell]) / ell for ell in self.spec.ells]
        return ConvergenceTable(self.spec.ells, vals, "G")


def cross_section_run(spec: LadderSpec, f: GridFunction | None = None) -> CrossSectionRun:
    """Solve the cross-section problem and the cylinder problems of the ladder."""
    spec.check_geometry()
    cross = spec.cross_grid()
    if f is None:
        f = force_profile(spec.force, cross)
    if f.grid != cross:
        raise GeometryError("force profile must live on the cross-section grid at spacing h")
    native = None
    if spec.cross_operator == "native":
        native = solve_with_weights(assemble_weights(cross, spec.s, spec.norm), f, spec.tol).solution
    u_ell, u_inf, its = {}, {}, {}
    for ell in spec.ells:
        grid = spec.grid(ell)
        w = assemble_weights(grid, spec.s, spec.norm)
        if native is None:
            wr = reduce_to_cross_section(w)
            u_inf[ell] = solve_with_weights(wr, GridFunction(wr.grid, f.values), spec.tol).solution
        else:
            u_inf[ell] = native
        rep = solve_with_weights(w, _extruded_force(f, grid), spec.tol)
        u_ell[ell] = rep.solution
        its[ell] = rep.iterations
    return CrossSectionRun(spec, u_ell, u_inf, its)


def run_cross_section(spec: LadderSpec, f: GridFunction | None = None) -> ConvergenceTable:
    return cross_section_run(spec, f).energy_table()


def run_linear_growth(spec: LadderSpec, f: GridFunction | None = None) -> ConvergenceTable:
    return cross_section_run(spec, f).growth_table()


def appendix_transform(run: CrossSectionRun, ell) -> tuple:
    """``w_l = u_l - u_inf + psi_l u_inf`` and its largest deviation from ``v_l + psi_l u_inf``."""
    u = run.u_ell[ell]
    big = extrude(run.u_inf[ell], u.grid)
    psi = SmoothPsi(ell)(u.grid.mesh()[0])
    w = u.values + (psi - 1.0) * big.values
    other = run.difference(ell).values + psi * big.values
    return GridFunction(u.grid, w), float(np.max(np.abs(w - other)))


# ---------------------------------------------------------------- far support

def _far_support_solutions(spec: LadderSpec):
    spec.check_geometry(far_support=True)
    for ell in spec.ells:
        grid = spec.grid(ell)
        f = far_support_force(grid, ell)
        w = assemble_weights(grid, spec.s, spec.norm)
        yield ell, f, solve_with_weights(w, f, spec.tol).solution


def run_far_support(spec: LadderSpec) -> ConvergenceTable:
    vals = [l2_norm_sq_on(u, cylinder_mask(1.0, spec.half_width)) for _, _, u in _far_support_solutions(spec)]
    return ConvergenceTable(spec.ells, vals, "D on Omega_1")


@dataclass(frozen=True)
class WeightedCheck:
    eps: float
    lams: tuple
    tables: tuple  # one ConvergenceTable of R(l) per lambda
    violations: tuple  # rows with R(l) > 2 min R, per lambda

    @property
    def bounded(self) -> bool:
        return all(t.spread() <= 2.0 for t in self.tables)


def weighted_estimate_check(spec: LadderSpec, lams=None) -> WeightedCheck:
    """``R(l) = sum u_l^2 rho / sum f_l^2 rho`` for the far-support force.

    ``rho = rho_{eps,lam}`` with ``eps = spec.eps`` (default ``s``).  Without an
    explicit ``lam`` the smallest admissible one of :func:`gamma_threshold` is
    used, and twice that value as the comparison.
    """
    eps = spec.s if spec.eps is None else spec.eps
    if not eps < 2 * spec.s:
        raise ValueError(f"weighted estimate needs eps < 2s, got eps={eps}, s={spec.s}")
    if lams is None:
        lam0 = spec.lam if spec.lam is not None else gamma_threshold(eps, spec.s).lam_min
        lams = (lam0, 2.0 * lam0)
    lams = tuple(float(v) for v in lams)
    sols = list(_far_support_solutions(spec))
    tables, viol = [], []
    for lam in lams:
        rho = RhoEpsLambda(eps, lam)
        vals = []
        for ell, f, u in sols:
            grid = u.grid
            wq = cylinder_mask(ell, spec.half_width).weights(grid) * rho(grid.mesh()[0])
            vals.append(float(np.sum(wq * u.values**2)) / float(np.sum(wq * f.values**2)))
        t = ConvergenceTable(spec.ells, vals, f"R, lambda={lam:g}")
        tables.append(t)
        viol.append(sum(v > 2.0 * min(vals) for v in vals))
    return WeightedCheck(eps, lams, tuple(tables), tuple(viol))


# ---------------------------------------------------------------- extrusion

@dataclass(frozen=True)
class ExtrusionRow:
    h: float
    common: float  # max |A u* - f| over interior nodes of Omega_{l/2} shared with the coarsest grid
    all_nodes: float  # same over every interior node of Omega_{l/2}
    plateau_spread: float  # largest x1-variation of the residual inside |x1| <= l/4


def extrusion_residual(s, ell: float, h_ladder, f=None, norm=Normalization.StandardFourPow,
                       half_width: float = 1.0, tol: float = DEFAULT_TOL) -> list:
    """Residual of the extruded cross-section solution under the 2D operator.

    ``u_inf`` solves the stand-alone 1D problem at each ``h``; it is extended
    constantly in x1 on the grid and beyond it, and only evaluated.  ``f`` is a
    callable of ``x2`` (default 1).  Spacings must be nested, coarsest first.
    Near ``x2 = +-1`` the residual of a ``d^s`` profile does not shrink at a
    fixed number of nodes from the edge, so the refinement column is
    ``common``: a fixed node set, the coarsest grid's nodes.
    """
    s = FracOrder(s).s
    hs = [float(h) for h in h_ladder]
    if sorted(hs, reverse=True) != hs:
        raise ValueError("h ladder must be ordered coarsest first")
    for a, b in zip(hs, hs[1:]):
        if not _on_lines(a, b):
            raise GeometryError(f"spacing {b:g} does not nest inside {a:g}")
    fn = (lambda x: np.ones_like(x)) if f is None else f
    rows = []
    for h in hs:
        cross = build_grid(CrossSection(half_width), h)
        grid = build_grid(CylinderDomain(ell, CrossSection(half_width)), h)
        fc = GridFunction.from_callable(cross, fn)
        u = solve_with_weights(assemble_weights(cross, s, norm), fc, tol).solution if np.any(fc.values) \
            else GridFunction.zeros(cross)
        w = assemble_weights(grid, s, norm)
        au = apply_with_exterior(w, extrude(u, grid), u)
        x1, x2 = grid.mesh()
        res = np.abs(au.values - fn(x2))
        inside = (np.abs(x1) < ell / 2 - _EPS) & (np.abs(x2) < half_width - _EPS)
        r = int(round(hs[0] / h))
        idx = np.indices(grid.shape)
        common = inside & (idx[0] % r == 0) & (idx[1] % r == 0)
        plateau = (np.abs(x1) <= ell / 4 + _EPS)
        band = np.where(plateau, res, np.nan)[:, 1:-1]
        spread = float(np.nanmax(np.nanmax(band, axis=0) - np.nanmin(band, axis=0)))
        rows.append(ExtrusionRow(h, float(res[common].max()), float(res[inside].max()), spread))
    return rows


# ---------------------------------------------------------------- other ladders

def poincare_ladder(s, h: float, ells, norm=Normalization.StandardFourPow, half_width: float = 1.0,
                    rtol: float = 1e-6) -> ConvergenceTable:
    vals = []
    for ell in ells:
        grid = build_grid(CylinderDomain(ell, CrossSection(half_width)), h)
        vals.append(poincare_lambda_min(grid, s, norm, rtol=rtol).value)
    return ConvergenceTable(tuple(ells), vals, "lambda_min")


def psi_decay(spec: LadderSpec, f: GridFunction | None = None) -> ConvergenceTable:
    """``sup |Psi_l|`` over the nodes of ``Omega_{l/2}`` along the ladder."""
    cross = spec.cross_grid()
    if f is None:
        f = force_profile(spec.force, cross)
    native = None
    if spec.cross_operator == "native":
        native = solve_with_weights(assemble_weights(cross, spec.s, spec.norm), f, spec.tol).solution
    vals = []
    for ell in spec.ells:
        grid = spec.grid(ell)
        w = assemble_weights(grid, spec.s, spec.norm)
        if native is None:
            wr = reduce_to_cross_section(w)
            u_inf = solve_with_weights(wr, GridFunction(wr.grid, f.values), spec.tol).solution
            u_inf = GridFunction(cross, u_inf.values)
        else:
            u_inf = native
        vals.append(float(np.max(np.abs(psi_capital(ell, spec.s, u_inf, grid, spec.norm, w).values))))
    return ConvergenceTable(spec.ells, vals, "sup |Psi_l| on Omega_(l/2)")
