"""Uniform node-centred grids on boxes ``(-L_1, L_1) x ... x (-L_d, L_d)``.

Nodes sit at ``x_i = -L + i h`` for ``i = 0 .. 2L/h`` on every axis, so all
box corners are grid nodes and grids with the same ``h`` are nested.
Boundary nodes always belong to the exterior of the open box.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "GeometryError",
    "CrossSection",
    "CylinderDomain",
    "UniformGrid",
    "GridFunction",
    "SubdomainMask",
    "build_grid",
    "l2_norm_sq_on",
    "restrict_extend",
    "extrude",
    "cylinder_mask",
    "end_slabs_mask",
    "full_mask",
]

_DIV_TOL = 1e-9


class GeometryError(ValueError):
    """Grid spacing, domain sizes or masks do not line up."""


@dataclass(frozen=True)
class CrossSection:
    half_width: float = 1.0

    def __post_init__(self):
        if not self.half_width > 0:
            raise GeometryError(f"cross-section half width must be positive, got {self.half_width}")

    @property
    def dimension(self) -> int:
        return 1


@dataclass(frozen=True)
class CylinderDomain:
    ell: float
    cross_section: CrossSection = field(default_factory=CrossSection)

    def __post_init__(self):
        if not self.ell > 0:
            raise GeometryError(f"cylinder half-length ell must be positive, got {self.ell}")

    @property
    def half_lengths(self) -> tuple:
        return (float(self.ell), float(self.cross_section.half_width))


def _steps(length: float, h: float, axis: str) -> int:
    ratio = 2.0 * length / h
    n = int(round(ratio))
    if n < 2 or abs(ratio - n) > _DIV_TOL * max(1.0, ratio):
        raise GeometryError(
            f"axis {axis}: 2*{length:g}/h = {ratio:.6g} is not an integer >= 2 (h={h:g})")
    return n


@dataclass(frozen=True)
class UniformGrid:
    h: float
    half_lengths: tuple
    steps: tuple

    @property
    def dim(self) -> int:
        return len(self.half_lengths)

    @property
    def shape(self) -> tuple:
        """Node counts per axis, boundary nodes included."""
        return tuple(n + 1 for n in self.steps)

    @property
    def interior_shape(self) -> tuple:
        return tuple(n - 1 for n in self.steps)

    @property
    def n_interior(self) -> int:
        return int(np.prod(self.interior_shape))

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def axis(self, a: int) -> np.ndarray:
        return -self.half_lengths[a] + self.h * np.arange(self.steps[a] + 1)

    def mesh(self) -> tuple:
        return np.meshgrid(*[self.axis(a) for a in range(self.dim)], indexing="ij")

    def interior_slices(self) -> tuple:
        return tuple(slice(1, n) for n in self.steps)

    def offset_in(self, other: "UniformGrid") -> tuple:
        """Index offset of this grid's node 0 inside ``other`` (which must contain it)."""
        if self.dim != other.dim or abs(self.h - other.h) > _DIV_TOL * self.h:
            raise GeometryError("grids differ in dimension or spacing")
        offs = []
        for a in range(self.dim):
            d = (other.half_lengths[a] - self.half_lengths[a]) / self.h
            k = int(round(d))
            if abs(d - k) > _DIV_TOL * max(1.0, abs(d)):
                raise GeometryError(f"axis {a}: node sets are not nested")
            offs.append(k)
        return tuple(offs)


def build_grid(domain, h: float) -> UniformGrid:
    """Grid for a :class:`CylinderDomain` (2D) or a :class:`CrossSection` (1D)."""
    h = float(h)
    if not h > 0:
        raise GeometryError(f"grid spacing must be positive, got {h}")
    if isinstance(domain, CylinderDomain):
        lengths = domain.half_lengths
        names = ("x1", "x2")
    elif isinstance(domain, CrossSection):
        lengths = (float(domain.half_width),)
        names = ("x2",)
    else:
        lengths = tuple(float(v) for v in np.atleast_1d(domain))
        names = tuple(f"x{a + 1}" for a in range(len(lengths)))
    steps = tuple(_steps(L, h, name) for L, name in zip(lengths, names))
    return UniformGrid(h, tuple(lengths), steps)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Node values of a function on ``grid``, zero everywhere off the grid.

    ``values`` covers all nodes, boundary ones included.  Discrete operators
    only read the interior nodes, so the zero exterior extension is built in.
    """

    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise GeometryError(f"values have shape {v.shape}, grid needs {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_interior(cls, grid, interior):
        v = np.zeros(grid.shape)
        v[grid.interior_slices()] = np.asarray(interior, dtype=float).reshape(grid.interior_shape)
        return cls(grid, v)

    @classmethod
    def from_callable(cls, grid, fn: Callable, zero_boundary: bool = True):
        v = np.asarray(fn(*grid.mesh()), dtype=float)
        v = np.broadcast_to(v, grid.shape).copy()
        if zero_boundary:
            interior = v[grid.interior_slices()].copy()
            v[:] = 0.0
            v[grid.interior_slices()] = interior
        return cls(grid, v)

    @property
    def interior(self) -> np.ndarray:
        return self.values[self.grid.interior_slices()]

    def with_values(self, values):
        return GridFunction(self.grid, values)

    def __add__(self, other):
        return self.with_values(self.values + _values_like(self, other))

    def __sub__(self, other):
        return self.with_values(self.values - _values_like(self, other))

    def __mul__(self, scalar):
        return self.with_values(self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def dot(self, other) -> float:
        """h-weighted inner product over interior nodes."""
        return float(np.sum(self.interior * other.interior)) * self.grid.cell_volume

    def to_csv(self, path=None) -> str:
        text = grid_function_csv(self)
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _values_like(u: GridFunction, other) -> np.ndarray:
    if isinstance(other, GridFunction):
        if other.grid != u.grid:
            raise GeometryError("grid functions live on different grids")
        return other.values
    return np.asarray(other, dtype=float)


def grid_function_csv(u: GridFunction) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if u.grid.dim == 1:
        writer.writerow(["x2", "value"])
        for x, v in zip(u.grid.axis(0), u.values):
            writer.writerow([f"{x:.17g}", f"{v:.17g}"])
    else:
        writer.writerow(["x1", "x2", "value"])
        x1, x2 = u.grid.axis(0), u.grid.axis(1)
        for i, a in enumerate(x1):
            for j, b in enumerate(x2):
                writer.writerow([f"{a:.17g}", f"{b:.17g}", f"{u.values[i, j]:.17g}"])
    return buf.getvalue()


def read_profile_csv(path, grid: UniformGrid) -> GridFunction:
    """Read a 1D profile CSV (``x2,value`` or ``x,value``) onto ``grid`` nodes.

    Values are linearly interpolated; outside the listed abscissae they are 0.
    """
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"profile file {path} is empty")
    start = 1 if not _is_number(rows[0][0]) else 0
    data = np.array([[float(r[0]), float(r[-1])] for r in rows[start:] if r], dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError(f"profile file {path} needs at least two rows")
    order = np.argsort(data[:, 0])
    xs, ys = data[order, 0], data[order, 1]
    vals = np.interp(grid.axis(grid.dim - 1), xs, ys, left=0.0, right=0.0)
    if grid.dim == 2:
        vals = np.broadcast_to(vals, grid.shape)
    return GridFunction(grid, vals)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


@dataclass(frozen=True)
class SubdomainMask:
    """Union of closed axis-aligned boxes whose faces lie on grid lines.

    Boxes must have disjoint interiors; trapezoid weights are summed box by box,
    which makes the L2 quadrature additive over disjoint masks.
    """

    boxes: tuple  # ((lo_1, hi_1), (lo_2, hi_2), ...) per box
    name: str = ""

    def weights(self, grid: UniformGrid) -> np.ndarray:
        w = np.zeros(grid.shape)
        for box in self.boxes:
            if len(box) != grid.dim:
                raise GeometryError(f"mask {self.name!r} has dimension {len(box)}, grid has {grid.dim}")
            factors = []
            for a, (lo, hi) in enumerate(box):
                x = grid.axis(a)
                i_lo = _grid_index(grid, a, lo, self.name)
                i_hi = _grid_index(grid, a, hi, self.name)
                f = np.zeros(x.size)
                if i_hi > i_lo:
                    f[i_lo:i_hi + 1] = grid.h
                    f[i_lo] = f[i_hi] = grid.h / 2
                factors.append(f)
            w += factors[0] if grid.dim == 1 else np.multiply.outer(*factors)
        return w

    def nodes(self, grid: UniformGrid) -> np.ndarray:
        inside = np.zeros(grid.shape, dtype=bool)
        mesh = grid.mesh()
        eps = 1e-9 * grid.h
        for box in self.boxes:
            sel = np.ones(grid.shape, dtype=bool)
            for a, (lo, hi) in enumerate(box):
                sel &= (mesh[a] >= lo - eps) & (mesh[a] <= hi + eps)
            inside |= sel
        return inside


def _grid_index(grid, a, x, name) -> int:
    d = (x + grid.half_lengths[a]) / grid.h
    i = int(round(d))
    if abs(d - i) > _DIV_TOL * max(1.0, abs(d)) or i < 0 or i > grid.steps[a]:
        raise GeometryError(f"mask {name!r}: coordinate {x:g} on axis {a} is not a node of the grid")
    return i


def cylinder_mask(a: float, half_width: float = 1.0, dim: int = 2) -> SubdomainMask:
    """``Omega_a = (-a, a) x omega``; in 1D just ``(-a, a)``."""
    if dim == 1:
        return SubdomainMask((((-a, a),),), name=f"omega_{a:g}")
    return SubdomainMask((((-a, a), (-half_width, half_width)),), name=f"Omega_{a:g}")


def end_slabs_mask(ell: float, width: float = 1.0, half_width: float = 1.0) -> SubdomainMask:
    """``Omega_ell minus Omega_(ell-width)``: two slabs at the cylinder ends."""
    inner = ell - width
    if inner < 0:
        raise GeometryError("slab width exceeds the cylinder half-length")
    omega = (-half_width, half_width)
    return SubdomainMask((((-ell, -inner), omega), ((inner, ell), omega)),
                         name=f"Omega_{ell:g}\\Omega_{inner:g}")


def full_mask(grid: UniformGrid) -> SubdomainMask:
    return SubdomainMask((tuple((-L, L) for L in grid.half_lengths),), name="full")


def l2_norm_sq_on(u, mask: SubdomainMask | None = None) -> float:
    """Trapezoid-rule ``int_mask u^2`` from node values."""
    grid = u.grid
    w = (mask or full_mask(grid)).weights(grid)
    return float(np.sum(w * u.values**2))


def restrict_extend(u: GridFunction, target: UniformGrid) -> GridFunction:
    """Copy node values onto the nested grid ``target``; zero where it has no data."""
    src = u.grid
    out = np.zeros(target.shape)
    src_idx, dst_idx = [], []
    for a in range(src.dim):
        if abs(src.h - target.h) > _DIV_TOL * src.h:
            raise GeometryError("restrict_extend needs equal spacing")
        d = (src.half_lengths[a] - target.half_lengths[a]) / src.h
        k = int(round(d))
        if abs(d - k) > _DIV_TOL * max(1.0, abs(d)):
            raise GeometryError(f"axis {a}: grids are not nested")
        # src index i <-> target index i + k; k > 0 means target is smaller
        lo = max(0, k)
        hi = min(src.steps[a], target.steps[a] + k)
        src_idx.append(slice(lo, hi + 1))
        dst_idx.append(slice(lo - k, hi - k + 1))
    out[tuple(dst_idx)] = u.values[tuple(src_idx)]
    return GridFunction(target, out)


def extrude(profile: GridFunction, grid2d: UniformGrid) -> GridFunction:
    """``u*(x1, x2) = u(x2)`` on every node of ``grid2d`` (x1 edges included)."""
    if profile.grid.dim != 1 or grid2d.dim != 2:
        raise GeometryError("extrude maps a 1D profile onto a 2D grid")
    cross = UniformGrid(grid2d.h, (grid2d.half_lengths[1],), (grid2d.steps[1],))
    p = restrict_extend(profile, cross).values
    return GridFunction(grid2d, np.broadcast_to(p, grid2d.shape))
