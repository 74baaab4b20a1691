"""Kernel-weight discretization of the integral fractional Laplacian.

On a uniform grid with zero exterior data the operator is

    (A u)_i = c [ (sum_k W_k + tau) u_i - sum_k W_k u_{i+k} ],

with the sum over the full lattice of offsets inside a box that covers every pair of grid
nodes, and ``tau`` the sum of the lattice weights outside that box.  Each cell weight is the
second moment ``W_k = int_{cell(k)} |Y|^2 |Y|^{-d-2s} dY / |kh|^2``: it equals
the cell's kernel mass up to O(h^2) relative, and makes the sum exact when
the second difference ``2u(X) - u(X+Y) - u(X-Y)`` is a quadratic form in Y.
Plain mass weights leave an O(h^{2-2s}) consistency error from the kernel
variation across each cell; moment weights remove it (O(h^2) for smooth u).

Far cells use tensor 3-point Gauss.  The 3x3 block of cells around the origin
is split: inside the ball ``|Y| <= 3h/2`` the second difference is replaced by
its quadratic model, which turns into extra nearest-neighbour weight; the rest
of those cells is integrated in polar coordinates with the radial integral
done exactly.

``tau`` and the far strips are the exact kernel mass plus the leading
moment correction ``-(d + 4s)/12 |k|^{-d-2s-2}`` summed in closed form, so
every grid with the same ``h`` sees the same infinite-lattice operator (up to
``O(R^{-2s-4})`` in units of h) whatever the size of its box.

Everything is computed for ``h = 1`` and scaled by ``h^{-2s}``.
"""

from __future__ import annotations

import functools
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy import integrate, special

from .constants import FracOrder, Normalization, c_ns
from .grid import GeometryError, GridFunction, UniformGrid

__all__ = [
    "KernelWeights",
    "assemble_weights",
    "apply_operator",
    "apply_with_exterior",
    "gagliardo_seminorm_sq",
    "operator_matrix",
    "strip_tail",
    "reduce_to_cross_section",
    "centered_difference_weights",
    "apply_centered_1d",
    "weights_csv",
    "fft_workers",
]

_GAUSS3 = np.polynomial.legendre.leggauss(3)
_GAUSS5 = np.polynomial.legendre.leggauss(5)
_NEAR_RADIUS = 1.5


def fft_workers() -> int:
    """Worker cap for FFT matvecs, from ``FRAC_THREADS`` (default 1)."""
    raw = os.environ.get("FRAC_THREADS")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"FRAC_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"FRAC_THREADS must be a positive integer, got {raw!r}")
    return n


@dataclass(frozen=True, eq=False)
class KernelWeights:
    """Offset weights of the discrete operator for one grid.

    ``table`` holds the full symmetric lattice ``W_k`` for ``|k_a| <= half_box[a]``
    with the centre entry 0; ``tau`` is the kernel mass outside the box;
    ``c`` the normalization constant.  A single table serves every row.
    """

    grid: UniformGrid
    s: float
    c: float
    table: np.ndarray
    tau: float
    norm: Normalization = Normalization.StandardFourPow
    cells: str = "moment"
    _fft_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.table.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.table.ndim

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def half_box(self) -> tuple:
        return tuple((n - 1) // 2 for n in self.table.shape)

    @functools.cached_property
    def diagonal(self) -> float:
        return self.c * (float(self.table.sum()) + self.tau)

    def r_max(self) -> float:
        """Smallest distance from the origin to the edge of the offset box."""
        return (min(self.half_box) + 0.5) * self.h

    def kernel_fft(self, shape):
        key = tuple(shape)
        hit = self._fft_cache.get(key)
        if hit is None:
            pad = tuple(sfft.next_fast_len(n + 2 * K, real=True) for n, K in zip(shape, self.half_box))
            hit = (pad, sfft.rfftn(self.table, pad, workers=fft_workers()))
            self._fft_cache[key] = hit
        return hit


# ---------------------------------------------------------------- unit weights

def _tail_1d(s, R):
    return R ** (-2 * s) / s


def _cos_power_integral(s, x):
    # int_0^{arcsin(sqrt(x))} cos^{2s}(t) dt
    return 0.5 * special.beta(0.5, s + 0.5) * special.betainc(0.5, s + 0.5, x)


def _tail_rect(s, R1, R2):
    """Mass of ``|Y|^{-2-2s}`` outside the rectangle ``[-R1, R1] x [-R2, R2]``."""
    sin2 = R2 * R2 / (R1 * R1 + R2 * R2)
    a = _cos_power_integral(s, sin2) * R1 ** (-2 * s)
    b = _cos_power_integral(s, 1.0 - sin2) * R2 ** (-2 * s)
    return 2.0 * (a + b) / s


def _moment_shift(s, dim):
    # far cells: W_k - int_cell K = -(d + 4s)/12 |k|^{-d-2s-2} + O(|k|^{-d-2s-4})
    return -(dim + 4 * s) / 12.0


def _near_moment(s, dim):
    """Half-space moment ``int_{|Y|<=3/2, Y_1>0} Y_1^2 |Y|^{-d-2s} dY`` per axis."""
    r = _NEAR_RADIUS ** (2 - 2 * s) / (2 - 2 * s)
    return r if dim == 1 else 0.5 * math.pi * r


def _gauss_cells(s, centers, dim, moment=True, rule=_GAUSS3):
    """Cell weights by tensor Gauss on unit cells.

    ``moment``: ``int_cell |Y|^2 |Y|^{-d-2s} dY / |k|^2``; otherwise the plain
    cell mass ``int_cell |Y|^{-d-2s} dY``.
    """
    g, wg = rule
    g, wg = g / 2.0, wg / 2.0
    p = 2.0 if moment else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):  # origin cell is overwritten by the caller
        if dim == 1:
            y = centers[:, None] + g[None, :]
            out = np.sum(wg[None, :] * np.abs(y) ** (p - 1 - 2 * s), axis=1)
            return out / centers**2 if moment else out
        k1, k2 = centers
        out = np.zeros(np.broadcast_shapes(k1.shape, k2.shape))
        for ga, wa in zip(g, wg):
            for gb, wb in zip(g, wg):
                r2 = (k1 + ga) ** 2 + (k2 + gb) ** 2
                out += wa * wb * r2 ** (0.5 * p - 1 - s)
        return out / (k1**2 + k2**2) if moment else out


def _cell_outside_ball(s, lo, hi, r0=_NEAR_RADIUS, power=0):
    """``int |Y|^{power-2-2s}`` over the box ``lo <= Y <= hi`` minus the ball of radius r0."""
    q = power - 2 * s
    corners = [(x, y) for x in (lo[0], hi[0]) for y in (lo[1], hi[1])]
    angles = [math.atan2(y, x) for x, y in corners]
    t_lo, t_hi = min(angles), max(angles)
    pts = set(angles)
    for a in range(2):
        for edge in (lo[a], hi[a]):
            if abs(edge) < r0:
                other = math.sqrt(r0 * r0 - edge * edge)
                for sign in (-1, 1):
                    p = [0.0, 0.0]
                    p[a], p[1 - a] = edge, sign * other
                    pts.add(math.atan2(p[1], p[0]))
    pts = sorted(t for t in pts if t_lo < t < t_hi)

    def radial(theta):
        d = (math.cos(theta), math.sin(theta))
        t_in, t_out = 0.0, math.inf
        for a in range(2):
            if abs(d[a]) < 1e-300:
                if not (lo[a] <= 0.0 <= hi[a]):
                    return 0.0
                continue
            t1, t2 = lo[a] / d[a], hi[a] / d[a]
            t_in = max(t_in, min(t1, t2))
            t_out = min(t_out, max(t1, t2))
        t_in = max(t_in, r0)
        if t_out <= t_in:
            return 0.0
        return (t_out**q - t_in**q) / q

    val, _ = integrate.quad(radial, t_lo, t_hi, points=pts or None, epsabs=1e-14,
                            epsrel=1e-13, limit=200)
    return val


@functools.lru_cache(maxsize=64)
def _near_block_2d(s, moment=True):
    """Unit-h weights for offsets (1,0) and (1,1), near-origin rule included."""
    m = _near_moment(s, 2)
    p = 2 if moment else 0
    w10 = _cell_outside_ball(s, (0.5, -0.5), (1.5, 0.5), power=p) + m
    w11 = _cell_outside_ball(s, (0.5, 0.5), (1.5, 1.5), power=p) / (2.0 if moment else 1.0)
    return w10, w11


def _unit_table_1d(s, K, moment=True):
    k = np.arange(K + 1, dtype=float)
    w = np.zeros(K + 1)
    if K >= 2:
        w[2:] = _gauss_cells(s, k[2:], 1, moment)
    w[1] = _near_moment(s, 1)
    return np.concatenate([w[:0:-1], w])


def _unit_table_2d(s, K1, K2, moment=True):
    k1 = np.arange(K1 + 1, dtype=float)[:, None]
    k2 = np.arange(K2 + 1, dtype=float)[None, :]
    q = _gauss_cells(s, (k1, k2), 2, moment)
    w10, w11 = _near_block_2d(s, moment)
    q[0, 0] = 0.0
    q[1, 0] = q[0, 1] = w10
    q[1, 1] = w11
    top = np.concatenate([q[:0:-1], q], axis=0)
    return np.concatenate([top[:, :0:-1], top], axis=1)


def assemble_weights(grid: UniformGrid, s, norm=Normalization.StandardFourPow,
                     r_max: float | None = None, cells: str = "moment") -> KernelWeights:
    """Weight table for ``grid``.

    The offset box spans ``2 L_a / h`` cells per axis, one more than the largest
    node-to-node offset, so every coupling between unknowns is explicit.  Passing
    ``r_max`` checks that a requested cutoff radius is compatible with that.
    ``cells="mass"`` uses plain cell masses instead of second moments (first
    order in h for s near 1; kept for checking the quadrature itself).
    """
    if cells not in ("moment", "mass"):
        raise ValueError(f"cells must be 'moment' or 'mass', got {cells!r}")
    moment = cells == "moment"
    s = FracOrder(s).s
    norm = Normalization.parse(norm)
    if grid.dim not in (1, 2):
        raise GeometryError("only 1D and 2D grids are supported")
    K = tuple(grid.steps)
    diam = math.sqrt(sum((2 * L) ** 2 for L in grid.half_lengths))
    if r_max is not None and r_max < diam:
        raise GeometryError(f"r_max={r_max:g} is smaller than the domain diameter {diam:g}")
    scale = grid.h ** (-2 * s)
    if grid.dim == 1:
        table = _unit_table_1d(s, K[0], moment)
        tau = _tail_1d(s, K[0] + 0.5)
        if moment:
            tau += _moment_shift(s, 1) * _tail_1d(s + 1, K[0] + 0.5)
    else:
        table = _unit_table_2d(s, K[0], K[1], moment)
        tau = _tail_rect(s, K[0] + 0.5, K[1] + 0.5)
        if moment:
            tau += _moment_shift(s, 2) * _tail_rect(s + 1, K[0] + 0.5, K[1] + 0.5)
    return KernelWeights(grid, s, c_ns(grid.dim, s, norm), table * scale, tau * scale, norm, cells)


# ---------------------------------------------------------------- application

def _check_grid(w: KernelWeights, u: GridFunction):
    if u.grid != w.grid:
        raise GeometryError("grid function and kernel weights were built for different grids")


def _convolve_fft(w: KernelWeights, x: np.ndarray) -> np.ndarray:
    pad, kf = w.kernel_fft(x.shape)
    full = sfft.irfftn(sfft.rfftn(x, pad, workers=fft_workers()) * kf, pad,
                       workers=fft_workers())
    sl = tuple(slice(K, K + n) for K, n in zip(w.half_box, x.shape))
    return full[sl]


def _convolve_direct(w: KernelWeights, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    n = x.shape
    K = w.half_box
    ranges = [range(-min(Ka, na - 1), min(Ka, na - 1) + 1) for Ka, na in zip(K, n)]
    for k in np.ndindex(*[len(r) for r in ranges]):
        off = tuple(r[i] for r, i in zip(ranges, k))
        wk = w.table[tuple(Ka + o for Ka, o in zip(K, off))]
        if wk == 0.0:
            continue
        dst = tuple(slice(max(0, -o), na - max(0, o)) for o, na in zip(off, n))
        src = tuple(slice(max(0, o), na - max(0, -o)) for o, na in zip(off, n))
        out[dst] += wk * x[src]
    return out


def matvec(w: KernelWeights, x: np.ndarray, method: str = "fft") -> np.ndarray:
    """Apply the operator to an array of interior values."""
    conv = _convolve_fft(w, x) if method == "fft" else _convolve_direct(w, x)
    return w.diagonal * x - w.c * conv


def apply_operator(w: KernelWeights, u: GridFunction, method: str = "fft") -> GridFunction:
    """``A u`` at interior nodes (0 on boundary nodes).

    ``method="direct"`` is the O(N^2) reference summation, ``"fft"`` the
    convolution path; they agree to round-off.
    """
    _check_grid(w, u)
    return GridFunction.from_interior(u.grid, matvec(w, np.array(u.interior), method))


def operator_matrix(w: KernelWeights) -> np.ndarray:
    """Dense matrix of the operator on interior unknowns (small grids only)."""
    shape = w.grid.interior_shape
    idx = np.indices(shape).reshape(len(shape), -1)
    diff = idx[:, :, None] - idx[:, None, :]
    K = np.array(w.half_box)[:, None, None]
    A = -w.c * w.table[tuple(diff + K)]
    np.fill_diagonal(A, w.diagonal)
    return A


def gagliardo_seminorm_sq(u: GridFunction, w: KernelWeights) -> float:
    """Discrete energy ``(c/2) [u]^2`` by explicit pair sums.

    Sums ``W_k (u_i - u_{i+k})^2`` over every lattice node ``i`` and every offset
    in the box (both signs), adds the far pairs ``2 tau sum u_i^2`` and weights
    by ``h^d``.  Equals ``<u, A u>_h`` exactly in exact arithmetic.
    """
    _check_grid(w, u)
    K = w.half_box
    x = np.array(u.interior)
    p = np.pad(x, [(Ka, Ka) for Ka in K])
    total = 0.0
    half = [k for k in np.ndindex(*w.table.shape)]
    for k in half:
        off = tuple(i - Ka for i, Ka in zip(k, K))
        if off <= tuple(0 for _ in K):  # keep one of each +-k pair
            continue
        wk = w.table[k]
        if wk == 0.0:
            continue
        d = p - np.roll(p, tuple(-o for o in off), axis=tuple(range(p.ndim)))
        total += 2.0 * wk * float(np.sum(d * d))
    total += 2.0 * w.tau * float(np.sum(x * x))
    return 0.5 * w.c * total * w.grid.cell_volume


# ---------------------------------------------------------------- far strips

def _strip_integral(s, a, R):
    """``int_R^inf (y^2 + a^2)^{-1-s} dy`` elementwise in ``a``."""
    a = np.abs(np.asarray(a, dtype=float))
    out = np.empty_like(a)
    zero = a < 1e-12 * R
    out[zero] = R ** (-1 - 2 * s) / (1 + 2 * s)
    az = a[~zero]
    x0 = az * az / (az * az + R * R)
    out[~zero] = az ** (-1 - 2 * s) * 0.5 * special.beta(s + 0.5, 0.5) * special.betainc(s + 0.5, 0.5, x0)
    return out


def strip_tail(w: KernelWeights) -> np.ndarray:
    """One-sided lattice weight sum of each x2-cell row beyond the x1 edge of the box.

    Entry ``k2`` is ``int_{y1 > R1} int_{cell(k2)} |Y|^{-2-2s} dY2 dy1`` with
    ``R1 = (K1 + 1/2) h`` (plus the moment correction for moment cells);
    index ``k2 + K2``.
    """
    if w.dim != 2:
        raise GeometryError("strip tails exist for 2D weights only")
    s = w.s
    K1, K2 = w.half_box
    g, wg = _GAUSS5
    k2 = np.arange(-K2, K2 + 1, dtype=float)
    y2 = k2[:, None] + 0.5 * g[None, :]
    vals = _strip_integral(s, y2, K1 + 0.5)
    if w.cells == "moment":
        vals = vals + _moment_shift(s, 2) * _strip_integral(s + 1, y2, K1 + 0.5)
    return np.sum(0.5 * wg[None, :] * vals, axis=1) * w.h ** (-2 * s)


def apply_with_exterior(w: KernelWeights, u: GridFunction, far_profile: GridFunction | None = None,
                        method: str = "fft") -> GridFunction:
    """``A F`` at interior nodes for a field with non-zero exterior data.

    ``F`` takes the values of ``u`` on all grid nodes, boundary nodes included,
    and for 2D grids the x1-constant values ``far_profile(x2)`` on every lattice
    node with ``|x1| > L1``.  Everything else off the grid is zero.
    The far part is summed exactly: box cells through cumulative sums, cells
    beyond the box through :func:`strip_tail`.
    """
    _check_grid(w, u)
    grid = w.grid
    v = np.array(u.values)
    inner = np.array(u.interior)
    out = matvec(w, inner, method)
    # exterior nodes of the grid itself (the boundary ring)
    ring = v.copy()
    ring[grid.interior_slices()] = 0.0
    if np.any(ring):
        out -= w.c * _ring_coupling(w, ring)
    if far_profile is not None:
        if grid.dim != 2:
            raise GeometryError("far profiles apply to 2D grids only")
        p = np.array(far_profile.values, dtype=float)
        if p.shape != (grid.shape[1],):
            raise GeometryError("far profile must live on the cross-section nodes of the grid")
        p[0] = p[-1] = 0.0
        out -= w.c * _far_coupling(w, p)
    return GridFunction.from_interior(grid, out)


def _ring_coupling(w: KernelWeights, ring: np.ndarray) -> np.ndarray:
    # sum_j W_{j-i} F_j over exterior nodes j on the grid's boundary layer
    grid = w.grid
    K = w.half_box
    n = grid.interior_shape
    out = np.zeros(n)
    nz = np.argwhere(ring != 0.0)
    idx = np.indices(n).reshape(len(n), -1) + 1  # interior node indices in the full grid
    for j in nz:
        off = np.array(j)[:, None] - idx
        out += (ring[tuple(j)] * w.table[tuple(off + np.array(K)[:, None])]).reshape(n)
    return out


def _far_coupling(w: KernelWeights, p: np.ndarray) -> np.ndarray:
    grid = w.grid
    K1, K2 = w.half_box
    N1 = grid.steps[0]
    W = w.table
    # suffix sums over k1 >= m of W[k1, k2], m = 0..K1
    pos = W[K1:, :]
    suffix = np.cumsum(pos[::-1], axis=0)[::-1]
    tail = strip_tail(w)
    i1 = np.arange(1, N1)
    # nodes strictly beyond the edges: offsets m_r+1.. to the right, m_l+1.. to the left
    m_r = N1 - i1 + 1
    m_l = i1 + 1
    Q = suffix[m_r] + suffix[m_l] + 2.0 * tail[None, :]  # shape (n1, 2K2+1)
    n2 = grid.interior_shape[1]
    out = np.zeros((N1 - 1, n2))
    i2 = np.arange(1, grid.steps[1])
    for kk in range(-K2, K2 + 1):
        j2 = i2 + kk
        ok = (j2 >= 0) & (j2 < p.size)
        if not ok.any():
            continue
        pv = np.zeros(n2)
        pv[ok] = p[j2[ok]]
        out += Q[:, kk + K2][:, None] * pv[None, :]
    return out


def reduce_to_cross_section(w: KernelWeights) -> KernelWeights:
    """1D weights acting on profiles exactly as the 2D operator acts on their
    x1-constant extrusions (x1 summed out, strips beyond the box included)."""
    if w.dim != 2:
        raise GeometryError("reduction needs 2D weights")
    K1, K2 = w.half_box
    tail = strip_tail(w)
    V = w.table.sum(axis=0) + 2.0 * tail
    table = V.copy()
    table[K2] = 0.0  # the k2 = 0 row acts on the node's own column: it cancels
    # remaining mass: everything with |y2| beyond the box
    tau = w.tau - 2.0 * float(tail.sum())
    cross = UniformGrid(w.grid.h, (w.grid.half_lengths[1],), (w.grid.steps[1],))
    return KernelWeights(cross, w.s, w.c, table, tau, w.norm, w.cells)


# ---------------------------------------------------------------- 1D cross-check

def centered_difference_weights(s, n: int, h: float) -> np.ndarray:
    """``g_k = (-1)^k Gamma(2s+1) / (Gamma(s-k+1) Gamma(s+k+1)) h^{-2s}``, k = 0..n."""
    s = FracOrder(s).s
    g = np.empty(n + 1)
    g[0] = math.gamma(2 * s + 1) / math.gamma(s + 1) ** 2
    for k in range(n):
        g[k + 1] = g[k] * (k - s) / (k + s + 1)
    return g * h ** (-2 * s)


def apply_centered_1d(u: GridFunction, s, norm=Normalization.StandardFourPow) -> GridFunction:
    """Fractional centred-difference operator (symbol ``|2 sin(xi h/2)/h|^{2s}``)."""
    grid = u.grid
    if grid.dim != 1:
        raise GeometryError("centred differences are implemented in 1D only")
    s = FracOrder(s).s
    x = np.array(u.interior)
    n = x.size
    g = centered_difference_weights(s, n, grid.h)
    kernel = np.concatenate([g[:0:-1], g])
    out = np.convolve(x, kernel, mode="full")[n:2 * n]
    if Normalization.parse(norm) is Normalization.PaperTwoPow:
        out *= 2.0 ** (-s)
    return GridFunction.from_interior(grid, out)


def weights_csv(w: KernelWeights) -> str:
    """Audit dump ``k1,k2,weight`` of the non-negative half lattice (tail as a trailer row)."""
    lines = ["k1,k2,weight"]
    K = w.half_box
    if w.dim == 1:
        for k in range(1, K[0] + 1):
            lines.append(f"{k},0,{w.table[K[0] + k]:.17g}")
    else:
        for k1 in range(0, K[0] + 1):
            for k2 in range(-K[1], K[1] + 1):
                if k1 == 0 and k2 <= 0:
                    continue
                lines.append(f"{k1},{k2},{w.table[K[0] + k1, K[1] + k2]:.17g}")
    lines.append(f"tail,tail,{w.tau:.17g}")
    return "\n".join(lines) + "\n"
