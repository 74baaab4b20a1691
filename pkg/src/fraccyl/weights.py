"""Cutoffs, decaying weights and the one-dimensional integrals built from them.

The families are

* ``rho_ell``: trapezoid, 1 on ``(-alpha l, alpha l)``, 0 off ``(-l, l)``;
* ``phi_eps(t) = min(1/2, 1/(|t|^eps + 1))`` and the plain variant ``1/(1 + |t|^eps)``;
* ``rho_{eps,lam}(X) = phi_eps(x1 / lam)``;
* ``psi_ell``: smooth even switch, 0 on ``(-l+1, l-1)``, 1 off ``(-l, l)``.

All improper integrals are split at ``|tau| = 1``.  Near ``tau = 0`` the squared
difference quotient is integrated against ``|tau|^{1-2s}`` with an algebraic
endpoint weight, far tails are summed analytically where the integrand is a
pure power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .constants import FracOrder, Normalization, QuadratureError, theta_product
from .grid import CrossSection, CylinderDomain, GeometryError, GridFunction, UniformGrid, build_grid, extrude, restrict_extend
from .operator import KernelWeights, apply_with_exterior, assemble_weights

__all__ = [
    "CutoffRho",
    "PhiEps",
    "RhoEpsLambda",
    "SmoothPsi",
    "j_ell",
    "JBoundReport",
    "j_bound_check",
    "phi_eps",
    "sup_ratio",
    "i_s",
    "s_s_of_rho",
    "s_s_direct",
    "sqrt_phi_derivative_bound",
    "sqrt_phi_derivative_sq",
    "theorem_constant",
    "scaled_s_s_max",
    "GammaCheck",
    "gamma_threshold",
    "psi_capital",
]

_QUAD = dict(epsabs=1e-13, epsrel=1e-11, limit=400)


# ---------------------------------------------------------------- families

@dataclass(frozen=True)
class CutoffRho:
    ell: float
    alpha: float = 0.5

    def __post_init__(self):
        if not self.ell > 0:
            raise ValueError(f"ell must be positive, got {self.ell}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def slope(self) -> float:
        return 1.0 / ((1.0 - self.alpha) * self.ell)

    @property
    def breakpoints(self) -> tuple:
        a = self.alpha * self.ell
        return (-self.ell, -a, a, self.ell)

    def __call__(self, x):
        x = np.abs(np.asarray(x, dtype=float))
        return np.clip((self.ell - x) / ((1.0 - self.alpha) * self.ell), 0.0, 1.0)


@dataclass(frozen=True)
class PhiEps:
    """``phi_eps``; ``variant="plain"`` drops the cap at 1/2 (needs ``eps > 1``)."""

    eps: float
    variant: str = "min"

    def __post_init__(self):
        if not 0.0 < self.eps <= 2.0:
            raise ValueError(f"eps must lie in (0, 2], got {self.eps}")
        if self.variant not in ("min", "plain"):
            raise ValueError(f"unknown phi variant {self.variant!r}")
        if self.variant == "plain" and self.eps <= 1.0:
            raise ValueError("the plain variant 1/(1+|t|^eps) is only admitted for eps in (1, 2]")

    @property
    def kinks(self) -> tuple:
        return (-1.0, 1.0) if self.variant == "min" else (0.0,)

    def __call__(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        p = 1.0 / (t**self.eps + 1.0)
        return np.minimum(0.5, p) if self.variant == "min" else p

    def sqrt(self, t):
        return np.sqrt(self(t))

    def sqrt_scalar(self):
        """Plain-float ``sqrt(phi)`` for use inside scalar quadrature loops."""
        e = self.eps
        if self.variant == "min":
            cap = math.sqrt(0.5)
            return lambda z: cap if abs(z) <= 1.0 else (abs(z) ** e + 1.0) ** -0.5
        return lambda z: (abs(z) ** e + 1.0) ** -0.5

    def sqrt_derivative(self, t, side: float = 1.0):
        """Derivative of ``sqrt(phi)``; at a kink the one-sided value from ``side``."""
        t = np.asarray(t, dtype=float)
        a = np.abs(t)
        sgn = np.where(t != 0.0, np.sign(t), np.sign(side))
        e = self.eps
        with np.errstate(divide="ignore", invalid="ignore"):
            d = -0.5 * e * a ** (e - 1.0) * (a**e + 1.0) ** -1.5 * sgn
        if self.variant == "min":
            flat = (a < 1.0) | ((a == 1.0) & (sgn * side < 0))
            d = np.where(flat, 0.0, d)
        else:
            d = np.where(a == 0.0, 0.0 if e > 1.0 else -np.inf * np.sign(side), d)
        return d


def phi_eps(t, eps, variant: str = "min"):
    return PhiEps(eps, variant)(t)


@dataclass(frozen=True)
class RhoEpsLambda:
    eps: float
    lam: float
    variant: str = "min"

    def __post_init__(self):
        PhiEps(self.eps, self.variant)
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")

    @property
    def phi(self) -> PhiEps:
        return PhiEps(self.eps, self.variant)

    def __call__(self, x1, *_ignored):
        return self.phi(np.asarray(x1, dtype=float) / self.lam)


def _smoothstep(t):
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


@dataclass(frozen=True)
class SmoothPsi:
    ell: float

    def __post_init__(self):
        if not self.ell >= 2:
            raise ValueError(f"psi_ell needs ell >= 2, got {self.ell}")

    def _t(self, x):
        return np.clip(np.abs(np.asarray(x, dtype=float)) - (self.ell - 1.0), 0.0, 1.0)

    def __call__(self, x):
        return _smoothstep(self._t(x))

    def second_derivative(self, x):
        t = self._t(x)
        return 60.0 * t * (2.0 * t - 1.0) * (t - 1.0)

    @staticmethod
    def second_derivative_sup() -> float:
        # |S''| peaks at t = (3 -+ sqrt 3)/6
        return 10.0 / math.sqrt(3.0)


# ---------------------------------------------------------------- J_ell

def _check_quad(err, tol, what):
    if not err <= tol:
        raise QuadratureError(f"{what}: quadrature error estimate {err:.3g} exceeds {tol:.1g}", achieved=err)


def j_ell(y1: float, cutoff: CutoffRho, s, tol: float = 1e-9) -> float:
    """``J(y) = int_R (rho(x) - rho(y))^2 |x - y|^{-1-2s} dx``."""
    s = FracOrder(s).s
    y = float(y1)
    L = cutoff.ell
    ry = float(cutoff(y))
    total, err = 0.0, 0.0
    # pieces of [-L, L] (rho vanishes beyond), split at y and the breakpoints
    cuts = sorted(set(cutoff.breakpoints) | ({y} if -L <= y <= L else set()))
    for a, b in zip(cuts[:-1], cuts[1:]):
        if a == y or b == y:
            # rho is linear on this piece, so the squared difference quotient is
            # the constant q^2 and the singular integral is exact
            q = (float(cutoff(b)) - float(cutoff(a))) / (b - a)
            v, e = q * q * (b - a) ** (2.0 - 2 * s) / (2.0 - 2 * s), 0.0
        else:
            def f(x):
                return (float(cutoff(x)) - ry) ** 2 * abs(x - y) ** (-1.0 - 2 * s)

            v, e = integrate.quad(f, a, b, epsabs=1e-12, epsrel=1e-10, limit=200)
        total += v
        err += e
    if ry > 0.0:
        # x outside (-L, L): rho(x) = 0, integrand ry^2 |x - y|^{-1-2s}
        total += ry * ry * ((L - y) ** (-2 * s) + (L + y) ** (-2 * s)) / (2 * s)
    _check_quad(err, tol, "J_ell")
    return total


@dataclass(frozen=True)
class JBoundReport:
    c_star: float
    worst_ratio: float  # max of J / (two-branch bound with constant 1) over outer samples
    per_ell: tuple  # (ell, ell^{2s} J(0), inner sup ell^{2s} J)
    holds: bool


def j_bound_check(ells, s, alpha: float = 0.5, n_inner: int = 81, n_outer: int = 41) -> JBoundReport:
    """Certify the two-branch bound for ``J_ell`` on sampled ``y1``.

    ``C*`` is the largest of ``l^{2s} J(0)`` and ``l^{2s} sup_{|y|<2l} J(y)`` over the
    ladder.  The bound ``J(y) <= 2 C* (|l - y|^{-2s} + |l + y|^{-2s})`` is then
    tested on ``2l <= |y| <= 20l``.
    """
    s = FracOrder(s).s
    rows = []
    c_star = 0.0
    worst = 0.0
    for ell in ells:
        cut = CutoffRho(ell, alpha)
        scale = ell ** (2 * s)
        j0 = j_ell(0.0, cut, s) * scale
        inner = np.linspace(0.0, 2.0 * ell, n_inner, endpoint=False)
        sup_in = max(j_ell(y, cut, s) for y in inner) * scale
        rows.append((float(ell), j0, sup_in))
        c_star = max(c_star, j0, sup_in)
        for y in 2.0 * ell * np.geomspace(1.0, 10.0, n_outer):
            branch = abs(ell - y) ** (-2 * s) + abs(ell + y) ** (-2 * s)
            worst = max(worst, j_ell(y, cut, s) / branch)
    return JBoundReport(c_star, worst, tuple(rows), worst <= 2.0 * c_star)


# ---------------------------------------------------------------- ratio bounds for phi

def _ratio(phi: PhiEps, z, tau):
    return phi(z + tau) / (phi(z) * np.abs(tau) ** phi.eps)


def _refined_axis(limit, n, centres, depth=12):
    base = np.linspace(-limit, limit, n)
    extra = []
    for c in centres:
        for k in range(1, depth + 1):
            for sign in (-1, 1):
                for side in (-1, 1):
                    extra.append(side * (c + sign * 10.0 ** (-k / 2)))
        extra += [c, -c]
    return np.unique(np.concatenate([base, extra, [0.0]]))


def sup_ratio(eps, variant: str = "min", z_limit: float = 100.0, nz: int = 4001,
              tau_max: float = 100.0, ntau: int = 2001, z=None, tau=None) -> float:
    """Grid maximum of ``phi(z + tau) / (phi(z) |tau|^eps)`` for ``|tau| >= 1``."""
    phi = PhiEps(eps, variant)
    if z is None:
        z = _refined_axis(z_limit, nz, (1.0, 2.0))
    if tau is None:
        t = np.unique(np.concatenate([np.geomspace(1.0, tau_max, ntau), np.linspace(1.0, 3.0, 401)]))
        tau = np.concatenate([-t[::-1], t])
    z = np.asarray(z, dtype=float)
    tau = np.asarray(tau, dtype=float)
    best = -np.inf
    for chunk in np.array_split(tau, max(1, tau.size // 256)):
        best = max(best, float(np.max(_ratio(phi, z[:, None], chunk[None, :]))))
    return best


def sqrt_phi_derivative_sq(x, xi, eps, variant: str = "min"):
    """``|(sqrt phi)'(x + xi)|^2 / phi(x)``, analytic on each branch."""
    phi = PhiEps(eps, variant)
    z = np.asarray(x, dtype=float) + np.asarray(xi, dtype=float)
    return phi.sqrt_derivative(z) ** 2 / phi(x)


def sqrt_phi_derivative_bound(eps, variant: str = "min", x_limit: float = 50.0, nx: int = 2001,
                              nxi: int = 201) -> float:
    """Grid maximum of :func:`sqrt_phi_derivative_sq` over ``|x| <= 50``, ``|xi| <= 1``.

    Samples on a kink of ``sqrt phi`` are dropped (a null set where the
    derivative is undefined).
    """
    phi = PhiEps(eps, variant)
    x = np.linspace(-x_limit, x_limit, nx)[:, None]
    xi = np.linspace(-1.0, 1.0, nxi)[None, :]
    z = x + xi
    keep = np.ones(z.shape, dtype=bool)
    for k in phi.kinks:
        keep &= np.abs(np.abs(z) - abs(k)) > 1e-12 if k != 0.0 else np.abs(z) > 1e-12
    r = sqrt_phi_derivative_sq(x, xi, eps, variant)
    return float(np.max(np.where(keep, r, 0.0)))


# ---------------------------------------------------------------- S_s

def _half_line(g, g0, dg0, kinks, s, far):
    """``int_0^inf (g(t) - g0)^2 t^{-1-2s} dt`` for bounded Lipschitz ``g``.

    ``dg0`` is the right derivative at 0 and ``kinks`` the points in ``(0, far)``
    where ``g`` is not smooth.  Beyond ``far`` the pure-power part ``g0^2`` is
    integrated analytically.  Returns ``(value, error estimate)``.
    """
    cuts = [0.0]
    for c in sorted(k for k in kinks if 0.0 < k < far) + [far]:
        # points closer than this make slivers quadpack cannot resolve
        if c - cuts[-1] > 1e-9 * max(1.0, c):
            cuts.append(c)
        elif c == far:
            cuts[-1] = far
    head = min(1.0, cuts[1])
    if head < cuts[1] - 1e-9:
        cuts.insert(1, head)
    total, err = 0.0, 0.0

    def quot(t):
        if t < 1e-13:
            return dg0 * dg0
        return ((g(t) - g0) / t) ** 2

    v, e = integrate.quad(quot, 0.0, cuts[1], weight="alg", wvar=(1.0 - 2 * s, 0.0), **_QUAD)
    total += v
    err += e
    for a, b in zip(cuts[1:-1], cuts[2:]):
        v, e = integrate.quad(lambda t: (g(t) - g0) ** 2 * t ** (-1.0 - 2 * s), a, b, **_QUAD)
        total += v
        err += e
    # t = far / v on (0, 1]: the rest decays at least like v^{2s-1}
    def rest(v):
        if v == 0.0:
            return 0.0
        gt = g(far / v)
        return (gt * gt - 2.0 * g0 * gt) * far ** (-2 * s)

    v, e = integrate.quad(rest, 0.0, 1.0, weight="alg", wvar=(2 * s - 1.0, 0.0), **_QUAD)
    total += v + g0 * g0 * far ** (-2 * s) / (2 * s)
    err += e
    return total, err


def i_s(x: float, eps, s, variant: str = "min", tol: float = 1e-9) -> float:
    """``I_s(x) = int (sqrt phi(x + tau) - sqrt phi(x))^2 |tau|^{-1-2s} dtau``.

    Each half line is split at ``|tau| = 1``; the near part uses the squared
    difference quotient against ``|tau|^{1-2s}``.
    """
    s = FracOrder(s).s
    phi = PhiEps(eps, variant)
    x = float(x)
    a0 = float(phi.sqrt(x))
    sq = phi.sqrt_scalar()
    far = abs(x) + 10.0
    total, err = 0.0, 0.0
    for sign in (1.0, -1.0):
        kinks = [sign * (k - x) for k in phi.kinks] + [1.0]
        v, e = _half_line(lambda t, sign=sign: sq(x + sign * t), a0,
                          sign * float(phi.sqrt_derivative(x, side=sign)), kinks, s, far)
        total += v
        err += e
    _check_quad(err, tol * max(1.0, total), "I_s")
    return total


def s_s_of_rho(x1: float, eps, lam, s, n: int = 2, variant: str = "min") -> float:
    """``S_s(rho_{eps,lam})`` through the one-dimensional reduction."""
    s = FracOrder(s).s
    if not eps < 2 * s:
        raise ValueError(f"S_s(rho_eps,lambda) needs eps < 2s, got eps={eps} with s={s}")
    RhoEpsLambda(eps, lam, variant)
    return theta_product(n, s) * lam ** (-2 * s) * i_s(x1 / lam, eps, s, variant)


def s_s_direct(x1: float, eps, lam, s, variant: str = "min", tol: float = 1e-10) -> float:
    """``S_s(rho_{eps,lam})`` at ``x1`` by plain 2D quadrature in polar coordinates.

    ``int_0^{2pi} int_0^inf (sqrt rho(x1 + r cos t) - sqrt rho(x1))^2 r^{-1-2s} dr dt``,
    with the radial integral done numerically for every angle.
    """
    s = FracOrder(s).s
    if not eps < 2 * s:
        raise ValueError(f"S_s(rho_eps,lambda) needs eps < 2s, got eps={eps} with s={s}")
    rho = RhoEpsLambda(eps, lam, variant)
    phi = rho.phi
    x1 = float(x1)
    a0 = float(np.sqrt(rho(x1)))
    sq = phi.sqrt_scalar()

    def radial(theta):
        c = math.cos(theta)
        out = 0.0
        for sign in (1.0, -1.0):
            d = sign * c
            kinks = [(lam * k - x1) / d for k in phi.kinks] + [lam / c]
            far = (abs(x1) + 10.0 * lam) / c
            dg0 = d / lam * float(phi.sqrt_derivative(x1 / lam, side=d))
            v, _ = _half_line(lambda r: sq((x1 + d * r) / lam), a0, dg0, kinks, s, far)
            out += v
        return out

    # the integrand depends on cos(theta) only; radial() already holds the
    # directions theta and pi - theta, the lower half plane doubles it
    val, err = integrate.quad(radial, 0.0, 0.5 * math.pi, epsabs=1e-14, epsrel=tol, limit=200)
    _check_quad(err, 1e-8 * max(1.0, abs(val)), "S_s direct")
    return 2.0 * val


def theorem_constant(eps, s, n: int = 2, variant: str = "min", t_max: float = 8.0, nt: int = 129) -> float:
    """Grid maximum over ``t = x1/lam`` of ``Theta I_s(t) / phi_eps(t)``.

    This is ``lam^{2s} S_s(rho) / rho`` and does not depend on ``lam``.
    """
    phi = PhiEps(eps, variant)
    theta = theta_product(n, s)
    t = np.linspace(0.0, t_max, nt)  # I_s and phi are even
    return max(theta * i_s(v, eps, s, variant) / float(phi(v)) for v in t)


def scaled_s_s_max(eps, lam, s, x, n: int = 2, variant: str = "min") -> float:
    """``max_x lam^{2s} S_s(rho_{eps,lam})(x) / rho_{eps,lam}(x)`` over the sample ``x``."""
    rho = RhoEpsLambda(eps, lam, variant)
    pts = np.unique(np.abs(np.asarray(x, dtype=float)))  # S_s(rho) and rho are even
    return max(s_s_of_rho(v, eps, lam, s, n, variant) * lam ** (2 * s) / float(rho(v)) for v in pts)


@dataclass(frozen=True)
class GammaCheck:
    c_eps: float
    c0_proxy: float
    lam_min: float

    def ratio(self, lam, s) -> float:
        return self.c_eps * lam ** (-2 * s) / self.c0_proxy

    def satisfied(self, lam, s) -> bool:
        return self.ratio(lam, s) < 0.1


def gamma_threshold(eps, s, n: int = 2, variant: str = "min", c0_proxy: float = 1.0,
                    c_eps: float | None = None) -> GammaCheck:
    """Smallest ``lam`` with ``C_eps / lam^{2s} < C0 / 10`` (``C0`` is only a proxy)."""
    s = FracOrder(s).s
    if c_eps is None:
        c_eps = theorem_constant(eps, s, n, variant)
    lam = (10.0 * c_eps / c0_proxy) ** (1.0 / (2 * s))
    return GammaCheck(c_eps, c0_proxy, lam)


# ---------------------------------------------------------------- Psi_ell

def psi_capital(ell: float, s, u_inf: GridFunction, grid2d: UniformGrid,
                norm=Normalization.StandardFourPow, weights: KernelWeights | None = None) -> GridFunction:
    """``A(psi_ell(x1) u_inf(x2))`` restricted to the nodes of ``Omega_{ell/2}``.

    The field is ``u_inf`` for ``|x1| >= ell``, the grid only has to cover
    ``(-ell, ell) x omega``; the part beyond is added as a far profile.
    """
    if ell < 4:
        raise GeometryError(f"psi_capital needs ell >= 4, got {ell}")
    if grid2d.dim != 2 or abs(grid2d.half_lengths[0] - ell) > 1e-9 * ell:
        raise GeometryError("the 2D grid must cover exactly (-ell, ell) x omega")
    w = weights if weights is not None else assemble_weights(grid2d, s, norm)
    psi = SmoothPsi(ell)
    x1 = grid2d.axis(0)
    field = GridFunction(grid2d, psi(x1)[:, None] * extrude(u_inf, grid2d).values)
    cross = UniformGrid(grid2d.h, (grid2d.half_lengths[1],), (grid2d.steps[1],))
    prof = restrict_extend(u_inf, cross)
    out = apply_with_exterior(w, field, prof)
    half = build_grid(CylinderDomain(ell / 2, CrossSection(grid2d.half_lengths[1])), grid2d.h)
    return restrict_extend(out, half)
