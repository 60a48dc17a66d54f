"""Discrete calculus on the Riemann sphere.

The sphere is covered by two stereographic polar charts, z and w = 1/z, each
meshed on the disc of radius 1.2.  Node (j, k) of a chart sits at
``r_j e^{i theta_k}`` with ``r_j = R rho(s_j)``, ``s_j = (j + 1/2)/n_r`` and the
grading map ``rho(s) = sinh(kappa s)/sinh(kappa)``, which packs rings
towards the chart centre.  A cosine ramp in ``log|z|`` blends the charts on
the annulus 1/1.15 < |z| < 1.15; nodes outside it carry weight zero in every
integral.

Scalar quadrature is against the Fubini-Study area form normalised to
total mass 1.  (1,0)-forms are integrated against the flat density
``i dz ^ dzbar = 2 dx dy`` of their own chart, which is the unnormalised
convention for the L2 norm of forms.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import sparse

from . import mobius as mb
from .errors import Diverged, EmptyRegion, Overflow, UnresolvedRadius

CHART_RADIUS = 1.2
RAMP = np.log(1.15)
DEFAULT_GRADING = 4.0
_GL = np.polynomial.legendre.leggauss(8)


def ramp(t):
    """Partition weight of a chart as a function of t = log|coordinate|."""
    t = np.asarray(t, dtype=float)
    x = np.clip(t / RAMP, -1.0, 1.0)
    return 0.5 * (1.0 - np.sin(0.5 * np.pi * x))


def sphere_xyz(vec: np.ndarray) -> np.ndarray:
    """Unit homogeneous vectors to points of the unit sphere in R^3
    (z = 0 goes to the south pole)."""
    v0, v1 = vec[..., 0], vec[..., 1]
    h = 2 * v0 * np.conj(v1)
    n = np.abs(v0) ** 2 + np.abs(v1) ** 2
    return np.stack([h.real / n, h.imag / n, (np.abs(v0) ** 2 - np.abs(v1) ** 2) / n], -1)


class SphereGrid:
    """Two-chart polar mesh with quadrature and partition weights."""

    def __init__(self, n_r: int = 128, n_theta: int = 256, radius: float = CHART_RADIUS,
                 grading: float = DEFAULT_GRADING):
        if n_theta % 2:
            raise ValueError("n_theta must be even")
        self.n_r, self.n_theta = int(n_r), int(n_theta)
        self.radius = float(radius)
        self.grading = float(grading)
        self.shape = (2, self.n_r, self.n_theta)
        self.size = 2 * self.n_r * self.n_theta

        self.s = (np.arange(self.n_r) + 0.5) / self.n_r
        self.r = self._r_of_s(self.s)
        self.dr_ds = self._dr_ds(self.s)
        self.dtheta = 2 * np.pi / self.n_theta
        self.theta = self.dtheta * np.arange(self.n_theta)

        zeta = self.r[:, None] * np.exp(1j * self.theta)[None, :]
        self.coord = np.stack([zeta, zeta])  # chart coordinate at each node
        # homogeneous lifts: chart 0 -> (z, 1), chart 1 -> (1, w)
        one = np.ones_like(zeta)
        lift = np.stack([np.stack([zeta, one], -1), np.stack([one, zeta], -1)])
        self.lift = lift
        self.points = mb.unit_arr(lift)

        chi = ramp(np.log(self.r))
        self.chi = np.broadcast_to(chi[None, :, None], self.shape)
        wfs, wflat = self._ring_weights()
        self.w_fs = np.broadcast_to((wfs * self.dtheta)[None, :, None], self.shape).copy()
        self.w_flat = np.broadcast_to((wflat * self.dtheta)[None, :, None], self.shape).copy()
        for a in (self.w_fs, self.w_flat):
            a.setflags(write=False)

    # radial map ------------------------------------------------------------
    def _r_of_s(self, s):
        k = self.grading
        if k < 1e-8:
            return self.radius * s
        return self.radius * np.sinh(k * s) / np.sinh(k)

    def _dr_ds(self, s):
        k = self.grading
        if k < 1e-8:
            return np.full_like(s, self.radius)
        return self.radius * k * np.cosh(k * s) / np.sinh(k)

    def s_of_r(self, r):
        k = self.grading
        x = np.asarray(r, dtype=float) / self.radius
        if k < 1e-8:
            return x
        return np.arcsinh(x * np.sinh(k)) / k

    def _ring_weights(self):
        """Per-ring integrals of chi * density over each radial cell, by
        Gauss-Legendre on pieces split at the ramp ends."""
        n = self.n_r
        kinks = self.s_of_r(np.exp([-RAMP, RAMP]))
        xg, wg = _GL
        wfs = np.zeros(n)
        wflat = np.zeros(n)
        for j in range(n):
            lo, hi = j / n, (j + 1) / n
            cuts = [lo] + [c for c in kinks if lo < c < hi] + [hi]
            for a, b in zip(cuts[:-1], cuts[1:]):
                s = 0.5 * (b - a) * xg + 0.5 * (a + b)
                r = self._r_of_s(s)
                jac = self._dr_ds(s) * 0.5 * (b - a)
                c = ramp(np.log(r))
                wfs[j] += np.sum(wg * jac * c * r / (1 + r * r) ** 2) / np.pi
                wflat[j] += np.sum(wg * jac * c * 2 * r)
        return wfs, wflat

    # geometry helpers -------------------------------------------------------
    def mesh_size(self) -> float:
        """Largest chordal spacing between neighbouring nodes with weight."""
        r = self.r
        live = self.chi[0, :, 0] > 0
        fac = 1.0 / (1.0 + r * r)
        radial = np.diff(r) * fac[1:]
        ang = r * self.dtheta * fac
        return float(max(radial[live[1:]].max(), ang[live].max()))

    def local_spacing(self, vec) -> float:
        """Chordal spacing of the mesh around a point (its own chart)."""
        v = np.asarray(vec, dtype=complex)
        zeta = v[0] / v[1] if abs(v[0]) <= abs(v[1]) else v[1] / v[0]
        r = abs(zeta)
        j = int(np.clip(np.searchsorted(self.r, r), 1, self.n_r - 1))
        dr = self.r[j] - self.r[j - 1]
        return float(max(dr, self.r[j] * self.dtheta) / (1 + r * r))

    def sphere_points(self) -> np.ndarray:
        return sphere_xyz(self.points)

    # interpolation ---------------------------------------------------------
    def locate(self, vec: np.ndarray, prefer=None):
        """Chart and chart coordinate of unit vectors, using the z chart for
        |z| <= 1 and the w chart otherwise.  ``prefer`` (per point) keeps a
        chart whenever the point lies inside its last ring of nodes."""
        v = np.asarray(vec, dtype=complex)
        v0, v1 = v[..., 0], v[..., 1]
        chart = (np.abs(v0) > np.abs(v1)).astype(np.int64)
        if prefer is not None:
            prefer = np.broadcast_to(prefer, chart.shape)
            a0, a1 = np.abs(v0), np.abs(v1)
            rmax = self.r[-1] * (1 + 1e-12)
            inside = np.where(prefer == 0, a0 <= rmax * a1, a1 <= rmax * a0)
            chart = np.where(inside, prefer, chart)
        with np.errstate(divide="ignore", invalid="ignore"):
            zeta = np.where(chart == 0, v0 / v1, v1 / v0)
        return chart, zeta

    def interp_matrix(self, vec: np.ndarray, prefer=None) -> sparse.csr_matrix:
        """Sparse bilinear interpolation (in s and theta) from node values
        to the points ``vec``; rows follow the flattened points."""
        vec = np.asarray(vec).reshape(-1, 2)
        chart, zeta = self.locate(vec, None if prefer is None else np.ravel(prefer))
        x = self.s_of_r(np.abs(zeta)) * self.n_r - 0.5
        # points on the last ring (up to rounding) use the last cell
        j0 = np.minimum(np.floor(x).astype(np.int64), self.n_r - 2)
        t = x - j0
        y = np.mod(np.angle(zeta), 2 * np.pi) / self.dtheta
        k0 = np.floor(y).astype(np.int64)
        u = y - k0
        k0 %= self.n_theta
        k1 = (k0 + 1) % self.n_theta
        j1 = j0 + 1
        half = self.n_theta // 2
        nt = self.n_theta

        def flat(j, k):
            # ring -1 is ring 0 seen through the chart centre
            neg = j < 0
            jj = np.where(neg, 0, j)
            kk = np.where(neg, (k + half) % nt, k)
            return (chart * self.n_r + jj) * nt + kk

        rows = np.repeat(np.arange(len(vec)), 4)
        cols = np.stack([flat(j0, k0), flat(j0, k1), flat(j1, k0), flat(j1, k1)], 1).ravel()
        vals = np.stack([(1 - t) * (1 - u), (1 - t) * u, t * (1 - u), t * u], 1).ravel()
        return sparse.csr_matrix((vals, (rows, cols)), shape=(len(vec), self.size))

    def interpolate(self, values: np.ndarray, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec)
        out = self.interp_matrix(vec) @ np.asarray(values).ravel()
        return out.reshape(vec.shape[:-1])

    # derivatives -------------------------------------------------------------
    def d_s(self, f: np.ndarray) -> np.ndarray:
        """Derivative in the ring coordinate s, second order throughout."""
        h = 1.0 / self.n_r
        half = self.n_theta // 2
        out = np.empty_like(f)
        out[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2 * h)
        ghost = np.roll(f[:, 0], -half, axis=-1)
        out[:, 0] = (f[:, 1] - ghost) / (2 * h)
        out[:, -1] = (3 * f[:, -1] - 4 * f[:, -2] + f[:, -3]) / (2 * h)
        return out

    def d_theta(self, f: np.ndarray) -> np.ndarray:
        return (np.roll(f, -1, axis=-1) - np.roll(f, 1, axis=-1)) / (2 * self.dtheta)

    def del_values(self, f: np.ndarray) -> np.ndarray:
        """Coefficient of d(zeta) in the (1,0) part of df, per chart."""
        r = self.r[None, :, None]
        fr = self.d_s(f) / self.dr_ds[None, :, None]
        ph = np.exp(-1j * self.theta)[None, None, :]
        return 0.5 * ph * (fr - 1j * self.d_theta(f) / r)

    def __repr__(self):
        return f"SphereGrid({self.n_r}x{self.n_theta}, grading={self.grading})"


_GRIDS: dict = {}


def default_grid(n_r: int = 128, n_theta: int = 256, grading: float = DEFAULT_GRADING) -> SphereGrid:
    key = (n_r, n_theta, grading)
    if key not in _GRIDS:
        _GRIDS[key] = SphereGrid(n_r, n_theta, grading=grading)
    return _GRIDS[key]


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: SphereGrid
    values: np.ndarray  # real, shape (2, n_r, n_theta)

    @classmethod
    def from_points(cls, grid: SphereGrid, fn: Callable) -> "GridFunction":
        """Evaluate fn on unit homogeneous vectors of shape (..., 2)."""
        return cls(grid, np.asarray(fn(grid.points), dtype=float))

    @classmethod
    def constant(cls, grid: SphereGrid, c: float) -> "GridFunction":
        return cls(grid, np.full(grid.shape, float(c)))

    def __add__(self, other):
        o = other.values if isinstance(other, GridFunction) else other
        return GridFunction(self.grid, self.values + o)

    def __sub__(self, other):
        o = other.values if isinstance(other, GridFunction) else other
        return GridFunction(self.grid, self.values - o)

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__

    def at(self, vec) -> np.ndarray:
        return self.grid.interpolate(self.values, vec)

    def sup(self) -> float:
        """Sup norm over nodes that carry weight."""
        return float(np.abs(self.values[self.grid.chi > 0]).max())


@dataclass(frozen=True, eq=False)
class OneForm:
    grid: SphereGrid
    coef: np.ndarray  # complex, shape (2, n_r, n_theta)

    def __add__(self, other):
        return OneForm(self.grid, self.coef + other.coef)

    def __sub__(self, other):
        return OneForm(self.grid, self.coef - other.coef)

    def __mul__(self, c):
        return OneForm(self.grid, self.coef * c)

    __rmul__ = __mul__


def poly_form_values(lift: np.ndarray, j: int, k: int, m: int) -> np.ndarray:
    """u0^j conj(u0)^k u1^(m-j-2) conj(u1)^(m-k) / (|u0|^2+|u1|^2)^m at
    homogeneous vectors u.  With u = (z, 1) this is the dz coefficient of
    z^j zbar^k dz / (1+|z|^2)^m, a smooth form on the sphere when
    0 <= j <= m-2 and 0 <= k <= m."""
    u0, u1 = lift[..., 0], lift[..., 1]
    n2 = np.abs(u0) ** 2 + np.abs(u1) ** 2
    return u0 ** j * np.conj(u0) ** k * u1 ** (m - j - 2) * np.conj(u1) ** (m - k) / n2 ** m


def poly_form(grid: SphereGrid, coeffs: np.ndarray, m: int) -> OneForm:
    """sum_{j,k} c_jk z^j zbar^k dz/(1+|z|^2)^m, written in both charts."""
    coeffs = np.asarray(coeffs, dtype=complex).reshape(m - 1, m + 1)
    out = np.zeros(grid.shape, dtype=complex)
    for j in range(m - 1):
        for k in range(m + 1):
            if coeffs[j, k] != 0:
                out += coeffs[j, k] * poly_form_values(grid.lift, j, k, m)
    out[1] *= -1.0  # dz = -dw / w^2
    return OneForm(grid, out)


def random_function(grid: SphereGrid, rng: np.random.Generator, degree: int = 4) -> GridFunction:
    """Random polynomial in the ambient coordinates of the sphere."""
    xyz = grid.sphere_points()
    vals = np.zeros(grid.shape)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                vals += rng.standard_normal() * xyz[..., 0] ** a * xyz[..., 1] ** b * xyz[..., 2] ** c
    return GridFunction(grid, vals)


def random_form(grid: SphereGrid, rng: np.random.Generator, m: int = 4) -> OneForm:
    c = rng.standard_normal((m - 1, m + 1)) + 1j * rng.standard_normal((m - 1, m + 1))
    return poly_form(grid, c, m)


# ---------------------------------------------------------------------------
# integrals and norms


def integrate(f: GridFunction) -> float:
    return float(np.sum(f.grid.w_fs * f.values))


def del_(f: GridFunction) -> OneForm:
    return OneForm(f.grid, f.grid.del_values(f.values))


def l2_form_norm_sq(phi: OneForm) -> float:
    return float(np.sum(phi.grid.w_flat * np.abs(phi.coef) ** 2))


def l2_form_norm(phi: OneForm) -> float:
    return float(np.sqrt(l2_form_norm_sq(phi)))


def form_inner(phi: OneForm, psi: OneForm) -> complex:
    return complex(np.sum(phi.grid.w_flat * phi.coef * np.conj(psi.coef)))


def w12_norm(f: GridFunction, variant: str = "FS", region: Callable | None = None, nu=None) -> float:
    """Mass term plus ||del f||_{L2}.

    variant: "FS" (|int f|), "L1", "L2", "SubsetU" (|int over region|, the
    region a boolean function of unit vectors) or "Nu" (|<nu, f>| for an
    empirical measure nu).
    """
    g = f.grid
    if variant == "FS":
        mass = abs(integrate(f))
    elif variant == "L1":
        mass = float(np.sum(g.w_fs * np.abs(f.values)))
    elif variant == "L2":
        mass = float(np.sqrt(np.sum(g.w_fs * f.values ** 2)))
    elif variant == "SubsetU":
        mask = np.asarray(region(g.points), dtype=bool)
        wu = np.where(mask, g.w_fs, 0.0)
        if wu.sum() <= 0:
            raise EmptyRegion("region has no quadrature mass")
        mass = abs(float(np.sum(wu * f.values)))
    elif variant == "Nu":
        if nu is None:
            raise ValueError("Nu variant needs an empirical measure")
        mass = abs(float(np.dot(nu.weights, f.at(nu.points))))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return mass + l2_form_norm(del_(f))


# ---------------------------------------------------------------------------
# the norm cocycle and Jacobians


def _as_matrix(g) -> np.ndarray:
    return g.matrix if isinstance(g, mb.GroupElement) else np.asarray(g, dtype=complex)


def fs_jacobian(g, vec: np.ndarray) -> np.ndarray:
    """Density of g^* omega_FS against omega_FS at unit vectors: ||g v||^-4
    for det g = 1."""
    return mb.vnorm_arr(mb.act_arr(_as_matrix(g), np.asarray(vec))) ** -4


def theta_function(grid: SphereGrid, g) -> GridFunction:
    """theta_g(x) = log ||g v|| / ||v|| at the grid nodes."""
    return GridFunction(grid, mb.cocycle_arr(_as_matrix(g), grid.points))


def theta_energy(grid: SphereGrid, g) -> float:
    """4 ||del theta_g||^2 against i dz ^ dzbar, by 2-D quadrature.

    For g = diag(lam, 1/lam) this is the plane integral of
    (b-1)^2 |z|^2 / ((b|z|^2+1)^2 (|z|^2+1)^2) i dz ^ dzbar with b = lam^4.
    """
    return 4.0 * l2_form_norm_sq(del_(theta_function(grid, g)))


def theta_energy_bound(norm: float) -> float:
    """2 pi (b-1)/(b+1) log b with b = ||g||^4, an upper bound for
    theta_energy(g)."""
    b = float(norm) ** 4
    return 2 * np.pi * (b - 1) / (b + 1) * np.log(b)


# ---------------------------------------------------------------------------
# Young functions and Orlicz norms


class YoungFunction:
    def __init__(self, fn: Callable, name: str, q: float | None = None):
        self.fn = fn
        self.name = name
        self.q = q

    def __call__(self, t):
        with np.errstate(over="ignore"):
            return self.fn(np.asarray(t, dtype=float))

    @classmethod
    def power(cls, q: float) -> "YoungFunction":
        if q < 1:
            raise ValueError("q >= 1 for convexity")
        return cls(lambda t: t ** q, f"PowerQ({q:g})", q)

    @classmethod
    def hybrid_exp_cube(cls) -> "YoungFunction":
        return cls(_hybrid, "HybridExpCube")

    def check(self, lo: float = 1e-3, hi: float = 30.0, n: int = 400) -> bool:
        """Sampled convexity, monotonicity, Phi(0) = 0 and growth at most
        like exp(t^2)."""
        t = np.geomspace(lo, hi, n)
        v = self(t)
        fin = np.isfinite(v)
        t, v = t[fin], v[fin]
        slope = np.diff(v) / np.diff(t)
        ok = self(0.0) == 0 and np.all(np.diff(v) >= -1e-12 * np.abs(v[1:]))
        ok = ok and np.all(np.diff(slope) >= -1e-9 * np.abs(slope[1:]) - 1e-300)
        ratio = v * np.exp(-t * t)
        return bool(ok and np.all(np.isfinite(ratio)) and ratio.max() < 1e6)

    def __repr__(self):
        return self.name


_T0 = 0.75 ** (1.0 / 3.0)  # inflection point of exp(-t^-3)
_F0 = np.exp(-1.0 / _T0 ** 3)
_S0 = 3.0 * _F0 / _T0 ** 4


def _hybrid(t):
    """max of (exp(-t^-3) up to its inflection point, then its tangent line)
    and (e (2t - 1) below t = 1, exp(t^2) above).  Both pieces are convex,
    so the max is; it equals exp(-t^-3) on [0, 1/2] and exp(t^2) for t >= 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        low = np.where(t <= _T0, np.exp(-1.0 / np.maximum(t, 1e-300) ** 3), _F0 + _S0 * (t - _T0))
        high = np.where(t >= 1.0, np.exp(t * t), np.e * (2 * t - 1))
    low = np.where(t <= 0, 0.0, low)
    return np.maximum(low, np.maximum(high, 0.0))


def orlicz_integral(values: np.ndarray, weights: np.ndarray, phi: YoungFunction, a: float) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sum(weights * phi(np.abs(values) / a)))


def luxemburg_from_samples(values: np.ndarray, weights: np.ndarray, phi: YoungFunction,
                           a_lo: float = 1e-12, a_hi: float = 1e6, max_iter: int = 80,
                           tol: float = 1e-8) -> float:
    """inf{A : sum w Phi(|f|/A) <= 1} by bisection in log A."""
    values = np.asarray(values, dtype=float)
    if not np.any(values[weights > 0]):
        return 0.0
    if not orlicz_integral(values, weights, phi, a_hi) <= 1.0:
        raise Diverged("Orlicz integral exceeds 1 even at the upper bracket")
    lo, hi = np.log(a_lo), np.log(a_hi)
    if orlicz_integral(values, weights, phi, a_lo) <= 1.0:
        return a_lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = orlicz_integral(values, weights, phi, np.exp(mid))
        if val <= 1.0:
            hi = mid
            if 1.0 - val < tol:
                break
        else:
            lo = mid
        if hi - lo < 1e-15:
            break
    return float(np.exp(hi))


def luxemburg_norm(f: GridFunction, phi: YoungFunction) -> float:
    return luxemburg_from_samples(f.values, f.grid.w_fs, phi)


# ---------------------------------------------------------------------------
# bumps and exponential integrability


def bump_values(dist: np.ndarray, r: float, eps: float) -> np.ndarray:
    """max(-log(dist/(2r)), 0)^(1/2 - eps)."""
    with np.errstate(divide="ignore"):
        x = -np.log(np.maximum(dist, 1e-300) / (2 * r))
    return np.maximum(x, 0.0) ** (0.5 - eps)


def bump_u(grid: SphereGrid, a: mb.ProjPoint, r: float, eps: float = 0.25) -> GridFunction:
    if not 0 < r <= 1:
        raise ValueError("r must lie in (0, 1]")
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if r < 4 * grid.local_spacing(a.vec):
        raise UnresolvedRadius(f"r = {r:g} below 4 x local mesh spacing {grid.local_spacing(a.vec):.3g}")
    d = mb.chordal_arr(grid.points, a.vec)
    return GridFunction(grid, bump_values(d, r, eps))


def moser_trudinger_probe(family, alpha: float) -> float:
    """max over the family of int exp(alpha f^2) omega_FS."""
    best = 0.0
    for f in family:
        with np.errstate(over="ignore", invalid="ignore"):
            v = float(np.sum(f.grid.w_fs * np.exp(alpha * f.values ** 2)))
        if not np.isfinite(v):
            raise Overflow(f"exp(alpha f^2) overflows at alpha = {alpha:g}")
        best = max(best, v)
    return best


def calibrate_alpha(family, a_cap: float = 10.0, alpha0: float = 0.5, steps: int = 30) -> float:
    """Largest alpha (to a factor 2^(1/8)) keeping the probe below a_cap."""
    lo, hi = 0.0, alpha0
    while hi < 1e6:
        try:
            if moser_trudinger_probe(family, hi) >= a_cap:
                break
        except Overflow:
            break
        lo, hi = hi, 2 * hi
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        try:
            ok = moser_trudinger_probe(family, mid) < a_cap
        except Overflow:
            ok = False
        lo, hi = (mid, hi) if ok else (lo, mid)
    return lo


# ---------------------------------------------------------------------------
# serialisation

_MAGIC = b"SL2G"


def to_bytes(field) -> bytes:
    """Header (magic, kind, n_r, n_theta, radius, grading) then the values
    in row-major order (chart, ring, angle)."""
    g = field.grid
    arr = field.values if isinstance(field, GridFunction) else field.coef
    kind = 0 if isinstance(field, GridFunction) else 1
    head = _MAGIC + struct.pack("<BII2d", kind, g.n_r, g.n_theta, g.radius, g.grading)
    dtype = "<f8" if kind == 0 else "<c16"
    return head + np.ascontiguousarray(arr, dtype=dtype).tobytes()


def from_bytes(blob: bytes):
    if blob[:4] != _MAGIC:
        raise ValueError("not a grid field")
    kind, n_r, n_t, radius, grading = struct.unpack_from("<BII2d", blob, 4)
    off = 4 + struct.calcsize("<BII2d")
    g = SphereGrid(n_r, n_t, radius, grading)
    if kind == 0:
        return GridFunction(g, np.frombuffer(blob, "<f8", offset=off).reshape(g.shape).copy())
    return OneForm(g, np.frombuffer(blob, "<c16", offset=off).reshape(g.shape).copy())


def to_csv(field, path) -> None:
    g = field.grid
    c, j, k = np.indices(g.shape)
    z = g.coord[c, j, k]
    if isinstance(field, GridFunction):
        cols = [c, j, k, z.real, z.imag, field.values]
        head = "chart,ring,angle,re_coord,im_coord,value"
    else:
        cols = [c, j, k, z.real, z.imag, field.coef.real, field.coef.imag]
        head = "chart,ring,angle,re_coord,im_coord,re_value,im_value"
    data = np.stack([np.ravel(x) for x in cols], 1)
    fmt = ["%d", "%d", "%d"] + ["%.17g"] * (len(cols) - 3)
    np.savetxt(path, data, fmt=fmt, delimiter=",", header=head, comments="")
