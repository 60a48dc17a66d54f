"""Regularity of stationary measures: disc masses, power and log-power
exponent fits, the bump-norm function V_eps and an exponential
integrability probe.

Discs are chordal: D(a, r) = {x : |a0 x1 - a1 x0| <= r}.  In these units the
normalised Fubini-Study mass of D(a, r) is exactly r^2.
"""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, optimize, special
from scipy.spatial import cKDTree

from . import mobius as mb
from . import sphere as sp
from .errors import Diverged, Overflow, Underresolved
from .fitting import LineFit, fit_line
from .transfer import EmpiricalMeasure

MIN_COUNT = 30


class Model(str, enum.Enum):
    POWER_LAW = "PowerLaw"
    LOG_POWER = "LogPower"


@dataclass
class RegularityFit:
    model: Model
    alpha_hat: float
    c_hat: float
    r_grid: np.ndarray
    worst_center_masses: np.ndarray
    r_squared: float
    fit: Optional[LineFit] = None

    def to_json(self) -> dict:
        return {"model": self.model.value, "alpha_hat": self.alpha_hat, "c_hat": self.c_hat,
                "r_grid": [float(r) for r in self.r_grid],
                "worst_center_masses": [float(m) for m in self.worst_center_masses],
                "r_squared": self.r_squared}

    def rows(self):
        return [(float(r), float(m)) for r, m in zip(self.r_grid, self.worst_center_masses)]


# ---------------------------------------------------------------------------
# discs and centres


def xyz_to_vec(xyz: np.ndarray) -> np.ndarray:
    """Inverse of sphere_xyz: unit homogeneous vectors over points of S^2."""
    xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    v1 = np.sqrt(np.clip((1 - z) / 2, 0, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        v0 = np.where(v1 > 1e-12, (x + 1j * y) / (2 * v1), 1.0)
    return mb.unit_arr(np.stack([v0, v1 + 0j], axis=-1))


def spread_centers(k: int = 64) -> np.ndarray:
    """Fibonacci lattice of ``k`` nearly equidistant points."""
    i = np.arange(k) + 0.5
    z = 1 - 2 * i / k
    phi = np.pi * (1 + 5 ** 0.5) * i
    rho = np.sqrt(1 - z * z)
    return xyz_to_vec(np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1))


def uniform_empirical(size: int, rng) -> EmpiricalMeasure:
    """Fubini-Study distributed sample (normalised complex Gaussian vectors)."""
    rng = np.random.default_rng(rng)
    v = rng.standard_normal((size, 2)) + 1j * rng.standard_normal((size, 2))
    return EmpiricalMeasure(v)


def disc_mass(nu: EmpiricalMeasure, a, r: float) -> float:
    if not 0 < r <= 1:
        raise ValueError("r must lie in (0, 1]")
    vec = a.vec if isinstance(a, mb.ProjPoint) else np.asarray(a, dtype=complex)
    d = mb.chordal_arr(nu.points, vec[None])
    return float(nu.weights[d <= r].sum())


def disc_masses(nu: EmpiricalMeasure, centers: np.ndarray, radii, workers: int = 1) -> np.ndarray:
    """Masses of D(c, r) for every centre and radius, shape (centres, radii)."""
    radii = np.asarray(radii, dtype=float)
    order = np.argsort(radii)
    edges = radii[order]

    def one(c):
        d = mb.chordal_arr(nu.points, c[None])
        # bin k holds the points with edges[k-1] < d <= edges[k]
        k = np.searchsorted(edges, d, side="left")
        cum = np.cumsum(np.bincount(k, weights=nu.weights, minlength=len(edges) + 1))
        out = np.empty(len(radii))
        out[order] = cum[:len(edges)]
        return out

    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        return np.array(list(ex.map(one, np.asarray(centers))))


def heavy_modes(nu: EmpiricalMeasure, r: float, k: int = 16, candidates: int = 4096) -> np.ndarray:
    """Up to ``k`` sample points carrying the most mass within distance r,
    greedily kept at least r apart."""
    xyz = sp.sphere_xyz(nu.points)
    tree = cKDTree(xyz)
    stride = max(1, len(nu) // candidates)
    cand = np.arange(0, len(nu), stride)
    # chordal distance is half the euclidean distance in R^3
    if np.ptp(nu.weights) == 0:
        mass = tree.query_ball_point(xyz[cand], 2 * r, return_length=True) * nu.weights[0]
    else:
        mass = np.empty(len(cand))
        for i0 in range(0, len(cand), 64):
            nbrs = tree.query_ball_point(xyz[cand[i0:i0 + 64]], 2 * r)
            mass[i0:i0 + 64] = [nu.weights[ix].sum() for ix in nbrs]
    picked = []
    for i in np.argsort(-mass, kind="stable"):
        p = nu.points[cand[i]]
        if all(mb.chordal_arr(p, q) >= r for q in picked):
            picked.append(p)
            if len(picked) == k:
                break
    return np.array(picked)


def default_centers(nu: EmpiricalMeasure, r_mode: float = 2.0 ** -6) -> np.ndarray:
    return np.concatenate([spread_centers(64), heavy_modes(nu, r_mode)])


def radius_grid(nu: EmpiricalMeasure, centers: np.ndarray, r_max: float = 0.25,
                min_count: int = MIN_COUNT, r_min: float = 2.0 ** -30, workers: int = 1) -> np.ndarray:
    """Halve from r_max while the densest disc still holds min_count points."""
    ladder = r_max * 0.5 ** np.arange(int(np.log2(r_max / r_min)) + 1)
    worst = disc_masses(nu, centers, ladder, workers).max(axis=0)
    ok = worst * len(nu) >= min_count
    stop = int(np.argmin(ok)) if not ok.all() else len(ladder)
    return ladder[:max(stop, 1)]


# ---------------------------------------------------------------------------
# exponent fits


def regularity_fit(nu: EmpiricalMeasure, centers=None, radii=None, model=Model.POWER_LAW,
                   workers: int = 1, min_count: int = MIN_COUNT) -> RegularityFit:
    """Regress the worst-centre disc mass against log r or log|log r|."""
    model = Model(model)
    if centers is None:
        centers = default_centers(nu)
    centers = np.atleast_2d(np.asarray(
        [c.vec if isinstance(c, mb.ProjPoint) else c for c in centers], dtype=complex))
    if radii is None:
        radii = radius_grid(nu, centers, min_count=min_count, workers=workers)
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    worst = disc_masses(nu, centers, radii, workers).max(axis=0)
    if worst[-1] * len(nu) < min_count:
        raise Underresolved(f"densest disc at r = {radii[-1]:g} holds {worst[-1] * len(nu):.1f} "
                            f"< {min_count} expected points")
    x = np.log(radii) if model is Model.POWER_LAW else np.log(np.abs(np.log(radii)))
    fit = fit_line(x, np.log(worst))
    alpha = fit.slope if model is Model.POWER_LAW else -fit.slope
    return RegularityFit(model, float(alpha), float(np.exp(fit.intercept)), radii, worst,
                         fit.r_squared, fit)


# ---------------------------------------------------------------------------
# V_eps


def _cap_integral(r: float, eps: float, phi: sp.YoungFunction, a: float) -> float:
    """int Phi(u/A) omega_FS for u the bump of radius r around any point.

    With rho the chordal distance the cap mass is rho^2; s = log(2r/rho)
    turns the integral into 8 r^2 int Phi(s^p / A) exp(-2s) ds, p = 1/2 - eps,
    over s >= max(0, log 2r).  Young functions grow at most like exp(t^2), so
    the integrand is below exp(s^(2p) / A^2 - 2s), which fixes where to stop.
    """
    p = 0.5 - eps
    s0 = max(0.0, np.log(2 * r))
    if phi.q is not None:
        # Phi(t) = t^q: int_{s0} s^(pq) exp(-2s) ds is an incomplete gamma
        k = p * phi.q + 1
        tail = special.gammaincc(k, 2 * s0) * special.gamma(k) / 2 ** k
        return 8 * r * r * tail / a ** phi.q
    expo = lambda s: s ** (2 * p) / (a * a) - 2 * s
    # the exponent is concave in s; it peaks where its derivative vanishes
    s_peak = max(s0, (p / (a * a)) ** (1 / (1 - 2 * p)))
    if expo(s_peak) > 700:
        return np.inf
    s_end = s_peak + 1.0
    while expo(s_end) > expo(s_peak) - 80:
        s_end = s_peak + 2 * (s_end - s_peak)

    def f(s):
        with np.errstate(over="ignore", invalid="ignore"):
            return float(phi(s ** p / a)) * np.exp(-2 * s)

    pts = [x for x in (s_peak,) if s0 < x < s_end]
    val, _ = integrate.quad(f, s0, s_end, points=pts or None, limit=400)
    out = 8 * r * r * val
    return out if np.isfinite(out) else np.inf


def v_eps(r: float, eps: float = 0.25, phi: Optional[sp.YoungFunction] = None,
          rtol: float = 1e-10) -> float:
    """Luxemburg norm of the bump u^eps_{a,r}; the same for every a."""
    if not 0 < r <= 1:
        raise ValueError("r must lie in (0, 1]")
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    phi = phi or sp.YoungFunction.hybrid_exp_cube()
    g = lambda la: _cap_integral(r, eps, phi, np.exp(la)) - 1.0
    lo, hi = np.log(1e-3), np.log(1e3)
    if not g(hi) <= 0:
        raise Diverged(f"Orlicz integral above 1 at A = 1e3 (r = {r:g})")
    while g(lo) <= 0:
        lo -= 5.0
        if lo < -200:
            return 0.0
    return float(np.exp(optimize.brentq(g, lo, hi, xtol=rtol)))


def v_eps_grid(grid: sp.SphereGrid, centers: Sequence, r: float, eps: float = 0.25,
               phi: Optional[sp.YoungFunction] = None) -> np.ndarray:
    """Grid quadrature of the same norm at several centres; used to spot
    check the centre independence of v_eps."""
    phi = phi or sp.YoungFunction.hybrid_exp_cube()
    return np.array([sp.luxemburg_norm(sp.bump_u(grid, a, r, eps), phi) for a in centers])


def v_bound_fit(fit: RegularityFit, eps: float = 0.25,
                phi: Optional[sp.YoungFunction] = None) -> LineFit:
    """Regress log(worst disc mass) on log V_eps(r) across the fit's radii."""
    v = np.array([v_eps(r, eps, phi) for r in fit.r_grid])
    return fit_line(np.log(v), np.log(fit.worst_center_masses))


# ---------------------------------------------------------------------------
# exponential integrability


@dataclass
class ExpIntegrability:
    A: float
    theta: float
    theta_max: float
    half_sample_ratio: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _exp_moment(nu: EmpiricalMeasure, vals: list, theta: float, sel=slice(None)) -> float:
    w = nu.weights[sel]
    best = 0.0
    for v in vals:
        with np.errstate(over="ignore"):
            m = float(np.sum(w * np.exp(theta * v[sel] ** 2)) / w.sum())
        if not np.isfinite(m):
            raise Overflow(f"exp(theta phi^2) overflows at theta = {theta:g}")
        best = max(best, m)
    return best


def exp_integrability_probe(nu: EmpiricalMeasure, family, theta: float,
                            stable_tol: float = 0.1, max_doublings: int = 30) -> ExpIntegrability:
    """max over the family of <nu, exp(theta phi^2)>.

    Members may be GridFunctions, callables on unit vectors or constants.
    theta_max is the largest theta * 2^k whose estimate is finite and whose
    even- and odd-indexed half samples agree within ``stable_tol``.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    vals = []
    for f in family:
        if isinstance(f, sp.GridFunction):
            vals.append(f.at(nu.points))
        elif callable(f):
            vals.append(np.asarray(f(nu.points), dtype=float))
        else:
            vals.append(np.full(len(nu), float(f)))
    a = _exp_moment(nu, vals, theta)

    def ratio(t):
        e = _exp_moment(nu, vals, t, slice(0, None, 2))
        o = _exp_moment(nu, vals, t, slice(1, None, 2))
        return max(e, o) / min(e, o)

    r0 = ratio(theta) if len(nu) > 1 else 1.0
    t_max = 0.0
    t = theta
    for _ in range(max_doublings):
        try:
            ok = len(nu) == 1 or ratio(t) - 1 <= stable_tol
        except Overflow:
            ok = False
        if not ok:
            break
        t_max = t
        t *= 2
    return ExpIntegrability(a, theta, t_max, r0)
