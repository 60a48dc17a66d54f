"""Lyapunov exponent, boundary map, the psi function and its Poisson sum,
Green-Kubo variance, the central limit experiment and the norm comparison
check.

All Monte Carlo estimators run in blocks of ``rng.BLOCK`` trials, each block
with its own named stream, and reduce the block results in order.  Long
products are renormalised by their Frobenius norm at every step with the
logarithm of the scale accumulated separately, so nothing overflows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from . import measures as ms
from . import mobius as mb
from . import sphere as sp
from .errors import MomentViolation, NonFinite, NotConverged, Unstable
from .fitting import LineFit, fit_line
from .rng import Streams, as_streams, map_blocks

BASE_POINT = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2)


def _frob(m: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(m) ** 2, axis=(-2, -1)))


def log_norm_product(mats: np.ndarray) -> float:
    """log ||g_n ... g_1|| for a sequence g_1..g_n (rows of ``mats``),
    computed with per-step renormalisation."""
    m = np.eye(2, dtype=complex)
    scale = 0.0
    for g in mats:
        m = g @ m
        f = np.sqrt(np.sum(np.abs(m) ** 2))
        m /= f
        scale += np.log(f)
    return float(scale + mb.log_opnorm_arr(m))


# ---------------------------------------------------------------------------
# Lyapunov exponent


@dataclass
class LyapunovReport:
    gamma_hat: float
    stderr: float
    n: int
    trials: int
    route: str

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _kingman_block(mu, n, streams, name):
    def block(b, start, stop):
        gen = streams.get(name, b)
        size = stop - start
        m = np.broadcast_to(np.eye(2, dtype=complex), (size, 2, 2)).copy()
        scale = np.zeros(size)
        for _ in range(n):
            m = mu.draw_mats(gen, size) @ m
            f = _frob(m)
            m /= f[:, None, None]
            scale += np.log(f)
        return (scale + mb.log_opnorm_arr(m)) / n
    return block


def lyapunov_kingman(mu, n: int = 1000, trials: int = 10_000, rng=0, workers: int = 1) -> LyapunovReport:
    """Mean and standard error of (1/n) log ||g_n ... g_1|| over trials."""
    if n < 1 or trials < 2:
        raise ValueError("n >= 1 and trials >= 2 required")
    streams = as_streams(rng)
    vals = np.concatenate(map_blocks(_kingman_block(mu, n, streams, "kingman"), trials, workers))
    return LyapunovReport(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(trials)), n, trials, "Kingman")


def lyapunov_furstenberg(mu: ms.AtomicMeasure, nu_emp, trials: Optional[int] = None, rng=0) -> LyapunovReport:
    """<nu x mu, theta> with the atom sum done exactly at each point of the
    empirical stationary measure (optionally a subsample of ``trials``)."""
    pts, w = nu_emp.points, nu_emp.weights
    if trials is not None and trials < len(pts):
        idx = as_streams(rng).get("furstenberg").choice(len(pts), trials, replace=False)
        pts, w = pts[idx], w[idx] / w[idx].sum()
    per_point = mu.weights @ mb.cocycle_atoms(mu.mats, pts)
    mean = float(np.dot(w, per_point))
    var = float(np.dot(w, (per_point - mean) ** 2))
    n_eff = 1.0 / float(np.sum(w ** 2))
    return LyapunovReport(mean, float(np.sqrt(var / n_eff)), 1, len(pts), "FurstenbergFormula")


# ---------------------------------------------------------------------------
# boundary map


@dataclass
class SkewSample:
    prefix: list
    z_point: mb.ProjPoint
    stable: bool
    shift: float


def _forward_points(mu, T: int, size: int, gen, x0=BASE_POINT):
    """g_1 ... g_T x0 and g_1 ... g_2T x0 for ``size`` independent sequences
    (products accumulate on the right)."""
    m = np.broadcast_to(np.eye(2, dtype=complex), (size, 2, 2)).copy()
    zt = None
    for step in range(2 * T):
        m = m @ mu.draw_mats(gen, size)
        m /= _frob(m)[:, None, None]
        if step == T - 1:
            zt = mb.unit_arr(mb.act_arr(m, x0))
    z2 = mb.unit_arr(mb.act_arr(m, x0))
    return zt, z2


def boundary_map(mu, T: int = 60, rng=0, tol: float = 1e-4) -> SkewSample:
    """One draw of the boundary point Z(g) ~ g_1 ... g_T x0."""
    gen = rng if isinstance(rng, np.random.Generator) else as_streams(rng).get("boundary_map")
    mats = mu.draw_mats(gen, 2 * T)
    m = np.eye(2, dtype=complex)
    zt = None
    for step, g in enumerate(mats):
        m = m @ g
        m /= np.sqrt(np.sum(np.abs(m) ** 2))
        if step == T - 1:
            zt = mb.unit_arr(m @ BASE_POINT)
    z2 = mb.unit_arr(m @ BASE_POINT)
    shift = float(mb.chordal_arr(zt, z2))
    if shift > tol:
        raise Unstable(f"extension from T={T} to {2 * T} moved the point by {shift:.2e}")
    return SkewSample([mb.GroupElement(g) for g in mats[:T]], mb.ProjPoint(zt), shift < 1e-6, shift)


def boundary_points(mu, size: int, rng=0, T: int = 60, min_stable: float = 0.99,
                    max_T: int = 960, workers: int = 1, return_info: bool = False):
    """Many independent boundary points.  T doubles until at least
    ``min_stable`` of the draws move by less than 1e-6 when T doubles."""
    streams = as_streams(rng)
    while True:
        def block(b, start, stop):
            return _forward_points(mu, T, stop - start, streams.get(f"boundary{T}", b))
        parts = map_blocks(block, size, workers, size=8192)
        zt = np.concatenate([p[0] for p in parts])
        z2 = np.concatenate([p[1] for p in parts])
        frac = float(np.mean(mb.chordal_arr(zt, z2) < 1e-6))
        if frac >= min_stable or 2 * T > max_T:
            break
        T *= 2
    if return_info:
        return zt, {"T": T, "stable_fraction": frac}
    return zt


# ---------------------------------------------------------------------------
# psi, Gordin tail, Green-Kubo


def psi_values(mu: ms.AtomicMeasure, gamma: float, vec: np.ndarray) -> np.ndarray:
    return gamma - np.tensordot(mu.weights, mb.cocycle_atoms(mu.mats, np.asarray(vec)), axes=1)


def psi_function(mu: ms.AtomicMeasure, gamma: float, grid: sp.SphereGrid) -> sp.GridFunction:
    """psi(x) = gamma - sum_i w_i theta(g_i, x) on the grid."""
    return sp.GridFunction(grid, psi_values(mu, gamma, grid.points))


@dataclass
class GordinTail:
    norms: np.ndarray
    iterates: list
    fit: LineFit
    limit: float
    floor: float

    @property
    def ratio(self) -> float:
        return float(np.exp(self.fit.slope))


def gordin_tail(mu: ms.AtomicMeasure, gamma: float, K: int, nu_emp, grid: sp.SphereGrid,
                rel_floor: float = 1e-12) -> GordinTail:
    """||(f*)^(n-1) psi - c||_{L2(nu_emp)} for n = 1..K, c the limit constant.

    On the grid the iterates settle on a constant c, zero up to the Monte
    Carlo error in gamma (it equals <nu, psi>); ``limit`` reports it.  The
    deviation from c is what decays geometrically.  The fit runs over the
    terms above ``rel_floor`` times the first one, the last iterate (which
    defines c) excluded.
    """
    from .transfer import transfer_operator

    if K < 3:
        raise ValueError("K must be at least 3")
    op = transfer_operator(mu, grid)
    h = psi_function(mu, gamma, grid)
    its = [h]
    for _ in range(K - 1):
        its.append(op.on_function(its[-1]))
    w = nu_emp.weights
    vals = [f.at(nu_emp.points) for f in its]
    c = float(np.dot(w, vals[-1]))
    norms = np.array([np.sqrt(np.dot(w, (v - c) ** 2)) for v in vals])
    floor = rel_floor * norms[0]
    above = norms[:-1] > floor
    stop = int(np.argmin(above)) if not above.all() else K - 1
    keep = np.arange(max(stop, 2))
    keep = keep[norms[keep] > 0]  # an identically zero tail has nothing to fit
    fit = fit_line(keep + 1, np.log(norms[keep]))
    return GordinTail(norms, its, fit, c, floor)


@dataclass
class GreenKuboReport:
    sigma2: float
    stderr: float
    terms: np.ndarray
    partial_sums: np.ndarray
    mc_samples: int
    K: int

    def to_json(self) -> dict:
        return {"sigma2": self.sigma2, "stderr": self.stderr, "mc_samples": self.mc_samples,
                "K": self.K, "terms": self.terms.tolist(), "partial_sums": self.partial_sums.tolist()}


def green_kubo_variance(mu: ms.AtomicMeasure, gamma: float, K: int = 30, mc_samples: int = 200_000,
                        T: int = 60, rng=0, grid: Optional[sp.SphereGrid] = None,
                        tail: Optional[GordinTail] = None, nu_points: Optional[np.ndarray] = None,
                        tol: float = 1e-3, workers: int = 1) -> GreenKuboReport:
    """sigma^2 = <m, phi~^2> + 2 sum_{n>=1} <m, phi~ . (phi~ o F^n)>, phi~ centered.

    A draw from the skew-product measure m is (g, x) with x = g_1 y, y
    stationary and independent of g_1, and phi~ = gamma - theta(g_1, y).
    By the adjoint identity the n-th correlation is
    E[phi~ . ((f*)^(n-1) psi)(x)], evaluated by interpolating the grid
    iterates at x.  The expectation over g_1 is done exactly over the atoms.
    """
    streams = as_streams(rng)
    grid = grid or sp.default_grid()
    if nu_points is None:
        nu_points = boundary_points(mu, mc_samples, streams.child("gk_nu"), T, workers=workers)
    y = nu_points[:mc_samples]
    if tail is None:
        from .transfer import EmpiricalMeasure

        tail = gordin_tail(mu, gamma, K, EmpiricalMeasure(y[: min(len(y), 100_000)]), grid)
    its = tail.iterates[:K]
    phit = gamma - mb.cocycle_atoms(mu.mats, y)  # (atoms, M)
    x = mb.unit_arr(mb.act_atoms(mu.mats, y))
    w = mu.weights[:, None]
    # center by the sample mean: a small error in gamma would otherwise add
    # a constant c^2 to every correlation term
    m0 = float(np.mean(np.sum(w * phit, axis=0)))
    phit = phit - m0
    per = [np.sum(w * phit * (f.at(x) - m0), axis=0) for f in its]  # n = 1..K
    terms = np.array([float(p.mean()) for p in per])
    q = np.sum(w * phit ** 2, axis=0) + 2 * np.sum(per, axis=0)
    partial = np.cumsum(np.concatenate([[float(np.mean(np.sum(w * phit ** 2, axis=0)))], 2 * terms]))
    if K >= 2 and abs(2 * terms[-1]) > tol:
        raise NotConverged(f"last Green-Kubo term {2 * terms[-1]:.2e} exceeds {tol}")
    return GreenKuboReport(float(q.mean()), float(q.std(ddof=1) / np.sqrt(len(q))), terms, partial,
                           len(q), K)


def skew_mean_phi(mu: ms.AtomicMeasure, gamma: float, nu_points: np.ndarray):
    """Monte Carlo <m, phi> with phi = log ||g_1^-1 v|| / ||v|| at x = Z(g);
    should be close to -gamma.  Returns (mean, stderr)."""
    vals = -mu.weights @ mb.cocycle_atoms(mu.mats, nu_points)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals)))


# ---------------------------------------------------------------------------
# central limit theorem


@dataclass
class CltReport:
    n: int
    trials: int
    sample: np.ndarray
    ks_statistic: float
    sigma2_empirical: float
    sigma2_green_kubo: Optional[float] = None
    mean: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"n": self.n, "trials": self.trials, "ks_statistic": self.ks_statistic,
                "sigma2_empirical": self.sigma2_empirical,
                "sigma2_green_kubo": self.sigma2_green_kubo, "mean": self.mean, **self.extra}


def cocycle_sums(mu, vecs: np.ndarray, n: int, trials: int, streams: Streams, name: str = "clt",
                 workers: int = 1) -> np.ndarray:
    """log ||g_n ... g_1 v|| / ||v|| for each start vector in ``vecs``, all
    driven by the same random words.  Shape (len(vecs), trials)."""
    vecs = mb.unit_arr(np.atleast_2d(np.asarray(vecs, dtype=complex)))

    def block(b, start, stop):
        gen = streams.get(name, b)
        size = stop - start
        x = np.broadcast_to(vecs[:, None, :], (len(vecs), size, 2)).copy()
        acc = np.zeros((len(vecs), size))
        for _ in range(n):
            x = mb.act_arr(mu.draw_mats(gen, size)[None], x)
            nr = mb.vnorm_arr(x)
            acc += np.log(nr)
            x /= nr[..., None]
        return acc

    return np.concatenate(map_blocks(block, trials, workers), axis=1)


def _ks(sample: np.ndarray, loc: float, var: float) -> float:
    return float(stats.kstest(sample, "norm", args=(loc, np.sqrt(var))).statistic)


def clt_experiment(mu, v, gamma: float, n: int = 2000, trials: int = 10_000, rng=0,
                   workers: int = 1, extra_v=None) -> CltReport:
    """Sample Y_n = (log ||g_n ... g_1 v|| / ||v|| - n gamma) / sqrt(n).

    ``ks_statistic`` compares the sample with the fitted Gaussian (sample
    mean and variance); ``extra['ks_centered']`` uses N(0, s^2) instead and
    carries the O(n^-1/2) start-point bias of the mean.  Each vector of
    ``extra_v`` gets its own independent words and its variance lands in
    ``extra['sigma2_by_v']``.
    """
    try:
        ms.moment(mu, ms.MomentSpec.power(2), rng=rng)
    except NonFinite as e:
        raise MomentViolation(str(e)) from e
    streams = as_streams(rng)
    vs = [v] + list(extra_v or [])
    ys = []
    for i, p in enumerate(vs):
        vec = p.vec if isinstance(p, mb.ProjPoint) else np.asarray(p, complex)
        name = "clt" if i == 0 else f"clt_v{i}"
        sums = cocycle_sums(mu, vec[None], n, trials, streams, name=name, workers=workers)[0]
        ys.append((sums - n * gamma) / np.sqrt(n))
    y = ys[0]
    var = float(y.var(ddof=1))
    mean = float(y.mean())
    if var > 0:
        ks = _ks(y, mean, var)
        ksc = _ks(y, 0.0, var)
    else:
        ks = ksc = float("nan")
    extra = {"ks_centered": ksc}
    if len(vs) > 1:
        extra["sigma2_by_v"] = [float(s.var(ddof=1)) for s in ys]
    return CltReport(n, trials, y, ks, var, None, mean, extra)


def skew_birkhoff_sample(mu, gamma: float, n: int, trials: int, rng=0, T: int = 60) -> np.ndarray:
    """Z_n = (sum_{j<n} phi~ o F^j) / sqrt(n) at m-distributed points.

    With x = Z(g) and Z(g) = g_1 ... g_n Z(T^n g), the Birkhoff sum of the
    inverse word equals -log ||g_1 ... g_n W|| / ||W|| + n gamma for a lift
    W of Z(T^n g), which is stationary and independent of g_1..g_n.
    """
    streams = as_streams(rng)
    w = boundary_points(mu, trials, streams.child("tail"), T)
    gen = streams.get("skew_words")
    x = w.copy()
    acc = np.zeros(trials)
    for _ in range(n):
        # apply g_n first and g_1 last: the product g_1 ... g_n W
        x = mb.act_arr(mu.draw_mats(gen, trials), x)
        nr = mb.vnorm_arr(x)
        acc += np.log(nr)
        x /= nr[:, None]
    return (-acc + n * gamma) / np.sqrt(n)


def stationary_start_sample(mu, gamma: float, n: int, trials: int, rng=0, T: int = 60) -> np.ndarray:
    """Y_n with v drawn from the stationary measure."""
    streams = as_streams(rng)
    v = boundary_points(mu, trials, streams.child("start"), T)
    gen = streams.get("start_words")
    x = v.copy()
    acc = np.zeros(trials)
    for _ in range(n):
        x = mb.act_arr(mu.draw_mats(gen, trials), x)
        nr = mb.vnorm_arr(x)
        acc += np.log(nr)
        x /= nr[:, None]
    return (acc - n * gamma) / np.sqrt(n)


# ---------------------------------------------------------------------------
# norm comparison


@dataclass
class NormComparison:
    deltas: np.ndarray
    fractions: np.ndarray
    min_ratio: np.ndarray
    max_ratio: float

    def rows(self):
        return [(float(d), float(f)) for d, f in zip(self.deltas, self.fractions)]


def norm_comparison_check(mu, v, n: int = 500, trials: int = 10_000, delta_grid=None, rng=0,
                          workers: int = 1) -> NormComparison:
    """Fraction of trajectories with delta <= ||g_k..g_1 v|| / (||g_k..g_1|| ||v||)
    for every k <= n, for each delta in the grid."""
    if delta_grid is None:
        delta_grid = np.array([0.0, 1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.2, 0.5])
    delta_grid = np.asarray(delta_grid, dtype=float)
    vec = mb.unit_arr(np.asarray(v.vec if isinstance(v, mb.ProjPoint) else v, dtype=complex))
    streams = as_streams(rng)

    def block(b, start, stop):
        gen = streams.get("normcheck", b)
        size = stop - start
        m = np.broadcast_to(np.eye(2, dtype=complex), (size, 2, 2)).copy()
        lo = np.full(size, np.inf)
        hi = np.zeros(size)
        for _ in range(n):
            m = mu.draw_mats(gen, size) @ m
            m /= _frob(m)[:, None, None]
            ratio = mb.vnorm_arr(mb.act_arr(m, vec)) / mb.opnorm_arr(m)
            lo = np.minimum(lo, ratio)
            hi = np.maximum(hi, ratio)
        return lo, hi

    parts = map_blocks(block, trials, workers)
    lo = np.concatenate([p[0] for p in parts])
    hi = max(float(p[1].max()) for p in parts)
    fr = np.array([float(np.mean(lo >= d)) for d in delta_grid])
    return NormComparison(delta_grid, fr, lo, hi)
