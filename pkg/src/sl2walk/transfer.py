"""The transfer operator of a random walk on the sphere: pullback of
functions and (1,0)-forms, pushforward of point clouds, the operator norm
on L2 forms, and the two convergence experiments built on it.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import measures as ms
from . import mobius as mb
from . import sphere as sp
from .errors import Blowup, ElementaryMeasure
from .fitting import LineFit, fit_line
from .rng import as_streams, map_blocks


# ---------------------------------------------------------------------------
# empirical measures


class EmpiricalMeasure:
    """Weighted point cloud on the sphere (unit homogeneous vectors)."""

    def __init__(self, points, weights=None):
        pts = np.asarray(points, dtype=complex).reshape(-1, 2)
        self.points = mb.unit_arr(pts)
        if weights is None:
            w = np.full(len(pts), 1.0 / len(pts))
        else:
            w = np.asarray(weights, dtype=float)
            if np.any(w <= 0):
                raise ValueError("weights must be positive")
            if abs(w.sum() - 1) > 1e-10:
                raise ValueError(f"weights sum to {w.sum()!r}")
        self.weights = w

    @classmethod
    def dirac(cls, p: mb.ProjPoint) -> "EmpiricalMeasure":
        return cls(p.vec[None, :], [1.0])

    def __len__(self):
        return len(self.weights)

    def expect(self, fn) -> float:
        """<m, fn> for a GridFunction or a callable on unit vectors."""
        vals = fn.at(self.points) if isinstance(fn, sp.GridFunction) else fn(self.points)
        return float(np.dot(self.weights, vals))

    def resample(self, size: int, rng: np.random.Generator) -> "EmpiricalMeasure":
        """Systematic resampling to ``size`` equally weighted points."""
        u = (rng.random() + np.arange(size)) / size
        idx = np.searchsorted(np.cumsum(self.weights), u, side="right")
        idx = np.minimum(idx, len(self.weights) - 1)
        return EmpiricalMeasure(self.points[idx])


def pushforward_empirical(mu, m: EmpiricalMeasure, mode: str = "exact", rng=None,
                          cap: int = 2_000_000, resample_to: int = 100_000,
                          allow_resample: bool = True) -> EmpiricalMeasure:
    """mu * m: every pair (g_i x_j, w_i v_j) in exact mode, one random g per
    point in sampled mode."""
    if mode == "sampled":
        gen = rng if isinstance(rng, np.random.Generator) else as_streams(rng).get("pushforward")
        mats = mu.draw_mats(gen, len(m))
        return EmpiricalMeasure(mb.act_arr(mats, m.points), m.weights)
    if mode != "exact":
        raise ValueError("mode must be 'exact' or 'sampled'")
    if not isinstance(mu, ms.AtomicMeasure):
        raise ValueError("exact pushforward needs an atomic measure")
    pts = mb.act_atoms(mu.mats, m.points).reshape(-1, 2)
    w = (mu.weights[:, None] * m.weights[None, :]).ravel()
    out = EmpiricalMeasure(pts, w / w.sum())
    if len(out) > cap:
        if not allow_resample:
            raise Blowup(f"{len(out)} support points exceed the cap {cap}")
        gen = rng if isinstance(rng, np.random.Generator) else as_streams(rng).get("resample")
        out = out.resample(resample_to, gen)
    return out


# ---------------------------------------------------------------------------
# grid pullbacks


def pullback_matrices(mu: ms.AtomicMeasure, grid: sp.SphereGrid):
    """Sparse matrices of h -> sum w_i h o g_i and of the same on forms,
    including the derivative factor dzeta_y/dzeta_x."""
    fun = sparse.csr_matrix((grid.size, grid.size))
    form = sparse.csr_matrix((grid.size, grid.size), dtype=complex)
    lift = grid.lift.reshape(-1, 2)
    cx = np.repeat([0, 1], grid.n_r * grid.n_theta)
    for g, w in zip(mu.mats, mu.weights):
        u = mb.act_arr(g, lift)
        # stay in the node's own chart where possible, so Id is exact
        cy, _ = grid.locate(u, prefer=cx)
        interp = grid.interp_matrix(mb.unit_arr(u), prefer=cx)
        # derivative of the chart-to-chart map at each node
        q = np.where(cy == 0, u[:, 1], u[:, 0])
        deriv = np.where((cx + cy) % 2 == 0, 1.0, -1.0) / q ** 2
        fun = fun + w * interp
        form = form + sparse.diags(w * deriv) @ interp
    return fun.tocsr(), form.tocsr()


class TransferOperator:
    """Cached pullback matrices of one atomic measure on one grid."""

    def __init__(self, mu: ms.AtomicMeasure, grid: sp.SphereGrid):
        self.mu, self.grid = mu, grid
        self.fun, self.form = pullback_matrices(mu, grid)

    def on_function(self, f: sp.GridFunction) -> sp.GridFunction:
        return sp.GridFunction(self.grid, (self.fun @ f.values.ravel()).reshape(self.grid.shape))

    def on_form(self, phi: sp.OneForm) -> sp.OneForm:
        return sp.OneForm(self.grid, (self.form @ phi.coef.ravel()).reshape(self.grid.shape))


_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def transfer_operator(mu: ms.AtomicMeasure, grid: sp.SphereGrid) -> TransferOperator:
    per = _CACHE.setdefault(mu, {})
    key = id(grid)
    if key not in per or per[key].grid is not grid:
        per[key] = TransferOperator(mu, grid)
    return per[key]


def pullback_function(mu: ms.AtomicMeasure, f: sp.GridFunction) -> sp.GridFunction:
    return transfer_operator(mu, f.grid).on_function(f)


def pullback_form(mu: ms.AtomicMeasure, phi: sp.OneForm) -> sp.OneForm:
    return transfer_operator(mu, phi.grid).on_form(phi)


# ---------------------------------------------------------------------------
# operator norm on L2 (1,0)-forms


@dataclass
class GapEstimate:
    n_power: int
    norm_estimate: float
    iterations: int
    residual: float
    degree: int = 0
    dimension: int = 0
    power_estimate: float = float("nan")
    spectral_radius: float = float("nan")

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _basis_factors(lift: np.ndarray, m: int):
    """Factors X_j = u0^j u1^(m-2-j) and Y_k = conj(u0^k u1^(m-k)) / n2^m of
    the polynomial form basis, so that basis value (j, k) = X_j Y_k."""
    u0, u1 = lift[..., 0], lift[..., 1]
    n2 = np.abs(u0) ** 2 + np.abs(u1) ** 2
    x = np.stack([u0 ** j * u1 ** (m - 2 - j) for j in range(m - 1)])
    y = np.stack([np.conj(u0 ** k * u1 ** (m - k)) for k in range(m + 1)]) / n2 ** m
    return x, y


def _pulled_basis(mat: np.ndarray, z: np.ndarray, m: int) -> np.ndarray:
    """Values at z of the pullbacks by ``mat`` of all basis forms, shape
    (dim, len(z)).  In homogeneous form the pullback is the same
    expression evaluated at mat (z, 1), with no derivative factor left."""
    u = mb.act_arr(mat, np.stack([z, np.ones_like(z)], -1))
    x, y = _basis_factors(u, m)
    return (x[:, None, :] * y[None, :, :]).reshape(-1, len(z))


def _logpolar_rule(m: int, lam: float, ds: float = 0.1, s_max: float = 14.0):
    """Nodes and weights of i dz ^ dzbar on z = e^(s + i t).  The integrands
    are smooth and decay exponentially in s, so the trapezoid rule converges
    geometrically; ds = 0.1 already agrees with ds = 0.02 to ~1e-12."""
    n_t = 4 * m + 8
    n_s = int(np.ceil((2 * s_max + 2 * np.log(lam)) / ds)) + 1
    s = np.linspace(-s_max - 2 * np.log(lam), s_max, n_s)
    ds = s[1] - s[0]
    t = 2 * np.pi * np.arange(n_t) / n_t
    z = (np.exp(s)[:, None] * np.exp(1j * t)[None, :]).ravel()
    w = np.repeat(2 * np.exp(2 * s) * ds * (2 * np.pi / n_t), n_t)
    return z, w


def form_gram(mat: np.ndarray, m: int) -> np.ndarray:
    """K[a, b] = <g^* phi_b, phi_a> for g = mat on the polynomial basis.

    With g = k diag(lam, 1/lam) k', unitary invariance of the L2 norm moves
    k' to the other side: <(k a)^* phi_b, (k'^-1)^* phi_a>.  The first factor
    lives on scale 1/lam^2 near 0, which the log-polar rule resolves.
    """
    u, s, vh = np.linalg.svd(mat)
    u = u / np.sqrt(np.linalg.det(u))
    vh = vh / np.sqrt(np.linalg.det(vh))
    lam = float(s[0])
    z, w = _logpolar_rule(m, lam)
    left = _pulled_basis(u @ np.diag([lam, 1 / lam]), z, m)
    right = _pulled_basis(np.linalg.inv(vh), z, m)
    return (np.conj(right) * w) @ left.T


def _orthonormalizer(m: int):
    gram = form_gram(np.eye(2, dtype=complex), m)
    ev, q = np.linalg.eigh(gram)
    keep = ev > ev.max() * 1e-13
    return q[:, keep] / np.sqrt(ev[keep])


def galerkin_matrix(mu: ms.AtomicMeasure, m: int):
    """Matrix of the compressed operator P T P in an orthonormal basis of
    the degree-m polynomial forms, and the basis dimension."""
    winv = _orthonormalizer(m)
    k = sum(w * form_gram(g, m) for g, w in zip(mu.mats, mu.weights))
    return winv.conj().T @ k @ winv, winv.shape[1]


def _rel_key(m: np.ndarray) -> tuple:
    """Hashable key of a matrix mod sign, relative to its norm (safe for
    entries far beyond the int64 range of GroupElement.key)."""
    c = mb._canonical_sign(m[None])[0]
    scale = float(np.abs(c).max())
    r = np.round(np.concatenate([c.real.ravel(), c.imag.ravel()]) / scale, 10) + 0.0
    return tuple(r) + (round(float(np.log(scale)), 10),)


def image_gram(mu: ms.AtomicMeasure, m: int) -> np.ndarray:
    """H[a, b] = <T phi_b, T phi_a> for T the pullback by mu.

    Unitary invariance gives <g_j^* phi_b, g_i^* phi_a> = <(g_j g_i^-1)^* phi_b, phi_a>,
    so only the relative elements are needed; repeated ones are computed once.
    """
    mats = [np.asarray(g, dtype=complex) for g in mu.mats]
    inv = [np.linalg.inv(g) for g in mats]
    coef: dict = {}
    rep: dict = {}
    for i, wi in enumerate(mu.weights):
        for j, wj in enumerate(mu.weights):
            rel = mats[j] @ inv[i]
            key = _rel_key(rel)
            coef[key] = coef.get(key, 0.0) + wi * wj
            rep.setdefault(key, rel)
    return sum(c * form_gram(rep[k], m) for k, c in coef.items())


def gap_estimate(mu: ms.AtomicMeasure, N: int = 1, iters: int = 60, rng=0, degree: int = 8,
                 max_atoms: int = 100_000, tol: float = 1e-12) -> GapEstimate:
    """Operator norm of the N-th power of the pullback on L2 (1,0)-forms,
    restricted to the span V of z^j zbar^k dz/(1+|z|^2)^m (0 <= j <= m-2,
    0 <= k <= m).  V contains every form built from spherical harmonics
    of degree below m.

    The estimate is sup over V of ||T phi|| / ||phi||, the top root of the
    generalized eigenproblem H v = s^2 G v with G the Gram matrix of V and
    H that of its images; both come from quadrature in Cartan frames.  It
    is a lower bound for the norm on all of L2 that increases with m.

    The eigenproblem is small and solved densely.  Power iteration on the
    same matrix from a random start runs alongside; its Rayleigh quotient
    and last residual are reported as an independent check.  The spectral
    radius of the compressed operator P T P is also reported.
    """
    muN = ms.convolution_power(mu, N, max_atoms) if N > 1 else mu
    winv = _orthonormalizer(degree)
    dim = winv.shape[1]
    a = winv.conj().T @ image_gram(muN, degree) @ winv
    a = 0.5 * (a + a.conj().T)
    gen = as_streams(rng).get("gap_estimate")
    x = gen.standard_normal(dim) + 1j * gen.standard_normal(dim)
    x /= np.linalg.norm(x)
    est, res, it = 0.0, np.inf, 0
    for it in range(1, iters + 1):
        y = a @ x
        est = float(np.real(np.vdot(x, y)))
        res = float(np.linalg.norm(y - est * x))
        ny = np.linalg.norm(y)
        if ny == 0 or res < tol:
            break
        x = y / ny
    top = float(np.sqrt(max(np.linalg.eigvalsh(a)[-1], 0.0)))
    c = winv.conj().T @ sum(w * form_gram(g, degree) for g, w in zip(muN.mats, muN.weights)) @ winv
    rho = float(np.abs(np.linalg.eigvals(c)).max())
    return GapEstimate(N, top, it, res, degree, dim, float(np.sqrt(max(est, 0.0))), rho)


# ---------------------------------------------------------------------------
# convergence experiments


def _check_non_elementary(mu, max_len: int = 4):
    if isinstance(mu, ms.AtomicMeasure):
        v = ms.elementarity_check(mu, max_len)
        if v.elementary:
            raise ElementaryMeasure(f"{mu.name or 'measure'} is {v.status}")
        return v
    return None


@dataclass
class DecayResult:
    n: np.ndarray
    w12: np.ndarray
    sup: np.ndarray
    mass: np.ndarray
    limit: float
    fit: LineFit
    extra: dict = field(default_factory=dict)

    def rows(self):
        return [(int(n), float(a), float(b), float(c))
                for n, a, b, c in zip(self.n, self.w12, self.sup, self.mass)]


def _fit_window(n, d, floor_ratio: float = 1e-9, skip: int = 1):
    """Indices used for the log-linear fit: after a short transient and
    while the distance stays above a numerical floor."""
    d0 = d[0] if d[0] > 0 else 1.0
    ok = (n >= skip) & (d > floor_ratio * d0)
    return np.nonzero(ok)[0]


def iterate_pullback_experiment(mu: ms.AtomicMeasure, h: sp.GridFunction, n_max: int = 40,
                                check: bool = True, skip: int = 2) -> DecayResult:
    """Iterate h_n = pullback(h_{n-1}); report ||h_n - c||_{W12}, the sup
    distance and the running mass c_n = int h_n, where c is the last c_n."""
    if check:
        _check_non_elementary(mu)
    op = transfer_operator(mu, h.grid)
    hs = [h]
    for _ in range(n_max):
        hs.append(op.on_function(hs[-1]))
    mass = np.array([sp.integrate(f) for f in hs])
    c = mass[-1]
    dist = np.array([sp.w12_norm(f - c) for f in hs])
    sup = np.array([(f - c).sup() for f in hs])
    n = np.arange(n_max + 1)
    idx = _fit_window(n, dist, skip=skip)
    fit = fit_line(n[idx], np.log(np.maximum(dist[idx], 1e-300)))
    return DecayResult(n, dist, sup, mass, float(c), fit)


@dataclass
class EquidistResult:
    n: np.ndarray
    gap: np.ndarray
    stderr: np.ndarray
    reference: float
    fit: LineFit

    def rows(self):
        return [(int(a), float(b), float(c)) for a, b, c in zip(self.n, self.gap, self.stderr)]


def _as_callable(phi):
    if isinstance(phi, sp.GridFunction):
        return phi.at
    return phi


def walk_expectations(mu, a: mb.ProjPoint, phi, n_max: int, trials: int, streams,
                      workers: int = 1):
    """Per-step mean and variance of phi(g_n ... g_1 a) over trials, with
    the last step averaged exactly over the atoms of an atomic mu."""
    fn = _as_callable(phi)
    atomic = isinstance(mu, ms.AtomicMeasure)

    def block(b, start, stop):
        gen = streams.get("walk", b)
        size = stop - start
        x = np.broadcast_to(a.vec, (size, 2)).copy()
        s1 = np.zeros(n_max)
        s2 = np.zeros(n_max)
        for n in range(n_max):
            if atomic:
                # Rao-Blackwellised step: E[phi(g x)] given x
                imgs = mb.unit_arr(mb.act_atoms(mu.mats, x))
                vals = mu.weights @ fn(imgs)
            else:
                vals = fn(mb.unit_arr(mb.act_arr(mu.draw_mats(gen, size), x)))
            s1[n] += vals.sum()
            s2[n] += (vals ** 2).sum()
            x = mb.unit_arr(mb.act_arr(mu.draw_mats(gen, size), x))
        return s1, s2

    parts = map_blocks(block, trials, workers)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s1 / trials
    var = np.maximum(s2 / trials - mean ** 2, 0.0)
    return mean, np.sqrt(var / trials)


def stationary_sample(mu, size: int, rng, T: int = 60) -> EmpiricalMeasure:
    """Points g_1 ... g_T x0 (the forward product applied last to first),
    whose law approximates the stationary measure."""
    from .limits import boundary_points

    return EmpiricalMeasure(boundary_points(mu, size, as_streams(rng), T))


def equidistribution_experiment(mu, a: mb.ProjPoint, phi, n_max: int = 60, trials: int = 10_000,
                                rng=0, reference: float | None = None, nu_samples: int = 1_000_000,
                                workers: int = 1, check: bool = True,
                                noise_factor: float = 3.0) -> EquidistResult:
    """|<mu^n * delta_a - nu, phi>| for n = 1..n_max by Monte Carlo, with a
    log-linear fit over the steps where the difference exceeds
    noise_factor standard errors."""
    if check:
        _check_non_elementary(mu)
    streams = as_streams(rng)
    if reference is None:
        nu = stationary_sample(mu, nu_samples, streams.child("reference"))
        reference = nu.expect(_as_callable(phi))
    mean, err = walk_expectations(mu, a, phi, n_max, trials, streams.child("walk"), workers)
    gap = np.abs(mean - reference)
    n = np.arange(1, n_max + 1)
    above = gap > noise_factor * err
    # use the initial run of steps that stand out of the noise
    stop = int(np.argmin(above)) if not above.all() else len(above)
    idx = np.arange(max(stop, 2))
    fit = fit_line(n[idx], np.log(np.maximum(gap[idx], 1e-300)))
    return EquidistResult(n, gap, err, float(reference), fit)
