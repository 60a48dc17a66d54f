"""Exact 2x2 unimodular matrix layer: composition, norms, Cartan
decomposition, Moebius action on the Riemann sphere, classification and the
norm cocycle.

Single elements are wrapped in :class:`GroupElement` and :class:`ProjPoint`.
The Monte Carlo kernels work on stacked arrays instead (matrices of shape
``(..., 2, 2)``, homogeneous vectors of shape ``(..., 2)``); the ``*_arr``
helpers below are the vectorised counterparts used by the other modules.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import IdentityInput

DET_TOL = 1e-12
CLS_TOL = 1e-9
_ID_TOL = 1e-9


# ---------------------------------------------------------------------------
# vectorised helpers


def as_matrices(m) -> np.ndarray:
    return np.asarray(m, dtype=complex)


def det_arr(m: np.ndarray) -> np.ndarray:
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def renormalize_arr(m: np.ndarray) -> np.ndarray:
    """Divide by a square root of the determinant so that det = 1."""
    d = det_arr(m)
    return m / np.sqrt(d)[..., None, None]


def inverse_arr(m: np.ndarray) -> np.ndarray:
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 1, 1] = m[..., 0, 0]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    return out


def sq_opnorm_arr(m: np.ndarray) -> np.ndarray:
    """Largest eigenvalue of g g* for det-1 matrices, without cancellation."""
    a, b, c, d = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]
    p = np.abs(a) ** 2 + np.abs(b) ** 2
    q = np.abs(c) ** 2 + np.abs(d) ** 2
    r = a * np.conj(c) + b * np.conj(d)
    return 0.5 * (p + q) + np.sqrt(0.25 * (p - q) ** 2 + np.abs(r) ** 2)


def opnorm_arr(m: np.ndarray) -> np.ndarray:
    return np.sqrt(sq_opnorm_arr(m))


def log_opnorm_arr(m: np.ndarray) -> np.ndarray:
    return 0.5 * np.log(sq_opnorm_arr(m))


def act_arr(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product on stacked homogeneous vectors."""
    return np.stack(
        [m[..., 0, 0] * v[..., 0] + m[..., 0, 1] * v[..., 1],
         m[..., 1, 0] * v[..., 0] + m[..., 1, 1] * v[..., 1]],
        axis=-1,
    )


def vnorm_arr(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.abs(v[..., 0]) ** 2 + np.abs(v[..., 1]) ** 2)


def unit_arr(v: np.ndarray) -> np.ndarray:
    return v / vnorm_arr(v)[..., None]


def canonical_points_arr(v: np.ndarray) -> np.ndarray:
    """Unit-normalise and rotate the phase so the first non-zero coordinate
    is real and positive."""
    v = unit_arr(np.asarray(v, dtype=complex))
    lead = np.where(np.abs(v[..., 0]) > 1e-300, v[..., 0], v[..., 1])
    phase = np.exp(-1j * np.angle(lead))
    return v * phase[..., None]


def apply_arr(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Moebius action on unit vectors, result renormalised to unit length."""
    return unit_arr(act_arr(m, v))


def chordal_arr(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Chordal distance |v0 w1 - v1 w0| between unit homogeneous vectors."""
    return np.abs(v[..., 0] * w[..., 1] - v[..., 1] * w[..., 0])


def cocycle_arr(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """log ||g v|| / ||v||, the norm cocycle theta_g."""
    return np.log(vnorm_arr(act_arr(m, v))) - np.log(vnorm_arr(v))


def _atoms_view(mats: np.ndarray, v: np.ndarray) -> np.ndarray:
    nb = np.ndim(v) - 1
    return mats.reshape(mats.shape[0], *([1] * nb), 2, 2)


def act_atoms(mats: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Every matrix of a (k, 2, 2) stack applied to every vector; the result
    has shape (k, *v.shape)."""
    v = np.asarray(v)
    return act_arr(_atoms_view(mats, v), v[None])


def cocycle_atoms(mats: np.ndarray, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    return cocycle_arr(_atoms_view(mats, v), v[None])


def affine_to_vec(z) -> np.ndarray:
    """Unit lifts of affine coordinates; ``inf`` maps to [1:0]."""
    z = np.asarray(z, dtype=complex)
    inf = ~np.isfinite(z)
    zz = np.where(inf, 0.0, z)
    v = np.stack([zz, np.ones_like(zz)], axis=-1)
    v[inf] = (1.0, 0.0)
    return unit_arr(v)


def vec_to_affine(v: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        z = v[..., 0] / v[..., 1]
    return np.where(np.abs(v[..., 1]) == 0, np.inf, z)


def trace2_arr(m: np.ndarray) -> np.ndarray:
    return (m[..., 0, 0] + m[..., 1, 1]) ** 2


def is_identity_arr(m: np.ndarray, tol: float = _ID_TOL) -> np.ndarray:
    eye = np.eye(2)
    close = lambda s: np.all(np.abs(m - s * eye) <= tol, axis=(-2, -1))
    return close(1.0) | close(-1.0)


# classification codes used by the array kernels
IDENTITY, PARABOLIC, ELLIPTIC, LOXODROMIC = 0, 1, 2, 3


def classify_arr(m: np.ndarray, tol: float = CLS_TOL) -> np.ndarray:
    t2 = trace2_arr(m)
    para = np.abs(t2 - 4.0) <= tol
    # distance from Tr^2 to the real segment [0, 4]
    dist = np.abs(t2 - np.clip(t2.real, 0.0, 4.0))
    ell = dist <= tol
    out = np.where(para, PARABOLIC, np.where(ell, ELLIPTIC, LOXODROMIC))
    return np.where(is_identity_arr(m), IDENTITY, out)


# ---------------------------------------------------------------------------
# value types


def _canonical_sign(m: np.ndarray) -> np.ndarray:
    for x in m.ravel():
        if abs(x) > 1e-12:
            if abs(x.real) > 1e-12:
                return m if x.real > 0 else -m
            return m if x.imag > 0 else -m
    return m


class GroupElement:
    """An element of SL2(C), stored as its canonical PSL2 representative.

    Construction divides by a square root of the determinant and fixes the
    sign so that the first non-zero entry has positive real part (positive
    imaginary part when the real part vanishes).
    """

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.array(matrix, dtype=complex).reshape(2, 2)
        d = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if d == 0:
            raise ValueError("singular matrix")
        if abs(d - 1) > DET_TOL:
            m = m / np.sqrt(d)
        m = _canonical_sign(m)
        m.setflags(write=False)
        self.matrix = m

    @classmethod
    def from_entries(cls, a, b, c, d) -> "GroupElement":
        return cls([[a, b], [c, d]])

    @classmethod
    def identity(cls) -> "GroupElement":
        return cls(np.eye(2))

    @classmethod
    def diag(cls, lam) -> "GroupElement":
        return cls([[lam, 0], [0, 1 / lam]])

    @classmethod
    def rotation(cls, axis, angle: float) -> "GroupElement":
        """SU(2) element rotating the sphere by ``angle`` about a unit
        vector ``axis`` of R^3."""
        nx, ny, nz = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
        c, s = np.cos(angle / 2), np.sin(angle / 2)
        return cls([[c - 1j * s * nz, -1j * s * (nx - 1j * ny)],
                    [-1j * s * (nx + 1j * ny), c + 1j * s * nz]])

    a = property(lambda self: self.matrix[0, 0])
    b = property(lambda self: self.matrix[0, 1])
    c = property(lambda self: self.matrix[1, 0])
    d = property(lambda self: self.matrix[1, 1])

    @property
    def det(self) -> complex:
        return complex(det_arr(self.matrix))

    @property
    def trace(self) -> complex:
        return complex(self.matrix[0, 0] + self.matrix[1, 1])

    def inverse(self) -> "GroupElement":
        return GroupElement(inverse_arr(self.matrix))

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return compose(self, other)

    def __pow__(self, n: int) -> "GroupElement":
        if n < 0:
            return self.inverse() ** (-n)
        out = GroupElement.identity()
        base = self
        while n:
            if n & 1:
                out = compose(out, base)
            base = compose(base, base)
            n >>= 1
        return out

    def equiv(self, other: "GroupElement", tol: float = 1e-9) -> bool:
        """Equality in PSL2: g = +h or g = -h entrywise within ``tol``."""
        m, n = self.matrix, other.matrix
        return bool(np.all(np.abs(m - n) <= tol) or np.all(np.abs(m + n) <= tol))

    def key(self, snap: float = 1e-9) -> tuple:
        """Hashable snap-to-grid key of the canonical representative."""
        m = self.matrix.ravel()
        return tuple(np.round(np.concatenate([m.real, m.imag]) / snap).astype(np.int64).tolist())

    def is_identity(self, tol: float = _ID_TOL) -> bool:
        return bool(is_identity_arr(self.matrix, tol))

    def __repr__(self) -> str:
        a, b, c, d = self.matrix.ravel()
        return f"GroupElement([[{a:.6g}, {b:.6g}], [{c:.6g}, {d:.6g}]])"


class ProjPoint:
    """A point of P^1 as a unit homogeneous pair (z0, z1) whose first
    non-zero coordinate is real and positive."""

    __slots__ = ("vec",)

    def __init__(self, z0, z1=None):
        v = np.asarray(z0 if z1 is None else (z0, z1), dtype=complex).reshape(2)
        if not np.any(v):
            raise ValueError("(0, 0) is not a point of P^1")
        v = canonical_points_arr(v)
        v.setflags(write=False)
        self.vec = v

    @classmethod
    def from_affine(cls, z) -> "ProjPoint":
        """The point [z:1], or [1:0] when z is infinite."""
        return cls(affine_to_vec(z))

    @classmethod
    def infinity(cls) -> "ProjPoint":
        return cls(1.0, 0.0)

    z0 = property(lambda self: self.vec[0])
    z1 = property(lambda self: self.vec[1])

    @property
    def affine(self) -> complex:
        return complex(vec_to_affine(self.vec))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProjPoint):
            return NotImplemented
        return spherical_distance(self, other) <= 1e-12

    def __hash__(self):
        return hash(tuple(np.round(self.vec.view(float) * 1e9).astype(np.int64)))

    def __repr__(self) -> str:
        z = self.affine
        return "ProjPoint(inf)" if np.isinf(z.real) else f"ProjPoint({z:.6g})"


@dataclass(frozen=True)
class CartanTriple:
    """g = k . diag(lam, 1/lam) . k_prime with k, k_prime in SU(2)."""

    k: GroupElement
    lam: float
    k_prime: GroupElement

    def reconstruct(self) -> GroupElement:
        a = np.diag([self.lam, 1 / self.lam]).astype(complex)
        return GroupElement(self.k.matrix @ a @ self.k_prime.matrix)


class MobiusClass(enum.Enum):
    Identity = IDENTITY
    Parabolic = PARABOLIC
    Elliptic = ELLIPTIC
    Loxodromic = LOXODROMIC


# ---------------------------------------------------------------------------
# operations


def compose(g: GroupElement, h: GroupElement) -> GroupElement:
    """The product g h (apply h first)."""
    return GroupElement(g.matrix @ h.matrix)


def apply(g: GroupElement, p: ProjPoint) -> ProjPoint:
    return ProjPoint(act_arr(g.matrix, p.vec))


def operator_norm(g: GroupElement) -> float:
    return float(opnorm_arr(g.matrix))


def cartan(g: GroupElement) -> CartanTriple:
    lam = operator_norm(g)
    if lam - 1.0 <= 1e-12:
        return CartanTriple(g, 1.0, GroupElement.identity())
    u, s, vh = np.linalg.svd(g.matrix)
    u = u / np.sqrt(np.linalg.det(u))
    vh = vh / np.sqrt(np.linalg.det(vh))
    return CartanTriple(GroupElement(u), float(s[0]), GroupElement(vh))


def classify(g: GroupElement, tol: float = CLS_TOL) -> MobiusClass:
    return MobiusClass(int(classify_arr(g.matrix, tol)))


def fixed_points(g: GroupElement) -> list[ProjPoint]:
    """Fixed points as eigen-directions of g, i.e. the homogeneous roots of
    c z^2 + (d - a) z - b = 0.  Loxodromic elements list the attracting
    point first."""
    cls = classify(g)
    if cls is MobiusClass.Identity:
        raise IdentityInput("identity fixes every point")
    a, b, c, d = g.matrix.ravel()
    tr = a + d
    disc = np.sqrt(tr * tr - 4)
    roots = [(tr + disc) / 2, (tr - disc) / 2]
    roots.sort(key=lambda t: -abs(t))
    if cls is MobiusClass.Parabolic:
        roots = [tr / 2]
    pts = []
    for t in roots:
        # two candidate eigenvectors; the larger one is numerically safer
        v1 = np.array([b, t - a])
        v2 = np.array([t - d, c])
        v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
        if np.linalg.norm(v) < 1e-14:
            v = np.array([1.0, 0.0]) if abs(c) < abs(b) else np.array([0.0, 1.0])
        pts.append(ProjPoint(v))
    return pts


def spherical_distance(p: ProjPoint, q: ProjPoint) -> float:
    return float(chordal_arr(p.vec, q.vec))


def theta(g: GroupElement, p: ProjPoint) -> float:
    """log ||g v|| for the unit lift v of p."""
    return float(cocycle_arr(g.matrix, p.vec))
