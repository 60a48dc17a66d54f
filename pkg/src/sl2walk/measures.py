"""Probability measures on SL2(C): finite atomic measures, seeded samplers,
convolution powers, moments and a non-elementarity test.

Words are tuples of ints.  ``k >= 0`` stands for atom ``k`` and ``~k`` for
its inverse; the word ``(i1, ..., iL)`` multiplies to ``g_iL ... g_i1`` (the
first letter acts first).
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import mobius as mb
from .errors import Blowup, ConfigError, NonFinite, Sl2WalkError
from .mobius import GroupElement, MobiusClass, ProjPoint
from .rng import as_streams

WEIGHT_TOL = 1e-12


# ---------------------------------------------------------------------------
# measure types


class AtomicMeasure:
    """sum_i w_i delta_{g_i} with distinct atoms (mod sign)."""

    def __init__(self, atoms: Sequence, weights: Sequence[float] | None = None, name: str = ""):
        atoms = [a if isinstance(a, GroupElement) else GroupElement(a) for a in atoms]
        if not atoms:
            raise ValueError("empty measure")
        w = np.full(len(atoms), 1.0 / len(atoms)) if weights is None else np.asarray(weights, float)
        if w.shape != (len(atoms),) or np.any(w <= 0):
            raise ValueError("weights must be positive, one per atom")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        keys = [a.key() for a in atoms]
        if len(set(keys)) != len(keys):
            raise ValueError("atoms must be distinct in PSL2")
        self.atoms = tuple(atoms)
        self.weights = w
        self.weights.setflags(write=False)
        self.mats = np.stack([a.matrix for a in atoms])
        self.mats.setflags(write=False)
        self.name = name

    def __len__(self):
        return len(self.atoms)

    def __iter__(self):
        return iter(zip(self.atoms, self.weights))

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        """Atom indices drawn i.i.d. from the weights."""
        if len(self.atoms) == 1:
            return np.zeros(size, dtype=np.int64)
        return rng.choice(len(self.atoms), size=size, p=self.weights)

    def draw_mats(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.mats[self.draw(rng, size)]

    def conjugate(self, h: GroupElement) -> "AtomicMeasure":
        hi = h.inverse()
        return AtomicMeasure([h @ a @ hi for a in self.atoms], self.weights, self.name + "^h")

    def inverse(self) -> "AtomicMeasure":
        """The law of g^{-1}."""
        return AtomicMeasure([a.inverse() for a in self.atoms], self.weights, self.name + "^-1")

    def to_json(self) -> dict:
        rows = []
        for a, w in self:
            e = a.matrix.ravel()
            rows.append([float(v) for z in e for v in (z.real, z.imag)] + [float(w)])
        return {"name": self.name, "atoms": rows}

    def __repr__(self):
        return f"AtomicMeasure({self.name or len(self.atoms)} atoms)"


class SamplerMeasure:
    """A measure known only through a seeded sampler.

    ``draw_fn(rng, size)`` must return an array of shape (size, 2, 2).
    """

    def __init__(self, draw_fn: Callable, moment_hint: Optional[float] = None, name: str = ""):
        self._draw = draw_fn
        self.moment_hint = moment_hint
        self.name = name

    def draw_mats(self, rng: np.random.Generator, size) -> np.ndarray:
        return mb.renormalize_arr(np.asarray(self._draw(rng, size), dtype=complex))

    def __repr__(self):
        return f"SamplerMeasure({self.name})"


MatrixMeasure = AtomicMeasure | SamplerMeasure


def gaussian_sampler(scale: float = 0.5, name: str = "gaussian") -> SamplerMeasure:
    """exp(scale * X) with X a complex Gaussian traceless matrix."""
    from scipy.linalg import expm

    def draw(rng, size):
        x = rng.standard_normal((size, 2, 2)) + 1j * rng.standard_normal((size, 2, 2))
        x[:, 1, 1] = -x[:, 0, 0]
        return np.stack([expm(scale * xi) for xi in x])

    return SamplerMeasure(draw, name=name)


# ---------------------------------------------------------------------------
# moments


@dataclass(frozen=True)
class MomentSpec:
    kind: str  # "power" | "exp" | "custom"
    p: float = 1.0
    fn: Optional[Callable] = None

    @classmethod
    def power(cls, p: float) -> "MomentSpec":
        if p <= 0:
            raise ValueError("p > 0 required")
        return cls("power", p)

    @classmethod
    def exponential(cls, p: float) -> "MomentSpec":
        if p <= 0:
            raise ValueError("p > 0 required")
        return cls("exp", p)

    @classmethod
    def custom(cls, fn: Callable) -> "MomentSpec":
        return cls("custom", fn=fn)

    def chi(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(over="ignore"):
            if self.kind == "power":
                return s ** self.p
            if self.kind == "exp":
                return np.exp(s ** self.p)
            return np.asarray(self.fn(s), dtype=float)


@dataclass(frozen=True)
class MomentEstimate:
    value: float
    stderr: float


def moment(mu: MatrixMeasure, spec: MomentSpec, trials: int = 10_000, rng=0) -> MomentEstimate:
    """Integral of chi(log ||g||) against mu; exact for atomic measures."""
    if isinstance(mu, AtomicMeasure):
        vals = spec.chi(mb.log_opnorm_arr(mu.mats))
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise NonFinite("chi is not finite and non-negative on the atoms")
        return MomentEstimate(float(np.dot(mu.weights, vals)), 0.0)
    if trials < 1:
        raise ValueError("trials >= 1 required")
    g = as_streams(rng).get("moment")
    with np.errstate(over="ignore", invalid="ignore"):
        vals = spec.chi(mb.log_opnorm_arr(mu.draw_mats(g, trials)))
    if not np.all(np.isfinite(vals)):
        raise NonFinite("chi overflowed on a sample")
    err = float(vals.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("inf")
    return MomentEstimate(float(vals.mean()), err)


# ---------------------------------------------------------------------------
# words


def invert_word(word: Sequence[int]) -> tuple:
    return tuple(~i for i in reversed(word))


def word_element(mu: AtomicMeasure, word: Sequence[int]) -> GroupElement:
    m = np.eye(2, dtype=complex)
    for i in word:
        a = mu.mats[i] if i >= 0 else mb.inverse_arr(mu.mats[~i])
        m = a @ m
    return GroupElement(m)


def word_sample(mu: MatrixMeasure, n: int, rng) -> GroupElement:
    """One draw of g_n ... g_1 with g_i i.i.d. from mu."""
    if n < 1:
        raise ValueError("n >= 1 required")
    gen = rng if isinstance(rng, np.random.Generator) else as_streams(rng).get("word_sample")
    mats = mu.draw_mats(gen, n)
    m = np.eye(2, dtype=complex)
    for a in mats:
        m = a @ m
        m = m / np.sqrt(mb.det_arr(m))
    return GroupElement(m)


def word_samples_arr(mu: MatrixMeasure, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorised: ``size`` independent products of length n, as arrays.

    Entries grow like ||g||, so this is meant for short words; long
    products go through the rescaled kernels in limit_theorems.
    """
    m = np.broadcast_to(np.eye(2, dtype=complex), (size, 2, 2)).copy()
    for _ in range(n):
        m = mu.draw_mats(rng, size) @ m
    return mb.renormalize_arr(m)


def convolution_power(mu: AtomicMeasure, n: int, max_atoms: int = 1_000_000) -> AtomicMeasure:
    """Exact mu^{*n}, merging products that agree in PSL2."""
    if n < 1:
        raise ValueError("n >= 1 required")
    if len(mu) ** n > max_atoms:
        raise Blowup(f"{len(mu)}^{n} atoms exceed the cap {max_atoms}")
    cur = {GroupElement.identity().key(): [np.eye(2, dtype=complex), 1.0]}
    for _ in range(n):
        nxt: dict = {}
        for m, w in cur.values():
            for a, wa in zip(mu.mats, mu.weights):
                g = GroupElement(a @ m)
                k = g.key()
                if k in nxt:
                    nxt[k][1] += w * wa
                else:
                    nxt[k] = [g.matrix, w * wa]
        cur = nxt
    mats = [v[0] for v in cur.values()]
    w = np.array([v[1] for v in cur.values()])
    return AtomicMeasure(mats, w / w.sum(), f"{mu.name}*{n}")


def enumerate_words(mu: AtomicMeasure, max_len: int):
    """Breadth-first distinct words of length 1..max_len, one representative
    word per PSL2 element.  Yields (length, word, element)."""
    seen = set()
    level = [((), GroupElement.identity())]
    for L in range(1, max_len + 1):
        nxt = []
        for w, g in level:
            for i in range(len(mu)):
                h = GroupElement(mu.mats[i] @ g.matrix)
                k = h.key()
                if k in seen:
                    continue
                seen.add(k)
                nxt.append((w + (i,), h))
        for w, h in nxt:
            yield L, w, h
        level = nxt


def _combination_words(items, n_search: int = 8, max_pairs: int = 64):
    """Commutators and g^N h^N products built from pairs of known words."""
    for (w1, _), (w2, _) in itertools.islice(itertools.combinations(items, 2), max_pairs):
        yield invert_word(w2) + invert_word(w1) + w2 + w1
        for N in range(1, n_search + 1):
            yield w2 * N + w1 * N


def find_loxodromic(mu: AtomicMeasure, max_len: int = 6, n_search: int = 8):
    """First loxodromic word found, or None.

    Plain words are searched breadth-first up to ``max_len``.  After that,
    each level's words are combined into commutators and products g^N h^N
    (N <= n_search), which are the elements that turn loxodromic when no
    plain short word does.
    """
    levels: dict = {}
    for L, w, g in enumerate_words(mu, max_len):
        if mb.classify(g) is MobiusClass.Loxodromic:
            return list(w), g
        levels.setdefault(L, []).append((w, g))
    items = []
    for L in sorted(levels):
        items.extend(levels[L])
        hit = _search_combinations(mu, items, n_search)
        if hit is not None:
            return hit
    return None


def _search_combinations(mu, items, n_search):
    for w in _combination_words(items, n_search):
        g = word_element(mu, w)
        if mb.classify(g) is MobiusClass.Loxodromic:
            return list(w), g
    return None


# ---------------------------------------------------------------------------
# elementarity


@dataclass
class ElementarityVerdict:
    status: str  # ElementaryCompact | ElementaryFiniteOrbit | NonElementary | Inconclusive
    points: list = field(default_factory=list)
    witness: Optional[tuple] = None  # (word, GroupElement)
    witness2: Optional[tuple] = None
    depth: int = 0
    detail: str = ""
    form: Optional[np.ndarray] = None

    @property
    def elementary(self) -> Optional[bool]:
        if self.status == "NonElementary":
            return False
        if self.status.startswith("Elementary"):
            return True
        return None

    def to_json(self) -> dict:
        out = {"status": self.status, "depth": self.depth, "detail": self.detail}
        if self.points:
            out["points"] = [str(p.affine) for p in self.points]
        if self.witness is not None:
            out["witness_word"] = list(self.witness[0])
        if self.witness2 is not None:
            out["witness2_word"] = list(self.witness2[0])
        return out


def _herm(v):
    return np.array([[v[0], v[1] + 1j * v[2]], [v[1] - 1j * v[2], v[3]]])


def _invariant_form(mu: AtomicMeasure, tol: float = 1e-9):
    """A positive definite Hermitian H with g_i^* H g_i = H for every atom,
    or None.  The invariance equations are linear in the four real
    parameters of H, so H is read off a null space."""
    basis = [_herm(e) for e in np.eye(4)]
    rows = []
    for a in mu.mats:
        cols = [(a.conj().T @ b @ a - b) for b in basis]
        rows.append(np.stack([np.concatenate([c.real.ravel(), c.imag.ravel()]) for c in cols], 1))
    lhs = np.concatenate(rows)
    _, sv, vt = np.linalg.svd(lhs)
    null = vt[np.concatenate([sv, np.zeros(4 - len(sv))]) <= tol * max(1.0, sv[0])]
    if len(null) == 0:
        return None
    # project the identity form onto the null space, then try the basis
    eye = np.array([1.0, 0, 0, 1.0])
    cands = [null.T @ (null @ eye)] + [s * v for v in null for s in (1, -1)]
    for v in cands:
        h = _herm(v)
        ev = np.linalg.eigvalsh(h)
        if ev[0] > 1e-9 * abs(ev[-1]):
            return h / np.sqrt(np.prod(ev))
    return None


def _fixed_sets(elements):
    out = []
    for g in elements:
        if not g.is_identity():
            out.append(mb.fixed_points(g))
    return out


def _invariant(mu: AtomicMeasure, pts, tol: float = 1e-8) -> bool:
    for a in mu.atoms:
        for p in pts:
            q = mb.apply(a, p)
            if min(mb.spherical_distance(q, s) for s in pts) > tol:
                return False
    return True


def elementarity_check(mu: MatrixMeasure, max_len: int = 4) -> ElementarityVerdict:
    if not isinstance(mu, AtomicMeasure):
        raise Sl2WalkError("elementarity_check needs an atomic measure")
    words = list(enumerate_words(mu, max_len))
    classes = [mb.classify(g) for _, _, g in words]

    # (a) relatively compact: only elliptic words and an invariant Hermitian form
    if all(c in (MobiusClass.Elliptic, MobiusClass.Identity) for c in classes):
        h = _invariant_form(mu)
        if h is not None:
            return ElementarityVerdict("ElementaryCompact", depth=max_len,
                                       detail="invariant Hermitian form found",
                                       form=h)

    # (b) a common invariant set of at most two points
    short = [g for (L, _, g) in words if L <= 2]
    fsets = _fixed_sets(short)
    cands = []
    for fs in fsets:
        cands.append(fs)
        cands.extend([p] for p in fs)
    for f1, f2 in itertools.combinations(fsets, 2):
        common = [p for p in f1 if min(mb.spherical_distance(p, q) for q in f2) < 1e-8]
        if common:
            cands.append(common)
    for pts in sorted(cands, key=lambda c: -len(c)):
        if _invariant(mu, pts):
            return ElementarityVerdict("ElementaryFiniteOrbit", points=list(pts), depth=max_len,
                                       detail="invariant set of the atoms")

    # (c) two loxodromic words with disjoint fixed sets
    lox = [(w, g) for (_, w, g), c in zip(words, classes) if c is MobiusClass.Loxodromic]
    if not lox:
        hit = find_loxodromic(mu, max_len)
        if hit is not None:
            lox.append((tuple(hit[0]), hit[1]))
    # conjugates of a loxodromic word by the atoms supply more candidates
    extra = []
    for w, g in lox[:4]:
        for i in range(len(mu)):
            cw = (~i,) + tuple(w) + (i,)
            extra.append((cw, word_element(mu, cw)))
    fixed = [(w, g, mb.fixed_points(g)) for w, g in lox + extra]
    for (w1, g1, f1), (w2, g2, f2) in itertools.combinations(fixed, 2):
        dmin = min(mb.spherical_distance(p, q) for p in f1 for q in f2)
        if dmin > 1e-6:
            return ElementarityVerdict("NonElementary", witness=(list(w1), g1),
                                       witness2=(list(w2), g2), depth=max_len,
                                       detail=f"disjoint fixed sets, separation {dmin:.3g}")
    return ElementarityVerdict("Inconclusive", depth=max_len)


# ---------------------------------------------------------------------------
# fixtures


_R = np.array([[1, -1], [1, 1]]) / np.sqrt(2)


def _fixture_schottky2() -> AtomicMeasure:
    a = np.diag([2.0, 0.5]).astype(complex)
    b = _R @ a @ np.linalg.inv(_R)
    return AtomicMeasure([a, b], [0.5, 0.5], "schottky2")


def _fixture_rot(angle: float = 0.03) -> AtomicMeasure:
    r1 = GroupElement.rotation((0, 0, 1), angle)
    r2 = GroupElement.rotation((1, 0, 0), angle)
    return AtomicMeasure([r1, r2], [0.5, 0.5], "elementary_rot")


def _fixture_diag() -> AtomicMeasure:
    return AtomicMeasure([np.diag([2.0, 0.5]), np.diag([3.0, 1 / 3])], [0.5, 0.5], "elementary_diag")


def _fixture_parabolic() -> AtomicMeasure:
    return AtomicMeasure([[[1, 2], [0, 1]], [[1, 0], [2, 1]]], [0.5, 0.5], "parabolic_pair")


FIXTURES = {
    "schottky2": _fixture_schottky2,
    "elementary_rot": _fixture_rot,
    "elementary_diag": _fixture_diag,
    "parabolic_pair": _fixture_parabolic,
}


def fixture(name: str) -> AtomicMeasure:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise ConfigError(f"unknown fixture {name!r}; known: {sorted(FIXTURES)}") from None


def measure_from_json(doc) -> AtomicMeasure:
    """Atoms given as 8 reals (re/im of a, b, c, d) plus a weight, either as
    flat rows or as {"entries": [...], "weight": w} objects."""
    if isinstance(doc, dict):
        name = doc.get("name", "")
        rows = doc["atoms"]
    else:
        name, rows = "", doc
    mats, ws = [], []
    for row in rows:
        if isinstance(row, dict):
            e, w = row["entries"], row["weight"]
        else:
            e, w = row[:8], row[8]
        if len(e) != 8:
            raise ConfigError("each atom needs 8 real entries")
        z = [complex(e[2 * i], e[2 * i + 1]) for i in range(4)]
        mats.append([[z[0], z[1]], [z[2], z[3]]])
        ws.append(float(w))
    ws = np.array(ws)
    if abs(ws.sum() - 1) > 1e-9:
        raise ConfigError(f"weights sum to {ws.sum()}")
    return AtomicMeasure(mats, ws / ws.sum(), name)


def load_measure(spec: str) -> AtomicMeasure:
    """A built-in fixture name or a path to a JSON document."""
    if spec in FIXTURES:
        return fixture(spec)
    p = Path(spec)
    if p.exists():
        return measure_from_json(json.loads(p.read_text()))
    raise ConfigError(f"fixture {spec!r} is neither a built-in name nor a file")
