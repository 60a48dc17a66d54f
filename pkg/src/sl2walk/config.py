"""Experiment configuration: a flat JSON object with dotted keys.

Every key has a default.  A config file may override any subset; unknown
keys and values of the wrong type raise ConfigError so that a typo can never
silently fall back to a default.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import mobius as mb
from . import sphere as sp
from .errors import ConfigError

FIXTURE_NAMES = ["schottky2", "elementary_rot", "elementary_diag", "parabolic_pair"]

DEFAULTS: dict = {
    "fixture": "schottky2",
    "seed": 0,
    "mesh.n_r": 128,
    "mesh.n_theta": 256,
    "mesh.grading": 4.0,
    "report.figures": True,
    "classify.max_len": 2,
    "elementarity.max_len": 4,
    "elementarity.powers": [2, 3],
    "gap.N": [1, 2, 4],
    "gap.degree": 8,
    "gap.iters": 60,
    "iterate.functions": ["x", "z", "xy+y"],
    "iterate.n_max": 40,
    "equidistribute.starts": ["0", "1"],
    "equidistribute.phi": "x",
    "equidistribute.n_max": 60,
    "equidistribute.trials": 10_000,
    "equidistribute.nu_samples": 1_000_000,
    "lyapunov.n": 1000,
    "lyapunov.trials": 10_000,
    "lyapunov.nu_samples": 200_000,
    "lyapunov.T": 60,
    "clt.v": "1",
    "clt.extra_v": ["1j"],
    "clt.n": 2000,
    "clt.trials": 10_000,
    "clt.gamma": None,
    "variance.K": 30,
    "variance.mc_samples": 200_000,
    "variance.nu_samples": 200_000,
    "variance.T": 60,
    "variance.compare_clt": True,
    "normcheck.v": "1",
    "normcheck.n": 500,
    "normcheck.trials": 10_000,
    "normcheck.deltas": [0.1, 0.01, 0.001, 0.0001],
    "regularity.nu_samples": 1_000_000,
    "regularity.r_max": 0.25,
    "regularity.min_count": 30,
    "regularity.eps": 0.25,
    "regularity.uniform_control": True,
    "regularity.theta": 0.5,
    "regularity.bumps": 50,
    "checks.fixtures": FIXTURE_NAMES,
    "checks.forms": 10,
    "checks.group_samples": 100,
}

# keys whose default is None accept these types
_NULLABLE = {"clt.gamma": (int, float)}


def _type_ok(key: str, value) -> bool:
    default = DEFAULTS[key]
    if value is None:
        return default is None
    if default is None:
        return isinstance(value, _NULLABLE[key]) and not isinstance(value, bool)
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    if isinstance(default, list):
        return isinstance(value, list)
    return False


def make_config(overrides: dict | None = None) -> dict:
    cfg = dict(DEFAULTS)
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        if not _type_ok(key, value):
            raise ConfigError(f"bad value for {key!r}: {value!r}")
        cfg[key] = value
    seed = cfg["seed"]
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    return cfg


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object with dotted keys")
    return make_config(doc)


def parse_point(text) -> mb.ProjPoint:
    """'inf', an affine coordinate such as '0', '1', '1j', '0.5-2j', or a
    homogeneous pair 'a:b'."""
    s = str(text).strip().replace(" ", "")
    try:
        if s.lower() in ("inf", "infinity", "oo"):
            return mb.ProjPoint.infinity()
        if ":" in s:
            a, b = s.split(":")
            return mb.ProjPoint(complex(a), complex(b))
        return mb.ProjPoint.from_affine(complex(s))
    except ValueError as e:
        raise ConfigError(f"cannot parse point {text!r}") from e


def _coord(i):
    return lambda v: sp.sphere_xyz(v)[..., i]


def _xy_plus_y(v):
    p = sp.sphere_xyz(v)
    return p[..., 0] * p[..., 1] + p[..., 1]


def _xz(v):
    p = sp.sphere_xyz(v)
    return p[..., 0] * p[..., 2]


# coordinates of the unit sphere in R^3 and two low-degree polynomials
NAMED_FUNCTIONS = {
    "x": _coord(0),
    "y": _coord(1),
    "z": _coord(2),
    "xy+y": _xy_plus_y,
    "xz": _xz,
}


def named_function(name: str):
    """Smooth functions on the sphere, by name, as callables on unit vectors."""
    try:
        return NAMED_FUNCTIONS[name]
    except KeyError:
        raise ConfigError(f"unknown function {name!r}; known: {sorted(NAMED_FUNCTIONS)}") from None


def grid_from(cfg: dict) -> sp.SphereGrid:
    return sp.default_grid(cfg["mesh.n_r"], cfg["mesh.n_theta"], cfg["mesh.grading"])


def jsonable(x):
    """Recursively convert numpy scalars and arrays for json.dump."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x
