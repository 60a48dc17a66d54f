"""Command line driver.

    sl2walk <subcommand> --config path.json [--seed N] [--out dir] [--threads K]

Each subcommand writes summary.json (resolved config, outputs, wall time,
random stream derivation), one or more CSV tables and, unless
``report.figures`` is false, PNG figures into the output directory.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import limits as lt
from . import measures as ms
from . import mobius as mb
from . import regularity as rg
from . import report as rp
from . import sphere as sp
from . import transfer as tr
from .config import grid_from, load_config, make_config, named_function, parse_point
from .errors import ConfigError, ExperimentError, Sl2WalkError
from .invariants import grid_checks, measure_checks
from .rng import Streams

SUBCOMMANDS = ("classify", "elementarity", "gap", "iterate", "equidistribute", "lyapunov",
               "clt", "variance", "normcheck", "regularity", "checks")


class Run:
    """Context handed to every subcommand: config, streams, output folder."""

    def __init__(self, cfg: dict, out: Path, workers: int):
        self.cfg = cfg
        self.out = out
        self.workers = workers
        self.streams = Streams(cfg["seed"])
        self.tables: list = []
        self.figures: list = []
        self._mu = None

    @property
    def mu(self) -> ms.AtomicMeasure:
        if self._mu is None:
            self._mu = ms.load_measure(self.cfg["fixture"])
        return self._mu

    def table(self, name: str, header, rows):
        self.tables.append(rp.write_csv(self.out / f"{name}.csv", header, rows).name)

    def figure(self, fn, name: str, *args, **kw):
        if self.cfg["report.figures"]:
            self.figures.append(fn(self.out / f"{name}.png", *args, **kw).name)


def _point_str(p: mb.ProjPoint) -> str:
    z = p.affine
    if not np.isfinite(z):
        return "inf"
    z = complex(z) + 0.0  # drop negative zeros
    return f"{z.real:.12g}{z.imag:+.12g}j"


def _word_str(word) -> str:
    return " ".join(str(i) if i >= 0 else f"~{~i}" for i in word)


# ---------------------------------------------------------------------------
# subcommands


def cmd_classify(run: Run) -> dict:
    mu = run.mu
    rows = []
    for _, word, g in ms.enumerate_words(mu, run.cfg["classify.max_len"]):
        fps = []
        if not g.is_identity():
            fps = [_point_str(p) for p in mb.fixed_points(g)]
        rows.append((_word_str(word), g.trace.real, g.trace.imag, mb.classify(g).name,
                     mb.operator_norm(g), ";".join(fps)))
    run.table("classify", ["word", "trace_re", "trace_im", "class", "operator_norm", "fixed_points"], rows)
    counts: dict = {}
    for r in rows:
        counts[r[3]] = counts.get(r[3], 0) + 1
    return {"words": len(rows), "class_counts": counts}


def cmd_elementarity(run: Run) -> dict:
    mu = run.mu
    max_len = run.cfg["elementarity.max_len"]
    out = {"mu": ms.elementarity_check(mu, max_len).to_json()}
    lox = ms.find_loxodromic(mu, max_len)
    out["loxodromic_word"] = None if lox is None else list(lox[0])
    rows = [("1", out["mu"]["status"])]
    for p in run.cfg["elementarity.powers"]:
        v = ms.elementarity_check(ms.convolution_power(mu, p), max_len)
        out[f"mu*{p}"] = v.to_json()
        rows.append((str(p), v.status))
    out["powers_agree"] = len({r[1] for r in rows}) == 1
    run.table("elementarity", ["power", "status"], rows)
    return out


def cmd_gap(run: Run) -> dict:
    cfg = run.cfg
    ests = [tr.gap_estimate(run.mu, N, cfg["gap.iters"], run.streams.child(f"gap{N}"), cfg["gap.degree"])
            for N in cfg["gap.N"]]
    header = ["N", "norm_estimate", "power_estimate", "spectral_radius", "residual", "dimension"]
    run.table("gap", header, [(e.n_power, e.norm_estimate, e.power_estimate, e.spectral_radius,
                               e.residual, e.dimension) for e in ests])
    run.figure(rp.fig_bars, "gap", [e.n_power for e in ests], [e.norm_estimate for e in ests],
               "norm of the N-step pullback on forms", f"{run.mu.name}: Galerkin norm estimate", hline=1.0)
    return {"estimates": [e.to_json() for e in ests],
            "norm_estimate": ests[-1].norm_estimate}


def cmd_iterate(run: Run) -> dict:
    cfg = run.cfg
    grid = grid_from(cfg)
    rows, fits, series, out = [], {}, {}, {}
    for name in cfg["iterate.functions"]:
        h = sp.GridFunction.from_points(grid, named_function(name))
        res = tr.iterate_pullback_experiment(run.mu, h, cfg["iterate.n_max"])
        rows += [(name,) + r for r in res.rows()]
        fits[name] = res.fit
        series[name] = (res.n, res.w12)
        out[name] = {"limit": res.limit, **res.fit.to_json()}
    run.table("iterate", ["function", "n", "w12_distance", "sup_distance", "mass"], rows)
    run.figure(rp.fig_decay, "iterate", series, "W12 distance to the limit constant",
               f"{run.mu.name}: iterated pullbacks", fits)
    return {"fits": out}


def cmd_equidistribute(run: Run) -> dict:
    cfg = run.cfg
    phi = named_function(cfg["equidistribute.phi"])
    nu = tr.stationary_sample(run.mu, cfg["equidistribute.nu_samples"], run.streams.child("nu"))
    ref = nu.expect(phi)
    rows, fits, series, out = [], {}, {}, {}
    for i, a in enumerate(cfg["equidistribute.starts"]):
        res = tr.equidistribution_experiment(
            run.mu, parse_point(a), phi, cfg["equidistribute.n_max"], cfg["equidistribute.trials"],
            run.streams.child(f"start{i}"), reference=ref, workers=run.workers)
        rows += [(a,) + r for r in res.rows()]
        fits[a] = res.fit
        series[a] = (res.n, res.gap)
        out[a] = res.fit.to_json()
    slopes = [out[a]["slope"] for a in cfg["equidistribute.starts"]]
    rel = float(np.ptp(slopes) / np.max(np.abs(slopes))) if len(slopes) > 1 else 0.0
    run.table("equidistribute", ["start", "n", "abs_difference", "stderr"], rows)
    run.figure(rp.fig_decay, "equidistribute", series, "|E phi(X_n) - <nu, phi>|",
               f"{run.mu.name}: walks from two starts", fits)
    return {"reference": ref, "fits": out, "relative_rate_difference": rel}


def _gamma(run: Run, n: int = 1000, trials: int = 10_000):
    rep = lt.lyapunov_kingman(run.mu, n, trials, run.streams.child("gamma"), run.workers)
    return rep.gamma_hat, rep


def cmd_lyapunov(run: Run) -> dict:
    cfg = run.cfg
    k = lt.lyapunov_kingman(run.mu, cfg["lyapunov.n"], cfg["lyapunov.trials"],
                            run.streams.child("kingman"), run.workers)
    pts = lt.boundary_points(run.mu, cfg["lyapunov.nu_samples"], run.streams.child("nu"),
                             cfg["lyapunov.T"], workers=run.workers)
    f = lt.lyapunov_furstenberg(run.mu, tr.EmpiricalMeasure(pts))
    z = (f.gamma_hat - k.gamma_hat) / np.hypot(f.stderr, k.stderr)
    run.table("lyapunov", ["route", "gamma_hat", "stderr", "n", "trials"],
              [(r.route, r.gamma_hat, r.stderr, r.n, r.trials) for r in (k, f)])
    run.figure(rp.fig_bars, "lyapunov", [k.route, f.route], [k.gamma_hat, f.gamma_hat],
               "gamma", f"{run.mu.name}: Lyapunov exponent", errors=[3 * k.stderr, 3 * f.stderr])
    return {"kingman": k.to_json(), "furstenberg": f.to_json(), "z_score": float(z)}


def cmd_clt(run: Run) -> dict:
    cfg = run.cfg
    gamma = cfg["clt.gamma"]
    extra = {}
    if gamma is None:
        gamma, rep = _gamma(run)
        extra["gamma_estimate"] = rep.to_json()
    res = lt.clt_experiment(run.mu, parse_point(cfg["clt.v"]), gamma, cfg["clt.n"], cfg["clt.trials"],
                            run.streams.child("clt"), run.workers,
                            extra_v=[parse_point(v) for v in cfg["clt.extra_v"]])
    run.table("clt_sample", ["y"], [(float(y),) for y in res.sample])
    if "sigma2_by_v" in res.extra:
        vs = [cfg["clt.v"]] + list(cfg["clt.extra_v"])
        run.table("clt_sigma2", ["v", "sigma2"], list(zip(vs, res.extra["sigma2_by_v"])))
    run.figure(rp.fig_histogram, "clt", res.sample, res.sigma2_empirical,
               f"{run.mu.name}: Y_n at n = {res.n}")
    return {"gamma": gamma, **extra, **res.to_json()}


def cmd_variance(run: Run) -> dict:
    cfg = run.cfg
    grid = grid_from(cfg)
    gamma, rep = _gamma(run)
    pts = lt.boundary_points(run.mu, cfg["variance.nu_samples"], run.streams.child("nu"),
                             cfg["variance.T"], workers=run.workers)
    tail = lt.gordin_tail(run.mu, gamma, cfg["variance.K"], tr.EmpiricalMeasure(pts), grid)
    gk = lt.green_kubo_variance(run.mu, gamma, cfg["variance.K"], cfg["variance.mc_samples"],
                                cfg["variance.T"], run.streams.child("gk"), grid, tail, pts,
                                workers=run.workers)
    out = {"gamma_estimate": rep.to_json(), "green_kubo": gk.to_json(),
           "gordin_ratio": tail.ratio, "gordin_fit": tail.fit.to_json(), "gordin_limit": tail.limit}
    run.table("gordin_tail", ["n", "norm"], [(i + 1, v) for i, v in enumerate(tail.norms)])
    run.table("green_kubo", ["n", "term", "partial_sum"],
              [(i, t, s) for i, (t, s) in enumerate(zip(gk.terms, gk.partial_sums))])
    if cfg["variance.compare_clt"]:
        c = lt.clt_experiment(run.mu, parse_point(cfg["clt.v"]), gamma, cfg["clt.n"],
                              cfg["clt.trials"], run.streams.child("clt"), run.workers)
        out["sigma2_empirical"] = c.sigma2_empirical
        out["relative_difference"] = abs(gk.sigma2 - c.sigma2_empirical) / c.sigma2_empirical
    n = np.arange(1, len(tail.norms) + 1)
    run.figure(rp.fig_decay, "gordin_tail", {"L2(nu) norm": (n, tail.norms)},
               "||Lambda^(n-1) psi - c||", f"{run.mu.name}: Gordin tail",
               {"L2(nu) norm": tail.fit})
    return out


def cmd_normcheck(run: Run) -> dict:
    cfg = run.cfg
    res = lt.norm_comparison_check(run.mu, parse_point(cfg["normcheck.v"]), cfg["normcheck.n"],
                                   cfg["normcheck.trials"], cfg["normcheck.deltas"],
                                   run.streams.child("normcheck"), run.workers)
    run.table("normcheck", ["delta", "fraction"], res.rows())
    run.figure(rp.fig_lines, "normcheck", res.deltas, {"fraction": res.fractions},
               f"{run.mu.name}: trajectories with ratio in [delta, 1]", "delta", "fraction", logx=True)
    fr = res.fractions[np.argsort(res.deltas)]
    return {"deltas": res.deltas, "fractions": res.fractions,
            "monotone": bool(np.all(np.diff(fr) <= 0)), "min_ratio": float(res.min_ratio.min())}


def cmd_regularity(run: Run) -> dict:
    cfg = run.cfg
    pts = lt.boundary_points(run.mu, cfg["regularity.nu_samples"], run.streams.child("nu"),
                             workers=run.workers)
    nu = tr.EmpiricalMeasure(pts)
    centers = rg.default_centers(nu)
    radii = rg.radius_grid(nu, centers, cfg["regularity.r_max"], cfg["regularity.min_count"],
                           workers=run.workers)
    power = rg.regularity_fit(nu, centers, radii, "PowerLaw", run.workers)
    logp = rg.regularity_fit(nu, centers, radii, "LogPower", run.workers)
    out = {"power_law": power.to_json(), "log_power": logp.to_json()}
    run.table("regularity", ["r", "worst_mass"], power.rows())
    extra = {}
    if cfg["regularity.uniform_control"]:
        u = rg.uniform_empirical(cfg["regularity.nu_samples"], run.streams.get("uniform"))
        uc = rg.default_centers(u)
        ufit = rg.regularity_fit(u, uc, rg.radius_grid(u, uc, cfg["regularity.r_max"],
                                                       cfg["regularity.min_count"]), "PowerLaw", run.workers)
        out["uniform_control"] = ufit.to_json()
        extra["uniform"] = (ufit.r_grid, ufit.worst_center_masses)
    eps = cfg["regularity.eps"]
    hybrid = sp.YoungFunction.hybrid_exp_cube()
    rs = 0.5 ** np.arange(3, 21)
    ve = [rg.v_eps(r, eps, hybrid) for r in rs]
    run.table("v_eps", ["r", "v_eps", "log_bound"],
              [(r, v, abs(np.log(r)) ** -0.125) for r, v in zip(rs, ve)])
    small = rs <= 2.0 ** -5
    out["v_eps_within_log_bound"] = bool(np.all(np.array(ve)[small] <= np.abs(np.log(rs[small])) ** -0.125))
    grid = grid_from(cfg)
    bumps = [sp.bump_u(grid, mb.ProjPoint(*c), 0.25, eps) for c in rg.spread_centers(cfg["regularity.bumps"])]
    out["exp_integrability"] = rg.exp_integrability_probe(nu, bumps, cfg["regularity.theta"]).to_json()
    run.figure(rp.fig_loglog, "regularity", power.r_grid, power.worst_center_masses,
               f"{run.mu.name}: worst disc mass", "r", "max mass of D(a, r)", power.fit, extra)
    return out


def cmd_checks(run: Run) -> dict:
    grid = grid_from(run.cfg)
    rows = grid_checks(grid)
    for i, name in enumerate(run.cfg["checks.fixtures"]):
        mu = ms.load_measure(name)
        rows += measure_checks(name, mu, grid, run.streams.get("checks", i),
                               run.cfg["checks.forms"], run.cfg["checks.group_samples"])
    run.table("checks", ["fixture", "check", "value", "threshold", "passed"], rows)
    failed = [f"{r[0]}:{r[1]}" for r in rows if not r[4]]
    return {"checks": len(rows), "failed": failed}


COMMANDS = {name: globals()[f"cmd_{name}"] for name in SUBCOMMANDS}


# ---------------------------------------------------------------------------
# entry point


def run(subcommand: str, cfg: dict, out, workers: int = 1) -> tuple[int, dict]:
    """Run one subcommand; returns (exit status, summary)."""
    if subcommand not in COMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    r = Run(cfg, out, workers)
    t0 = time.perf_counter()
    try:
        outputs = COMMANDS[subcommand](r)
    except ConfigError:
        raise
    except Sl2WalkError as e:
        raise ExperimentError(f"{subcommand} on {cfg['fixture']}: {type(e).__name__}: {e}") from e
    summary = {
        "subcommand": subcommand,
        "version": __version__,
        "config": cfg,
        "threads": workers,
        "outputs": outputs,
        "tables": r.tables,
        "figures": r.figures,
        "streams": r.streams.describe(),
        "wall_time_s": time.perf_counter() - t0,
    }
    rp.write_json(out / "summary.json", summary)
    status = 1 if subcommand == "checks" and outputs["failed"] else 0
    return status, summary


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sl2walk", description="Random walks on the Riemann sphere.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="flat JSON config with dotted keys")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else make_config()
        if args.seed is not None:
            cfg = make_config({**cfg, "seed": args.seed})
        status, summary = run(args.subcommand, cfg, args.out, max(1, args.threads))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ExperimentError as e:
        print(f"experiment error: {e}", file=sys.stderr)
        return 3
    if args.subcommand == "checks" and status:
        print("failed checks: " + ", ".join(summary["outputs"]["failed"]), file=sys.stderr)
    print(f"{args.subcommand}: wrote {args.out}/summary.json ({summary['wall_time_s']:.1f} s)")
    return status


if __name__ == "__main__":
    sys.exit(main())
