"""Artifact writers: CSV tables, summary.json and matplotlib figures."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import jsonable


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> Path:
    """Comma separated, header row, '.' decimal point, LF line endings."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(x) for x in row])
    return path


def write_json(path, doc) -> Path:
    path = Path(path)
    path.write_text(json.dumps(jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# figures


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    _plt().close(fig)
    return path


def fig_decay(path, series: dict, ylabel: str, title: str, fits: dict | None = None) -> Path:
    """Semilog plot of one or more decaying sequences {label: (n, values)}."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (n, y) in series.items():
        y = np.asarray(y, dtype=float)
        keep = y > 0
        line, = ax.semilogy(np.asarray(n)[keep], y[keep], "o-", ms=3, label=label)
        if fits and label in fits and np.isfinite(fits[label].slope):
            f = fits[label]
            ax.semilogy(n, np.exp(f.intercept + f.slope * np.asarray(n)), "--",
                        color=line.get_color(), lw=1)
    ax.set_xlabel("n")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def fig_bars(path, labels, values, ylabel: str, title: str, errors=None, hline=None) -> Path:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([str(x) for x in labels], values, yerr=errors, capsize=4, color="tab:blue")
    if hline is not None:
        ax.axhline(hline, color="k", lw=0.8, ls="--")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return _save(fig, path)


def fig_histogram(path, sample, var: float, title: str) -> Path:
    """Histogram of a sample against the N(mean, var) density."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(sample, bins=80, density=True, alpha=0.6, color="tab:blue")
    m = float(np.mean(sample))
    s = np.sqrt(var)
    x = np.linspace(m - 4 * s, m + 4 * s, 400)
    ax.plot(x, np.exp(-0.5 * ((x - m) / s) ** 2) / (s * np.sqrt(2 * np.pi)), "k-", lw=1)
    ax.set_xlabel("Y_n")
    ax.set_title(title)
    return _save(fig, path)


def fig_loglog(path, x, y, title: str, xlabel: str, ylabel: str, fit=None, extra=None) -> Path:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(x, y, "o", ms=4, label="data")
    if fit is not None and np.isfinite(fit.slope):
        xx = np.asarray(x, dtype=float)
        ax.loglog(xx, np.exp(fit.intercept) * xx ** fit.slope, "--", lw=1,
                  label=f"slope {fit.slope:.3f}")
    for label, (xe, ye) in (extra or {}).items():
        ax.loglog(xe, ye, "s-", ms=3, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def fig_lines(path, x, series: dict, title: str, xlabel: str, ylabel: str, logx: bool = False) -> Path:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, y in series.items():
        ax.plot(x, y, "o-", ms=3, label=label)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)
