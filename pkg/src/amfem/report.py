"""History CSV serialization, text tables, series comparison, and figures.

The CSV schema is stable:

    iter,ndof,error,eta,osc,quantity_a,eoc_e,eoc_eta,marked,residual,seconds

Numbers carry 17 significant digits (lossless float round trip); fields
without a value (no exact solution, first-row EOC) are left empty.  The
human-readable table rounds to 4 decimals and prints "-" for undefined
entries.  Figures are rendered with the Agg backend next to the CSV.
"""

from __future__ import annotations

import os

import numpy as np

from .adapt import IterationRecord
from .mesh import Mesh, atomic_write_text

CSV_HEADER = "iter,ndof,error,eta,osc,quantity_a,eoc_e,eoc_eta,marked,residual,seconds"


class ReportError(Exception):
    """Malformed or unusable history data."""


def _fmt(value) -> str:
    if value is None:
        return ""
    return f"{value:.17g}"


def write_history_csv(path, history: list) -> None:
    lines = [CSV_HEADER]
    for r in history:
        lines.append(
            ",".join(
                [
                    str(r.k),
                    str(r.ndof),
                    _fmt(r.error),
                    _fmt(r.eta),
                    _fmt(r.osc),
                    _fmt(r.quantity_a),
                    _fmt(r.eoc_e),
                    _fmt(r.eoc_eta),
                    str(r.marked),
                    _fmt(r.residual),
                    _fmt(r.seconds),
                ]
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_history_csv(path) -> list:
    try:
        with open(path, newline="") as f:
            lines = [ln.rstrip("\r\n") for ln in f if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise ReportError(f"cannot read history file {path}: {exc}") from exc
    if not lines or lines[0] != CSV_HEADER:
        raise ReportError(f"{path}: unexpected header (want {CSV_HEADER!r})")
    history = []
    for n, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 11:
            raise ReportError(f"{path}:{n}: expected 11 fields, got {len(parts)}")

        def num(s):
            return float(s) if s != "" else None

        try:
            history.append(
                IterationRecord(
                    k=int(parts[0]),
                    ndof=int(parts[1]),
                    error=num(parts[2]),
                    eta=num(parts[3]) or 0.0,
                    osc=num(parts[4]) or 0.0,
                    quantity_a=num(parts[5]) or 0.0,
                    eoc_e=num(parts[6]),
                    eoc_eta=num(parts[7]),
                    marked=int(parts[8]),
                    residual=num(parts[9]) or 0.0,
                    seconds=num(parts[10]) or 0.0,
                )
            )
        except ValueError as exc:
            raise ReportError(f"{path}:{n}: {exc}") from exc
    return history


def format_table(history: list) -> str:
    """Fixed-width convergence table (k, DOF, e_k, eta_k, EOC_E, EOC_eta)."""

    def col(value, width, decimals=4):
        if value is None:
            return "-".rjust(width)
        return f"{value:.{decimals}f}".rjust(width)

    lines = [
        f"{'k':>4} {'DOF':>9} {'e_k':>10} {'eta_k':>10} {'EOC_E':>8} {'EOC_eta':>8}"
    ]
    for r in history:
        lines.append(
            f"{r.k:>4d} {r.ndof:>9d} {col(r.error, 10)} {col(r.eta, 10)}"
            f" {col(r.eoc_e, 8)} {col(r.eoc_eta, 8)}"
        )
    return "\n".join(lines)


def fit_loglog_slope(ndof, values, skip: int = 0) -> float:
    """Least-squares slope of log(values) against log(ndof)."""
    ndof = np.asarray(ndof, dtype=float)[skip:]
    values = np.asarray(values, dtype=float)[skip:]
    keep = (ndof > 0) & (values > 0)
    if keep.sum() < 2:
        raise ReportError("need at least two positive points for a slope fit")
    return float(np.polyfit(np.log(ndof[keep]), np.log(values[keep]), 1)[0])


def merge_series(histories: dict) -> str:
    """Long-format comparison CSV with per-series slope footer comments."""
    lines = ["series,ndof,error,eta"]
    footers = []
    for name, history in histories.items():
        if not history:
            raise ReportError(f"series {name!r} is empty")
        for r in history:
            lines.append(f"{name},{r.ndof},{_fmt(r.error)},{_fmt(r.eta)}")
        nd = [r.ndof for r in history]
        errs = [r.error for r in history]
        etas = [r.eta for r in history]
        if all(e is not None for e in errs):
            slope_e = f"{fit_loglog_slope(nd, errs):.4f}"
        else:
            slope_e = "nan"
        slope_eta = f"{fit_loglog_slope(nd, etas):.4f}"
        footers.append(f"# slope {name} error={slope_e} eta={slope_eta}")
    return "\n".join(lines + footers) + "\n"


# -- figures -------------------------------------------------------------------

def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_convergence(path, history: list, title: str) -> None:
    plt = _plt()
    nd = np.array([r.ndof for r in history], dtype=float)
    eta = np.array([r.eta for r in history], dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.loglog(nd, eta, "o-", label="estimator")
    errs = [r.error for r in history]
    if all(e is not None for e in errs):
        ax.loglog(nd, np.array(errs, dtype=float), "s-", label="error")
    ref = eta[0] * (nd / nd[0]) ** -0.5
    ax.loglog(nd, ref, "k--", lw=0.8, label="slope -1/2")
    ax.set_xlabel("number of elements")
    ax.set_ylabel("error / estimator")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_mesh(path, mesh: Mesh, cell_values=None, title: str = "") -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    x, y = mesh.verts[:, 0], mesh.verts[:, 1]
    lw = 0.6 if mesh.n_triangles < 4000 else 0.15
    if cell_values is not None:
        vals = np.asarray(cell_values, dtype=float)
        tpc = ax.tripcolor(x, y, mesh.tris, facecolors=np.log10(vals + 1e-300),
                           cmap="viridis")
        fig.colorbar(tpc, ax=ax, label="log10 indicator")
    ax.triplot(x, y, mesh.tris, color="k", lw=lw)
    ax.set_aspect("equal")
    ax.set_title(title or f"{mesh.n_triangles} elements")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_displacement(path, mesh: Mesh, vertex_values, title: str = "") -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    tpc = ax.tripcolor(mesh.verts[:, 0], mesh.verts[:, 1], mesh.tris,
                       np.asarray(vertex_values, dtype=float), shading="gouraud",
                       cmap="coolwarm")
    fig.colorbar(tpc, ax=ax, label="displacement")
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_compare(path, histories: dict, title: str = "") -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    for name, history in histories.items():
        nd = np.array([r.ndof for r in history], dtype=float)
        errs = [r.error for r in history]
        if all(e is not None for e in errs):
            ax.loglog(nd, np.array(errs, dtype=float), "o-", label=f"{name} error")
        ax.loglog(nd, np.array([r.eta for r in history]), "s--",
                  label=f"{name} estimator")
    ax.set_xlabel("number of elements")
    ax.set_ylabel("error / estimator")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_text(path, text: str) -> None:
    os.makedirs(os.path.dirname(os.fspath(path)) or ".", exist_ok=True)
    atomic_write_text(path, text)
