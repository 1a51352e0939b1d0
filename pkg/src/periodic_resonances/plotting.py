"""SVG figures rendered with matplotlib's SVG backend.

Output is deterministic: a fixed hash salt and no date metadata.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Polygon, Rectangle as RectPatch  # noqa: E402
import numpy as np  # noqa: E402

from .periodic_model import BandStructure, PeriodicPotential, discriminant  # noqa: E402

plt.rcParams["svg.hashsalt"] = "periodic-resonances"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def discriminant_figure(V: PeriodicPotential, bs: BandStructure, path, points: int = 2000):
    lo = min(b[0] for b in bs.bands) - 0.5
    hi = max(b[1] for b in bs.bands) + 0.5
    E = np.linspace(lo, hi, points)
    d = np.real(discriminant(E, V))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(E, np.clip(d, -6, 6), color="black", lw=1)
    for y in (-2, 2):
        ax.axhline(y, color="grey", lw=0.6, ls="--")
    for a, b in bs.bands:
        ax.axvspan(a, b, color="tab:blue", alpha=0.15)
    ax.set_xlabel("E")
    ax.set_ylabel("discriminant")
    ax.set_ylim(-6, 6)
    _save(fig, path)


def _rect_patch(ax, r, **kw):
    if r is None:
        return
    ax.add_patch(RectPatch((r["re_min"], r["im_min"]), r["re_max"] - r["re_min"],
                           r["im_max"] - r["im_min"], **kw))


def region_figure(gap: dict, path, records=()):
    """Layout of one gap: corner squares, deep strip, Omega_n / Omega~_n and the roots."""
    reg = gap["regions"] if "regions" in gap else gap
    fig, ax = plt.subplots(figsize=(7, 4.5))
    _rect_patch(ax, reg["D"], fill=False, ec="black", lw=0.8)
    for name in ("corner_left", "corner_right"):
        _rect_patch(ax, reg[name], color="grey", alpha=0.5)
    _rect_patch(ax, reg["deep_strip"], color="grey", alpha=0.25)
    if reg.get("omega_polygon"):
        ax.add_patch(Polygon(np.array(reg["omega_polygon"]), closed=True, fill=False,
                             ec="tab:blue", lw=1))
    _rect_patch(ax, reg["omega_tilde"], fill=False, ec="tab:green", ls="--", lw=1)
    for r in records:
        ax.plot(r["re_z"], r["im_z"], "x", color="tab:red")
    ax.axhline(0, color="black", lw=0.5)
    D = reg["D"]
    shallow = reg["shallow_depth"]
    ax.set_xlim(D["re_min"] - 0.05 * (D["re_max"] - D["re_min"]),
                D["re_max"] + 0.05 * (D["re_max"] - D["re_min"]))
    ax.set_ylim(-1.5 * shallow, 0.2 * shallow)
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    ax.set_title(f"gap n={reg['n']} ({reg['regime']})")
    _save(fig, path)


def edge_figure(report: dict, path):
    """Rescaled roots of every searched gap against the poles of the band."""
    fig, ax = plt.subplots(figsize=(7, 4))
    lam = report["edge"]["local_lambda_first"]
    ax.plot(lam, np.zeros(len(lam)), "|", color="black", ms=12)
    recs = [r for g in report.get("gaps", []) for r in g["records"]]
    recs += report.get("R_search", {}).get("records", [])
    if recs:
        ax.plot([r["re_z"] for r in recs], [r["im_z"] for r in recs], "x", color="tab:red")
    ax.axhline(0, color="black", lw=0.5)
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    _save(fig, path)


def image_figure(w: np.ndarray, target: complex, path):
    """Image polyline of a contour with the target point marked."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(w.real, w.imag, color="black", lw=0.8)
    ax.plot([target.real], [target.imag], "o", color="tab:red")
    ax.set_xlabel("Re f")
    ax.set_ylabel("Im f")
    _save(fig, path)


def scaling_figure(points: list, slope: float | None, intercept: float | None, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    if points:
        x = np.log([p["x"] for p in points])
        y = np.log([abs(p["im_z"]) for p in points])
        ax.plot(x, y, "o", ms=3)
        if slope is not None:
            xs = np.linspace(x.min(), x.max(), 2)
            ax.plot(xs, intercept + slope * xs, color="black", lw=0.8)
    ax.set_xlabel("log((n+1)^2/(eps L))")
    ax.set_ylabel("log|Im z_n|")
    _save(fig, path)
