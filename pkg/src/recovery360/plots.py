"""Static SVG figures, each with a CSV sidecar holding the plotted numbers.

SVG output is made byte-stable by fixing the id salt and dropping the
date metadata.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .ddi import zone_matrix  # noqa: E402
from .ingest import PITCH_LENGTH, PITCH_WIDTH  # noqa: E402
from .pitchcontrol import PitchControlSurface  # noqa: E402

_RC = {"svg.hashsalt": "recovery360", "svg.fonttype": "none", "font.size": 9}
_SAVE = {"format": "svg", "metadata": {"Date": None}}


def _pitch(ax) -> None:
    kw = dict(color="0.25", lw=0.8)
    ax.plot([0, PITCH_LENGTH, PITCH_LENGTH, 0, 0], [0, 0, PITCH_WIDTH, PITCH_WIDTH, 0], **kw)
    ax.plot([PITCH_LENGTH / 2] * 2, [0, PITCH_WIDTH], **kw)
    ax.add_patch(plt.Circle((PITCH_LENGTH / 2, PITCH_WIDTH / 2), 9.15, fill=False, **kw))
    for x0, sign in ((0, 1), (PITCH_LENGTH, -1)):
        ax.plot([x0, x0 + sign * 16.5, x0 + sign * 16.5, x0], [13.84, 13.84, 54.16, 54.16], **kw)
    ax.set_xlim(-2, PITCH_LENGTH + 2)
    ax.set_ylim(-2, PITCH_WIDTH + 2)
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])


def _save(fig, path: str) -> None:
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def surface_values(surface: PitchControlSurface) -> np.ndarray:
    """Control values with cells outside the visible area set to NaN."""
    return np.where(surface.visible_mask, surface.att_control, np.nan)


def plot_surface(surface: PitchControlSurface, path: str, sidecar: str, title: str = "") -> np.ndarray:
    values = surface_values(surface)
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7.0, 4.8))
        g = surface.grid
        # masked cells stay blank
        im = ax.imshow(
            np.ma.masked_invalid(values), origin="lower", extent=(0, g.length, 0, g.width),
            cmap="coolwarm_r", vmin=0.0, vmax=1.0, interpolation="nearest",
        )
        _pitch(ax)
        pos = surface.positions
        ax.scatter(pos[surface.attacking, 0], pos[surface.attacking, 1], s=28, c="tab:red", edgecolors="k", lw=0.5, zorder=3)
        ax.scatter(pos[~surface.attacking, 0], pos[~surface.attacking, 1], s=28, c="tab:blue", edgecolors="k", lw=0.5, zorder=3)
        ax.scatter([surface.ball[0]], [surface.ball[1]], s=14, c="white", edgecolors="k", lw=0.8, zorder=4)
        fig.colorbar(im, ax=ax, shrink=0.8, label="in-possession control")
        ax.set_title(title)
        _save(fig, path)
    rows, cols = np.indices(values.shape)
    cx, cy = g.centers()
    pd.DataFrame(
        {"row": rows.ravel(), "col": cols.ravel(), "x": cx.ravel(), "y": cy.ravel(), "control": values.ravel()}
    ).to_csv(sidecar, index=False, float_format="%.6f", lineterminator="\n")
    return values


def plot_zones(zones: pd.DataFrame, path: str, sidecar: str, cols: int = 6, rows: int = 3, title: str = "") -> np.ndarray:
    m = zone_matrix(zones, cols, rows)
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7.0, 4.8))
        finite = m[np.isfinite(m)]
        lim = float(np.abs(finite).max()) if finite.size else 1.0
        lim = lim if lim > 0 else 1.0
        im = ax.imshow(
            np.ma.masked_invalid(m), origin="lower", extent=(0, PITCH_LENGTH, 0, PITCH_WIDTH),
            cmap="RdBu_r", vmin=-lim, vmax=lim, interpolation="nearest",
        )
        _pitch(ax)
        for _, z in zones.iterrows():
            x = (z["col"] + 0.5) * PITCH_LENGTH / cols
            y = (z["row"] + 0.5) * PITCH_WIDTH / rows
            ax.text(x, y, f"{z['mean_ddi']:.4f}\nn={int(z['n'])}", ha="center", va="center", fontsize=7)
        ax.annotate(
            "", xy=(PITCH_LENGTH * 0.65, -1.2), xytext=(PITCH_LENGTH * 0.35, -1.2),
            arrowprops=dict(arrowstyle="->", lw=1.2), annotation_clip=False,
        )
        ax.text(PITCH_LENGTH / 2, -4.0, "defending team attacks this way", ha="center", va="top", fontsize=7)
        fig.colorbar(im, ax=ax, shrink=0.8, label="mean DDI")
        ax.set_title(title)
        _save(fig, path)
    zones.to_csv(sidecar, index=False, float_format="%.8f", lineterminator="\n")
    return m


def plot_timeline(records: pd.DataFrame, path: str, sidecar: str, title: str = "") -> pd.DataFrame:
    """Both recovery probabilities and their difference over consecutive states."""
    data = records[["match_id", "anchor_seq", "p_a", "p_at", "ddi"]].reset_index(drop=True)
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7.0, 3.6))
        x = data["anchor_seq"].to_numpy()
        ax.plot(x, data["p_a"], marker="o", ms=3, label="P(S, A)")
        ax.plot(x, data["p_at"], marker="s", ms=3, label="P(S, A+T)")
        ax.plot(x, data["ddi"], marker="^", ms=3, label="DDI")
        ax.axhline(0.0, color="0.6", lw=0.6)
        ax.set_xlabel("action")
        ax.set_ylabel("probability / difference")
        ax.legend(loc="best", frameon=False)
        ax.set_title(title)
        _save(fig, path)
    data.to_csv(sidecar, index=False, float_format="%.8f", lineterminator="\n")
    return data
