"""Spearman-style pitch control for single 360 freeze frames.

Players carry no velocity in a freeze frame, so each one is modelled as
standing still and running at a flat ``max_speed_mps`` after
``reaction_time_s``. Per cell, the potential-control ODE is integrated
from the moment the ball arrives until the total control reaches
``1 - convergence_eps`` (or the integration horizon runs out).

Each step holds the intercept probabilities at their mid-step value and
removes the uncontrolled mass exactly, ``(1 - sum C) * (1 - exp(-lambda
* sum f * dt))``, split between players in proportion to ``f``; to first order this is
the explicit update ``dC = (1 - sum C) f lambda dt``. Final shares are
renormalised by the total so they sum to one.

The hot loop lives in :func:`_surface_kernel` (numba, ``nogil``) so
frames can be processed concurrently from a thread pool.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .ingest import PITCH_LENGTH, PITCH_WIDTH, FreezeFrame


@dataclass(frozen=True)
class PcParams:
    reaction_time_s: float = 0.7
    max_speed_mps: float = 5.0
    ball_speed_mps: float = 15.0
    sigma_s: float = 0.45
    lambda_per_s: float = 4.3
    dt_s: float = 0.04
    max_t_s: float = 10.0
    convergence_eps: float = 0.01
    rel_sigma_m: float = 14.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"PcParams.{name} must be strictly positive, got {value}")
        if not self.dt_s < self.sigma_s:
            raise ValueError("PcParams.dt_s must be smaller than sigma_s")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class GridSpec:
    rows: int = 32
    cols: int = 50
    length: float = PITCH_LENGTH
    width: float = PITCH_WIDTH

    @property
    def cell_width(self) -> float:
        return self.length / self.cols

    @property
    def cell_height(self) -> float:
        return self.width / self.rows

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(x, y) arrays of shape (rows, cols); rows index y, columns index x."""
        xs = (np.arange(self.cols) + 0.5) * self.cell_width
        ys = (np.arange(self.rows) + 0.5) * self.cell_height
        return np.meshgrid(xs, ys)


DEFAULT_GRID = GridSpec()


@dataclass
class PitchControlSurface:
    att_control: np.ndarray
    per_player: np.ndarray
    visible_mask: np.ndarray
    ball: tuple[float, float]
    positions: np.ndarray
    attacking: np.ndarray
    grid: GridSpec = DEFAULT_GRID
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_players(self) -> int:
        return len(self.positions)


def time_to_reach(pos, target, params: PcParams = PcParams()) -> float:
    d = math.hypot(target[0] - pos[0], target[1] - pos[1])
    return params.reaction_time_s + d / params.max_speed_mps


def ball_travel_time(ball, target, params: PcParams = PcParams()) -> float:
    return math.hypot(target[0] - ball[0], target[1] - ball[1]) / params.ball_speed_mps


@numba.njit(cache=True, nogil=True)
def _surface_kernel(px, py, att, bx, by, cx, cy, reaction, vmax, vball, sigma, lam, dt, max_t, eps):
    n = px.shape[0]
    m = cx.shape[0]
    contrib = np.zeros((n, m))
    unconverged = np.zeros(m, dtype=np.bool_)
    att_value = np.zeros(m)
    a = math.pi / math.sqrt(3.0) / sigma
    decay = math.exp(-a * dt)
    max_steps = int(max_t / dt + 0.5)
    e = np.empty(n)
    f = np.empty(n)
    c = np.empty(n)
    # steps that end this long before the first arrival carry f < 1e-7 per player
    lead = math.log(1e7) / a
    tarr = np.empty(n)
    for k in range(m):
        t0 = math.sqrt((cx[k] - bx) ** 2 + (cy[k] - by) ** 2) / vball
        tmin = np.inf
        for j in range(n):
            tarr[j] = reaction + math.sqrt((cx[k] - px[j]) ** 2 + (cy[k] - py[j]) ** 2) / vmax
            tmin = min(tmin, tarr[j])
            c[j] = 0.0
        steps = 0
        if tmin - lead > t0 + dt:
            steps = min(int((tmin - lead - t0) / dt), max_steps)
        for j in range(n):
            # intercept sigmoid sampled mid-step
            e[j] = math.exp(-a * (t0 + (steps + 0.5) * dt - tarr[j]))
        total = 0.0
        while total < 1.0 - eps and steps < max_steps:
            fsum = 0.0
            for j in range(n):
                f[j] = 1.0 / (1.0 + e[j])
                fsum += f[j]
                e[j] *= decay
            if fsum > 0.0:
                # exact decay of the uncontrolled mass over one step with f held fixed
                gained = (1.0 - total) * (1.0 - math.exp(-lam * fsum * dt))
                for j in range(n):
                    c[j] += gained * f[j] / fsum
                total += gained
            steps += 1
        if total < 1.0 - eps:
            unconverged[k] = True
        v = 0.0
        if total > 0.0:
            for j in range(n):
                contrib[j, k] = c[j] / total
                if att[j]:
                    v += contrib[j, k]
        att_value[k] = min(max(v, 0.0), 1.0)
    return att_value, contrib, unconverged


def _run_kernel(positions, attacking, ball, cx, cy, params: PcParams):
    positions = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 2)
    return _surface_kernel(
        positions[:, 0].copy(),
        positions[:, 1].copy(),
        np.ascontiguousarray(attacking, dtype=np.bool_),
        float(ball[0]),
        float(ball[1]),
        np.ascontiguousarray(cx, dtype=np.float64).ravel(),
        np.ascontiguousarray(cy, dtype=np.float64).ravel(),
        params.reaction_time_s,
        params.max_speed_mps,
        params.ball_speed_mps,
        params.sigma_s,
        params.lambda_per_s,
        params.dt_s,
        params.max_t_s,
        params.convergence_eps,
    )


def integrate_cell(positions, attacking, ball, cell, params: PcParams = PcParams()):
    """Control of a single target location.

    Returns ``(att_value, per_player)`` where ``per_player`` holds each
    player's share of control at ``cell`` (summing to one).
    """
    if len(positions) == 0:
        raise ValueError("integrate_cell needs at least one player")
    att_value, contrib, _ = _run_kernel(
        positions, attacking, ball, np.array([cell[0]]), np.array([cell[1]]), params
    )
    return float(att_value[0]), contrib[:, 0].copy()


def points_in_polygon(x: np.ndarray, y: np.ndarray, polygon: Sequence[tuple[float, float]]) -> np.ndarray:
    """Even-odd rule test of points against a simple polygon."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = np.zeros(x.shape, dtype=bool)
    pts = list(polygon)
    n = len(pts)
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        if y1 == y2:
            continue
        crosses = (y1 > y) != (y2 > y)
        xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside


def frame_arrays(frame: FreezeFrame) -> tuple[np.ndarray, np.ndarray]:
    """Player positions (n, 2) and in-possession flags; the actor counts as in possession."""
    pos = np.array([p.pos for p in frame.players], dtype=float).reshape(-1, 2)
    att = np.array([p.teammate or p.actor for p in frame.players], dtype=bool)
    return pos, att


def compute_surface(
    frame: FreezeFrame,
    ball: tuple[float, float],
    params: PcParams = PcParams(),
    grid: GridSpec = DEFAULT_GRID,
    require_both_sides: bool = True,
) -> PitchControlSurface:
    """Pitch control over the whole grid for one frame in internal coordinates.

    An empty side is an error unless ``require_both_sides`` is false
    (used for rendering toy frames such as a lone attacker).
    """
    pos, att = frame_arrays(frame)
    if len(pos) == 0:
        raise ValueError(f"frame {frame.event_uuid}: no players")
    if require_both_sides and (not att.any() or att.all()):
        raise ValueError(f"frame {frame.event_uuid}: both sides need at least one player")
    cx, cy = grid.centers()
    att_value, contrib, unconverged = _run_kernel(pos, att, ball, cx, cy, params)
    shape = (grid.rows, grid.cols)
    mask = points_in_polygon(cx, cy, frame.visible_area)
    _, counts = np.unique(pos, axis=0, return_counts=True)
    return PitchControlSurface(
        att_control=att_value.reshape(shape),
        per_player=contrib.reshape((len(pos),) + shape),
        visible_mask=mask,
        ball=(float(ball[0]), float(ball[1])),
        positions=pos,
        attacking=att,
        grid=grid,
        diagnostics={
            "n_unconverged": int(unconverged.sum()),
            "n_duplicate_positions": int((counts - 1).sum()),
        },
    )


def compute_surfaces(
    frames: Sequence[FreezeFrame],
    balls: Sequence[tuple[float, float]],
    params: PcParams = PcParams(),
    grid: GridSpec = DEFAULT_GRID,
    threads: int = 1,
) -> list[PitchControlSurface]:
    """Batch version of :func:`compute_surface`; output order follows input order."""
    if threads <= 1 or len(frames) < 2:
        return [compute_surface(f, b, params, grid) for f, b in zip(frames, balls)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda fb: compute_surface(fb[0], fb[1], params, grid), zip(frames, balls)))


def _cell_distances(surface: PitchControlSurface, center) -> np.ndarray:
    cx, cy = surface.grid.centers()
    return np.hypot(cx - center[0], cy - center[1])


def avg_control_radius(surface: PitchControlSurface, center, radius_m: float = 4.0) -> float:
    sel = surface.visible_mask & (_cell_distances(surface, center) <= radius_m)
    if not sel.any():
        return 0.5
    return float(surface.att_control[sel].mean())


def relevance_weights(
    ball,
    grid: GridSpec = DEFAULT_GRID,
    rel_sigma_m: float = 14.0,
    visible_mask: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Gaussian relevance around the ball, normalised over visible cells."""
    cx, cy = grid.centers()
    w = np.exp(-((cx - ball[0]) ** 2 + (cy - ball[1]) ** 2) / (2.0 * rel_sigma_m**2))
    if visible_mask is not None and visible_mask.any():
        w = np.where(visible_mask, w, 0.0)
    return w / w.sum()


def rpc_scores(surface: PitchControlSurface, weights: np.ndarray) -> np.ndarray:
    # row-wise sum rather than BLAS so identical players get bit-identical scores
    n = surface.n_players
    return (surface.per_player * weights[None]).reshape(n, -1).sum(axis=1)


def rank_players_rpc(surface: PitchControlSurface, weights: np.ndarray) -> tuple[list[int], list[int]]:
    """Player indices per side (attackers, defenders) by descending relevant pitch control."""
    scores = rpc_scores(surface, weights)
    dist = np.hypot(surface.positions[:, 0] - surface.ball[0], surface.positions[:, 1] - surface.ball[1])
    order = sorted(range(surface.n_players), key=lambda j: (-scores[j], dist[j], j))
    att = [j for j in order if surface.attacking[j]]
    dfn = [j for j in order if not surface.attacking[j]]
    return att, dfn


SURFACE_FORMAT = "recovery360-surface 1"


def dump_surface(path, surface: PitchControlSurface, match_id=0, event_uuid="", params: PcParams = PcParams()):
    """Write the control grid and visibility mask as fixed-precision text."""
    g = surface.grid
    lines = [
        SURFACE_FORMAT,
        f"match_id {match_id}",
        f"event_uuid {event_uuid}",
        f"grid {g.rows} {g.cols} {g.length:g} {g.width:g}",
        f"params {params.digest()}",
        f"ball {surface.ball[0]:.6f} {surface.ball[1]:.6f}",
        "control",
    ]
    lines += [" ".join(f"{v:.6f}" for v in row) for row in surface.att_control]
    lines.append("mask")
    lines += ["".join("1" if v else "0" for v in row) for row in surface.visible_mask]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_surface_dump(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != SURFACE_FORMAT:
        raise ValueError(f"{path}: not a surface dump")
    head = dict(line.split(" ", 1) for line in lines[1:6])
    rows, cols = (int(v) for v in head["grid"].split()[:2])
    i = lines.index("control") + 1
    control = np.array([[float(v) for v in ln.split()] for ln in lines[i : i + rows]])
    j = lines.index("mask") + 1
    mask = np.array([[c == "1" for c in ln] for ln in lines[j : j + rows]])
    if control.shape != (rows, cols) or mask.shape != (rows, cols):
        raise ValueError(f"{path}: truncated surface dump")
    bx, by = (float(v) for v in head["ball"].split())
    return {
        "match_id": head["match_id"],
        "event_uuid": head["event_uuid"],
        "params": head["params"],
        "ball": (bx, by),
        "control": control,
        "mask": mask,
    }
