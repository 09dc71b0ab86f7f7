"""Game-state feature vectors and ball-recovery labels.

Two schemas are produced: ``A`` (action-derived only) and ``AUT``
(action block followed by the pitch-control block of the current frame).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .ingest import PITCH_LENGTH, PITCH_WIDTH, FreezeFrame, MatchMeta
from .pitchcontrol import (
    DEFAULT_GRID,
    GridSpec,
    PcParams,
    PitchControlSurface,
    avg_control_radius,
    compute_surfaces,
    points_in_polygon,
    rank_players_rpc,
    relevance_weights,
)
from .spadl import ACTION_TYPES, BODYPARTS, RESULTS, GameContext, SpadlAction, track_score

logger = logging.getLogger(__name__)

GOAL = (PITCH_LENGTH, PITCH_WIDTH / 2)
P_SET = (0.01, 0.1, 0.25, 0.5, 0.75)
KEY_COLUMNS = (
    "match_id",
    "anchor_seq",
    "team_id",
    "defending_team_id",
    "player_id",
    "ball_x",
    "ball_y",
    "period",
    "time_s",
    "event_uuid",
)
EXCLUSION_REASONS = ("short_window", "missing_frame", "n_att", "n_def", "ball_not_visible")


@dataclass
class MatchData:
    """One match after ingest: oriented actions and their internal-unit frames."""

    meta: MatchMeta
    actions: list[SpadlAction]
    frames: dict[str, FreezeFrame] = field(default_factory=dict)
    contexts: Optional[list[GameContext]] = None

    def __post_init__(self):
        if self.contexts is None:
            self.contexts = track_score(self.actions)


@dataclass
class GameState:
    match_id: int
    anchor_seq: int
    window: list[SpadlAction]
    frame: Optional[FreezeFrame] = None
    context: GameContext = GameContext(0, 0)


@dataclass
class EligibilityReport:
    total: int = 0
    included: int = 0
    excluded: dict = field(default_factory=lambda: {r: 0 for r in EXCLUSION_REASONS})

    def add(self, reason: Optional[str]) -> None:
        self.total += 1
        if reason is None:
            self.included += 1
        else:
            self.excluded[reason] += 1

    def as_dict(self) -> dict:
        return {"total": self.total, "included": self.included, "excluded": dict(self.excluded)}


@dataclass
class FeatureTable:
    schema_id: str
    names: list[str]
    X: np.ndarray
    y: np.ndarray
    keys: pd.DataFrame

    def __len__(self) -> int:
        return len(self.y)

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.schema_id, self.names)

    def subset(self, mask) -> "FeatureTable":
        mask = np.asarray(mask)
        return FeatureTable(
            self.schema_id, self.names, self.X[mask], self.y[mask], self.keys[mask].reset_index(drop=True)
        )


def schema_hash(schema_id: str, names: Sequence[str]) -> str:
    blob = json.dumps([schema_id, list(names)]).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------- action block


def _block_names(lag: int, with_type_result: bool) -> list[str]:
    p = f"a{lag}_"
    names = [p + n for n in ("start_x", "start_y", "end_x", "end_y")]
    if with_type_result:
        names += [p + "type_" + t for t in ACTION_TYPES]
        names += [p + "result_" + r for r in RESULTS]
    names += [p + "bodypart_" + b for b in BODYPARTS]
    names += [p + n for n in ("start_dist_goal", "start_angle_goal", "end_dist_goal", "end_angle_goal", "dx", "dy")]
    return names


def action_feature_names(tau1: int = 3) -> list[str]:
    names = []
    for lag in range(tau1):
        names += _block_names(lag, with_type_result=lag > 0)
    return names + ["goals_for", "goals_against", "goal_diff"]


def goal_distance_angle(x, y):
    dx = GOAL[0] - np.asarray(x, dtype=float)
    dy = np.abs(GOAL[1] - np.asarray(y, dtype=float))
    return np.hypot(dx, dy), np.arctan2(dy, dx)


def _action_block(start, end, type_idx, result_idx, body_idx, with_type_result: bool) -> np.ndarray:
    """Vectorised block for many actions; coordinates already oriented."""
    n = len(start)
    parts = [start, end]
    if with_type_result:
        parts.append(np.eye(len(ACTION_TYPES))[type_idx].reshape(n, -1))
        parts.append(np.eye(len(RESULTS))[result_idx].reshape(n, -1))
    parts.append(np.eye(len(BODYPARTS))[body_idx].reshape(n, -1))
    sd, sa = goal_distance_angle(start[:, 0], start[:, 1])
    ed, ea = goal_distance_angle(end[:, 0], end[:, 1])
    parts.append(np.column_stack([sd, sa, ed, ea, np.abs(end[:, 0] - start[:, 0]), np.abs(end[:, 1] - start[:, 1])]))
    return np.hstack(parts)


def _match_arrays(actions: Sequence[SpadlAction]):
    start = np.array([a.start for a in actions], dtype=float).reshape(-1, 2)
    end = np.array([a.end for a in actions], dtype=float).reshape(-1, 2)
    t = np.array([ACTION_TYPES.index(a.action_type) for a in actions], dtype=int)
    r = np.array([RESULTS.index(a.result) for a in actions], dtype=int)
    b = np.array([BODYPARTS.index(a.bodypart) for a in actions], dtype=int)
    team = np.array([a.team_id for a in actions])
    return start, end, t, r, b, team


def _action_matrix(actions: Sequence[SpadlAction], contexts: Sequence[GameContext], anchors: np.ndarray, tau1: int):
    start, end, t, r, b, team = _match_arrays(actions)
    blocks = []
    for lag in range(tau1):
        idx = anchors - lag
        s = start[idx].copy()
        e = end[idx].copy()
        other = team[idx] != team[anchors]
        # actions of the defending team are seen from the possessing team's side
        s[other] = np.column_stack([PITCH_LENGTH - s[other, 0], PITCH_WIDTH - s[other, 1]])
        e[other] = np.column_stack([PITCH_LENGTH - e[other, 0], PITCH_WIDTH - e[other, 1]])
        blocks.append(_action_block(s, e, t[idx], r[idx], b[idx], with_type_result=lag > 0))
    ctx = np.array([contexts[i].as_tuple() for i in anchors], dtype=float).reshape(-1, 3)
    blocks.append(ctx)
    return np.hstack(blocks)


def action_features(state: GameState, tau1: int = 3) -> np.ndarray:
    """Action-derived features of one game state (current action first in ``window``)."""
    if len(state.window) != tau1:
        raise ValueError(f"window holds {len(state.window)} actions, expected {tau1}")
    acts = list(reversed(state.window))
    ctxs = [GameContext(0, 0)] * (tau1 - 1) + [state.context]
    return _action_matrix(acts, ctxs, np.array([tau1 - 1]), tau1)[0]


# ---------------------------------------------------------------- labels


def build_label(actions: Sequence[SpadlAction], i: int, k: int = 4) -> int:
    """1 if the other team acts within the next ``k`` actions of the same period."""
    a = actions[i]
    for j in range(i + 1, min(i + k, len(actions) - 1) + 1):
        b = actions[j]
        if b.period != a.period:
            break
        if b.team_id != a.team_id:
            return 1
    return 0


def labels_for(teams: np.ndarray, periods: np.ndarray, k: int) -> np.ndarray:
    """Vectorised :func:`build_label` over every anchor of one match."""
    n = len(teams)
    y = np.zeros(n, dtype=np.int8)
    alive = np.ones(n, dtype=bool)
    for lag in range(1, k + 1):
        if lag >= n:
            break
        same_period = np.zeros(n, dtype=bool)
        same_period[: n - lag] = periods[lag:] == periods[: n - lag]
        alive &= same_period
        changed = np.zeros(n, dtype=bool)
        changed[: n - lag] = teams[lag:] != teams[: n - lag]
        y |= (alive & changed).astype(np.int8)
    return y


# ---------------------------------------------------------------- tracking block


def frame_counts(frame: FreezeFrame) -> tuple[int, int]:
    n_att = sum(1 for p in frame.players if p.teammate or p.actor)
    return n_att, len(frame.players) - n_att


def eligibility(
    frame: Optional[FreezeFrame], ball: tuple[float, float], n_att: int = 5, n_def: int = 5
) -> tuple[bool, Optional[str]]:
    """Whether a state's frame supports the tracking block; reason when it does not."""
    if frame is None:
        return False, "missing_frame"
    att, dfn = frame_counts(frame)
    if att < n_att:
        return False, "n_att"
    if dfn < n_def:
        return False, "n_def"
    if not points_in_polygon(np.array([ball[0]]), np.array([ball[1]]), frame.visible_area)[0]:
        return False, "ball_not_visible"
    return True, None


def tracking_feature_names(n_att: int = 5, n_def: int = 5, p_set=P_SET, lag: int = 0) -> list[str]:
    pre = f"t{lag}_"
    names = [pre + "pc_ball_4m"]
    for side, n in (("att", n_att), ("def", n_def)):
        for r in range(n):
            p = f"{pre}{side}{r}_"
            for q in p_set:
                names += [f"{p}pc_mean_le_{q:g}", f"{p}cells_le_{q:g}"]
            names += [p + "x", p + "y", p + "dist_carrier"]
    return names


def carrier_position(frame: FreezeFrame, ball) -> tuple[float, float]:
    actor = frame.actor
    return actor.pos if actor is not None else (float(ball[0]), float(ball[1]))


def tracking_features(
    surface: PitchControlSurface,
    carrier: Optional[tuple[float, float]] = None,
    n_att: int = 5,
    n_def: int = 5,
    p_set=P_SET,
    rel_sigma_m: float = 14.0,
) -> np.ndarray:
    """Pitch-control block: ball-area control plus per-player occupation for top-RPC players."""
    carrier = carrier if carrier is not None else surface.ball
    weights = relevance_weights(surface.ball, surface.grid, rel_sigma_m, surface.visible_mask)
    att_order, def_order = rank_players_rpc(surface, weights)
    if len(att_order) < n_att or len(def_order) < n_def:
        raise ValueError("state is not eligible: too few players for the tracking block")
    out = [avg_control_radius(surface, surface.ball, 4.0)]
    vis = surface.visible_mask
    for j in att_order[:n_att] + def_order[:n_def]:
        c = surface.per_player[j][vis]
        for q in p_set:
            sel = c[(c > 0.0) & (c <= q)]
            out += [float(sel.mean()) if sel.size else 0.0, float(sel.size)]
        x, y = surface.positions[j]
        out += [float(x), float(y), math.hypot(x - carrier[0], y - carrier[1])]
    return np.array(out)


# ---------------------------------------------------------------- assembly


@dataclass(frozen=True)
class FeatureParams:
    tau1: int = 3
    tau2: int = 1
    n_att: int = 5
    n_def: int = 5
    p_set: tuple = P_SET
    pc: PcParams = PcParams()

    def digest(self) -> str:
        blob = json.dumps(
            [self.tau1, self.tau2, self.n_att, self.n_def, list(self.p_set), self.pc.digest()]
        ).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _other_team(teams: np.ndarray, meta: MatchMeta) -> dict:
    ids = sorted(set(teams.tolist()) | {t for t in (meta.home_team_id, meta.away_team_id) if t})
    if len(ids) == 2:
        return {ids[0]: ids[1], ids[1]: ids[0]}
    return {t: next((o for o in ids if o != t), -1) for t in ids}


def _match_states(
    m: MatchData, params: FeatureParams, grid: GridSpec, threads: int, report: EligibilityReport
):
    acts = m.actions
    n = len(acts)
    anchors = np.arange(params.tau1 - 1, n)
    for _ in range(min(params.tau1 - 1, n)):
        report.add("short_window")
    if not len(anchors):
        return None
    teams = np.array([a.team_id for a in acts])
    other = _other_team(teams, m.meta)
    X_a = _action_matrix(acts, m.contexts, anchors, params.tau1)
    keys = pd.DataFrame(
        {
            "match_id": m.meta.match_id,
            "anchor_seq": anchors,
            "team_id": teams[anchors],
            "defending_team_id": [other[t] for t in teams[anchors]],
            "player_id": [acts[i].player_id if acts[i].player_id is not None else -1 for i in anchors],
            "ball_x": [acts[i].start[0] for i in anchors],
            "ball_y": [acts[i].start[1] for i in anchors],
            "period": [acts[i].period for i in anchors],
            "time_s": [acts[i].time_s for i in anchors],
            "event_uuid": [acts[i].event_uuid for i in anchors],
        }
    )

    # per-action eligibility, then per-state over the tau2 window
    action_ok: list[tuple[bool, Optional[str]]] = [
        eligibility(m.frames.get(a.event_uuid), a.start, params.n_att, params.n_def) for a in acts
    ]
    eligible = np.zeros(len(anchors), dtype=bool)
    for row, i in enumerate(anchors):
        reason = None
        for lag in range(params.tau2):
            ok, why = action_ok[i - lag] if i - lag >= 0 else (False, "short_window")
            if not ok:
                reason = why
                break
        eligible[row] = reason is None
        report.add(reason)

    needed = sorted({i - lag for i in anchors[eligible] for lag in range(params.tau2)})
    surfaces = compute_surfaces(
        [m.frames[acts[i].event_uuid] for i in needed],
        [acts[i].start for i in needed],
        params.pc,
        grid,
        threads,
    )
    tblock = {}
    for i, s in zip(needed, surfaces):
        f = m.frames[acts[i].event_uuid]
        tblock[i] = tracking_features(
            s, carrier_position(f, acts[i].start), params.n_att, params.n_def, params.p_set, params.pc.rel_sigma_m
        )
    X_t = np.array(
        [np.concatenate([tblock[i - lag] for lag in range(params.tau2)]) for i in anchors[eligible]]
    )
    return X_a, X_t, eligible, keys, teams, np.array([a.period for a in acts])


def assemble_dataset(
    matches: Sequence[MatchData],
    k: int = 4,
    tau1: int = 3,
    tau2: int = 1,
    n_att: int = 5,
    n_def: int = 5,
    p_set=P_SET,
    pc: PcParams = PcParams(),
    grid: GridSpec = DEFAULT_GRID,
    threads: int = 1,
) -> tuple[FeatureTable, FeatureTable, EligibilityReport]:
    """Feature tables for both schemas, rows ordered by (match_id, anchor_seq)."""
    params = FeatureParams(tau1, tau2, n_att, n_def, tuple(p_set), pc)
    names_a = action_feature_names(tau1)
    names_t = []
    for lag in range(tau2):
        names_t += tracking_feature_names(n_att, n_def, p_set, lag)
    report = EligibilityReport()
    xa, xat, ya, yat, ka, kat = [], [], [], [], [], []
    for m in sorted(matches, key=lambda m: m.meta.match_id):
        res = _match_states(m, params, grid, threads, report)
        if res is None:
            continue
        X_a, X_t, eligible, keys, teams, periods = res
        y = labels_for(teams, periods, k)[keys["anchor_seq"].to_numpy()]
        xa.append(X_a)
        ya.append(y)
        ka.append(keys)
        if eligible.any():
            xat.append(np.hstack([X_a[eligible], X_t]))
            yat.append(y[eligible])
            kat.append(keys[eligible])

    def _table(schema_id, names, xs, ys, ks):
        if not xs:
            return FeatureTable(
                schema_id, names, np.zeros((0, len(names))), np.zeros(0, dtype=np.int8),
                pd.DataFrame(columns=list(KEY_COLUMNS)),
            )
        return FeatureTable(
            schema_id, names, np.vstack(xs), np.concatenate(ys), pd.concat(ks, ignore_index=True)
        )

    table_a = _table("A", names_a, xa, ya, ka)
    table_at = _table("AUT", names_a + names_t, xat, yat, kat)
    return table_a, table_at, report


def relabel(table: FeatureTable, matches: Sequence[MatchData], k: int) -> FeatureTable:
    """Same rows with labels recomputed for another window length ``k``."""
    lookup = {}
    for m in matches:
        teams = np.array([a.team_id for a in m.actions])
        periods = np.array([a.period for a in m.actions])
        lookup[m.meta.match_id] = labels_for(teams, periods, k)
    y = np.array(
        [lookup[mid][seq] for mid, seq in zip(table.keys["match_id"], table.keys["anchor_seq"])],
        dtype=np.int8,
    )
    return FeatureTable(table.schema_id, table.names, table.X, y, table.keys)
