"""Synthetic 360 matches with a controllable recovery signal, plus brute-force oracles.

The generator writes event and frame files in the open-data layout so they
go through the same ingest path as real data. Possession changes follow a
per-action hazard that is multiplied by ``crowding_boost`` whenever at
least ``crowd_min_defenders`` defenders stand within ``crowd_radius_m`` of
the ball. Whether a defending team crowds the ball depends on its style,
so the frame carries signal that the action stream alone does not.
"""

from __future__ import annotations

import datetime as dt
import json
import math
import os
import uuid
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .ingest import (
    PITCH_LENGTH,
    PITCH_WIDTH,
    PROVIDER_LENGTH,
    PROVIDER_WIDTH,
    FramePlayer,
    FreezeFrame,
    MatchMeta,
    to_internal_xy,
    to_provider_xy,
    write_manifest,
)
from .pitchcontrol import DEFAULT_GRID, GridSpec, PcParams, frame_arrays
from .spadl import SpadlAction

STYLES = ("crowding", "passive")


class InfeasibleConfig(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_matches: int = 20
    actions_per_match: int = 1000
    base_recovery_hazard: float = 0.055
    crowding_boost: float = 4.0
    crowd_radius_m: float = 6.0
    crowd_min_defenders: int = 2
    n_teams: int = 6
    # empty -> even-numbered teams crowd, odd-numbered teams stay passive
    team_styles: tuple = ()
    crowding_rate: float = 0.7
    passive_rate: float = 0.1
    crowd_persistence: float = 0.7
    # hazard multiplier 1 + g * (x / 105 - 1/2): gives action features some signal
    zone_gradient: float = 1.0
    frame_visibility: float = 1.0
    degrade_visibility: bool = False
    missing_frame_rate: float = 0.0
    absolute_coords: bool = False
    goal_rate: float = 0.12
    start_date: str = "2023-08-05"
    first_match_id: int = 1000

    def validate(self) -> None:
        if self.n_matches < 1 or self.actions_per_match < 10:
            raise InfeasibleConfig("need at least one match of at least 10 actions")
        if self.n_teams < 2:
            raise InfeasibleConfig("need at least two teams")
        if self.team_styles and len(self.team_styles) != self.n_teams:
            raise InfeasibleConfig(f"team_styles lists {len(self.team_styles)} styles for {self.n_teams} teams")
        bad = [s for s in self.team_styles if s not in STYLES]
        if bad:
            raise InfeasibleConfig(f"unknown team style(s) {bad}; expected one of {STYLES}")
        if not 0.0 < self.base_recovery_hazard < 1.0:
            raise InfeasibleConfig(f"base_recovery_hazard must lie in (0, 1), got {self.base_recovery_hazard}")
        if self.crowding_boost <= 0:
            raise InfeasibleConfig("crowding_boost must be positive")
        if abs(self.zone_gradient) >= 2.0:
            raise InfeasibleConfig("|zone_gradient| must stay below 2 to keep hazards positive")
        worst = self.base_recovery_hazard * max(self.crowding_boost, 1.0) * (1 + abs(self.zone_gradient) / 2)
        if worst >= 1.0:
            raise InfeasibleConfig(f"peak hazard {worst:.3f} >= 1; lower the base hazard or the boost")
        for name in ("crowding_rate", "passive_rate", "crowd_persistence", "missing_frame_rate", "goal_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InfeasibleConfig(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 < self.frame_visibility <= 1.0:
            raise InfeasibleConfig("frame_visibility must lie in (0, 1]")

    def style_of(self, team_index: int) -> str:
        if self.team_styles:
            return self.team_styles[team_index]
        return STYLES[team_index % 2]


@dataclass
class SynthResult:
    metas: list[MatchMeta]
    manifest_path: str
    team_styles: dict[int, str]
    # per match: one row per generated action with the hidden generator state
    truth: dict[int, pd.DataFrame] = field(default_factory=dict)


def team_id_of(team_index: int) -> int:
    return 101 + team_index


def round_robin(n_teams: int, n_matches: int) -> list[tuple[int, int]]:
    """(home, away) team indices by the circle method, repeated as needed."""
    teams = list(range(n_teams)) + ([None] if n_teams % 2 else [])
    n = len(teams)
    rounds = []
    for r in range(n - 1):
        pairs = []
        for i in range(n // 2):
            a, b = teams[i], teams[n - 1 - i]
            if a is None or b is None:
                continue
            pairs.append((a, b) if r % 2 == 0 else (b, a))
        rounds.append(pairs)
        teams = [teams[0]] + [teams[-1]] + teams[1:-1]
    out = []
    leg = 0
    while len(out) < n_matches:
        for pairs in rounds:
            for h, a in pairs:
                out.append((h, a) if leg % 2 == 0 else (a, h))
        leg += 1
    return out[:n_matches]


def style_schedule(styles: Sequence[str], n_matches: int) -> list[tuple[int, int]]:
    """(home, away) indices pairing every crowding team with every passive team.

    Each match then mixes one team of each style, which keeps the recovery
    rate stationary across the season. Falls back to :func:`round_robin`
    when only one style is present.
    """
    crowd = [i for i, s in enumerate(styles) if s == "crowding"]
    passive = [i for i, s in enumerate(styles) if s == "passive"]
    if not crowd or not passive:
        return round_robin(len(styles), n_matches)
    cycle = []
    for r in range(len(passive)):
        for i, c in enumerate(crowd):
            p = passive[(i + r) % len(passive)]
            cycle.append((c, p) if (i + r) % 2 == 0 else (p, c))
    out = []
    leg = 0
    while len(out) < n_matches:
        out += [(h, a) if leg % 2 == 0 else (a, h) for h, a in cycle]
        leg += 1
    return out[:n_matches]


# ---------------------------------------------------------------- frame geometry


def _clip(p):
    return min(max(p[0], 0.5), PITCH_LENGTH - 0.5), min(max(p[1], 0.5), PITCH_WIDTH - 0.5)


def _snap(p) -> tuple[float, float]:
    """Round to provider precision (0.1 units) and return internal coordinates."""
    x, y = to_provider_xy(_clip(p))
    return to_internal_xy((round(x, 1), round(y, 1)))


def _ring(rng, ball, r_lo, r_hi):
    r = rng.uniform(r_lo, r_hi)
    a = rng.uniform(0, 2 * math.pi)
    return ball[0] + r * math.cos(a), ball[1] + r * math.sin(a)


def _far(rng, ball, min_dist, centre_dx):
    for _ in range(50):
        p = _clip((ball[0] + centre_dx + rng.normal(0, 12), ball[1] + rng.normal(0, 14)))
        if math.hypot(p[0] - ball[0], p[1] - ball[1]) >= min_dist:
            return p
    # fall back to a point pushed outwards along a random bearing
    a = rng.uniform(0, 2 * math.pi)
    return _clip((ball[0] + (min_dist + 1) * math.cos(a), ball[1] + (min_dist + 1) * math.sin(a)))


def _place_players(rng, ball, crowd: bool, cfg: SynthConfig):
    """Internal-unit positions for both sides; acting team attacks to the right."""
    att = [(rng.uniform(3, 10), 34 + rng.normal(0, 3)), ball]
    att += [_clip((ball[0] - 5 + rng.normal(0, 12), ball[1] + rng.normal(0, 14))) for _ in range(9)]
    dfn = [(rng.uniform(95, 102), 34 + rng.normal(0, 3))]
    n_close = int(rng.integers(cfg.crowd_min_defenders, cfg.crowd_min_defenders + 2)) if crowd else int(rng.integers(0, 2))
    r_hi = cfg.crowd_radius_m - 1.0
    dfn += [_clip(_ring(rng, ball, 1.5, r_hi)) for _ in range(n_close)]
    dfn += [_far(rng, ball, cfg.crowd_radius_m + 2.0, 8.0) for _ in range(10 - n_close)]
    return [_snap(p) for p in att], [_snap(p) for p in dfn]


def _band(rng, ball_x: float, cfg: SynthConfig) -> tuple[float, float]:
    w = cfg.frame_visibility * PITCH_LENGTH
    c = ball_x + (rng.normal(0, w / 2) if cfg.degrade_visibility else 0.0)
    x0 = min(max(c - w / 2, 0.0), PITCH_LENGTH - w)
    return x0, x0 + w


def _force_visible(players, x0, x1, keep: int, protect: int):
    """Pull the nearest hidden outfield players into the band until ``keep`` are visible."""
    inside = [x0 <= p[0] <= x1 for p in players]
    hidden = sorted(
        (i for i, v in enumerate(inside) if not v and i >= protect),
        key=lambda i: min(abs(players[i][0] - x0), abs(players[i][0] - x1)),
    )
    out = list(players)
    for i in hidden[: max(0, keep - sum(inside))]:
        out[i] = _snap((min(max(players[i][0], x0 + 0.5), x1 - 0.5), players[i][1]))
    return out


# ---------------------------------------------------------------- event records


_TYPE_IDS = {"Pass": 30, "Carry": 43, "Dribble": 14, "Miscontrol": 38, "Shot": 16, "Half Start": 18, "Starting XI": 35}


def _provider(p, flip: bool) -> list[float]:
    x, y = to_provider_xy(p)
    x, y = round(x, 1), round(y, 1)
    if flip:
        x, y = round(PROVIDER_LENGTH - x, 1), round(PROVIDER_WIDTH - y, 1)
    return [x, y]


def _timestamp(t: float) -> str:
    ms = int(round(t * 1000))
    return f"{ms // 3_600_000:02d}:{ms // 60_000 % 60:02d}:{ms // 1000 % 60:02d}.{ms % 1000:03d}"


def _uuid(rng) -> str:
    return str(uuid.UUID(bytes=rng.bytes(16), version=4))


class _MatchWriter:
    def __init__(self, rng, teams: dict[int, str]):
        self.rng = rng
        self.teams = teams
        self.events: list[dict] = []
        self.frames: list[dict] = []

    def _base(self, type_name, period, clock, team_id, player_id=None, possession=None) -> dict:
        ev = {
            "id": _uuid(self.rng),
            "index": len(self.events) + 1,
            "period": period,
            "timestamp": _timestamp(clock),
            "minute": int(clock // 60) + (45 if period == 2 else 0),
            "second": int(clock % 60),
            "type": {"id": _TYPE_IDS[type_name], "name": type_name},
            "possession_team": {"id": possession or team_id, "name": self.teams[possession or team_id]},
            "team": {"id": team_id, "name": self.teams[team_id]},
        }
        if player_id is not None:
            ev["player"] = {"id": player_id, "name": f"Player {player_id}"}
        return ev

    def marker(self, type_name, period, team_id):
        self.events.append(self._base(type_name, period, 0.0, team_id))


# ---------------------------------------------------------------- generator


def _body_part(rng) -> str:
    u = rng.random()
    return "Right Foot" if u < 0.6 else ("Left Foot" if u < 0.9 else "Head")


def _gen_match(cfg: SynthConfig, m: int, home: int, away: int, names: dict[int, str], styles: dict[int, str]):
    rng = np.random.default_rng([cfg.seed, m])
    w = _MatchWriter(rng, names)
    truth = []
    score = {home: 0, away: 0}
    n_periods = 2
    per_period = [cfg.actions_per_match // n_periods] * n_periods
    per_period[-1] += cfg.actions_per_match - sum(per_period)
    w.marker("Starting XI", 1, home)
    w.marker("Starting XI", 1, away)
    for period in range(1, n_periods + 1):
        w.marker("Half Start", period, home)
        w.marker("Half Start", period, away)
        team = home if period == 1 else away
        ball = (PITCH_LENGTH / 2, PITCH_WIDTH / 2)
        restart = "Kick Off"
        clock = 0.0
        crowd = None
        for _ in range(per_period[period - 1]):
            opp = away if team == home else home
            rate = cfg.crowding_rate if styles[opp] == "crowding" else cfg.passive_rate
            if crowd is None:
                crowd = rng.random() < rate
            elif rng.random() >= cfg.crowd_persistence:
                crowd = rng.random() < rate
            ball = _snap(ball)
            att, dfn = _place_players(rng, ball, crowd, cfg)
            x0, x1 = _band(rng, ball[0], cfg)
            if cfg.frame_visibility < 1.0 and not cfg.degrade_visibility:
                att = _force_visible(att, x0, x1, 5, protect=2)
                dfn = _force_visible(dfn, x0, x1, 5, protect=1)
            n_close = sum(math.hypot(p[0] - ball[0], p[1] - ball[1]) <= cfg.crowd_radius_m for p in dfn)
            crowded = n_close >= cfg.crowd_min_defenders
            hazard = cfg.base_recovery_hazard * (cfg.crowding_boost if crowded else 1.0)
            hazard *= 1.0 + cfg.zone_gradient * (ball[0] / PITCH_LENGTH - 0.5)
            switch = rng.random() < hazard

            # action type and end point; end is drawn before the outcome is known
            if restart is not None:
                kind, player = "Pass", team * 100 + (1 if restart == "Goal Kick" else int(rng.integers(2, 12)))
            else:
                kind, player = None, team * 100 + int(rng.integers(2, 12))
            if kind is None:
                u = rng.random()
                if switch and ball[0] > 88 and u < 0.5:
                    kind = "Shot"
                elif switch:
                    kind = "Pass" if u < 0.75 else ("Dribble" if u < 0.9 else "Miscontrol")
                else:
                    kind = "Pass" if u < 0.7 else ("Carry" if u < 0.95 else "Dribble")
            if kind == "Pass":
                end = _snap((ball[0] + rng.normal(6, 12), ball[1] + rng.normal(0, 10)))
            elif kind in ("Carry", "Dribble"):
                end = _snap((ball[0] + rng.normal(3, 4), ball[1] + rng.normal(0, 3)))
            elif kind == "Shot":
                end = _snap((PITCH_LENGTH - 0.5, PITCH_WIDTH / 2 + rng.normal(0, 3)))
            else:
                end = ball
            clock += float(rng.uniform(1.5, 5.0))

            flip = cfg.absolute_coords and ((team == home) == (period % 2 == 0))
            ev = w._base(kind, period, clock, team, player)
            ev["location"] = _provider(ball, flip)
            goal = False
            if kind == "Pass":
                body = {"end_location": _provider(end, flip), "body_part": {"name": _body_part(rng)}}
                if restart:
                    body["type"] = {"name": restart}
                if switch:
                    body["outcome"] = {"name": "Incomplete"}
                ev["pass"] = body
            elif kind == "Carry":
                ev["carry"] = {"end_location": _provider(end, flip)}
            elif kind == "Dribble":
                ev["dribble"] = {"outcome": {"name": "Incomplete" if switch else "Complete"}}
            elif kind == "Shot":
                goal = bool(rng.random() < cfg.goal_rate)
                ev["shot"] = {
                    "end_location": _provider(end, flip) + [1.0],
                    "outcome": {"name": "Goal" if goal else "Off T"},
                    "body_part": {"name": _body_part(rng)},
                    "type": {"name": "Open Play"},
                }
            w.events.append(ev)

            if rng.random() >= cfg.missing_frame_rate:
                ff = []
                for side, pts in ((True, att), (False, dfn)):
                    for j, p in enumerate(pts):
                        if not x0 <= p[0] <= x1:
                            continue
                        ff.append(
                            {
                                "teammate": side,
                                "actor": side and j == 1,
                                "keeper": j == 0,
                                "location": _provider(p, flip),
                            }
                        )
                corners = [(x0, 0.0), (x1, 0.0), (x1, PITCH_WIDTH), (x0, PITCH_WIDTH), (x0, 0.0)]
                area = [c for p in corners for c in _provider(p, flip)]
                w.frames.append({"event_uuid": ev["id"], "visible_area": area, "freeze_frame": ff})

            truth.append(
                {
                    "event_uuid": ev["id"],
                    "period": period,
                    "team_id": team,
                    "defending_team_id": opp,
                    "crowd_state": bool(crowd),
                    "n_close": n_close,
                    "crowded": crowded,
                    "hazard": hazard,
                    "switch": switch,
                }
            )

            # next action
            if kind == "Shot":
                if goal:
                    score[team] += 1
                    ball, restart = (PITCH_LENGTH / 2, PITCH_WIDTH / 2), "Kick Off"
                else:
                    ball, restart = (5.5, PITCH_WIDTH / 2), "Goal Kick"
            else:
                restart = None
                ball = end
            if switch:
                team = opp
                crowd = None
                if kind != "Shot":
                    ball = (PITCH_LENGTH - ball[0], PITCH_WIDTH - ball[1])
    return w.events, w.frames, pd.DataFrame(truth)


def _dump(obj, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, separators=(",", ":"))
        fh.write("\n")


def gen_matches(config: SynthConfig, out_dir: str) -> SynthResult:
    """Write ``events/<id>.json``, ``three-sixty/<id>.json`` and ``manifest.csv`` under ``out_dir``."""
    config.validate()
    os.makedirs(os.path.join(out_dir, "events"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "three-sixty"), exist_ok=True)
    team_ids = [team_id_of(t) for t in range(config.n_teams)]
    styles = {team_id_of(t): config.style_of(t) for t in range(config.n_teams)}
    names = {tid: f"{styles[tid].title()} {tid}" for tid in team_ids}
    start = dt.date.fromisoformat(config.start_date)
    metas, truth = [], {}
    styles_list = [config.style_of(t) for t in range(config.n_teams)]
    for m, (h, a) in enumerate(style_schedule(styles_list, config.n_matches)):
        mid = config.first_match_id + m
        home, away = team_ids[h], team_ids[a]
        events, frames, t = _gen_match(config, m, home, away, names, styles)
        ev_path = os.path.join(out_dir, "events", f"{mid}.json")
        fr_path = os.path.join(out_dir, "three-sixty", f"{mid}.json")
        _dump(events, ev_path)
        _dump(frames, fr_path)
        truth[mid] = t
        metas.append(
            MatchMeta(
                match_id=mid,
                home_team_id=home,
                away_team_id=away,
                home_team=names[home],
                away_team=names[away],
                kickoff_date=start + dt.timedelta(days=m),
                competition="Synthetic League",
                season=str(config.seed),
                event_path=ev_path,
                frames_path=fr_path,
            )
        )
    manifest = os.path.join(out_dir, "manifest.csv")
    write_manifest(manifest, metas)
    return SynthResult(metas=metas, manifest_path=manifest, team_styles=styles, truth=truth)


def window_rate(hazard: float, k: int) -> float:
    """Chance of at least one possession change in ``k`` actions at a constant hazard."""
    return 1.0 - (1.0 - hazard) ** k


# ---------------------------------------------------------------- test helpers


def random_frame(rng, n_att: int, n_def: int, visible: Optional[Sequence] = None) -> tuple[FreezeFrame, tuple]:
    """Uniform random frame in internal units; the first attacker is the actor and holds the ball."""
    pos = np.column_stack([rng.uniform(0, PITCH_LENGTH, n_att + n_def), rng.uniform(0, PITCH_WIDTH, n_att + n_def)])
    players = tuple(
        FramePlayer(teammate=i < n_att, actor=i == 0, keeper=False, pos=(float(x), float(y)))
        for i, (x, y) in enumerate(pos)
    )
    area = tuple(visible) if visible is not None else ((0.0, 0.0), (PITCH_LENGTH, 0.0), (PITCH_LENGTH, PITCH_WIDTH), (0.0, PITCH_WIDTH))
    frame = FreezeFrame(event_uuid=_uuid(rng), visible_area=area, players=players)
    return frame, players[0].pos


def random_sequence(rng, n: int, n_teams: int = 2, n_periods: int = 2, switch_p: float = 0.3) -> list[SpadlAction]:
    """Random action sequence with team changes and period breaks, for label tests."""
    acts = []
    team = 1
    period = 1
    cut = sorted(rng.choice(np.arange(1, max(n, 2)), size=min(n_periods - 1, max(n - 1, 0)), replace=False)) if n > 1 else []
    for i in range(n):
        if i in cut:
            period += 1
        if i and rng.random() < switch_p:
            team = int(rng.integers(1, n_teams + 1)) if n_teams > 2 else 3 - team
        acts.append(
            SpadlAction(
                game_id=0, action_seq=i, period=period, time_s=float(i), team_id=team, player_id=team * 100,
                start=(50.0, 34.0), end=(55.0, 34.0), action_type="pass", result="success", bodypart="foot",
                event_uuid=str(i),
            )
        )
    return acts


# ---------------------------------------------------------------- oracles


def oracle_label_scan(actions: Sequence[SpadlAction], i: int, k: int) -> int:
    """Look at each of the next ``k`` actions for one by the other team in the same period."""
    here = actions[i]
    for a in actions[i + 1 : i + 1 + k]:
        if a.period == here.period and a.team_id != here.team_id:
            return 1
    return 0


def oracle_pc_fine(
    frame: FreezeFrame,
    ball,
    params: PcParams = PcParams(),
    grid: GridSpec = DEFAULT_GRID,
    refine: int = 10,
) -> tuple[np.ndarray, np.ndarray]:
    """Pitch control by the explicit update ``dC = (1 - sum C) f lambda dt`` at ``dt / refine``.

    Returns ``(att_control, per_player)`` with shapes ``(rows, cols)`` and
    ``(n, rows, cols)``; shares are renormalised by their total.
    """
    pos, att = frame_arrays(frame)
    cx, cy = grid.centers()
    cx, cy = cx.ravel(), cy.ravel()
    step = params.dt_s / refine
    t0 = np.hypot(cx - ball[0], cy - ball[1]) / params.ball_speed_mps
    tarr = params.reaction_time_s + np.hypot(cx[:, None] - pos[None, :, 0], cy[:, None] - pos[None, :, 1]) / params.max_speed_mps
    a = math.pi / math.sqrt(3) / params.sigma_s
    C = np.zeros_like(tarr)
    total = np.zeros(len(cx))
    active = np.ones(len(cx), dtype=bool)
    for n in range(int(round(params.max_t_s / step))):
        if not active.any():
            break
        t = t0 + n * step
        f = 1.0 / (1.0 + np.exp(-a * (t[:, None] - tarr)))
        inc = (1.0 - total)[:, None] * f * params.lambda_per_s * step
        inc[~active] = 0.0
        C += inc
        total = C.sum(axis=1)
        active = total < 1.0 - params.convergence_eps
    share = C / total[:, None]
    shape = (grid.rows, grid.cols)
    return share[:, att].sum(axis=1).reshape(shape), share.T.reshape((len(pos),) + shape)
