"""StatsBomb events -> classic SPADL actions.

Each supported raw event yields exactly one action; everything else
(pressures, receipts, half starts, ...) is skipped and counted.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

from .ingest import (
    PITCH_LENGTH,
    PITCH_WIDTH,
    FramePlayer,
    FreezeFrame,
    RawEvent,
    clamp_provider,
    to_internal_xy,
)

logger = logging.getLogger(__name__)

ACTION_TYPES = (
    "pass",
    "cross",
    "throw_in",
    "freekick_pass",
    "freekick_cross",
    "corner_pass",
    "corner_cross",
    "take_on",
    "foul",
    "tackle",
    "interception",
    "shot",
    "shot_penalty",
    "shot_freekick",
    "keeper_save",
    "keeper_claim",
    "keeper_punch",
    "keeper_pick_up",
    "clearance",
    "bad_touch",
    "goalkick",
    "carry",
)
RESULTS = ("success", "fail", "offside", "owngoal", "yellow", "red")
BODYPARTS = ("foot", "head", "other")

SHOT_TYPES = frozenset({"shot", "shot_penalty", "shot_freekick"})


@dataclass(frozen=True)
class SpadlAction:
    game_id: int
    action_seq: int
    period: int
    time_s: float
    team_id: int
    player_id: Optional[int]
    start: tuple[float, float]
    end: tuple[float, float]
    action_type: str
    result: str
    bodypart: str
    event_uuid: str = ""

    @property
    def is_goal(self) -> bool:
        return self.action_type in SHOT_TYPES and self.result == "success"

    @property
    def is_owngoal(self) -> bool:
        return self.result == "owngoal"


@dataclass(frozen=True)
class GameContext:
    goals_possession_team: int
    goals_defending_team: int

    @property
    def goal_diff(self) -> int:
        return self.goals_possession_team - self.goals_defending_team

    def as_tuple(self) -> tuple[int, int, int]:
        return self.goals_possession_team, self.goals_defending_team, self.goal_diff


def _bodypart(name: Optional[str]) -> str:
    if name is None:
        return "foot"
    if name == "Head":
        return "head"
    if "Foot" in name or name in ("Drop Kick",):
        return "foot"
    return "other"


_PASS_FAIL = {"Incomplete", "Out", "Unknown", "Injury Clearance"}
_KEEPER_TYPES = {
    "Shot Saved": "keeper_save",
    "Penalty Saved": "keeper_save",
    "Save": "keeper_save",
    "Shot Saved Off T": "keeper_save",
    "Shot Saved To Post": "keeper_save",
    "Penalty Saved To Post": "keeper_save",
    "Collected": "keeper_claim",
    "Punch": "keeper_punch",
    "Keeper Sweeper": "keeper_pick_up",
    "Smother": "keeper_pick_up",
}
_KEEPER_FAIL = {"Fail", "No Touch", "Lost In Play", "Lost Out", "Touched In", "Clear"}
_DUEL_FAIL = {"Lost In Play", "Lost Out", "Lost"}
_INTERCEPTION_FAIL = {"Lost In Play", "Lost Out", "Lost"}


def _map_event(ev: RawEvent) -> Optional[tuple[str, str, str]]:
    """(action_type, result, bodypart) or None when the event is not an action."""
    t = ev.type_name
    out = ev.outcome_name
    if t == "Pass":
        sub = ev.subtype
        cross = bool(ev.get("cross"))
        if sub == "Throw-in":
            atype = "throw_in"
        elif sub == "Free Kick":
            atype = "freekick_cross" if cross else "freekick_pass"
        elif sub == "Corner":
            atype = "corner_cross" if cross else "corner_pass"
        elif sub == "Goal Kick":
            atype = "goalkick"
        elif cross:
            atype = "cross"
        else:
            atype = "pass"
        if out is None:
            result = "success"
        elif out == "Pass Offside":
            result = "offside"
        else:
            result = "fail"
        bodypart = "other" if atype == "throw_in" else _bodypart(ev.body_part)
        return atype, result, bodypart
    if t == "Dribble":
        return "take_on", "success" if out == "Complete" else "fail", "foot"
    if t == "Carry":
        return "carry", "success", "foot"
    if t == "Foul Committed":
        card = ev.get("card") or ""
        if "Red" in card or "Second Yellow" in card:
            result = "red"
        elif "Yellow" in card:
            result = "yellow"
        else:
            result = "fail"
        return "foul", result, "foot"
    if t == "Duel":
        if ev.subtype != "Tackle":
            return None
        return "tackle", "fail" if out in _DUEL_FAIL else "success", "foot"
    if t == "Interception":
        return "interception", "fail" if out in _INTERCEPTION_FAIL else "success", "foot"
    if t == "Shot":
        if ev.subtype == "Free Kick":
            atype = "shot_freekick"
        elif ev.subtype == "Penalty":
            atype = "shot_penalty"
        else:
            atype = "shot"
        return atype, "success" if out == "Goal" else "fail", _bodypart(ev.body_part)
    if t == "Own Goal Against":
        return "bad_touch", "owngoal", "foot"
    if t == "Goal Keeper":
        atype = _KEEPER_TYPES.get(ev.subtype or "")
        if atype is None:
            return None
        return atype, "fail" if out in _KEEPER_FAIL else "success", "other"
    if t == "Clearance":
        return "clearance", "success", _bodypart(ev.body_part)
    if t == "Miscontrol":
        return "bad_touch", "fail", "foot"
    return None


def _internal(p: tuple[float, float]) -> tuple[float, float]:
    return to_internal_xy(clamp_provider(p))


def convert_match(events: Sequence[RawEvent]) -> list[SpadlAction]:
    """Convert one match's ordered raw events into SPADL actions.

    Coordinates are mapped to the internal pitch but not re-oriented; see
    :func:`orient_match`.
    """
    actions: list[SpadlAction] = []
    skipped: Counter = Counter()
    for ev in events:
        mapped = _map_event(ev)
        if mapped is None or ev.location is None:
            skipped[ev.type_name] += 1
            continue
        atype, result, bodypart = mapped
        start = _internal(ev.location)
        end = _internal(ev.end_location) if ev.end_location is not None else start
        actions.append(
            SpadlAction(
                game_id=ev.match_id,
                action_seq=len(actions),
                period=ev.period,
                time_s=ev.clock_s,
                team_id=ev.team_id,
                player_id=ev.player_id,
                start=start,
                end=end,
                action_type=atype,
                result=result,
                bodypart=bodypart,
                event_uuid=ev.event_uuid,
            )
        )
    if skipped:
        logger.debug("skipped %d non-action events: %s", sum(skipped.values()), dict(skipped))
    return actions


def skipped_counts(events: Iterable[RawEvent]) -> dict[str, int]:
    """Per-type counts of events that :func:`convert_match` drops."""
    c: Counter = Counter()
    for ev in events:
        if _map_event(ev) is None or ev.location is None:
            c[ev.type_name] += 1
    return dict(sorted(c.items()))


def flip_xy(p: tuple[float, float]) -> tuple[float, float]:
    return PITCH_LENGTH - p[0], PITCH_WIDTH - p[1]


def orient_ltr(a: SpadlAction, attacks_left: bool) -> SpadlAction:
    """Express ``a`` with its team attacking left-to-right."""
    if not attacks_left:
        return a
    return replace(a, start=flip_xy(a.start), end=flip_xy(a.end))


def orient_frame(frame: FreezeFrame, attacks_left: bool) -> FreezeFrame:
    if not attacks_left:
        return frame
    return FreezeFrame(
        event_uuid=frame.event_uuid,
        visible_area=tuple(flip_xy(p) for p in frame.visible_area),
        players=tuple(
            FramePlayer(p.teammate, p.actor, p.keeper, flip_xy(p.pos)) for p in frame.players
        ),
    )


def frame_to_internal(frame: FreezeFrame) -> FreezeFrame:
    """Map a provider-unit frame onto the internal pitch (clamping noise)."""
    return FreezeFrame(
        event_uuid=frame.event_uuid,
        visible_area=tuple(_internal(p) for p in frame.visible_area),
        players=tuple(
            FramePlayer(p.teammate, p.actor, p.keeper, _internal(p.pos)) for p in frame.players
        ),
    )


def infer_attack_direction(
    actions: Sequence[SpadlAction], frames: dict[str, FreezeFrame]
) -> dict[tuple[int, int], bool]:
    """Infer, per (team, period), whether the team attacks right-to-left.

    Uses goalkeeper positions in the actions' frames (internal units):
    a team's own keeper sits in the half it defends, the opposing keeper
    in the other. Periods without any keeper sighting fall back to the
    team's first-period direction, flipped for even periods.
    """
    votes: dict[tuple[int, int], list[float]] = {}
    for a in actions:
        f = frames.get(a.event_uuid)
        if f is None:
            continue
        for p in f.players:
            if not p.keeper:
                continue
            # positive vote: team defends the left half (attacks rightwards)
            own_side = PITCH_LENGTH / 2 - p.pos[0]
            votes.setdefault((a.team_id, a.period), []).append(own_side if p.teammate else -own_side)
    teams = sorted({a.team_id for a in actions})
    periods = sorted({a.period for a in actions})
    result: dict[tuple[int, int], bool] = {}
    for team in teams:
        for period in periods:
            v = votes.get((team, period))
            if v:
                result[(team, period)] = sum(v) < 0
    for team in teams:
        for period in periods:
            if (team, period) in result:
                continue
            first = next((pp for pp in periods if (team, pp) in result), None)
            if first is None:
                logger.warning("no keeper frames for team %s; assuming left-to-right", team)
                result[(team, period)] = False
                continue
            logger.warning(
                "no keeper frames for team %s period %s; inferring from period %s", team, period, first
            )
            swap = (period - first) % 2 == 1 and period <= 4 and first <= 4
            result[(team, period)] = result[(team, first)] != swap
    return result


def orient_match(
    actions: Sequence[SpadlAction], frames: dict[str, FreezeFrame]
) -> tuple[list[SpadlAction], dict[str, FreezeFrame]]:
    """Orient actions and their (internal-unit) frames left-to-right for the acting team."""
    direction = infer_attack_direction(actions, frames)
    out_actions = []
    out_frames = {}
    for a in actions:
        left = direction.get((a.team_id, a.period), False)
        out_actions.append(orient_ltr(a, left))
        f = frames.get(a.event_uuid)
        if f is not None:
            out_frames[a.event_uuid] = orient_frame(f, left)
    return out_actions, out_frames


def track_score(actions: Sequence[SpadlAction]) -> list[GameContext]:
    """Scoreline after each action, from the acting team's point of view."""
    goals: Counter = Counter()
    teams = sorted({a.team_id for a in actions})
    out = []
    for a in actions:
        if a.is_goal:
            goals[a.team_id] += 1
        elif a.is_owngoal:
            others = [t for t in teams if t != a.team_id]
            if others:
                goals[others[0]] += 1
        opp = sum(v for t, v in goals.items() if t != a.team_id)
        out.append(GameContext(goals[a.team_id], opp))
    return out
