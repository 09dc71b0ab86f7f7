"""Parsers for StatsBomb open-data style event and 360 freeze-frame files.

Coordinates stay in provider units (120x80, y pointing down) until
:func:`to_internal_xy` maps them onto the 105x68 metric pitch used
everywhere downstream.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

logger = logging.getLogger(__name__)

PROVIDER_LENGTH = 120.0
PROVIDER_WIDTH = 80.0
PITCH_LENGTH = 105.0
PITCH_WIDTH = 68.0


class IngestError(ValueError):
    """Base class for malformed input files."""


class ParseError(IngestError):
    pass


class SchemaError(IngestError):
    pass


@dataclass(frozen=True)
class RawEvent:
    event_uuid: str
    match_id: int
    index: int
    period: int
    clock_s: float
    team_id: int
    player_id: Optional[int]
    type_name: str
    location: Optional[tuple[float, float]] = None
    end_location: Optional[tuple[float, float]] = None
    outcome_name: Optional[str] = None
    body_part: Optional[str] = None
    is_goal: bool = False
    team_name: str = ""
    player_name: str = ""
    # sub-type of the event (pass type, goalkeeper type, duel type, ...)
    subtype: Optional[str] = None
    # pass.cross / card for fouls and the like
    extra: tuple[tuple[str, Any], ...] = ()

    def get(self, key: str, default=None):
        return dict(self.extra).get(key, default)


@dataclass(frozen=True)
class FramePlayer:
    teammate: bool
    actor: bool
    keeper: bool
    pos: tuple[float, float]


@dataclass(frozen=True)
class FreezeFrame:
    event_uuid: str
    visible_area: tuple[tuple[float, float], ...]
    players: tuple[FramePlayer, ...]

    @property
    def actor(self) -> Optional[FramePlayer]:
        for p in self.players:
            if p.actor:
                return p
        return None


@dataclass(frozen=True)
class MatchMeta:
    match_id: int
    home_team_id: int
    away_team_id: int
    home_team: str
    away_team: str
    kickoff_date: Optional[dt.date]
    competition: str = ""
    season: str = ""
    event_path: str = ""
    frames_path: str = ""


@dataclass
class JoinSummary:
    n_events: int = 0
    n_frames: int = 0
    n_joined: int = 0
    orphan_frames: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "n_events": self.n_events,
            "n_frames": self.n_frames,
            "n_joined": self.n_joined,
            "n_orphan_frames": len(self.orphan_frames),
            "orphan_frames": list(self.orphan_frames),
        }


def parse_timestamp(ts: str) -> float:
    """'00:12:03.250' -> 723.25 seconds from period start."""
    try:
        hh, mm, ss = ts.split(":")
        return int(hh) * 3600 + int(mm) * 60 + float(ss)
    except (AttributeError, ValueError) as e:
        raise ParseError(f"bad timestamp {ts!r}") from e


def _read_json(path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e


def _require(record: dict, dotted: str, where: str):
    node: Any = record
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise SchemaError(f"{where}: missing required field '{dotted}'")
        node = node[part]
    return node


def _xy(value, where: str) -> Optional[tuple[float, float]]:
    if value is None:
        return None
    if not isinstance(value, (list, tuple)) or len(value) < 2:
        raise SchemaError(f"{where}: location must be a list of at least 2 numbers")
    try:
        return float(value[0]), float(value[1])
    except (TypeError, ValueError) as e:
        raise SchemaError(f"{where}: non-numeric location {value!r}") from e


_END_LOCATION_KEYS = ("pass", "carry", "shot", "goalkeeper")
_BODY_KEYS = {"Goal Keeper": "goalkeeper"}


def _parse_event(rec: Any, match_id: int, pos: int) -> RawEvent:
    if not isinstance(rec, dict):
        raise ParseError(f"record #{pos}: expected an object, got {type(rec).__name__}")
    where = f"record #{pos} (id={rec.get('id', '?')})"
    uid = str(_require(rec, "id", where))
    index = _require(rec, "index", where)
    period = _require(rec, "period", where)
    type_name = _require(rec, "type.name", where)
    team_id = _require(rec, "team.id", where)
    if not isinstance(index, int) or not isinstance(period, int):
        raise SchemaError(f"{where}: 'index' and 'period' must be integers")
    clock = parse_timestamp(_require(rec, "timestamp", where))
    player = rec.get("player") or {}

    type_key = _BODY_KEYS.get(type_name, type_name.lower().replace(" ", "_").replace("*", ""))
    body = rec.get(type_key) if isinstance(rec.get(type_key), dict) else {}
    end = None
    for key in _END_LOCATION_KEYS:
        sub = rec.get(key)
        if isinstance(sub, dict) and sub.get("end_location") is not None:
            end = _xy(sub["end_location"], f"{where}.{key}.end_location")
            break
    outcome = (body.get("outcome") or {}).get("name") if body else None
    body_part = (body.get("body_part") or {}).get("name") if body else None
    subtype = (body.get("type") or {}).get("name") if body else None
    extra: dict[str, Any] = {}
    if type_name == "Pass":
        for flag in ("cross", "cut_back", "switch", "shot_assist", "goal_assist"):
            if body.get(flag):
                extra[flag] = True
        if body.get("height"):
            extra["height"] = body["height"].get("name")
    if type_name == "Foul Committed" and body.get("card"):
        extra["card"] = body["card"].get("name")
    if type_name == "Bad Behaviour" and body.get("card"):
        extra["card"] = body["card"].get("name")
    return RawEvent(
        event_uuid=uid,
        match_id=match_id,
        index=index,
        period=period,
        clock_s=clock,
        team_id=int(team_id),
        player_id=int(player["id"]) if "id" in player else None,
        type_name=type_name,
        location=_xy(rec.get("location"), f"{where}.location"),
        end_location=end,
        outcome_name=outcome,
        body_part=body_part,
        is_goal=type_name == "Shot" and outcome == "Goal",
        team_name=str((rec.get("team") or {}).get("name", "")),
        player_name=str(player.get("name", "")),
        subtype=subtype,
        extra=tuple(sorted(extra.items())),
    )


def load_events(path, match_id: Optional[int] = None) -> list[RawEvent]:
    """Parse one match event file.

    ``match_id`` defaults to the numeric file stem, as in the open-data
    layout (``events/<match_id>.json``).
    """
    if match_id is None:
        stem = os.path.splitext(os.path.basename(str(path)))[0]
        match_id = int(stem) if stem.isdigit() else 0
    data = _read_json(path)
    if not isinstance(data, list):
        raise ParseError(f"{path}: expected a JSON array of events")
    events = [_parse_event(rec, match_id, i) for i, rec in enumerate(data)]
    events.sort(key=lambda e: e.index)
    for a, b in zip(events, events[1:]):
        if a.index == b.index:
            raise SchemaError(f"{path}: duplicate event index {a.index}")
    return events


def parse_visible_area(flat, where: str = "visible_area") -> tuple[tuple[float, float], ...]:
    if not isinstance(flat, list):
        raise SchemaError(f"{where}: expected a flat coordinate list")
    if len(flat) % 2:
        raise SchemaError(f"{where}: odd number of coordinates ({len(flat)})")
    pts = [(float(flat[i]), float(flat[i + 1])) for i in range(0, len(flat), 2)]
    # open-data polygons repeat the first vertex at the end
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts = pts[:-1]
    if len(pts) < 3:
        raise SchemaError(f"{where}: polygon needs at least 3 vertices")
    return tuple(pts)


def _parse_frame(rec: Any, pos: int) -> FreezeFrame:
    if not isinstance(rec, dict):
        raise ParseError(f"frame #{pos}: expected an object")
    where = f"frame #{pos} (event_uuid={rec.get('event_uuid', '?')})"
    uid = str(_require(rec, "event_uuid", where))
    area = parse_visible_area(_require(rec, "visible_area", where), f"{where}.visible_area")
    players = []
    for j, p in enumerate(_require(rec, "freeze_frame", where)):
        loc = _xy(p.get("location"), f"{where}.freeze_frame[{j}].location")
        if loc is None:
            raise SchemaError(f"{where}: freeze_frame[{j}] has no location")
        players.append(
            FramePlayer(
                teammate=bool(p.get("teammate", False)),
                actor=bool(p.get("actor", False)),
                keeper=bool(p.get("keeper", False)),
                pos=loc,
            )
        )
    n_actor = sum(p.actor for p in players)
    if n_actor > 1:
        raise SchemaError(f"{where}: {n_actor} players flagged as actor")
    return FreezeFrame(event_uuid=uid, visible_area=area, players=tuple(players))


def load_frames(path) -> list[FreezeFrame]:
    data = _read_json(path)
    if not isinstance(data, list):
        raise ParseError(f"{path}: expected a JSON array of frames")
    frames = [_parse_frame(rec, i) for i, rec in enumerate(data)]
    seen: set[str] = set()
    dupes = []
    for f in frames:
        if f.event_uuid in seen:
            dupes.append(f.event_uuid)
        seen.add(f.event_uuid)
    if dupes:
        raise SchemaError(f"{path}: duplicate event_uuid(s): {', '.join(sorted(set(dupes)))}")
    return frames


def join_frames(
    events: Iterable[RawEvent], frames: Iterable[FreezeFrame]
) -> tuple[list[tuple[RawEvent, Optional[FreezeFrame]]], JoinSummary]:
    events = list(events)
    frames = list(frames)
    by_uuid = {f.event_uuid: f for f in frames}
    pairs = [(e, by_uuid.get(e.event_uuid)) for e in events]
    event_ids = {e.event_uuid for e in events}
    orphans = [f.event_uuid for f in frames if f.event_uuid not in event_ids]
    summary = JoinSummary(
        n_events=len(events),
        n_frames=len(frames),
        n_joined=sum(f is not None for _, f in pairs),
        orphan_frames=orphans,
    )
    if orphans:
        logger.info("%d frame(s) matched no event", len(orphans))
    return pairs, summary


def to_internal_xy(p: tuple[float, float]) -> tuple[float, float]:
    x, y = p
    if not (0.0 <= x <= PROVIDER_LENGTH and 0.0 <= y <= PROVIDER_WIDTH):
        raise ValueError(f"provider location {p} outside [0,120]x[0,80]")
    return x * PITCH_LENGTH / PROVIDER_LENGTH, (PROVIDER_WIDTH - y) * PITCH_WIDTH / PROVIDER_WIDTH


def to_provider_xy(p: tuple[float, float]) -> tuple[float, float]:
    """Inverse of :func:`to_internal_xy`."""
    x, y = p
    if not (0.0 <= x <= PITCH_LENGTH and 0.0 <= y <= PITCH_WIDTH):
        raise ValueError(f"internal location {p} outside [0,105]x[0,68]")
    return x * PROVIDER_LENGTH / PITCH_LENGTH, PROVIDER_WIDTH - y * PROVIDER_WIDTH / PITCH_WIDTH


def clamp_provider(p: tuple[float, float]) -> tuple[float, float]:
    return min(max(p[0], 0.0), PROVIDER_LENGTH), min(max(p[1], 0.0), PROVIDER_WIDTH)


MANIFEST_COLUMNS = (
    "match_id",
    "event_path",
    "frames_path",
    "kickoff_date",
    "home_team_id",
    "home_team",
    "away_team_id",
    "away_team",
    "competition",
    "season",
)


def load_manifest(path) -> list[MatchMeta]:
    """Read a CSV manifest; relative paths resolve against its directory."""
    base = os.path.dirname(os.path.abspath(path))
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise SchemaError(f"{path}: manifest lists no matches")
    metas = []
    seen = set()
    for i, row in enumerate(rows):
        missing = [c for c in ("match_id", "event_path") if not row.get(c)]
        if missing:
            raise SchemaError(f"{path}: row {i + 2} missing {', '.join(missing)}")
        mid = int(row["match_id"])
        if mid in seen:
            raise SchemaError(f"{path}: duplicate match_id {mid}")
        seen.add(mid)

        def _resolve(p):
            return p if not p or os.path.isabs(p) else os.path.join(base, p)

        date = row.get("kickoff_date") or ""
        metas.append(
            MatchMeta(
                match_id=mid,
                home_team_id=int(row["home_team_id"]) if row.get("home_team_id") else 0,
                away_team_id=int(row["away_team_id"]) if row.get("away_team_id") else 0,
                home_team=row.get("home_team", ""),
                away_team=row.get("away_team", ""),
                kickoff_date=dt.date.fromisoformat(date) if date else None,
                competition=row.get("competition", ""),
                season=row.get("season", ""),
                event_path=_resolve(row["event_path"]),
                frames_path=_resolve(row.get("frames_path", "")),
            )
        )
    return metas


def write_manifest(path, metas: Iterable[MatchMeta], relative_to: Optional[str] = None) -> None:
    relative_to = relative_to or os.path.dirname(os.path.abspath(path))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for m in metas:
            w.writerow(
                [
                    m.match_id,
                    os.path.relpath(m.event_path, relative_to) if m.event_path else "",
                    os.path.relpath(m.frames_path, relative_to) if m.frames_path else "",
                    m.kickoff_date.isoformat() if m.kickoff_date else "",
                    m.home_team_id,
                    m.home_team,
                    m.away_team_id,
                    m.away_team,
                    m.competition,
                    m.season,
                ]
            )
