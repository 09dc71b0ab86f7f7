"""Per-action DDI and the team/player aggregations built on it.

Records live in a :class:`pandas.DataFrame` with :data:`RECORD_COLUMNS`.
Ball coordinates in a record are seen from the defending team, attacking
to the right.
"""

from __future__ import annotations

import datetime as dt
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from .ingest import PITCH_LENGTH, PITCH_WIDTH

RECORD_COLUMNS = (
    "match_id",
    "anchor_seq",
    "team_id",
    "defending_team_id",
    "player_id",
    "ball_x",
    "ball_y",
    "period",
    "time_s",
    "p_a",
    "p_at",
    "ddi",
    "label",
)


class KeyMismatch(ValueError):
    pass


def compute_ddi(keys_at: pd.DataFrame, p_at, keys_a: pd.DataFrame, p_a, labels) -> pd.DataFrame:
    """One record per state that has both predictions.

    ``keys_at``/``p_at``/``labels`` describe the eligible (tracking) states;
    ``p_a`` is looked up by (match_id, anchor_seq) among ``keys_a``.
    """
    idx = pd.MultiIndex.from_arrays([keys_a["match_id"], keys_a["anchor_seq"]])
    series_a = pd.Series(np.asarray(p_a, dtype=float), index=idx)
    want = pd.MultiIndex.from_arrays([keys_at["match_id"], keys_at["anchor_seq"]])
    missing = want.difference(idx)
    if len(missing):
        shown = ", ".join(f"{m}:{s}" for m, s in list(missing)[:10])
        raise KeyMismatch(f"{len(missing)} state(s) lack a schema-A prediction: {shown}")
    pa = series_a.reindex(want).to_numpy()
    pat = np.asarray(p_at, dtype=float)
    rec = pd.DataFrame(
        {
            "match_id": keys_at["match_id"].to_numpy(),
            "anchor_seq": keys_at["anchor_seq"].to_numpy(),
            "team_id": keys_at["team_id"].to_numpy(),
            "defending_team_id": keys_at["defending_team_id"].to_numpy(),
            "player_id": keys_at["player_id"].to_numpy(),
            "ball_x": PITCH_LENGTH - keys_at["ball_x"].to_numpy(dtype=float),
            "ball_y": PITCH_WIDTH - keys_at["ball_y"].to_numpy(dtype=float),
            "period": keys_at["period"].to_numpy(),
            "time_s": keys_at["time_s"].to_numpy(dtype=float),
            "p_a": pa,
            "p_at": pat,
            "ddi": pat - pa,
            "label": np.asarray(labels, dtype=int),
        }
    )
    return rec.sort_values(["match_id", "anchor_seq"], kind="mergesort").reset_index(drop=True)


def team_mean_ddi(records: pd.DataFrame) -> pd.DataFrame:
    """Mean DDI per defending team, best first."""
    g = records.groupby("defending_team_id")["ddi"].agg(["mean", "size"]).reset_index()
    g.columns = ["defending_team_id", "mean_ddi", "n"]
    g = g.assign(_neg=-g["mean_ddi"]).sort_values(["_neg", "defending_team_id"], kind="mergesort")
    return g.drop(columns="_neg").reset_index(drop=True)


def zone_of(x, y, cols: int = 6, rows: int = 3):
    """(column, row) of a point; the right/top pitch edges fall into the last zone."""
    c = np.minimum((np.asarray(x, dtype=float) / (PITCH_LENGTH / cols)).astype(int), cols - 1)
    r = np.minimum((np.asarray(y, dtype=float) / (PITCH_WIDTH / rows)).astype(int), rows - 1)
    return np.maximum(c, 0), np.maximum(r, 0)


def zone_ddi(records: pd.DataFrame, cols: int = 6, rows: int = 3) -> pd.DataFrame:
    """Mean DDI per pitch zone; zones without records are absent."""
    c, r = zone_of(records["ball_x"], records["ball_y"], cols, rows)
    z = pd.DataFrame({"col": c, "row": r, "ddi": records["ddi"].to_numpy()})
    g = z.groupby(["col", "row"])["ddi"].agg(["mean", "size"]).reset_index()
    g.columns = ["col", "row", "mean_ddi", "n"]
    return g.sort_values(["row", "col"], kind="mergesort").reset_index(drop=True)


def zone_matrix(zones: pd.DataFrame, cols: int = 6, rows: int = 3) -> np.ndarray:
    """rows x cols array of zone means, NaN for absent zones."""
    m = np.full((rows, cols), np.nan)
    for _, z in zones.iterrows():
        m[int(z["row"]), int(z["col"])] = z["mean_ddi"]
    return m


def period_split(
    records: pd.DataFrame,
    match_dates: Mapping[int, dt.date],
    ranges: Sequence[tuple[str, dt.date, dt.date]],
    team_id: Optional[int] = None,
) -> pd.DataFrame:
    """Mean DDI per labelled date range (start inclusive, end exclusive)."""
    rec = records if team_id is None else records[records["defending_team_id"] == team_id]
    dates = rec["match_id"].map(lambda m: match_dates.get(int(m)))
    bucket = pd.Series("unassigned", index=rec.index)
    for label, start, end in ranges:
        inside = dates.map(lambda d: d is not None and start <= d < end)
        bucket[inside.to_numpy(dtype=bool)] = label
    df = pd.DataFrame({"label": bucket, "match_id": rec["match_id"], "ddi": rec["ddi"]})
    g = df.groupby("label").agg(games=("match_id", "nunique"), n=("ddi", "size"), mean_ddi=("ddi", "mean"))
    order = [lab for lab, _, _ in ranges] + ["unassigned"]
    g = g.reindex([o for o in order if o in g.index])
    return g.reset_index()


def _player_counts(records: pd.DataFrame, mask) -> pd.DataFrame:
    hit = records[np.asarray(mask, dtype=bool)]
    g = hit.groupby(["player_id", "team_id"]).size().reset_index(name="count")
    g = g.assign(_neg=-g["count"]).sort_values(["_neg", "player_id"], kind="mergesort")
    return g.drop(columns="_neg").reset_index(drop=True)


def player_retention(records: pd.DataFrame, threshold: float = 0.90) -> pd.DataFrame:
    """Actions per player with p_at above ``threshold`` that were not turned over."""
    return _player_counts(records, (records["p_at"] > threshold) & (records["label"] == 0))


def player_turnover(records: pd.DataFrame, threshold: float = 0.10) -> pd.DataFrame:
    """Actions per player with p_at below ``threshold`` that were turned over."""
    return _player_counts(records, (records["p_at"] < threshold) & (records["label"] == 1))


def hospital_flags(records: pd.DataFrame, delta: float = 0.75, mixed: bool = False) -> np.ndarray:
    """Boolean per record: the next state's recovery probability jumps by >= ``delta``.

    The next state must be the directly following action of the same match,
    performed by a different player of the same team, and the record's
    label must be positive. With ``mixed`` the jump is measured against the
    action-only prediction of the current state.
    """
    rec = records.sort_values(["match_id", "anchor_seq"], kind="mergesort")
    nxt = rec.shift(-1)
    consecutive = (nxt["match_id"] == rec["match_id"]) & (nxt["anchor_seq"] == rec["anchor_seq"] + 1)
    teammate = (nxt["team_id"] == rec["team_id"]) & (nxt["player_id"] != rec["player_id"])
    base = rec["p_a"] if mixed else rec["p_at"]
    jump = (nxt["p_at"] - base) >= delta
    flag = consecutive & teammate & jump & (rec["label"] == 1)
    return flag.reindex(records.index).fillna(False).to_numpy(dtype=bool)


def hospital_balls(
    records: pd.DataFrame,
    delta: float = 0.75,
    min_count: int = 10,
    mixed: bool = False,
    totals: Optional[Mapping[int, int]] = None,
) -> pd.DataFrame:
    """Flag counts per player and per 100 of their actions, for players above ``min_count``.

    ``totals`` maps player id to total actions; by default it is the
    player's record count.
    """
    flags = hospital_flags(records, delta, mixed)
    counts = records[flags].groupby(["player_id", "team_id"]).size().reset_index(name="count")
    if totals is None:
        totals = records.groupby("player_id").size().to_dict()
    counts["total_actions"] = counts["player_id"].map(lambda p: int(totals.get(p, 0)))
    counts["per_100"] = 100.0 * counts["count"] / counts["total_actions"].where(counts["total_actions"] > 0)
    counts = counts[counts["count"] > min_count]
    counts = counts.assign(_neg=-counts["per_100"]).sort_values(["_neg", "player_id"], kind="mergesort")
    return counts.drop(columns="_neg").reset_index(drop=True)
