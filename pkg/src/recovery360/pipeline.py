"""Pipeline stages and their on-disk stores.

Each stage writes into ``<root>/<stage>-<hash>/`` where the hash covers the
upstream stage and every parameter the stage reads, so a changed config
never reuses stale outputs. A stage directory is complete once its
``stage.json`` exists.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import os
from dataclasses import asdict
from typing import Optional

import numpy as np
import pandas as pd

from . import ddi as ddi_mod
from . import metrics
from .config import RunConfig, digest, file_digest
from .features import KEY_COLUMNS, FeatureTable, MatchData, assemble_dataset, relabel
from .ingest import FramePlayer, FreezeFrame, IngestError, MatchMeta, join_frames, load_events, load_frames, load_manifest
from .model import TrainConfig, dumps_model, fit, load_model, predict_proba, split_by_games, write_train_log
from .spadl import SpadlAction, convert_match, frame_to_internal, infer_attack_direction, orient_match, skipped_counts

logger = logging.getLogger(__name__)

STORE_VERSION = 1
FLOAT_FORMAT = "%.10g"


class PipelineInputError(Exception):
    """Bad or missing input; maps to exit code 1."""


class StaleOutput(PipelineInputError):
    pass


# ---------------------------------------------------------------- small io helpers


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_table(df: pd.DataFrame, path: str) -> None:
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _write_ndjson(path: str, header: dict, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for r in records:
            fh.write(json.dumps(r, separators=(",", ":")) + "\n")


def _read_ndjson(path: str) -> tuple[dict, list]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise PipelineInputError(f"{path}: empty store file")
    return json.loads(lines[0]), [json.loads(l) for l in lines[1:] if l]


def _stage_dir(cfg: RunConfig, stage: str, h: str) -> str:
    return os.path.join(cfg.output_root, f"{stage}-{h}")


def _finish(path: str, stage: str, h: str, upstream: Optional[str]) -> None:
    _write_json(os.path.join(path, "stage.json"), {"stage": stage, "hash": h, "upstream": upstream, "version": STORE_VERSION})


def _require_stage(path: str, stage: str, verb: str) -> None:
    marker = os.path.join(path, "stage.json")
    if not os.path.exists(marker):
        raise StaleOutput(
            f"no {stage} outputs for the current config (expected {path}); run `recovery360 {verb}` first"
        )


# ---------------------------------------------------------------- ingest


def meta_to_dict(m: MatchMeta) -> dict:
    return {
        "match_id": m.match_id,
        "home_team_id": m.home_team_id,
        "home_team": m.home_team,
        "away_team_id": m.away_team_id,
        "away_team": m.away_team,
        "kickoff_date": m.kickoff_date.isoformat() if m.kickoff_date else None,
        "competition": m.competition,
        "season": m.season,
    }


def meta_from_dict(d: dict) -> MatchMeta:
    return MatchMeta(
        match_id=int(d["match_id"]),
        home_team_id=int(d["home_team_id"]),
        away_team_id=int(d["away_team_id"]),
        home_team=d["home_team"],
        away_team=d["away_team"],
        kickoff_date=dt.date.fromisoformat(d["kickoff_date"]) if d.get("kickoff_date") else None,
        competition=d.get("competition", ""),
        season=d.get("season", ""),
        event_path="",
        frames_path="",
    )


def load_match(meta: MatchMeta) -> tuple[MatchData, dict]:
    """Parse, convert and orient one match; returns the match and its ingest summary."""
    events = load_events(meta.event_path, meta.match_id)
    frames = load_frames(meta.frames_path) if meta.frames_path else []
    _, join = join_frames(events, frames)
    actions = convert_match(events)
    internal = {f.event_uuid: frame_to_internal(f) for f in frames}
    direction = infer_attack_direction(actions, internal)
    actions, oriented = orient_match(actions, internal)
    # fill team names from the events when the manifest lacks them
    names = {e.team_id: e.team_name for e in events}
    teams = sorted(names)
    if not meta.home_team_id and teams:
        meta = MatchMeta(**{**meta.__dict__, "home_team_id": teams[0], "home_team": names[teams[0]]})
    if not meta.away_team_id and len(teams) > 1:
        meta = MatchMeta(**{**meta.__dict__, "away_team_id": teams[1], "away_team": names[teams[1]]})
    summary = {
        "match_id": meta.match_id,
        "status": "ok",
        "n_actions": len(actions),
        "join": {k: v for k, v in join.as_dict().items() if k != "orphan_frames"},
        "skipped_events": skipped_counts(events),
        "attacks_left": {f"{t}:{p}": v for (t, p), v in sorted(direction.items())},
    }
    return MatchData(meta, actions, oriented), summary


def _action_record(a: SpadlAction) -> dict:
    d = asdict(a)
    d["start"] = list(a.start)
    d["end"] = list(a.end)
    return d


def _frame_record(f: FreezeFrame) -> dict:
    return {
        "event_uuid": f.event_uuid,
        "visible_area": [list(p) for p in f.visible_area],
        "players": [[int(p.teammate), int(p.actor), int(p.keeper), p.pos[0], p.pos[1]] for p in f.players],
    }


def ingest_hash(cfg: RunConfig) -> str:
    if not cfg.manifest:
        raise PipelineInputError("no manifest given (config key 'manifest' or --manifest)")
    if not os.path.exists(cfg.manifest):
        raise PipelineInputError(f"manifest not found: {cfg.manifest}")
    metas = load_manifest(cfg.manifest)
    files = []
    for m in metas:
        files.append(
            [
                meta_to_dict(m),
                file_digest(m.event_path) if os.path.exists(m.event_path) else "missing",
                file_digest(m.frames_path) if m.frames_path and os.path.exists(m.frames_path) else "missing",
            ]
        )
    return digest("ingest", STORE_VERSION, files)


def cmd_ingest(cfg: RunConfig) -> tuple[str, dict]:
    h = ingest_hash(cfg)
    out = _stage_dir(cfg, "ingest", h)
    os.makedirs(os.path.join(out, "actions"), exist_ok=True)
    os.makedirs(os.path.join(out, "frames"), exist_ok=True)
    metas = load_manifest(cfg.manifest)
    summaries, kept = [], []
    for meta in metas:
        try:
            m, s = load_match(meta)
        except (IngestError, OSError, ValueError, KeyError) as e:
            logger.warning("match %s skipped: %s", meta.match_id, e)
            summaries.append({"match_id": meta.match_id, "status": "error", "error": str(e)})
            continue
        header = {"format": "recovery360-actions", "version": STORE_VERSION, "match_id": m.meta.match_id}
        _write_ndjson(os.path.join(out, "actions", f"{m.meta.match_id}.ndjson"), header, map(_action_record, m.actions))
        header = {"format": "recovery360-frames", "version": STORE_VERSION, "match_id": m.meta.match_id}
        frames = [m.frames[a.event_uuid] for a in m.actions if a.event_uuid in m.frames]
        _write_ndjson(os.path.join(out, "frames", f"{m.meta.match_id}.ndjson"), header, map(_frame_record, frames))
        summaries.append(s)
        kept.append(meta_to_dict(m.meta))
    n_err = sum(s["status"] != "ok" for s in summaries)
    summary = {"n_matches": len(metas), "n_ok": len(kept), "n_failed": n_err, "matches": summaries}
    _write_json(os.path.join(out, "summary.json"), summary)
    if not kept:
        raise PipelineInputError(f"all {len(metas)} match(es) failed to ingest; see {out}/summary.json")
    _write_json(os.path.join(out, "metas.json"), kept)
    _finish(out, "ingest", h, None)
    return out, summary


def load_store(path: str) -> list[MatchData]:
    matches = []
    for d in _read_json(os.path.join(path, "metas.json")):
        meta = meta_from_dict(d)
        _, acts = _read_ndjson(os.path.join(path, "actions", f"{meta.match_id}.ndjson"))
        _, frs = _read_ndjson(os.path.join(path, "frames", f"{meta.match_id}.ndjson"))
        actions = [SpadlAction(**{**a, "start": tuple(a["start"]), "end": tuple(a["end"])}) for a in acts]
        frames = {
            f["event_uuid"]: FreezeFrame(
                event_uuid=f["event_uuid"],
                visible_area=tuple(tuple(p) for p in f["visible_area"]),
                players=tuple(FramePlayer(bool(t), bool(a), bool(k), (x, y)) for t, a, k, x, y in f["players"]),
            )
            for f in frs
        }
        matches.append(MatchData(meta, actions, frames))
    return matches


# ---------------------------------------------------------------- features


def features_hash(cfg: RunConfig) -> str:
    return digest(
        "features", ingest_hash(cfg), cfg.k, cfg.tau1, cfg.tau2, cfg.n_att, cfg.n_def, list(cfg.p_set), cfg.pc.digest()
    )


def save_table(table: FeatureTable, out: str, params: dict) -> None:
    df = table.keys.copy()
    df["label"] = table.y.astype(int)
    feats = pd.DataFrame(table.X, columns=table.names)
    write_table(pd.concat([df.reset_index(drop=True), feats], axis=1), os.path.join(out, f"{table.schema_id}.csv"))
    _write_json(
        os.path.join(out, f"schema_{table.schema_id}.json"),
        {"schema_id": table.schema_id, "schema_hash": table.schema_hash, "names": table.names, "params": params},
    )


def load_table(out: str, schema_id: str) -> FeatureTable:
    meta = _read_json(os.path.join(out, f"schema_{schema_id}.json"))
    df = pd.read_csv(os.path.join(out, f"{schema_id}.csv"), dtype={"event_uuid": str})
    names = meta["names"]
    X = df[names].to_numpy(dtype=np.float64) if len(df) else np.zeros((0, len(names)))
    keys = df[list(KEY_COLUMNS)].reset_index(drop=True)
    return FeatureTable(schema_id, names, X, df["label"].to_numpy(dtype=np.int8), keys)


def cmd_features(cfg: RunConfig) -> tuple[str, dict]:
    ingest_dir = _stage_dir(cfg, "ingest", ingest_hash(cfg))
    _require_stage(ingest_dir, "ingest", "ingest")
    h = features_hash(cfg)
    out = _stage_dir(cfg, "features", h)
    os.makedirs(out, exist_ok=True)
    matches = load_store(ingest_dir)
    table_a, table_at, report = assemble_dataset(
        matches, cfg.k, cfg.tau1, cfg.tau2, cfg.n_att, cfg.n_def, cfg.p_set, cfg.pc, threads=cfg.threads
    )
    params = {
        "k": cfg.k, "tau1": cfg.tau1, "tau2": cfg.tau2, "n_att": cfg.n_att, "n_def": cfg.n_def,
        "p_set": list(cfg.p_set), "pc_params": cfg.pc.digest(),
    }
    save_table(table_a, out, params)
    save_table(table_at, out, params)
    rep = report.as_dict()
    rep["rows_A"] = len(table_a)
    rep["rows_AUT"] = len(table_at)
    _write_json(os.path.join(out, "eligibility.json"), rep)
    _finish(out, "features", h, ingest_hash(cfg))
    return out, rep


# ---------------------------------------------------------------- train


def train_hash(cfg: RunConfig) -> str:
    return digest("train", features_hash(cfg), asdict(cfg.train), cfg.split_fraction)


def split_matches(metas: list[MatchMeta], fraction: float) -> tuple[list[int], list[int], str]:
    """Chronological split by match; a lone match splits by period instead."""
    if len(metas) == 1:
        return [metas[0].match_id], [], "period"
    train, val = split_by_games(metas, fraction)
    return train, val, "match"


def _split_mask(table: FeatureTable, train_ids, mode: str) -> np.ndarray:
    if mode == "period":
        # first period trains, later periods validate
        return table.keys["period"].to_numpy() == table.keys["period"].min()
    return table.keys["match_id"].isin(train_ids).to_numpy()


def _fit_schema(table: FeatureTable, mask: np.ndarray, tc: TrainConfig):
    train = table.subset(mask)
    if len(train) == 0:
        raise PipelineInputError(f"schema {table.schema_id}: no training rows")
    rate = float(train.y.mean())
    if rate in (0.0, 1.0):
        raise PipelineInputError(
            f"schema {table.schema_id}: single-class training labels ({len(train)} rows, all {int(rate)}); "
            "a recovery model needs both outcomes"
        )
    return fit(train.X, train.y, tc, train.schema_hash), rate


def _evaluate(p, y, baseline) -> Optional[metrics.EvalReport]:
    if len(y) == 0:
        return None
    return metrics.evaluate(p, y, baseline)


def cmd_train(cfg: RunConfig) -> tuple[str, dict]:
    feat_dir = _stage_dir(cfg, "features", features_hash(cfg))
    _require_stage(feat_dir, "features", "features")
    h = train_hash(cfg)
    out = _stage_dir(cfg, "train", h)
    os.makedirs(out, exist_ok=True)
    ingest_dir = _stage_dir(cfg, "ingest", ingest_hash(cfg))
    metas = [meta_from_dict(d) for d in _read_json(os.path.join(ingest_dir, "metas.json"))]
    train_ids, val_ids, mode = split_matches(metas, cfg.split_fraction)
    _write_json(os.path.join(out, "split.json"), {"mode": mode, "train": train_ids, "validation": val_ids})
    results = {}
    preds = {}
    for sid in ("A", "AUT"):
        table = load_table(feat_dir, sid)
        mask = _split_mask(table, train_ids, mode)
        model, rate = _fit_schema(table, mask, cfg.train)
        _write_text(os.path.join(out, f"model_{sid}.txt"), dumps_model(model))
        write_train_log(model, os.path.join(out, f"trainlog_{sid}.txt"))
        p = predict_proba(model, table)
        preds[sid] = (table, p, mask)
        df = table.keys[["match_id", "anchor_seq"]].copy()
        df["split"] = np.where(mask, "train", "validation")
        df["label"] = table.y.astype(int)
        df["p"] = p
        write_table(df, os.path.join(out, f"predictions_{sid}.csv"))
        rep = _evaluate(p[~mask], table.y[~mask], rate)
        text = rep.to_text(schema=sid, subset="validation", k=cfg.k, baseline_rate=rate) if rep else "empty validation set\n"
        _write_text(os.path.join(out, f"eval_{sid}.txt"), text)
        results[sid] = rep

    # schema A restricted to the states the tracking model also sees
    table_a, p_a, mask_a = preds["A"]
    table_at = preds["AUT"][0]
    elig = table_a.keys.set_index(["match_id", "anchor_seq"]).index.isin(
        table_at.keys.set_index(["match_id", "anchor_seq"]).index
    )
    val = elig & ~mask_a
    rate_a = float(table_a.y[mask_a].mean())
    rep = _evaluate(p_a[val], table_a.y[val], rate_a)
    if rep is not None:
        _write_text(
            os.path.join(out, "eval_A_eligible.txt"),
            rep.to_text(schema="A", subset="validation_eligible", k=cfg.k, baseline_rate=rate_a),
        )
    results["A_eligible"] = rep
    _finish(out, "train", h, features_hash(cfg))
    return out, results


# ---------------------------------------------------------------- ddi


def ddi_hash(cfg: RunConfig) -> str:
    return digest(
        "ddi", train_hash(cfg), cfg.retention_threshold, cfg.turnover_threshold, cfg.hospital_delta,
        cfg.hospital_min_count, cfg.zone_cols, cfg.zone_rows, [list(r) for r in cfg.period_ranges], cfg.period_team,
    )


def _aligned(text_table: pd.DataFrame) -> str:
    if text_table.empty:
        return "(no rows)\n"
    return text_table.to_string(index=False, float_format=lambda v: f"{v:.6f}") + "\n"


def _emit(out: str, name: str, df: pd.DataFrame) -> None:
    write_table(df, os.path.join(out, f"{name}.csv"))
    _write_text(os.path.join(out, f"{name}.txt"), _aligned(df))


def load_records(cfg: RunConfig) -> pd.DataFrame:
    out = _stage_dir(cfg, "ddi", ddi_hash(cfg))
    _require_stage(out, "ddi", "ddi")
    return pd.read_csv(os.path.join(out, "records.csv"))


def build_records(cfg: RunConfig) -> pd.DataFrame:
    feat_dir = _stage_dir(cfg, "features", features_hash(cfg))
    train_dir = _stage_dir(cfg, "train", train_hash(cfg))
    _require_stage(train_dir, "train", "train")
    pa = pd.read_csv(os.path.join(train_dir, "predictions_A.csv"))
    pat = pd.read_csv(os.path.join(train_dir, "predictions_AUT.csv"))
    keys_at = load_table(feat_dir, "AUT").keys
    rec = ddi_mod.compute_ddi(keys_at, pat["p"], pa[["match_id", "anchor_seq"]], pa["p"], pat["label"])
    split = pat.set_index(["match_id", "anchor_seq"])["split"]
    rec["split"] = split.reindex(pd.MultiIndex.from_frame(rec[["match_id", "anchor_seq"]])).to_numpy()
    return rec


def cmd_ddi(cfg: RunConfig) -> tuple[str, dict]:
    rec = build_records(cfg)
    h = ddi_hash(cfg)
    out = _stage_dir(cfg, "ddi", h)
    os.makedirs(out, exist_ok=True)
    write_table(rec, os.path.join(out, "records.csv"))
    ingest_dir = _stage_dir(cfg, "ingest", ingest_hash(cfg))
    metas = [meta_from_dict(d) for d in _read_json(os.path.join(ingest_dir, "metas.json"))]
    names = {}
    for m in metas:
        names[m.home_team_id] = m.home_team
        names[m.away_team_id] = m.away_team

    teams = ddi_mod.team_mean_ddi(rec)
    teams.insert(1, "team", teams["defending_team_id"].map(names).fillna(""))
    # attribution to the defending team means every record is an opponent-possession action
    teams["n_opponent_possession"] = teams["n"]
    _emit(out, "team_means", teams)
    _emit(out, "zones", ddi_mod.zone_ddi(rec, cfg.zone_cols, cfg.zone_rows))

    dates = {m.match_id: m.kickoff_date for m in metas}
    ranges = cfg.date_ranges()
    if not ranges:
        known = sorted(d for d in dates.values() if d)
        if known:
            ranges = [("all", known[0], known[-1] + dt.timedelta(days=1))]
    _emit(out, "period_split", ddi_mod.period_split(rec, dates, ranges, cfg.period_team))

    totals = rec.groupby("player_id").size().to_dict()
    _emit(out, "retention", ddi_mod.player_retention(rec, cfg.retention_threshold))
    _emit(out, "turnover", ddi_mod.player_turnover(rec, cfg.turnover_threshold))
    _emit(out, "hospital", ddi_mod.hospital_balls(rec, cfg.hospital_delta, cfg.hospital_min_count, False, totals))
    _emit(out, "hospital_mixed", ddi_mod.hospital_balls(rec, cfg.hospital_delta, cfg.hospital_min_count, True, totals))
    val = rec[rec["split"] == "validation"]
    summary = {
        "n_records": len(rec),
        "mean_ddi": float(rec["ddi"].mean()) if len(rec) else None,
        "mean_abs_ddi": float(rec["ddi"].abs().mean()) if len(rec) else None,
        "n_validation": len(val),
        "mean_ddi_validation": float(val["ddi"].mean()) if len(val) else None,
    }
    _write_json(os.path.join(out, "summary.json"), summary)
    _finish(out, "ddi", h, train_hash(cfg))
    return out, summary


# ---------------------------------------------------------------- report


def cmd_report(cfg: RunConfig) -> tuple[str, str]:
    train_dir = _stage_dir(cfg, "train", train_hash(cfg))
    ddi_dir = _stage_dir(cfg, "ddi", ddi_hash(cfg))
    _require_stage(ddi_dir, "ddi", "ddi")
    feat_dir = _stage_dir(cfg, "features", features_hash(cfg))
    parts = ["# eligibility", json.dumps(_read_json(os.path.join(feat_dir, "eligibility.json")), sort_keys=True), ""]
    for name in ("eval_A", "eval_AUT", "eval_A_eligible"):
        path = os.path.join(train_dir, f"{name}.txt")
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                parts += [f"# {name}", fh.read().rstrip("\n"), ""]
    for name in ("team_means", "zones", "period_split", "retention", "turnover", "hospital", "hospital_mixed"):
        with open(os.path.join(ddi_dir, f"{name}.txt"), encoding="utf-8") as fh:
            parts += [f"# {name}", fh.read().rstrip("\n"), ""]
    parts += ["# ddi summary", json.dumps(_read_json(os.path.join(ddi_dir, "summary.json")), sort_keys=True), ""]
    text = "\n".join(parts)
    path = os.path.join(ddi_dir, "report.txt")
    _write_text(path, text)
    return path, text


# ---------------------------------------------------------------- sweep


def sweep_hash(cfg: RunConfig) -> str:
    return digest("sweep", features_hash(cfg), asdict(cfg.train), cfg.split_fraction, list(cfg.sweep_ks))


def cmd_sweep(cfg: RunConfig) -> tuple[str, pd.DataFrame]:
    """Retrain both schemas for every k in ``sweep_ks`` on fixed features."""
    feat_dir = _stage_dir(cfg, "features", features_hash(cfg))
    _require_stage(feat_dir, "features", "features")
    ingest_dir = _stage_dir(cfg, "ingest", ingest_hash(cfg))
    h = sweep_hash(cfg)
    out = _stage_dir(cfg, "sweep", h)
    os.makedirs(out, exist_ok=True)
    matches = load_store(ingest_dir)
    metas = [m.meta for m in matches]
    train_ids, _, mode = split_matches(metas, cfg.split_fraction)
    tables = {sid: load_table(feat_dir, sid) for sid in ("A", "AUT")}
    rows = []
    for k in cfg.sweep_ks:
        for sid, base in tables.items():
            table = relabel(base, matches, k)
            mask = _split_mask(table, train_ids, mode)
            model, rate = _fit_schema(table, mask, cfg.train)
            p = predict_proba(model, table.X[~mask], table.schema_hash)
            rep = _evaluate(p, table.y[~mask], rate)
            if rep is None:
                continue
            rows.append(
                {
                    "k": k, "schema": sid, "n": rep.n, "mean_prediction": rep.mean_prediction,
                    "positive_rate": rep.positive_rate, "brier": rep.brier, "nbs": rep.nbs,
                    "logloss": rep.logloss, "nll": rep.nll, "auroc": rep.auroc,
                }
            )
    df = pd.DataFrame(rows)
    _emit(out, "sweep", df)
    _finish(out, "sweep", h, features_hash(cfg))
    return out, df


def plots_dir(cfg: RunConfig) -> str:
    return _stage_dir(cfg, "plots", ddi_hash(cfg))


def stage_paths(cfg: RunConfig) -> dict:
    return {
        "ingest": _stage_dir(cfg, "ingest", ingest_hash(cfg)),
        "features": _stage_dir(cfg, "features", features_hash(cfg)),
        "train": _stage_dir(cfg, "train", train_hash(cfg)),
        "ddi": _stage_dir(cfg, "ddi", ddi_hash(cfg)),
        "sweep": _stage_dir(cfg, "sweep", sweep_hash(cfg)),
        "plots": plots_dir(cfg),
    }


# ---------------------------------------------------------------- plots


def _parse_match_selector(selector: str, what: str) -> tuple[int, str]:
    if not selector or ":" not in selector:
        raise PipelineInputError(f"{what} selector must look like MATCH_ID:{'SEQ' if what == 'surface' else 'FIRST-LAST'}")
    mid, rest = selector.split(":", 1)
    try:
        return int(mid), rest
    except ValueError as e:
        raise PipelineInputError(f"bad match id in selector {selector!r}") from e


def cmd_plot(cfg: RunConfig, what: str, selector: str = "") -> tuple[str, str]:
    """Render one figure; returns (svg path, sidecar path)."""
    from . import plots
    from .pitchcontrol import compute_surface

    out = plots_dir(cfg)
    os.makedirs(out, exist_ok=True)
    if what == "surface":
        ingest_dir = _stage_dir(cfg, "ingest", ingest_hash(cfg))
        _require_stage(ingest_dir, "ingest", "ingest")
        matches = {m.meta.match_id: m for m in load_store(ingest_dir)}
        mid, rest = _parse_match_selector(selector, what)
        if mid not in matches:
            raise PipelineInputError(f"unknown match id {mid}; available: {', '.join(map(str, sorted(matches)))}")
        m = matches[mid]
        with_frames = [a.action_seq for a in m.actions if a.event_uuid in m.frames]
        try:
            seq = int(rest)
        except ValueError:
            seq = -1
        if seq not in with_frames:
            shown = ", ".join(map(str, with_frames[:20])) + (" ..." if len(with_frames) > 20 else "")
            raise PipelineInputError(f"no framed action {rest!r} in match {mid}; available: {shown}")
        a = m.actions[seq]
        surface = compute_surface(m.frames[a.event_uuid], a.start, cfg.pc, require_both_sides=False)
        stem = os.path.join(out, f"surface_{mid}_{seq}")
        plots.plot_surface(surface, stem + ".svg", stem + ".csv", f"match {mid}, action {seq}")
        return stem + ".svg", stem + ".csv"

    rec = load_records(cfg)
    if what == "zones":
        sub = rec
        name = "zones"
        if selector:
            try:
                team = int(selector)
            except ValueError:
                team = None
            teams = sorted(rec["defending_team_id"].unique().tolist())
            if team not in teams:
                raise PipelineInputError(f"unknown team id {selector!r}; available: {', '.join(map(str, teams))}")
            sub = rec[rec["defending_team_id"] == team]
            name = f"zones_{team}"
        zones = ddi_mod.zone_ddi(sub, cfg.zone_cols, cfg.zone_rows)
        stem = os.path.join(out, name)
        plots.plot_zones(zones, stem + ".svg", stem + ".csv", cfg.zone_cols, cfg.zone_rows, "mean DDI by zone")
        return stem + ".svg", stem + ".csv"
    if what == "timeline":
        mid, rest = _parse_match_selector(selector, what)
        ids = sorted(rec["match_id"].unique().tolist())
        if mid not in ids:
            raise PipelineInputError(f"unknown match id {mid}; available: {', '.join(map(str, ids))}")
        try:
            lo, hi = (int(v) for v in rest.split("-", 1))
        except ValueError as e:
            raise PipelineInputError(f"timeline range must be FIRST-LAST, got {rest!r}") from e
        sub = rec[(rec["match_id"] == mid) & rec["anchor_seq"].between(lo, hi)]
        if sub.empty:
            raise PipelineInputError(f"no eligible states in match {mid} between actions {lo} and {hi}")
        stem = os.path.join(out, f"timeline_{mid}_{lo}_{hi}")
        plots.plot_timeline(sub, stem + ".svg", stem + ".csv", f"match {mid}, actions {lo}-{hi}")
        return stem + ".svg", stem + ".csv"
    raise PipelineInputError(f"unknown plot {what!r}; choose surface, zones or timeline")


def run_all(cfg: RunConfig, sweep: bool = False) -> dict:
    """Every stage in order; returns the stage directories."""
    cmd_ingest(cfg)
    cmd_features(cfg)
    cmd_train(cfg)
    cmd_ddi(cfg)
    cmd_report(cfg)
    if sweep:
        cmd_sweep(cfg)
    return stage_paths(cfg)
