import datetime as dt
import json
import os
import shutil

import numpy as np
import pandas as pd
import pytest

from recovery360 import cli, pipeline, plots
from recovery360.config import RunConfig, load_config
from recovery360.ingest import MatchMeta, load_manifest, write_manifest

from conftest import event, write_json

LIGHT = ["--set", "train.n_trees=20", "--set", "train.max_depth=3"]


def _args(cfg):
    return ["--manifest", cfg.manifest, "--out", cfg.out_dir] + LIGHT


def _copy_dataset(small_synth, dest, n=3):
    metas = []
    for m in small_synth.metas[:n]:
        ev = os.path.join(dest, os.path.basename(m.event_path))
        fr = os.path.join(dest, "f" + os.path.basename(m.frames_path))
        shutil.copy(m.event_path, ev)
        shutil.copy(m.frames_path, fr)
        metas.append(MatchMeta(**{**m.__dict__, "event_path": ev, "frames_path": fr}))
    path = os.path.join(dest, "manifest.csv")
    write_manifest(path, metas)
    return path, metas


def test_run_config_defaults():
    cfg = RunConfig()
    assert (cfg.k, cfg.tau1, cfg.tau2, cfg.n_att, cfg.n_def) == (4, 3, 1, 5, 5)
    assert cfg.split_fraction == 0.8
    assert (cfg.retention_threshold, cfg.turnover_threshold, cfg.hospital_delta, cfg.hospital_min_count) == (
        0.9, 0.1, 0.75, 10,
    )


def test_ingest_three_matches(small_synth, tmp_path, capsys):
    manifest, metas = _copy_dataset(small_synth, str(tmp_path))
    assert cli.main(["ingest", "--manifest", manifest, "--out", str(tmp_path / "out")]) == 0
    out = capsys.readouterr().out.strip().splitlines()[-1]
    assert sorted(os.listdir(os.path.join(out, "actions"))) == sorted(f"{m.match_id}.ndjson" for m in metas)
    summary = json.load(open(os.path.join(out, "summary.json")))
    assert summary["n_ok"] == 3 and summary["n_failed"] == 0


def test_one_corrupt_match_still_exits_zero(small_synth, tmp_path, caplog):
    manifest, metas = _copy_dataset(small_synth, str(tmp_path))
    with open(metas[1].event_path, "w") as fh:
        fh.write('[{"index": 1,')
    assert cli.main(["ingest", "--manifest", manifest, "--out", str(tmp_path / "out")]) == 0
    assert "1 of 3 match(es) failed" in caplog.text
    cfg = RunConfig(manifest=manifest, out_dir=str(tmp_path / "out"))
    summary = json.load(open(os.path.join(pipeline.stage_paths(cfg)["ingest"], "summary.json")))
    assert (summary["n_ok"], summary["n_failed"]) == (2, 1)


def test_all_matches_corrupt_exits_one(small_synth, tmp_path):
    manifest, metas = _copy_dataset(small_synth, str(tmp_path), n=2)
    for m in metas:
        with open(m.event_path, "w") as fh:
            fh.write("not json")
    assert cli.main(["ingest", "--manifest", manifest, "--out", str(tmp_path / "out")]) == 1


def test_empty_manifest_exits_one(tmp_path, capsys):
    p = tmp_path / "m.csv"
    p.write_text("match_id,event_path\n")
    assert cli.main(["ingest", "--manifest", str(p), "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_stage_exits_one(small_synth, tmp_path, capsys):
    assert cli.main(["train", "--manifest", small_synth.manifest_path, "--out", str(tmp_path)]) == 1
    assert "recovery360 features" in capsys.readouterr().err


def test_bad_override_exits_one(small_synth, tmp_path):
    assert cli.main(["ingest", "--manifest", small_synth.manifest_path, "--set", "nonsense=1"]) == 1
    assert cli.main(["ingest", "--manifest", small_synth.manifest_path, "--set", "k"]) == 1


def test_internal_error_exits_two(monkeypatch, small_synth, tmp_path):
    def boom(cfg):
        raise RuntimeError("boom")

    monkeypatch.setattr(pipeline, "cmd_ingest", boom)
    assert cli.main(["ingest", "--manifest", small_synth.manifest_path, "--out", str(tmp_path)]) == 2


def test_config_file_and_env_root(small_synth, tmp_path, monkeypatch):
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps({"manifest": small_synth.manifest_path, "k": 6, "train": {"n_trees": 5}}))
    cfg = load_config(str(cfg_path))
    assert cfg.k == 6 and cfg.train.n_trees == 5
    monkeypatch.setenv("RECOVERY360_OUT", str(tmp_path / "envroot"))
    assert RunConfig(manifest="x").output_root == str(tmp_path / "envroot")
    assert RunConfig(manifest="x", out_dir="explicit").output_root == "explicit"


def test_stale_config_gets_new_directories(small_run):
    before = pipeline.stage_paths(small_run)
    changed = pipeline.stage_paths(small_run.with_overrides(k=5))
    assert changed["ingest"] == before["ingest"]
    for stage in ("features", "train", "ddi"):
        assert changed[stage] != before[stage]
    retrained = pipeline.stage_paths(small_run.with_overrides(**{"train.seed": 9}))
    assert retrained["features"] == before["features"] and retrained["train"] != before["train"]


def test_stage_outputs_present(small_run):
    p = pipeline.stage_paths(small_run)
    for name in ("model_A.txt", "model_AUT.txt", "eval_A.txt", "eval_AUT.txt", "predictions_A.csv"):
        assert os.path.exists(os.path.join(p["train"], name))
    for name in ("records.csv", "team_means.txt", "zones.csv", "period_split.csv", "retention.csv",
                 "turnover.csv", "hospital.csv", "hospital_mixed.csv", "report.txt"):
        assert os.path.exists(os.path.join(p["ddi"], name))


# ---------------------------------------------------------------- plots


def test_timeline_sidecar_three_series_five_points(small_run, capsys):
    mid = load_manifest(small_run.manifest)[0].match_id
    assert cli.main(["plot", "timeline", f"{mid}:10-14"] + _args(small_run)) == 0
    svg, side = capsys.readouterr().out.strip().splitlines()[-2:]
    df = pd.read_csv(side)
    assert len(df) == 5
    assert [c for c in ("p_a", "p_at", "ddi") if c in df.columns] == ["p_a", "p_at", "ddi"]
    assert np.allclose(df["ddi"], df["p_at"] - df["p_a"], atol=1e-7)
    assert open(svg).read().lstrip().startswith("<?xml")


def test_unknown_selector_lists_ids(small_run, capsys):
    assert cli.main(["plot", "timeline", "999:1-5"] + _args(small_run)) == 1
    err = capsys.readouterr().err
    mids = [m.match_id for m in load_manifest(small_run.manifest)]
    assert "available" in err and str(mids[0]) in err
    assert cli.main(["plot", "zones", "7"] + _args(small_run)) == 1


def test_zone_and_surface_plots_via_cli(small_run, capsys):
    assert cli.main(["plot", "zones"] + _args(small_run)) == 0
    side = capsys.readouterr().out.strip().splitlines()[-1]
    assert pd.read_csv(side)["n"].sum() == len(pipeline.load_records(small_run))
    mid = load_manifest(small_run.manifest)[0].match_id
    assert cli.main(["plot", "surface", f"{mid}:5"] + _args(small_run)) == 0
    side = capsys.readouterr().out.strip().splitlines()[-1]
    vals = pd.read_csv(side)["control"]
    assert len(vals) == 32 * 50 and vals.dropna().between(0, 1).all()


def test_lone_attacker_surface_is_uniform(tmp_path, capsys):
    evs = [event(1, loc=(60.0, 40.0))]
    ff = [{"teammate": True, "actor": True, "keeper": False, "location": [60.0, 40.0]}]
    frames = [{"event_uuid": "ev-1", "visible_area": [0, 0, 120, 0, 120, 80, 0, 80], "freeze_frame": ff}]
    meta = MatchMeta(5, 1, 2, "H", "A", dt.date(2023, 1, 1), "", "",
                     write_json(tmp_path / "5.json", evs), write_json(tmp_path / "f5.json", frames))
    write_manifest(str(tmp_path / "m.csv"), [meta])
    assert cli.main(["plot", "surface", "5:0", "--manifest", str(tmp_path / "m.csv"), "--out", str(tmp_path / "o")]) == 1
    assert cli.main(["ingest", "--manifest", str(tmp_path / "m.csv"), "--out", str(tmp_path / "o")]) == 0
    assert cli.main(["plot", "surface", "5:0", "--manifest", str(tmp_path / "m.csv"), "--out", str(tmp_path / "o")]) == 0
    side = capsys.readouterr().out.strip().splitlines()[-1]
    assert np.allclose(pd.read_csv(side)["control"], 1.0)


def test_constant_ddi_zone_plot_is_uniform(tmp_path):
    r = np.random.default_rng(0)
    zones = pd.DataFrame({"ball_x": r.uniform(0, 105, 500), "ball_y": r.uniform(0, 68, 500), "ddi": 0.03})
    from recovery360.ddi import zone_ddi

    m = plots.plot_zones(zone_ddi(zones), str(tmp_path / "z.svg"), str(tmp_path / "z.csv"))
    assert np.allclose(m, 0.03)
    assert np.allclose(pd.read_csv(tmp_path / "z.csv")["mean_ddi"], 0.03)


def test_plots_are_byte_stable(small_run, capsys):
    mid = load_manifest(small_run.manifest)[0].match_id
    outs = []
    for _ in range(2):
        assert cli.main(["plot", "timeline", f"{mid}:10-14"] + _args(small_run)) == 0
        svg, side = capsys.readouterr().out.strip().splitlines()[-2:]
        outs.append((open(svg, "rb").read(), open(side, "rb").read()))
    assert outs[0] == outs[1]


def test_synth_verb(tmp_path, capsys):
    assert cli.main(["synth", str(tmp_path / "d"), "--matches", "2", "--actions", "50", "--set", "crowding_boost=2"]) == 0
    manifest = capsys.readouterr().out.strip()
    assert len(load_manifest(manifest)) == 2
    assert cli.main(["synth", str(tmp_path / "e"), "--set", "base_recovery_hazard=0.5"]) == 1
