"""Acceptance criteria 1-10, one test per criterion.

Each test records a PASS/FAIL line in :data:`RESULTS`; the lines are
printed in the terminal summary (see ``conftest.py``). Criteria that this
environment cannot exercise are reported as FAIL and marked xfail with the
reason, never as PASS.
"""

import datetime as dt
import glob
import os
import statistics
import time

import numpy as np
import pandas as pd
import pytest

from recovery360 import features as ft
from recovery360 import fixtures as fx
from recovery360 import pipeline
from recovery360 import pitchcontrol as pc
from recovery360.config import RunConfig
from recovery360.ingest import FramePlayer, FreezeFrame, MatchMeta, write_manifest
from recovery360.metrics import EvalReport

RESULTS = {}
FULL = ((0.0, 0.0), (105.0, 0.0), (105.0, 68.0), (0.0, 68.0))


def record(n, ok, detail, xfail_reason=None):
    RESULTS[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(RESULTS[n])
    if not ok and xfail_reason:
        pytest.xfail(xfail_reason)
    assert ok, RESULTS[n]


def _random_frames(seed, count, lo=5, hi=11):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        out.append(fx.random_frame(rng, int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))))
    return out


def _mirror(frame):
    return FreezeFrame(
        frame.event_uuid,
        frame.visible_area,
        tuple(FramePlayer(p.teammate, p.actor, p.keeper, (105.0 - p.pos[0], 68.0 - p.pos[1])) for p in frame.players),
    )


# ---------------------------------------------------------------- shared runs


@pytest.fixture(scope="module")
def run50k(tmp_path_factory):
    """Default configuration on 50 synthetic matches of 1000 actions, plus the k sweep."""
    root = tmp_path_factory.mktemp("acc50k")
    res = fx.gen_matches(fx.SynthConfig(seed=0, n_matches=50, actions_per_match=1000), str(root / "data"))
    cfg = RunConfig(manifest=res.manifest_path, out_dir=str(root / "runs"))
    pipeline.run_all(cfg, sweep=True)
    return cfg, res


def _eval(cfg, name):
    path = os.path.join(pipeline.stage_paths(cfg)["train"], f"eval_{name}.txt")
    with open(path, encoding="utf-8") as fh:
        return EvalReport.from_text(fh.read())[0]


# ---------------------------------------------------------------- criteria


def test_criterion_01_conservation_and_symmetry():
    t0 = time.perf_counter()
    worst_lo, worst_hi, worst_mirror = 1.0, 1.0, 0.0
    for frame, ball in _random_frames(101, 100):
        s = pc.compute_surface(frame, ball)
        tot = s.per_player.sum(axis=0)[s.visible_mask]
        worst_lo, worst_hi = min(worst_lo, tot.min()), max(worst_hi, tot.max())
        m = pc.compute_surface(_mirror(frame), (105.0 - ball[0], 68.0 - ball[1]))
        worst_mirror = max(worst_mirror, float(np.abs(s.att_control - m.att_control[::-1, ::-1]).max()))
    grid = pc.GridSpec(rows=1, cols=1, length=100.0, width=60.0)
    one_v_one = FreezeFrame(
        "s", FULL, (FramePlayer(True, True, False, (40.0, 30.0)), FramePlayer(False, False, False, (60.0, 30.0)))
    )
    mid = float(pc.compute_surface(one_v_one, (50.0, 10.0), grid=grid).att_control[0, 0])
    elapsed = time.perf_counter() - t0
    ok = 0.99 <= worst_lo and worst_hi <= 1.01 and abs(mid - 0.5) <= 1e-6 and worst_mirror <= 1e-9 and elapsed < 60
    record(
        1, ok,
        f"cell sums in [{worst_lo:.6f}, {worst_hi:.6f}], 1v1 midpoint {mid:.9f}, "
        f"mirror max diff {worst_mirror:.2e}, {elapsed:.1f} s",
    )


def test_criterion_02_integration_oracle():
    worst = 0.0
    for frame, ball in _random_frames(202, 100):
        ref, _ = fx.oracle_pc_fine(frame, ball)
        worst = max(worst, float(np.abs(pc.compute_surface(frame, ball).att_control - ref).max()))
    record(2, worst < 0.01, f"max |production - dt/10 reference| = {worst:.5f} over 100 frames")


def test_criterion_03_label_oracle():
    rng = np.random.default_rng(303)
    mismatches = checks = 0
    for s in range(1000):
        acts = fx.random_sequence(rng, int(rng.integers(1, 60)), n_teams=2 + s % 2, n_periods=1 + s % 3)
        for k in range(1, 11):
            for i in range(len(acts)):
                checks += 1
                mismatches += ft.build_label(acts, i, k) != fx.oracle_label_scan(acts, i, k)
    record(3, mismatches == 0, f"{mismatches} mismatches in {checks} labels (1000 sequences, k = 1..10)")


def test_criterion_04_calibration_and_sweep(run50k):
    cfg, _ = run50k
    gaps = {s: _eval(cfg, s).mean_prediction - _eval(cfg, s).positive_rate for s in ("A", "AUT")}
    sweep = pd.read_csv(os.path.join(pipeline.stage_paths(cfg)["sweep"], "sweep.csv"))
    mono = {}
    for schema, g in sweep.groupby("schema"):
        mu = g.sort_values("k")["mean_prediction"].to_numpy()
        mono[schema] = bool(np.all(np.diff(mu) > 0)) and sorted(g["k"]) == list(range(1, 11))
    ok = all(abs(g) <= 0.02 for g in gaps.values()) and mono == {"A": True, "AUT": True}
    record(
        4, ok,
        f"validation gap A {gaps['A']:+.4f}, AUT {gaps['AUT']:+.4f}; "
        f"mean prediction strictly increasing over k=1..10: {mono}",
    )


def test_criterion_05_near_zero_ddi(run50k):
    cfg, _ = run50k
    rec = pipeline.load_records(cfg)
    val = rec[rec["split"] == "validation"]
    mean = float(val["ddi"].mean())
    record(5, len(val) > 0 and abs(mean) <= 0.005, f"mean signed DDI on {len(val)} validation states = {mean:+.5f}")


def test_criterion_06_skill(run50k):
    cfg, res = run50k
    a, at = _eval(cfg, "A"), _eval(cfg, "AUT")
    boost = fx.SynthConfig().crowding_boost
    ok = a.nbs < 1.0 and at.nbs < 1.0 and boost >= 3 and at.nbs <= a.nbs - 0.01
    record(6, ok, f"NBS A {a.nbs:.4f}, A+T {at.nbs:.4f} (gain {a.nbs - at.nbs:.4f}, crowding_boost {boost:g})")


def test_criterion_07_injected_team_ranking(tmp_path):
    passed, notes = 0, []
    for seed in range(1, 6):
        res = fx.gen_matches(fx.SynthConfig(seed=seed, n_matches=12, actions_per_match=600), str(tmp_path / f"d{seed}"))
        cfg = RunConfig(manifest=res.manifest_path, out_dir=str(tmp_path / f"r{seed}"))
        pipeline.run_all(cfg)
        tm = pd.read_csv(os.path.join(pipeline.stage_paths(cfg)["ddi"], "team_means.csv"))
        style = tm["defending_team_id"].map(res.team_styles)
        low_crowd = tm.loc[style == "crowding", "mean_ddi"].min()
        high_passive = tm.loc[style == "passive", "mean_ddi"].max()
        passed += bool(low_crowd > high_passive)
        notes.append(f"seed {seed}: min crowding {low_crowd:+.4f} vs max passive {high_passive:+.4f}")
    record(7, passed == 5, f"{passed}/5 seeds rank every crowding team above every passive team; " + "; ".join(notes))


def _run_with_plots(manifest, out):
    cfg = RunConfig(manifest=manifest, out_dir=out)
    pipeline.run_all(cfg)
    rec = pipeline.load_records(cfg)
    mid = int(rec["match_id"].iloc[0])
    seqs = rec.loc[rec["match_id"] == mid, "anchor_seq"].to_numpy()
    pipeline.cmd_plot(cfg, "surface", f"{mid}:{int(seqs[0])}")
    pipeline.cmd_plot(cfg, "zones", "")
    pipeline.cmd_plot(cfg, "timeline", f"{mid}:{int(seqs[0])}-{int(seqs[0]) + 9}")
    return cfg


def _snapshot(cfg):
    paths = pipeline.stage_paths(cfg)
    files = {}
    for stage in ("train", "ddi", "plots"):
        for path in sorted(glob.glob(os.path.join(paths[stage], "*"))):
            with open(path, "rb") as fh:
                files[f"{stage}/{os.path.basename(path)}"] = fh.read()
    return files


def test_criterion_08_determinism(tmp_path):
    res = fx.gen_matches(fx.SynthConfig(seed=8, n_matches=6, actions_per_match=300), str(tmp_path / "data"))
    a = _snapshot(_run_with_plots(res.manifest_path, str(tmp_path / "run1")))
    b = _snapshot(_run_with_plots(res.manifest_path, str(tmp_path / "run2")))
    kinds = {suffix: sum(name.endswith(suffix) for name in a) for suffix in ("model_A.txt", ".svg", ".csv", "report.txt")}
    differ = sorted(k for k in a if a[k] != b.get(k))
    ok = a.keys() == b.keys() and not differ and kinds["model_A.txt"] == 1 and kinds[".svg"] == 3
    record(8, ok, f"{len(a)} files compared (models, reports, plots and sidecars), differing: {differ or 'none'}")


def test_criterion_09_performance():
    frames = _random_frames(909, 1000, 11, 11)
    pc.compute_surface(*frames[0])  # compile
    times = []
    t0 = time.perf_counter()
    for frame, ball in frames:
        t = time.perf_counter()
        pc.compute_surface(frame, ball)
        times.append(time.perf_counter() - t)
    total = time.perf_counter() - t0
    median_ms = 1000 * statistics.median(times)
    single_ok = median_ms <= 50 and total <= 60
    cpus = os.cpu_count() or 1
    detail = f"11v11 median {median_ms:.1f} ms/frame, 1000 frames in {total:.1f} s single-threaded"
    if cpus < 8:
        record(
            9, False,
            detail + f"; thread scaling to 8 not measurable on {cpus} CPU(s)",
            xfail_reason=f"near-linear scaling to 8 threads needs >= 8 CPUs, found {cpus}",
        )
        return
    batch = frames[:400]
    t = time.perf_counter()
    pc.compute_surfaces([f for f, _ in batch], [b for _, b in batch], threads=1)
    one = time.perf_counter() - t
    t = time.perf_counter()
    pc.compute_surfaces([f for f, _ in batch], [b for _, b in batch], threads=8)
    eight = time.perf_counter() - t
    speedup = one / eight
    record(9, single_ok and speedup >= 6.0, detail + f"; 8-thread speedup {speedup:.2f}x")


def _open_data_manifest(root, out):
    """Manifest for every match in an open-data style folder (events/ and three-sixty/)."""
    metas = []
    for i, ev in enumerate(sorted(glob.glob(os.path.join(root, "events", "*.json")))):
        mid = int(os.path.splitext(os.path.basename(ev))[0])
        fr = os.path.join(root, "three-sixty", f"{mid}.json")
        if os.path.exists(fr):
            metas.append(MatchMeta(mid, 0, 0, "", "", dt.date(2000, 1, 1) + dt.timedelta(days=i), "", "", ev, fr))
    path = os.path.join(out, "manifest.csv")
    write_manifest(path, metas)
    return path, len(metas)


def test_criterion_10_open_data(tmp_path):
    root = os.environ.get("RECOVERY360_OPEN_DATA", "")
    if not root or not os.path.isdir(root):
        record(
            10, False,
            "no openly published 360 match available offline (set RECOVERY360_OPEN_DATA to a folder "
            "with events/<id>.json and three-sixty/<id>.json)",
            xfail_reason="open 360 data could not be fetched in this sandbox",
        )
        return
    manifest, n = _open_data_manifest(root, str(tmp_path))
    t0 = time.perf_counter()
    cfg = RunConfig(manifest=manifest, out_dir=str(tmp_path / "runs"))
    _, summary = pipeline.cmd_ingest(cfg)
    _, elig = pipeline.cmd_features(cfg)
    pipeline.cmd_train(cfg)
    pipeline.cmd_ddi(cfg)
    pipeline.cmd_report(cfg)
    elapsed = time.perf_counter() - t0
    p = pipeline.stage_paths(cfg)
    reports = ["team_means.csv", "zones.csv", "period_split.csv", "retention.csv", "turnover.csv", "hospital.csv", "report.txt"]
    have = all(os.path.exists(os.path.join(p["ddi"], r)) for r in reports)
    model = os.path.exists(os.path.join(p["train"], "model_AUT.txt"))
    ok = summary["n_failed"] == 0 and elig["included"] > 0 and model and have and elapsed <= 600
    record(
        10, ok,
        f"{n} match(es), {summary['n_failed']} ingest failures, {elig['included']} eligible states, "
        f"model {'written' if model else 'missing'}, reports {'complete' if have else 'incomplete'}, {elapsed:.0f} s",
    )
