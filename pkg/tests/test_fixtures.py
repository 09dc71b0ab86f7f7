import hashlib
import os

import numpy as np
import pytest

from recovery360 import features as ft
from recovery360 import fixtures as fx
from recovery360 import ingest, pipeline
from recovery360.fixtures import InfeasibleConfig, SynthConfig


def _tree_digest(root):
    h = hashlib.sha256()
    for dirpath, _, files in sorted(os.walk(root)):
        for name in sorted(files):
            path = os.path.join(dirpath, name)
            h.update(os.path.relpath(path, root).encode())
            with open(path, "rb") as fh:
                h.update(fh.read())
    return h.hexdigest()


def _labels(truth, k):
    y = [ft.labels_for(t["team_id"].to_numpy(), t["period"].to_numpy(), k) for t in truth.values()]
    return np.concatenate(y)


def test_byte_identical_for_fixed_seed(tmp_path):
    cfg = SynthConfig(seed=11, n_matches=3, actions_per_match=120)
    fx.gen_matches(cfg, str(tmp_path / "a"))
    fx.gen_matches(cfg, str(tmp_path / "b"))
    assert _tree_digest(tmp_path / "a") == _tree_digest(tmp_path / "b")
    fx.gen_matches(SynthConfig(seed=12, n_matches=3, actions_per_match=120), str(tmp_path / "c"))
    assert _tree_digest(tmp_path / "a") != _tree_digest(tmp_path / "c")


@pytest.mark.parametrize(
    "bad",
    [
        {"base_recovery_hazard": 0.2, "crowding_boost": 5.0},
        {"base_recovery_hazard": 1.0},
        {"crowding_boost": 0.0},
        {"team_styles": ("crowding",)},
        {"frame_visibility": 0.0},
    ],
)
def test_infeasible_configs(tmp_path, bad):
    with pytest.raises(InfeasibleConfig):
        fx.gen_matches(SynthConfig(**bad), str(tmp_path))


def test_output_passes_ingest_and_has_full_frames(small_synth):
    assert ingest.load_manifest(small_synth.manifest_path) == small_synth.metas
    for meta in small_synth.metas:
        m, summary = pipeline.load_match(meta)
        assert summary["join"]["n_joined"] == len(m.actions) == len(small_synth.truth[meta.match_id])
        for a in m.actions:
            f = m.frames[a.event_uuid]
            n_att, n_def = ft.frame_counts(f)
            assert n_att >= 5 and n_def >= 5
            assert ft.eligibility(f, a.start) == (True, None)


def test_written_teams_match_truth(small_synth):
    meta = small_synth.metas[1]
    m, _ = pipeline.load_match(meta)
    truth = small_synth.truth[meta.match_id]
    assert [a.team_id for a in m.actions] == truth["team_id"].tolist()
    assert [a.event_uuid for a in m.actions] == truth["event_uuid"].tolist()


def test_closed_form_rate_at_50k(tmp_path):
    cfg = SynthConfig(seed=4, n_matches=50, actions_per_match=1000, crowding_boost=1.0, zone_gradient=0.0)
    res = fx.gen_matches(cfg, str(tmp_path))
    y = _labels(res.truth, 4)
    assert len(y) == 50_000
    expect = fx.window_rate(0.055, 4)
    assert expect == pytest.approx(0.203, abs=5e-4)
    assert abs(y.mean() - expect) <= 0.02
    # no proximity dependence without the boost
    crowded = np.concatenate([t["crowded"].to_numpy() for t in res.truth.values()])
    assert 0.1 < crowded.mean() < 0.9
    assert abs(y[crowded].mean() - y[~crowded].mean()) <= 0.02


def test_boost_raises_rate_where_crowded(small_synth):
    y = _labels(small_synth.truth, 4)
    crowded = np.concatenate([t["crowded"].to_numpy() for t in small_synth.truth.values()])
    assert y[crowded].mean() > y[~crowded].mean() + 0.1


def test_crowding_teams_crowd_more(small_synth):
    t = np.concatenate([t["defending_team_id"].to_numpy() for t in small_synth.truth.values()])
    c = np.concatenate([t["crowded"].to_numpy() for t in small_synth.truth.values()])
    by_style = {s: c[np.isin(t, [tid for tid, st in small_synth.team_styles.items() if st == s])].mean() for s in fx.STYLES}
    assert by_style["crowding"] > by_style["passive"] + 0.3


def test_degraded_visibility_creates_ineligible_states(tmp_path):
    cfg = SynthConfig(seed=2, n_matches=1, actions_per_match=200, frame_visibility=0.4, degrade_visibility=True)
    res = fx.gen_matches(cfg, str(tmp_path))
    m, _ = pipeline.load_match(res.metas[0])
    _, at, rep = ft.assemble_dataset([m])
    assert rep.included < rep.total - 2
    assert rep.excluded["n_att"] + rep.excluded["n_def"] + rep.excluded["ball_not_visible"] > 0


def test_missing_frames(tmp_path):
    cfg = SynthConfig(seed=2, n_matches=1, actions_per_match=200, missing_frame_rate=0.3)
    res = fx.gen_matches(cfg, str(tmp_path))
    m, _ = pipeline.load_match(res.metas[0])
    frac = 1 - len(m.frames) / len(m.actions)
    assert 0.2 < frac < 0.4


def test_oracle_label_examples():
    acts = fx.random_sequence(np.random.default_rng(0), 1)
    assert fx.oracle_label_scan(acts, 0, 4) == 0
    from conftest import action

    acts = [action(i, team=2 if i == 4 else 1) for i in range(6)]
    assert fx.oracle_label_scan(acts, 0, 4) == 1
    assert fx.oracle_label_scan(acts, 0, 3) == 0
