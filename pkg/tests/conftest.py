import json
import os

import numpy as np
import pytest

from recovery360.ingest import FramePlayer, FreezeFrame
from recovery360.spadl import SpadlAction

FULL_PITCH = ((0.0, 0.0), (105.0, 0.0), (105.0, 68.0), (0.0, 68.0))


def event(idx, type_name="Pass", team=1, player=10, period=1, loc=(60.0, 40.0), **extra):
    ev = {
        "id": f"ev-{idx}",
        "index": idx,
        "period": period,
        "timestamp": f"00:00:{idx % 60:02d}.000",
        "type": {"name": type_name},
        "team": {"id": team, "name": f"Team {team}"},
        "player": {"id": player, "name": f"P{player}"},
    }
    if loc is not None:
        ev["location"] = list(loc)
    ev.update(extra)
    return ev


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)
    return str(path)


def action(seq, team=1, period=1, start=(50.0, 34.0), end=(55.0, 34.0), atype="pass", result="success",
           player=None, uuid=None):
    return SpadlAction(
        game_id=1, action_seq=seq, period=period, time_s=float(seq), team_id=team,
        player_id=player if player is not None else team * 100, start=start, end=end,
        action_type=atype, result=result, bodypart="foot", event_uuid=uuid or f"u{seq}",
    )


def frame(att, dfn, uuid="f", area=FULL_PITCH, actor=0):
    players = [FramePlayer(True, i == actor, False, tuple(map(float, p))) for i, p in enumerate(att)]
    players += [FramePlayer(False, False, False, tuple(map(float, p))) for p in dfn]
    return FreezeFrame(uuid, tuple(area), tuple(players))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_synth(tmp_path_factory):
    """Four short synthetic matches on disk."""
    from recovery360.fixtures import SynthConfig, gen_matches

    out = tmp_path_factory.mktemp("synth")
    return gen_matches(SynthConfig(seed=3, n_matches=4, actions_per_match=240), str(out))


@pytest.fixture(scope="session")
def small_run(small_synth, tmp_path_factory):
    """Full pipeline on the small dataset with a light model."""
    from recovery360 import pipeline
    from recovery360.config import RunConfig

    cfg = RunConfig(manifest=small_synth.manifest_path, out_dir=str(tmp_path_factory.mktemp("runs")))
    cfg = cfg.with_overrides(**{"train.n_trees": 20, "train.max_depth": 3})
    pipeline.run_all(cfg)
    return cfg


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion that ran."""
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
