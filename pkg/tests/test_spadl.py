import pytest
from hypothesis import given
from hypothesis import strategies as st

from recovery360 import ingest, spadl
from recovery360.ingest import FramePlayer, FreezeFrame

from conftest import action, event, write_json


def _convert(tmp_path, events):
    return spadl.convert_match(ingest.load_events(write_json(tmp_path / "1.json", events)))


def test_completed_and_incomplete_pass(tmp_path):
    acts = _convert(
        tmp_path,
        [
            event(1, **{"pass": {"end_location": [80, 40]}}),
            event(2, **{"pass": {"end_location": [80, 40], "outcome": {"name": "Incomplete"}}}),
        ],
    )
    assert [(a.action_type, a.result) for a in acts] == [("pass", "success"), ("pass", "fail")]
    assert acts[0].start == pytest.approx((52.5, 34.0))
    assert acts[0].end == pytest.approx((70.0, 34.0))


@pytest.mark.parametrize(
    "ev, expected",
    [
        (event(1, **{"pass": {"type": {"name": "Throw-in"}}}), ("throw_in", "success", "other")),
        (event(1, **{"pass": {"type": {"name": "Corner"}, "cross": True}}), ("corner_cross", "success", "foot")),
        (event(1, **{"pass": {"outcome": {"name": "Pass Offside"}}}), ("pass", "offside", "foot")),
        (event(1, "Carry", **{"carry": {"end_location": [65, 40]}}), ("carry", "success", "foot")),
        (event(1, "Dribble", dribble={"outcome": {"name": "Incomplete"}}), ("take_on", "fail", "foot")),
        (event(1, "Shot", shot={"outcome": {"name": "Goal"}, "body_part": {"name": "Head"}}), ("shot", "success", "head")),
        (event(1, "Shot", shot={"type": {"name": "Penalty"}, "outcome": {"name": "Saved"}}), ("shot_penalty", "fail", "foot")),
        (event(1, "Miscontrol"), ("bad_touch", "fail", "foot")),
        (event(1, "Own Goal Against"), ("bad_touch", "owngoal", "foot")),
        (event(1, "Foul Committed", foul_committed={"card": {"name": "Yellow Card"}}), ("foul", "yellow", "foot")),
    ],
)
def test_event_mapping(tmp_path, ev, expected):
    (a,) = _convert(tmp_path, [ev])
    assert (a.action_type, a.result, a.bodypart) == expected


def test_non_actions_skipped(tmp_path):
    evs = [event(1, "Starting XI", loc=None), event(2, "Pressure"), event(3)]
    assert len(_convert(tmp_path, evs)) == 1
    assert spadl.skipped_counts(ingest.load_events(str(tmp_path / "1.json"))) == {"Pressure": 1, "Starting XI": 1}


def test_conversion_deterministic(tmp_path):
    evs = [event(i + 1, **{"pass": {"end_location": [70, 30]}}) for i in range(10)]
    assert _convert(tmp_path, evs) == _convert(tmp_path, evs)


def test_action_invariants_on_synthetic(small_synth):
    evs = ingest.load_events(small_synth.metas[0].event_path)
    acts = spadl.convert_match(evs)
    assert [a.action_seq for a in acts] == list(range(len(acts)))
    for a in acts:
        assert 0 <= a.start[0] <= 105 and 0 <= a.start[1] <= 68
        assert 0 <= a.end[0] <= 105 and 0 <= a.end[1] <= 68
        if a.action_type == "carry":
            assert a.result == "success"


def test_orient_examples():
    a = action(0, start=(10.0, 10.0), end=(20.0, 5.0))
    assert spadl.orient_ltr(a, False) == a
    flipped = spadl.orient_ltr(a, True)
    assert flipped.start == (95.0, 58.0)
    assert spadl.orient_ltr(flipped, True) == a


@given(st.floats(0, 105), st.floats(0, 68))
def test_flip_involution(x, y):
    assert spadl.flip_xy(spadl.flip_xy((x, y))) == pytest.approx((x, y))


def _keeper_frame(uuid, own_keeper_x):
    return FreezeFrame(
        uuid,
        ((0, 0), (105, 0), (105, 68), (0, 68)),
        (
            FramePlayer(True, True, False, (50.0, 30.0)),
            FramePlayer(True, False, True, (own_keeper_x, 34.0)),
            FramePlayer(False, False, True, (105.0 - own_keeper_x, 34.0)),
        ),
    )


def test_direction_from_keepers(caplog):
    acts = [action(0, team=1, period=1), action(1, team=2, period=1), action(2, team=1, period=2)]
    frames = {"u0": _keeper_frame("u0", 5.0), "u1": _keeper_frame("u1", 100.0)}
    d = spadl.infer_attack_direction(acts, frames)
    assert d[(1, 1)] is False
    assert d[(2, 1)] is True
    # no keeper frames for team 1 in period 2: fall back to period 1 and swap ends
    assert d[(1, 2)] is True
    assert "no keeper frames" in caplog.text


def test_track_score():
    acts = [
        action(0, team=1),
        action(1, team=1, atype="shot", result="success"),
        action(2, team=2),
        action(3, team=1),
        action(4, team=2, atype="bad_touch", result="owngoal"),
        action(5, team=1),
    ]
    ctx = spadl.track_score(acts)
    assert ctx[0].as_tuple() == (0, 0, 0)
    assert ctx[2].as_tuple() == (0, 1, -1)
    assert ctx[3].as_tuple() == (1, 0, 1)
    # own goal by team 2 credits team 1
    assert ctx[5].as_tuple() == (2, 0, 2)
    for c in ctx:
        assert c.goal_diff == c.goals_possession_team - c.goals_defending_team
