import json

import pytest

from tracklab.actionmap import (
    CONTINUOUS2,
    D6_NAMES,
    D9_NAMES,
    DISCRETE6,
    DISCRETE9,
    Action,
    OutOfSpace,
    StepKinematics,
    export_command_stream,
    flip_action,
    to_real,
    to_virtual,
)

# golden fixture: every row of the discrete mapping table
GOLDEN_D9 = {
    "forward-fast": ((50.0, 0.0), (0.4, 0.0)),
    "forward-slow": ((25.0, 0.0), (0.2, 0.0)),
    "backward-fast": ((-50.0, 0.0), (-0.4, 0.0)),
    "backward-slow": ((-25.0, 0.0), (-0.2, 0.0)),
    "turn-left": ((0.0, 10.0), (0.0, 0.6)),
    "turn-right": ((0.0, -10.0), (0.0, -0.6)),
    "turn-left-and-forward": ((15.0, 5.0), (0.1, 0.2)),
    "turn-right-and-forward": ((15.0, -5.0), (0.1, -0.2)),
    "stop": ((0.0, 0.0), (0.0, 0.0)),
}

GOLDEN_CONTINUOUS = {
    "high": ((80.0, 20.0), (0.4, 0.6)),
    "low": ((-80.0, -20.0), (-0.4, -0.6)),
}


def test_discrete9_table_exact():
    for i, name in enumerate(D9_NAMES):
        a = Action(space=DISCRETE9, index=i)
        v = to_virtual(a)
        r = to_real(a)
        gv, gr = GOLDEN_D9[name]
        assert (v.linear, v.angular) == gv
        assert (r.linear, r.angular) == gr


def test_discrete9_named_rows():
    v = to_virtual(Action(space=DISCRETE9, index=D9_NAMES.index("forward-fast")))
    assert (v.linear, v.angular) == (50.0, 0.0)
    v = to_virtual(Action(space=DISCRETE9, index=D9_NAMES.index("turn-left-and-forward")))
    assert (v.linear, v.angular) == (15.0, 5.0)
    v = to_virtual(Action(space=DISCRETE9, index=D9_NAMES.index("stop")))
    assert (v.linear, v.angular) == (0.0, 0.0)
    r = to_real(Action(space=DISCRETE9, index=D9_NAMES.index("turn-right")))
    assert (r.linear, r.angular) == (0.0, -0.6)


def test_continuous_bounds_and_scaling():
    hv, hr = GOLDEN_CONTINUOUS["high"]
    r = to_real(Action(space=CONTINUOUS2, velocity=hv))
    assert (r.linear, r.angular) == hr
    lv, lr = GOLDEN_CONTINUOUS["low"]
    r = to_real(Action(space=CONTINUOUS2, velocity=lv))
    assert (r.linear, r.angular) == lr
    # proportional interior point
    r = to_real(Action(space=CONTINUOUS2, velocity=(0.9 * 80.0, 0.0)))
    assert r.linear == pytest.approx(0.36, abs=1e-12)
    assert r.angular == 0.0
    # beyond the bound clips to it
    r = to_real(Action(space=CONTINUOUS2, velocity=(200.0, 55.0)))
    assert (r.linear, r.angular) == (0.4, 0.6)


def test_out_of_space():
    with pytest.raises(OutOfSpace):
        to_virtual(Action(space=DISCRETE6, index=6))
    with pytest.raises(OutOfSpace):
        to_virtual(Action(space=DISCRETE9, index=-1))
    with pytest.raises(OutOfSpace):
        to_virtual(Action(space="discrete7", index=0))
    with pytest.raises(OutOfSpace):
        Action(space=CONTINUOUS2, velocity=None).validate()


def test_flip_involution_all_actions():
    for i in range(6):
        a = Action(space=DISCRETE6, index=i)
        assert flip_action(flip_action(a)) == a
    for i in range(9):
        a = Action(space=DISCRETE9, index=i)
        assert flip_action(flip_action(a)) == a
    a = Action(space=CONTINUOUS2, velocity=(12.0, 7.5))
    assert flip_action(flip_action(a)) == a


def test_flip_swaps_left_right():
    tl = Action(space=DISCRETE6, index=D6_NAMES.index("turn-left"))
    assert flip_action(tl).name == "turn-right"
    tlf = Action(space=DISCRETE6, index=D6_NAMES.index("turn-left-and-move-forward"))
    assert flip_action(tlf).name == "turn-right-and-move-forward"
    fwd = Action(space=DISCRETE6, index=D6_NAMES.index("move-forward"))
    assert flip_action(fwd).name == "move-forward"
    c = Action(space=CONTINUOUS2, velocity=(5.0, 3.0))
    assert flip_action(c).velocity == (5.0, -3.0)


def test_flip_commutes_with_virtual_up_to_angular_sign():
    for space, n in ((DISCRETE6, 6), (DISCRETE9, 9)):
        for i in range(n):
            a = Action(space=space, index=i)
            v = to_virtual(a)
            vf = to_virtual(flip_action(a))
            assert vf.linear == v.linear
            assert vf.angular == -v.angular


def test_step_kinematics_conversion():
    k = StepKinematics()
    lin, ang = k.world_velocity(to_virtual(Action(space=DISCRETE9, index=0)))
    assert lin == pytest.approx(0.5)
    assert ang == 0.0
    lin, ang = k.world_velocity(to_virtual(Action(space=DISCRETE9, index=4)))
    assert lin == 0.0
    assert ang == pytest.approx(10.0 * 3.141592653589793 / 180.0)


def test_export_command_stream(tmp_path):
    actions = [Action(space=DISCRETE9, index=0), Action(space=DISCRETE9, index=4),
               Action(space=CONTINUOUS2, velocity=(40.0, -10.0))]
    path = tmp_path / "commands.jsonl"
    n = export_command_stream(actions, path)
    assert n == 3
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert [r["timestamp_ms"] for r in lines] == [0, 50, 100]
    assert lines[0] == {"timestamp_ms": 0, "linear_mps": 0.4, "angular_radps": 0.0}
    assert lines[1]["angular_radps"] == 0.6
    assert lines[2]["linear_mps"] == pytest.approx(0.2)
    assert lines[2]["angular_radps"] == pytest.approx(-0.3)
