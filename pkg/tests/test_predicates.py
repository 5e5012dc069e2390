import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deskbench import predicates as P
from deskbench.config import CONFIG
from deskbench.geom import Pose
from deskbench.world import EE, Event, infer_supports
from helpers import cube, state_with
from scenarios import SCENARIOS
from strategies import (base_state, check_latched_and_absorbing, check_sequence_order,
                        check_set_bounds, moves, trees)

@settings(max_examples=150, deadline=None)
@given(trees, moves)
def test_latched_success_and_failure_absorption(tree, trace):
    check_latched_and_absorbing(tree, trace)


@settings(max_examples=150, deadline=None)
@given(trees, moves)
def test_sequence_order_soundness(tree, trace):
    check_sequence_order(tree, trace)


@settings(max_examples=150, deadline=None)
@given(trees, moves)
def test_set_aggregation_bounds(tree, trace):
    check_set_bounds(tree, trace)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 0.5), st.floats(0.0, 0.5))
def test_at_pos_reward_monotone_in_distance(d1, d2):
    s0 = state_with(cube("a", 0, 0))
    rewards = []
    for d in (d1, d2):
        leaf = P.AtPos("a", [0.3, 0.0, 0.02])
        P.start(leaf, s0)
        s1 = s0.copy()
        s1["a"].pose = Pose(np.array([0.3 - d, 0.0, 0.02]))
        s1.supports = infer_supports(s1)
        r, ok = P.evaluate(leaf, s0, s1)
        assert ok == (d <= CONFIG.position_tolerance)
        rewards.append((d, r, ok))
    (da, ra, oka), (db, rb, okb) = sorted(rewards)
    assert ra >= rb
    assert (ra == 1.0) == oka and (rb == 1.0) == okb


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 0.4))
def test_ee_at_pos_reward_is_one_iff_within_tolerance(d):
    s0 = state_with()
    target = s0.ee.pose.position + np.array([d, 0, 0])
    leaf = P.EEAtPos(target)
    P.start(leaf, s0)
    r, ok = P.evaluate(leaf, s0, s0.copy())
    assert ok == (d <= CONFIG.position_tolerance) and (r == 1.0) == ok


@pytest.mark.parametrize("sc", SCENARIOS, ids=lambda s: f"{s.threshold}-{s.name}-{s.expect}")
def test_threshold_scenarios(sc):
    assert sc.run() is sc.expect


def test_sequence_child_waits_one_step():
    s0 = base_state()
    a0 = s0["a"].pose.position
    seq = P.Sequence([P.AtPos("a", a0, tol=0.01), P.AtPos("b", s0["b"].pose.position, tol=0.01)])
    P.start(seq, s0)
    s1 = s0.copy()
    s1.step = 1
    r, ok = P.evaluate(seq, s0, s1)
    # both conditions hold, but the second child only becomes active now
    assert not ok and seq.cursor == 1 and r == pytest.approx(0.5)
    s2 = s1.copy()
    s2.step = 2
    assert P.evaluate(seq, s1, s2)[1]
    assert [c.done_step for c in seq.children] == [1, 2]


def test_guard_failure_fails_set():
    s0 = base_state()
    tree = P.Set([P.AtPos("a", [0.5, 0.5, 0.02]), P.NotTouching(["b"])])
    P.start(tree, s0)
    s1 = s0.copy()
    s1.events = [Event("contact", EE, "b")]
    r, ok = P.evaluate(tree, s0, s1)
    assert tree.status == P.FAILED and r == 0.0 and not ok


def test_no_grasp_fails_on_grasp():
    s0 = base_state()
    leaf = P.AtPos("a", s0["a"].pose.position, no_grasp=True)
    P.start(leaf, s0)
    s1 = s0.copy()
    s1.events = [Event("grasp", EE, "a")]
    P.evaluate(leaf, s0, s1)
    assert leaf.status == P.FAILED


def test_missing_object_raises():
    with pytest.raises(P.PredicateError):
        P.start(P.AtPos("zzz", [0, 0, 0]), base_state())


def test_rotate_angle_validation():
    with pytest.raises(ValueError):
        P.RotatedBy("a", 45)
    with pytest.raises(ValueError):
        P.RotatedBy("a", 90, "sideways")


def test_describe_templates():
    names = {"a": "red cube", "b": "green plate"}
    assert P.OnTop("a", "b").describe(names) == "put red cube on green plate"
    assert P.Picked("a").describe(names) == "pick up red cube"
    assert math.isclose(P.RotatedBy("a", 30).target, -math.radians(30))
