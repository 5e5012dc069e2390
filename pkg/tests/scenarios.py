"""Scripted transitions probing every success threshold from both sides.

Each scenario builds a (prev, next) pair by hand, evaluates one predicate
on it and states the documented outcome. Boundary values sit at 0.9x and
1.1x of the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from deskbench import geom
from deskbench import predicates as P
from deskbench.config import CONFIG
from deskbench.geom import Box, Pose
from deskbench.world import EE, Event, WorldObject, infer_supports, make_state, settle

LO, HI = 0.9, 1.1


@dataclass
class Scenario:
    name: str
    threshold: str
    expect: bool
    run: Callable[[], bool]


def _obj(oid, x=0.0, y=0.0, half=0.02, yaw=0.0, z=None, hz=None):
    hz = half if hz is None else hz
    return WorldObject(oid, Box(half, half, hz), Pose.from_xyz_yaw(x, y, hz if z is None else z, yaw),
                       "red")


def _state(*objs, ee=(0.0, -0.3, 0.3)):
    s = make_state(list(objs), Pose(np.array(ee, dtype=float)))
    s.supports = infer_supports(s)
    return s


def _after(s0, edit, events=()):
    s1 = s0.copy()
    edit(s1)
    s1.step = s0.step + 1
    s1.supports = infer_supports(s1)
    s1.events = list(events)
    return s1


def outcome(tree, s0, s1) -> bool:
    P.start(tree, s0)
    _, ok = P.evaluate(tree, s0, s1)
    return ok


def _move(oid, dx=0.0, dy=0.0, dz=0.0, yaw=None, q=None):
    def edit(s):
        o = s[oid]
        p = o.pose.position + np.array([dx, dy, dz])
        orient = o.pose.orientation if q is None else q
        if yaw is not None:
            orient = geom.yaw_quat(o.pose.yaw + yaw)
        o.pose = Pose(p, orient)
    return edit


# ------------------------------------------------------------ pose 0.05


def pose_case(factor, split_rot):
    tol = CONFIG.pose_tolerance
    w = CONFIG.pose_rot_weight

    def run():
        s0 = _state(_obj("a"))
        target = s0["a"].pose
        err = factor * tol
        rot = err / 2 / w if split_rot else 0.0
        pos = err / 2 if split_rot else err
        s1 = _after(s0, _move("a", dx=pos, yaw=rot))
        return outcome(P.AtPose("a", target), s0, s1)
    return run


def ee_pose_case(factor):
    def run():
        s0 = _state()
        target = Pose(s0.ee.pose.position + np.array([factor * CONFIG.pose_tolerance, 0, 0]))
        return outcome(P.EEAtPose(target), s0, s0.copy())
    return run


def position_case(factor):
    def run():
        s0 = _state(_obj("a"))
        target = s0["a"].pose.position + np.array([0.0, factor * CONFIG.position_tolerance, 0.0])
        return outcome(P.AtPos("a", target), s0, _after(s0, lambda s: None))
    return run


# --------------------------------------------------------- rotate 5 deg / 5 cm


def rotate_angle_case(factor):
    def run():
        s0 = _state(_obj("a"))
        err = math.radians(factor * CONFIG.rotate_angle_tol_deg)
        s1 = _after(s0, _move("a", yaw=-math.radians(90) + err))
        return outcome(P.RotatedBy("a", 90, "clockwise"), s0, s1)
    return run


def rotate_drift_case(factor):
    def run():
        s0 = _state(_obj("a"))
        s1 = _after(s0, _move("a", dx=factor * CONFIG.rotate_pos_tol, yaw=math.radians(60)))
        return outcome(P.RotatedBy("a", 60, "anticlockwise"), s0, s1)
    return run


# ------------------------------------------------------ push 30% / 45 deg


def push_reduce_case(factor):
    def run():
        s0 = _state(_obj("a", 0, 0), _obj("g", 0.4, 0))
        s1 = _after(s0, _move("a", dx=0.4 * factor * CONFIG.push_reduce_fraction))
        return outcome(P.PushProgress("a", "g"), s0, s1)
    return run


def push_cone_case(factor):
    """Displacement at factor x 45 deg off the initial line; the goal moves so the
    distance condition holds either way and only the cone decides."""
    def run():
        s0 = _state(_obj("a", 0, 0), _obj("g", 0.4, 0))
        ang = math.radians(factor * CONFIG.push_cone_deg)
        d = 0.1
        new = np.array([d * math.cos(ang), d * math.sin(ang)])

        def edit(s):
            _move("a", dx=new[0], dy=new[1])(s)
            g = s["g"]
            g.pose = g.pose.with_position(np.array([new[0] + 0.2, new[1], g.pose.position[2]]))
        return outcome(P.PushProgress("a", "g"), s0, _after(s0, edit))
    return run


# ----------------------------------------------------------- touch 3 cm


def touch_case(factor):
    def run():
        s0 = _state(_obj("a"))
        s1 = _after(s0, _move("a", dx=factor * CONFIG.touch_max_move), [Event("contact", EE, "a")])
        return outcome(P.Touch("a", "gentle"), s0, s1)
    return run


def touch_push_case(factor):
    def run():
        s0 = _state(_obj("a"))
        s1 = _after(s0, _move("a", dy=factor * CONFIG.push_min_move), [Event("contact", EE, "a")])
        return outcome(P.Touch("a", "push"), s0, s1)
    return run


# --------------------------------------------------------------- topple 45


def topple_case(factor):
    def run():
        s0 = _state(_obj("a", hz=0.04))
        ang = math.radians(factor * CONFIG.topple_angle_deg)
        q = geom.quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), ang)
        s1 = _after(s0, _move("a", q=q), [Event("contact", EE, "a")])
        return outcome(P.Touch("a", "topple"), s0, s1)
    return run


# ------------------------------------------------ place: support and contact


def place_overlap_case(factor):
    """Object released over a base covering ``factor`` x the support fraction."""
    def run():
        base = _obj("b", 0, 0, half=0.05)
        s0 = _state(base, _obj("a", 0.3, 0.0, half=0.05))
        frac = factor * CONFIG.support_overlap

        def edit(s):
            # footprint overlap of two equal squares offset along x is 1 - dx / width
            dx = (1.0 - frac) * 0.1
            s["a"].pose = Pose.from_xyz_yaw(dx, 0.0, 0.2)
            s.supports.pop("a", None)
            settle(s, ["a"])
        return outcome(P.OnTop("a", "b"), s0, _after(s0, edit))
    return run


def place_rule_case(rule):
    """OnTop needs the object released (not held), off the ground and untouched."""
    def run():
        s0 = _state(_obj("b", 0, 0, half=0.05), _obj("a", 0.3, 0.0))

        def edit(s):
            if rule == "on_ground":
                return
            s["a"].pose = Pose.from_xyz_yaw(0.0, 0.0, 0.12)
            if rule == "held":
                s.ee.attached = "a"
                s.ee.suction_on = True
        events = [Event("contact", EE, "a")] if rule == "touching" else []
        s1 = _after(s0, edit, events)
        if rule == "held":
            s1.supports.pop("a", None)
        return outcome(P.OnTop("a", "b"), s0, s1)
    return run


def pick_case(factor, attached=True):
    def run():
        s0 = _state(_obj("a"))

        def edit(s):
            s["a"].pose = s["a"].pose.with_position(
                s["a"].pose.position + np.array([0, 0, factor * CONFIG.lift_clearance]))
            if attached:
                s.ee.attached = "a"
                s.ee.suction_on = True
        return outcome(P.Picked("a"), s0, _after(s0, edit))
    return run


def inside_case(factor):
    def run():
        from deskbench.world import WorldObject as W
        cont = W("bin", Box(0.1, 0.1, 0.04), Pose.from_xyz_yaw(0, 0, 0.04), "container",
                 kind="container", wall=0.01, static=True, graspable=False)
        s0 = _state(cont, _obj("a", 0.4, 0.0))
        inner = 0.09  # cavity half-width
        # overlap fraction of a 0.04 square shifted past the cavity edge
        frac = factor * CONFIG.inside_overlap
        frac = min(frac, 1.0)
        x = inner - 0.02 + (1.0 - frac) * 0.04

        def edit(s):
            s["a"].pose = Pose.from_xyz_yaw(x, 0.0, cont.floor_top + 0.02)
        return outcome(P.Inside("a", "bin"), s0, _after(s0, edit))
    return run


SCENARIOS = [
    Scenario("object pose, position error", "pose 0.05", True, pose_case(LO, False)),
    Scenario("object pose, position error", "pose 0.05", False, pose_case(HI, False)),
    Scenario("object pose, mixed error", "pose 0.05", True, pose_case(LO, True)),
    Scenario("object pose, mixed error", "pose 0.05", False, pose_case(HI, True)),
    Scenario("EE pose", "pose 0.05", True, ee_pose_case(LO)),
    Scenario("EE pose", "pose 0.05", False, ee_pose_case(HI)),
    Scenario("object position", "position 0.05", True, position_case(LO)),
    Scenario("object position", "position 0.05", False, position_case(HI)),
    Scenario("rotation angle error", "rotate 5 deg", True, rotate_angle_case(LO)),
    Scenario("rotation angle error", "rotate 5 deg", False, rotate_angle_case(HI)),
    Scenario("rotation drift", "rotate 5 cm", True, rotate_drift_case(LO)),
    Scenario("rotation drift", "rotate 5 cm", False, rotate_drift_case(HI)),
    Scenario("push distance reduction", "push 30%", True, push_reduce_case(HI)),
    Scenario("push distance reduction", "push 30%", False, push_reduce_case(LO)),
    Scenario("push direction cone", "push 45 deg", True, push_cone_case(LO)),
    Scenario("push direction cone", "push 45 deg", False, push_cone_case(HI)),
    Scenario("gentle touch displacement", "touch 3 cm", True, touch_case(LO)),
    Scenario("gentle touch displacement", "touch 3 cm", False, touch_case(HI)),
    Scenario("touch-push displacement", "touch-push 10 cm", True, touch_push_case(HI)),
    Scenario("touch-push displacement", "touch-push 10 cm", False, touch_push_case(LO)),
    Scenario("topple tilt", "topple 45 deg", True, topple_case(HI)),
    Scenario("topple tilt", "topple 45 deg", False, topple_case(LO)),
    Scenario("place support overlap", "place overlap 0.25", True, place_overlap_case(HI)),
    Scenario("place support overlap", "place overlap 0.25", False, place_overlap_case(LO)),
    Scenario("place released on base", "place contact rules", True, place_rule_case("ok")),
    Scenario("place while held", "place contact rules", False, place_rule_case("held")),
    Scenario("place left on ground", "place contact rules", False, place_rule_case("on_ground")),
    Scenario("place with EE touching", "place contact rules", False, place_rule_case("touching")),
    Scenario("pick lift clearance", "pick rules", True, pick_case(HI)),
    Scenario("pick lift clearance", "pick rules", False, pick_case(LO)),
    Scenario("pick not held", "pick rules", False, pick_case(3.0, attached=False)),
    Scenario("inside overlap", "inside 0.9", True, inside_case(HI)),
    Scenario("inside overlap", "inside 0.9", False, inside_case(LO)),
]
