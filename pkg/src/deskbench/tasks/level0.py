"""Base motor-skill tasks."""

from __future__ import annotations

import math

import numpy as np

from .. import geom
from .. import predicates as P
from ..geom import Box, Pose, Sphere
from ..world import Goal
from .base import (SceneBuilder, _Retry, angular, fits, overlap_ok, prompt, pushable,
                   register, stackable, tall)

VERBS = ("Pick up", "Grab", "Lift")
ANGLES = P.ROTATE_ANGLES
DIRECTIONS = ("clockwise", "anticlockwise")


def distractors(b: SceneBuilder, lo: int, hi: int, exclude_textures=(), filt=None,
                clearance: float = 0.04, avoid=()):
    out = []
    for _ in range(int(b.rng.integers(lo, hi + 1))):
        o = b.new_object(b.template(filt), b.texture(exclude_textures))
        if o.texture in exclude_textures:
            raise _Retry()
        out.append(b.place(o, clearance=clearance, avoid=avoid))
    return out


def ks_list(n: int) -> str:
    refs = [f"{{ks:{i}}}" for i in range(n)]
    if n == 1:
        return refs[0]
    return ", ".join(refs[:-1]) + " followed by " + refs[-1]


def free_ee_point(b: SceneBuilder, lo_z: float = 0.18, hi_z: float = 0.45, away=(),
                  min_gap: float = 0.1) -> np.ndarray:
    for _ in range(200):
        p = np.array([b.rng.uniform(-0.35, 0.35), b.rng.uniform(-0.35, 0.35),
                      b.rng.uniform(lo_z, hi_z)])
        if all(np.linalg.norm(p - q) >= min_gap for q in away):
            return p
    raise _Retry()


@register("L0", "match_pose")
def match_pose(b: SceneBuilder):
    distractors(b, 0, 2)
    n = int(b.rng.integers(1, 4))
    poses, pts = [], [b.ee_pose.position]
    for _ in range(n):
        p = free_ee_point(b, away=pts)
        pts.append(p)
        poses.append(Pose(p, geom.yaw_quat(b.rng.uniform(-math.pi / 2, math.pi / 2))))
    tree = P.Sequence([P.EEAtPose(p) for p in poses]) if n > 1 else P.EEAtPose(poses[0])
    segs = prompt(f"Match the pose of the end effector in {ks_list(n)}.")
    return tree, segs, {"keysteps": [{"objects": {}, "ee": p} for p in poses]}


@register("L0", "move_without_hitting")
def move_without_hitting(b: SceneBuilder):
    start = b.ee_pose.position
    for _ in range(100):
        goal = free_ee_point(b, 0.15, 0.4)
        if np.linalg.norm(goal - start) >= 0.3:
            break
    else:
        raise _Retry()
    goal_pose = Pose(goal, geom.yaw_quat(b.rng.uniform(-math.pi / 2, math.pi / 2)))
    r_ee = b.config.ee_radius
    ends = [start + [0, 0, r_ee], goal + [0, 0, r_ee]]
    placed = []
    for i in range(int(b.rng.integers(1, 6))):
        for _ in range(200):
            if b.rng.random() < 0.5:
                shape = Sphere(float(b.rng.uniform(0.025, 0.045)))
                r = shape.radius
            else:
                shape = Box(*(float(v) for v in b.rng.uniform(0.02, 0.04, size=3)))
                r = float(np.linalg.norm([shape.hx, shape.hy, shape.hz]))
            t = b.rng.uniform(0.2, 0.8)
            c = start + t * (goal - start) + b.rng.uniform(-0.06, 0.06, size=3)
            if c[2] - r < 0.06:
                continue
            if any(np.linalg.norm(c - e) < r + r_ee + 0.05 for e in ends):
                continue
            if any(np.linalg.norm(c - pc) < r + pr + 0.01 for pc, pr in placed):
                continue
            break
        else:
            raise _Retry()
        placed.append((c, r))
        yaw = float(b.rng.uniform(-math.pi, math.pi))
        b.fixture(f"obstacle{i}", "obstacle", shape, Pose(c, geom.yaw_quat(yaw)), "obstacle",
                  "grey obstacle")
    ids = [o.id for o in b.objects if o.kind == "obstacle"]
    tree = P.Set([P.EEAtPose(goal_pose), P.NotTouching(ids)])
    segs = prompt("Match the pose of the end effector in {ks:0} without hitting any objects.")
    return tree, segs, {"keysteps": [{"objects": {}, "ee": goal_pose}]}


@register("L0", "pick")
def pick(b: SceneBuilder):
    target = b.place(b.new_object(b.template(), b.texture()))
    variant = int(b.rng.integers(6))
    by_tex = variant >= 3
    distractors(b, 0, 3, exclude_textures=(target.texture,) if by_tex else ())
    verb = VERBS[variant % 3]
    if by_tex:
        segs = prompt(f"{verb} the object with {{tex:t}} texture.", t=target.texture)
    else:
        segs = prompt(f"{verb} the {{obj:t}}.", t=target.id)
    return P.Picked(target.id), segs, {"metadata": {"variant": variant}}


def _obj_or_tex(b: SceneBuilder, obj_tpl: str, tex_tpl: str, objs: dict) -> tuple[list, int]:
    variant = int(b.rng.integers(2))
    if variant == 0:
        return prompt(obj_tpl, **{k: o.id for k, o in objs.items()}), 0
    texs = [o.texture for o in objs.values()]
    if len(set(texs)) != len(texs):
        raise _Retry()
    others = [o.texture for o in b.objects if o.id not in {v.id for v in objs.values()}]
    if set(texs) & set(others):
        raise _Retry()
    return prompt(tex_tpl, **{k: o.texture for k, o in objs.items()}), 1


@register("L0", "place")
def place(b: SceneBuilder):
    held = b.new_object(b.template(), b.texture())
    b.attach(held)
    base = b.place(b.new_object(b.template(stackable), b.texture()))
    if not overlap_ok(held, base):
        raise _Retry()
    distractors(b, 0, 2)
    segs, variant = _obj_or_tex(
        b, "Put {obj:a} on {obj:b}.",
        "Put the object with {tex:a} texture on the object with {tex:b} texture.",
        {"a": held, "b": base})
    return P.OnTop(held.id, base.id), segs, {"metadata": {"variant": variant}}


@register("L0", "push")
def push(b: SceneBuilder):
    goal = b.place(b.new_object(b.template(), b.texture()))
    mover = b.new_object(b.template(pushable), b.texture())
    gx, gy = goal.pose.position[:2]
    for _ in range(200):
        d = b.rng.uniform(0.25, 0.4)
        ang = b.rng.uniform(-math.pi, math.pi)
        xy = np.array([gx + d * math.cos(ang), gy + d * math.sin(ang)])
        if np.any(np.abs(xy) > 0.42):
            continue
        if b._clear(mover, xy, 0.04):
            break
    else:
        raise _Retry()
    yaw = math.atan2(gy - xy[1], gx - xy[0]) + int(b.rng.integers(4)) * math.pi / 2
    mover.pose = Pose(mover.pose.position, geom.yaw_quat(yaw))
    b.set_xy(mover, xy)
    b.add(mover)
    # keep the push lane and the approach side free
    lane = [(xy[0] + t * (gx - xy[0]), xy[1] + t * (gy - xy[1]), 0.14) for t in np.linspace(-0.4, 1, 8)]
    distractors(b, 0, 1, avoid=lane)
    segs, variant = _obj_or_tex(
        b, "Push {obj:a} towards {obj:b}.",
        "Push the object with {tex:a} texture towards the object with {tex:b} texture.",
        {"a": mover, "b": goal})
    return P.PushProgress(mover.id, goal.id), segs, {"metadata": {"variant": variant}}


def _rotation(b: SceneBuilder) -> tuple[int, str]:
    return int(ANGLES[int(b.rng.integers(len(ANGLES)))]), DIRECTIONS[int(b.rng.integers(2))]


@register("L0", "rotate")
def rotate(b: SceneBuilder):
    n = int(b.rng.integers(1, 3))
    objs = [b.place(b.new_object(b.template(angular), b.texture())) for _ in range(n)]
    distractors(b, 0, 2)
    rots = [_rotation(b) for _ in objs]
    leaves = [P.RotatedBy(o.id, a, d) for o, (a, d) in zip(objs, rots)]
    tree = P.Sequence(leaves) if n > 1 else leaves[0]
    variant = int(b.rng.integers(2))
    parts, binds = [], {}
    for i, (o, (a, d)) in enumerate(zip(objs, rots)):
        ref = f"{{obj:o{i}}}" if variant == 0 else f"the object with {{tex:o{i}}} texture"
        parts.append(f"{ref} {a} degrees {d}")
        binds[f"o{i}"] = o.id if variant == 0 else o.texture
    if variant == 1:
        texs = [o.texture for o in objs]
        others = [o.texture for o in b.objects if o not in objs]
        if len(set(texs)) != len(texs) or set(texs) & set(others):
            raise _Retry()
    text = "Rotate " + ", then rotate ".join(parts) + "."
    return tree, prompt(text, **binds), {"metadata": {"variant": variant}}


def _throw(b: SceneBuilder, topple: bool):
    held = b.new_object(b.template(fits(0.05)), b.texture())
    b.attach(held)
    target = b.place(b.new_object(b.template(tall if topple else None), b.texture()),
                     clearance=0.08 if topple else 0.05)
    distractors(b, 0, 2, clearance=0.06)
    variant = int(b.rng.integers(2))
    tail = " such that {obj:b} falls over" if topple else ""
    text = ("Throw {obj:a} to {obj:b}" if variant == 0 else "Hit {obj:b} with {obj:a}") + tail + "."
    tree = P.Hit(held.id, target.id, require_topple=topple)
    return tree, prompt(text, a=held.id, b=target.id), {"metadata": {"variant": variant}}


@register("L0", "throw")
def throw(b: SceneBuilder):
    return _throw(b, False)


@register("L0", "throw_topple")
def throw_topple(b: SceneBuilder):
    return _throw(b, True)


@register("L0", "touch")
def touch(b: SceneBuilder):
    target = b.place(b.new_object(b.template(), b.texture()))
    distractors(b, 0, 3)
    return P.TouchedGently(target.id), prompt("Touch {obj:a}.", a=target.id)


@register("L0", "touch_push")
def touch_push(b: SceneBuilder):
    target = b.place(b.new_object(b.template(pushable), b.texture()), region=((-0.3, 0.3), (-0.3, 0.3)))
    distractors(b, 0, 2, clearance=0.06)
    return P.TouchPushed(target.id), prompt("Touch and push {obj:a}.", a=target.id)


@register("L0", "touch_topple")
def touch_topple(b: SceneBuilder):
    n = int(b.rng.integers(1, 3))
    objs = [b.place(b.new_object(b.template(tall), b.texture()), clearance=0.12) for _ in range(n)]
    distractors(b, 0, 1, clearance=0.12)
    leaves = [P.TouchToppled(o.id) for o in objs]
    tree = P.Set(leaves) if n > 1 else leaves[0]
    refs = ", ".join(f"{{obj:o{i}}}" for i in range(n))
    return tree, prompt(f"Touch and topple {refs}.", **{f"o{i}": o.id for i, o in enumerate(objs)})


@register("L0", "trace")
def trace(b: SceneBuilder):
    distractors(b, 0, 2)
    n = int(b.rng.integers(2, 6))
    pts = [b.ee_pose.position]
    for _ in range(n):
        p = free_ee_point(b, 0.15, 0.4, away=pts)
        pts.append(p)
        b.goals.append(Goal(p))
    return (P.TraceGoals(n),
            prompt("Trace the sequence of goals by moving to the next green goal."))
