"""Long-horizon tasks chaining several skills."""

from __future__ import annotations

import math

import numpy as np

from .. import predicates as P
from ..geom import Box, Pose
from ..world import BalanceScale
from .base import (SceneBuilder, _Retry, all_of, angular, fits, not_ball, not_tall, overlap_ok,
                   prompt, pushable, register, scale_shape, stackable,
                   template_min_height)
from .level0 import _rotation, distractors
from .level1 import AREA_HALF, AREA_THICK

PAN_X = 0.2
PAN_Y = 0.25
PAN_HALF = 0.1
PAN_THICK = 0.0025
SWAP_OFFSET = (0.14, 0.22)
FAR_AREAS = ((-0.82, 0.2), (0.82, 0.2), (0.0, 0.82))


def _heavy_enough(t) -> bool:
    return template_min_height(t) >= 0.04


@register("L2", "balance")
def balance(b: SceneBuilder):
    for side, x in (("left", -PAN_X), ("right", PAN_X)):
        b.fixture(f"pan_{side}", "pan", Box(PAN_HALF, PAN_HALF, PAN_THICK),
                  Pose(np.array([x, PAN_Y, PAN_THICK])), "pan", f"{side} pan")
    b.scale = BalanceScale(np.array([0.0, PAN_Y]), PAN_X, "pan_left", "pan_right")
    T = b.template(all_of(not_ball, fits(0.04), _heavy_enough))
    s0 = T.sample(b.rng)
    for _ in range(100):
        left = list(b.rng.integers(1, 4, size=int(b.rng.integers(1, 4))))
        right = list(b.rng.integers(1, 4, size=int(b.rng.integers(1, 4))))
        if sum(left) == sum(right) and len(left) + len(right) >= 2:
            break
    else:
        raise _Retry()
    units = [int(k) for k in left + right]
    order = b.rng.permutation(len(units))
    objs = []
    for i in order:
        shape = scale_shape(s0, z=units[i] / 2)
        o = b.new_object(T, b.texture(), shape=shape)
        objs.append(b.place(o, region=((-0.42, 0.42), (-0.38, 0.05))))
    refs = ", ".join(f"{{obj:o{i}}}" for i in range(len(objs) - 1)) + f" and {{obj:o{len(objs) - 1}}}"
    segs = prompt(f"Put {refs} on the scale so that it stays balanced.",
                  **{f"o{i}": o.id for i, o in enumerate(objs)})
    meta = {"units": {o.id: units[i] for o, i in zip(objs, order)}}
    return P.Balanced([o.id for o in objs]), segs, {"metadata": meta}


@register("L2", "sort_stack")
def sort_stack(b: SceneBuilder):
    n = int(b.rng.integers(2, 4))
    leaves = []
    for tex in b.distinct_textures(n):
        T = b.template(all_of(stackable, fits(0.045)))
        s0 = T.sample(b.rng)
        small = b.place(b.new_object(T, tex, shape=s0, unique=False))
        big = b.place(b.new_object(T, tex, shape=scale_shape(s0, xy=1.35), unique=False))
        leaves.append(P.OnTop(small.id, big.id))
    return P.Set(leaves), prompt("Stack the objects with the same texture, the smaller one on top.")


@register("L2", "stack_topple")
def stack_topple(b: SceneBuilder):
    base = b.place(b.new_object(b.template(all_of(stackable, fits(0.05))), b.texture()),
                   clearance=0.1)
    mid = b.place(b.new_object(b.template(stackable), b.texture()), clearance=0.1)
    # the top piece must be tall enough to be tipped over by a sideways sweep
    tips = all_of(stackable, lambda t: template_min_height(t) >= 0.036)
    top = b.place(b.new_object(b.template(tips), b.texture()), clearance=0.1)
    if not (overlap_ok(mid, base) and overlap_ok(top, mid)):
        raise _Retry()
    distractors(b, 0, 1, clearance=0.12)
    tree = P.Sequence([P.OnTop(mid.id, base.id), P.OnTop(top.id, mid.id),
                       P.ToppleStructure([base.id, mid.id, top.id])])
    segs = prompt("Stack {obj:b} on {obj:a}, then {obj:c} on {obj:b}, and then topple the stack.",
                  a=base.id, b=mid.id, c=top.id)
    return tree, segs


def _frame(theta: float):
    return np.array([math.cos(theta), math.sin(theta)]), np.array([-math.sin(theta), math.cos(theta)])


@register("L2", "swap_push")
def swap_push(b: SceneBuilder):
    filt = all_of(angular, pushable, not_tall, fits(0.045))
    theta = float(b.rng.uniform(-math.pi, math.pi))
    u, v = _frame(theta)
    du = float(b.rng.uniform(*SWAP_OFFSET)) * (1 if b.rng.random() < 0.5 else -1)
    dv = float(b.rng.uniform(*SWAP_OFFSET)) * (1 if b.rng.random() < 0.5 else -1)
    a0 = b.rng.uniform(-0.3, 0.3, size=2)
    corners = [a0, a0 + du * u, a0 + du * u + dv * v, a0 + dv * v]
    if any(np.any(np.abs(c) > 0.34) for c in corners):
        raise _Retry()
    b0 = corners[2]
    a = b.new_object(b.template(filt), b.texture(), yaw=theta + int(b.rng.integers(4)) * math.pi / 2)
    bo = b.new_object(b.template(filt), b.texture(), yaw=theta + int(b.rng.integers(4)) * math.pi / 2)
    b.set_xy(a, a0)
    b.set_xy(bo, b0)
    b.add(a)
    b.add(bo)
    lane = []
    for p, q in zip(corners, corners[1:] + corners[:1]):
        lane += [(*(p + t * (q - p)), 0.16) for t in np.linspace(0, 1, 5)]
    distractors(b, 0, 2, avoid=lane)
    pa, pb = a.pose.position, bo.pose.position
    tree = P.Set([P.AtPos(a.id, [pb[0], pb[1], pa[2]], no_grasp=True),
                  P.AtPos(bo.id, [pa[0], pa[1], pb[2]], no_grasp=True)])
    segs = prompt("Swap {obj:a} and {obj:b} by pushing them, without picking them up.",
                  a=a.id, b=bo.id)
    return tree, segs, {"metadata": {"frame": theta, "offset": [du, dv]}}


@register("L2", "swap_rotate")
def swap_rotate(b: SceneBuilder):
    filt = all_of(angular, fits(0.05))
    a = b.place(b.new_object(b.template(filt), b.texture()), clearance=0.06)
    bo = b.new_object(b.template(filt), b.texture())
    for _ in range(50):
        b.place(bo, clearance=0.06, add=False)
        if np.linalg.norm(bo.pose.position[:2] - a.pose.position[:2]) >= 0.15:
            break
    else:
        raise _Retry()
    b.add(bo)
    distractors(b, 0, 2, clearance=0.06)
    angle, direction = _rotation(b)
    pa, pb = a.pose.position, bo.pose.position
    tree = P.Set([P.AtPos(a.id, [pb[0], pb[1], pa[2]]), P.AtPos(bo.id, [pa[0], pa[1], pb[2]]),
                  P.RotatedBy(a.id, angle, direction, pos_tol=None),
                  P.RotatedBy(bo.id, angle, direction, pos_tol=None)])
    segs = prompt(f"Swap {{obj:a}} and {{obj:b}}, and rotate both of them {angle} degrees "
                  f"{direction}.", a=a.id, b=bo.id)
    return tree, segs


@register("L2", "throw_sort")
def throw_sort(b: SceneBuilder):
    n = int(b.rng.integers(2, 4))
    spots = [FAR_AREAS[i] for i in sorted(b.rng.permutation(3)[:n])]
    leaves = []
    for i, (tex, (x, y)) in enumerate(zip(b.distinct_textures(n), spots)):
        area = b.fixture(f"area{i}", "area", Box(AREA_HALF, AREA_HALF, AREA_THICK),
                         Pose(np.array([x, y, AREA_THICK])), tex, f"{tex} area")
        o = b.place(b.new_object(b.template(all_of(not_tall, fits(0.05))), tex, unique=False),
                    region=((-0.35, 0.35), (-0.38, 0.3)), clearance=0.06)
        leaves.append(P.Sequence([P.Hit(o.id, area.id), P.OnTop(o.id, area.id)]))
    return (P.Set(leaves),
            prompt("Throw each object onto the out-of-reach area with the same texture."))
