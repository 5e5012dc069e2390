"""Shared fixtures-in-code for the test suite."""

from __future__ import annotations

import hashlib
import os

import numpy as np
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from deskbench.geom import Box, Pose
from deskbench.recorder import EpisodeRecord
from deskbench.world import WorldObject, make_state

finite32 = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False, width=32)
json_float = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
text = st.text(max_size=12)


def cube(oid="c", x=0.0, y=0.0, half=0.02, texture="red", yaw=0.0, z=None):
    z = half if z is None else z
    return WorldObject(oid, Box(half, half, half), Pose.from_xyz_yaw(x, y, z, yaw), texture)


def state_with(*objs, ee=(0.0, -0.1, 0.35)):
    return make_state(list(objs), Pose(np.array(ee, dtype=float)))


def images(n, max_side=4):
    return st.lists(hnp.arrays(np.uint8, st.tuples(st.integers(1, max_side),
                                                   st.integers(1, max_side), st.just(3))),
                    min_size=n, max_size=n)


@st.composite
def episode_records(draw, max_steps=6):
    n = draw(st.integers(0, max_steps))
    cams = draw(st.lists(st.sampled_from(["base", "hand", "side"]), unique=True, max_size=3))
    actions = draw(hnp.arrays(np.float32, (n, 7), elements=finite32))
    rewards = draw(hnp.arrays(np.float32, (n,), elements=finite32))
    first = draw(st.integers(0, n))
    success = np.array([0] * first + [1] * (n - first), dtype=np.uint8)
    frames = {c: draw(images(n)) for c in cams}
    box = st.tuples(json_float, json_float, json_float, json_float, st.booleans()).map(list)
    boxes = [draw(st.dictionaries(st.sampled_from(cams or ["base"]),
                                  st.dictionaries(st.text(min_size=1, max_size=4), box, max_size=3),
                                  max_size=2)) for _ in range(n)]
    anns = [{"task": draw(text), "subtask": draw(text), "step": draw(text)} for _ in range(n)]
    idx = draw(st.lists(st.integers(0, max(n - 1, 0)), max_size=3)) if n else []
    keysteps = [{"index": i, "predicates": draw(st.lists(text, max_size=2))} for i in sorted(idx)]
    meta = {"task": draw(text), "level": draw(st.sampled_from(["L0", "L1", "L2"])),
            "seed": draw(st.integers(0, 2 ** 31)), "split": "train",
            "prompt": [{"type": "text", "text": draw(text)}],
            "success": bool(success[-1]) if n else draw(st.booleans()), "length": n}
    cameras = {c: {"width": draw(json_float), "resolution": [4, 4]} for c in cams}
    return EpisodeRecord(meta, actions, rewards, success, frames, boxes, anns, keysteps,
                         draw(images(len(keysteps))), draw(images(draw(st.integers(0, 3)))),
                         cameras)


def tree_digest(root) -> str:
    """SHA-256 over relative paths and file bytes of a directory tree."""
    h = hashlib.sha256()
    for d, subdirs, files in os.walk(root):
        subdirs.sort()
        for f in sorted(files):
            p = os.path.join(d, f)
            h.update(os.path.relpath(p, root).encode())
            with open(p, "rb") as fh:
                h.update(fh.read())
    return h.hexdigest()


def random_plan_query(rng, seed=0):
    """A solvable one-obstacle query: a box sits between start and goal tip positions."""
    from deskbench.planner import PlanQuery
    hx, hy, hz = rng.uniform(0.03, 0.12, size=3)
    cx, cy = rng.uniform(-0.2, 0.2, size=2)
    ob = (Box(hx, hy, hz), Pose.from_xyz_yaw(cx, cy, hz, rng.uniform(-np.pi, np.pi)))
    ang = rng.uniform(-np.pi, np.pi)
    u = np.array([np.cos(ang), np.sin(ang)])
    r = np.hypot(hx, hy) + 0.06
    zs = rng.uniform(0.01, hz * 1.5, size=2)
    start = np.array([cx, cy, 0.0]) + np.append(-u * r, zs[0])
    goal = np.array([cx, cy, 0.0]) + np.append(u * r, zs[1])
    return PlanQuery(Pose(start), Pose(goal), [ob], seed=seed)


def path_clear(path, obstacles, spacing=0.005, radius=None):
    """Independent check: exact EE sphere vs obstacle collision every ``spacing`` metres."""
    from deskbench import geom
    from deskbench.config import CONFIG
    from deskbench.geom import Sphere
    r = CONFIG.ee_radius if radius is None else radius
    pts = path.positions
    for a, b in zip(pts, pts[1:]):
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / spacing)))
        for t in np.linspace(0, 1, n + 1):
            c = a + t * (b - a) + np.array([0, 0, r])
            if c[2] - r < -1e-9:
                return False
            for s, p in obstacles:
                if geom.collide(Sphere(r), Pose(c), s, p) is not None:
                    return False
    return True
