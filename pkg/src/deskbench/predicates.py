"""Predicate trees: dense reward and latched success over world trajectories.

A tree is reset once on the initial state, then evaluated on every
``(prev, next)`` transition. Leaves observe every transition (so history
conditions such as "never grasped" cover the whole episode) but only test
their success condition while active. Node status moves
``pending -> active -> done`` or ``-> failed``; both end states are final.
"""

from __future__ import annotations

import math
from typing import Iterator, Optional

import numpy as np

from . import geom
from .config import CONFIG
from .geom import Pose
from .world import EE, TABLE, WorldState, vertical_axis_deviation

PENDING, ACTIVE, DONE, FAILED = "pending", "active", "done", "failed"
ROTATE_ANGLES = (30, 60, 90, 120, 150)


class PredicateError(KeyError):
    """A predicate refers to something the world does not contain."""


def _fmt(x) -> str:
    if isinstance(x, Pose):
        return "[" + ", ".join(_fmt(v) for v in x.to_list()) + "]"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    if isinstance(x, float):
        v = round(x, 6)
        return repr(0.0 if v == 0 else v)
    if isinstance(x, str):
        return x
    return repr(x)


def _shaped(d: float, d0: float) -> float:
    return max(0.0, min(1.0, 1.0 - d / d0)) if d0 > 0 else 1.0


class Node:
    """Base class; subclasses define ``_check`` (leaves) or aggregation."""

    guard = False
    children: tuple = ()

    def __init__(self):
        self.status = PENDING
        self.reward = 0.0
        self.done_step: Optional[int] = None

    @property
    def success(self) -> bool:
        return self.status == DONE

    # lifecycle ---------------------------------------------------------
    def reset(self, state: WorldState) -> None:
        self.status = PENDING
        self.reward = 0.0
        self.done_step = None
        for c in self.children:
            c.reset(state)
        self._capture(state)

    def _capture(self, state: WorldState) -> None:
        pass

    def activate(self, state: WorldState) -> None:
        if self.status == PENDING:
            self.status = ACTIVE
            self._on_activate(state)

    def _on_activate(self, state: WorldState) -> None:
        pass

    def evaluate(self, prev: WorldState, nxt: WorldState) -> tuple[float, bool]:
        raise NotImplementedError

    # structure ---------------------------------------------------------
    def walk(self) -> Iterator["Node"]:
        yield self
        for c in self.children:
            yield from c.walk()

    def leaves(self) -> list["Node"]:
        return [n for n in self.walk() if not n.children and not isinstance(n, (Set, Sequence))]

    def object_ids(self) -> list[str]:
        return []

    def text(self) -> str:
        raise NotImplementedError

    def __repr__(self) -> str:
        return self.text()

    def describe(self, names: dict) -> str:
        return self.text()

    def anchor(self, state: WorldState) -> np.ndarray:
        return state.ee.pose.position


# ---------------------------------------------------------------- leaves


class Leaf(Node):
    tol: float = 0.0

    def __init__(self):
        super().__init__()
        self.d0 = 1.0
        self.grasped = False
        self.contacted = False

    def reset(self, state: WorldState) -> None:
        for oid in self.object_ids():
            if oid not in state:
                raise PredicateError(f"{type(self).__name__} refers to missing object {oid!r}")
        self.grasped = False
        self.contacted = False
        super().reset(state)

    def _on_activate(self, state: WorldState) -> None:
        self.d0 = max(self.distance(state), 2.0 * max(self.tol, 1e-3))

    def distance(self, state: WorldState) -> float:
        return 0.0

    def _observe(self, prev: WorldState, nxt: WorldState) -> None:
        ids = set(self.object_ids())
        for e in nxt.events:
            if e.kind == "grasp" and e.b in ids:
                self.grasped = True
            if e.kind == "contact" and e.a == EE and e.b in ids:
                self.contacted = True

    def _check(self, prev: WorldState, nxt: WorldState) -> bool:
        raise NotImplementedError

    def _failed(self, prev: WorldState, nxt: WorldState) -> bool:
        return False

    def _reward(self, nxt: WorldState) -> float:
        return _shaped(self.distance(nxt), self.d0)

    def evaluate(self, prev: WorldState, nxt: WorldState) -> tuple[float, bool]:
        try:
            self._observe(prev, nxt)
            if self.status == ACTIVE:
                if self._failed(prev, nxt):
                    self.status = FAILED
                elif self._check(prev, nxt):
                    self.status = DONE
                    self.done_step = nxt.step
            if self.status == DONE:
                self.reward = 1.0
            elif self.status == FAILED:
                self.reward = 0.0
            elif self.status == ACTIVE:
                self.reward = float(min(1.0, max(0.0, self._reward(nxt))))
            else:
                self.reward = 0.0
        except KeyError as exc:
            raise PredicateError(str(exc)) from None
        return self.reward, self.status == DONE


def _resting(state: WorldState, oid: str) -> bool:
    o = state[oid]
    return state.ee.attached != oid and not o.in_flight


def _ee_touching(state: WorldState, oid: str) -> bool:
    return any(e.kind == "contact" and e.a == EE and e.b == oid for e in state.events)


class EEAtPos(Leaf):
    def __init__(self, target, tol: float = CONFIG.position_tolerance):
        super().__init__()
        self.target = np.asarray(target, dtype=float)
        self.tol = tol

    def distance(self, state):
        return float(np.linalg.norm(state.ee.pose.position - self.target))

    def _check(self, prev, nxt):
        return self.distance(nxt) <= self.tol

    def _reward(self, nxt):
        d = self.distance(nxt)
        return 1.0 if d <= self.tol else _shaped(d, self.d0)

    def anchor(self, state):
        return self.target

    def text(self):
        return f"EEAtPos({_fmt(self.target)}, {_fmt(self.tol)})"

    def describe(self, names):
        return "move the end effector to the goal position"


class EEAtPose(Leaf):
    def __init__(self, target: Pose, tol: float = CONFIG.pose_tolerance):
        super().__init__()
        self.target = target
        self.tol = tol

    def distance(self, state):
        return geom.pose_error(state.ee.pose, self.target).combined

    def _check(self, prev, nxt):
        return self.distance(nxt) < self.tol

    def anchor(self, state):
        return self.target.position

    def text(self):
        return f"EEAtPose({_fmt(self.target)}, {_fmt(self.tol)})"

    def describe(self, names):
        return "match the end effector pose"


class AtPos(Leaf):
    """Object center within ``tol`` of a point while resting.

    With ``no_grasp`` the object must never have been grasped.
    """

    def __init__(self, obj: str, target, tol: float = CONFIG.position_tolerance,
                 no_grasp: bool = False):
        super().__init__()
        self.obj = obj
        self.target = np.asarray(target, dtype=float)
        self.tol = tol
        self.no_grasp = no_grasp

    def object_ids(self):
        return [self.obj]

    def distance(self, state):
        return float(np.linalg.norm(state[self.obj].pose.position - self.target))

    def _failed(self, prev, nxt):
        return self.no_grasp and self.grasped

    def _check(self, prev, nxt):
        return (_resting(nxt, self.obj) and self.distance(nxt) <= self.tol
                and not _ee_touching(nxt, self.obj))

    def anchor(self, state):
        return state[self.obj].pose.position

    def text(self):
        flag = ", no_grasp" if self.no_grasp else ""
        return f"AtPos({self.obj}, {_fmt(self.target)}, {_fmt(self.tol)}{flag})"

    def describe(self, names):
        verb = "push" if self.no_grasp else "move"
        return f"{verb} {names.get(self.obj, self.obj)} to its goal position"


class AtPose(Leaf):
    def __init__(self, obj: str, target: Pose, tol: float = CONFIG.pose_tolerance):
        super().__init__()
        self.obj = obj
        self.target = target
        self.tol = tol

    def object_ids(self):
        return [self.obj]

    def distance(self, state):
        return geom.pose_error(state[self.obj].pose, self.target).combined

    def _check(self, prev, nxt):
        return (_resting(nxt, self.obj) and self.distance(nxt) < self.tol
                and not _ee_touching(nxt, self.obj))

    def anchor(self, state):
        return state[self.obj].pose.position

    def text(self):
        return f"AtPose({self.obj}, {_fmt(self.target)}, {_fmt(self.tol)})"

    def describe(self, names):
        return f"put {names.get(self.obj, self.obj)} back in place"


class OnTop(Leaf):
    """Object resting on ``base``, clear of the EE and off the ground."""

    def __init__(self, obj: str, base: str):
        super().__init__()
        self.obj = obj
        self.base = base

    def object_ids(self):
        return [self.obj, self.base]

    def distance(self, state):
        o, b = state[self.obj], state[self.base]
        goal = np.array([b.pose.position[0], b.pose.position[1],
                         b.zmax + (o.zmax - o.zmin) / 2])
        return float(np.linalg.norm(o.body.aabb[0] / 2 + o.body.aabb[1] / 2 - goal))

    def _check(self, prev, nxt):
        o = nxt[self.obj]
        return (_resting(nxt, self.obj) and nxt.supports.get(self.obj) == self.base
                and o.zmin > 1e-6 and not _ee_touching(nxt, self.obj))

    def anchor(self, state):
        return state[self.obj].pose.position

    def text(self):
        return f"OnTop({self.obj}, {self.base})"

    def describe(self, names):
        return f"put {names.get(self.obj, self.obj)} on {names.get(self.base, self.base)}"


class Inside(Leaf):
    """Object footprint mostly within a container's cavity, top below the rim."""

    def __init__(self, obj: str, container: str, overlap: float = CONFIG.inside_overlap):
        super().__init__()
        self.obj = obj
        self.container = container
        self.overlap = overlap

    def object_ids(self):
        return [self.obj, self.container]

    def distance(self, state):
        o, c = state[self.obj], state[self.container]
        return float(np.linalg.norm(o.pose.position[:2] - c.pose.position[:2])
                     + max(0.0, o.zmin - c.floor_top))

    def _check(self, prev, nxt):
        o, c = nxt[self.obj], nxt[self.container]
        if not _resting(nxt, self.obj) or _ee_touching(nxt, self.obj):
            return False
        frac = geom.footprint_fraction(o.footprint, c.interior())
        return frac >= self.overlap and o.zmax <= c.zmax + 1e-9

    def anchor(self, state):
        return state[self.obj].pose.position

    def text(self):
        return f"Inside({self.obj}, {self.container})"

    def describe(self, names):
        return f"put {names.get(self.obj, self.obj)} in {names.get(self.container, self.container)}"


class Picked(Leaf):
    """Object held by the EE with its bottom clear of the ground."""

    def __init__(self, obj: str, clearance: float = CONFIG.lift_clearance):
        super().__init__()
        self.obj = obj
        self.clearance = clearance

    def object_ids(self):
        return [self.obj]

    def distance(self, state):
        d = float(np.linalg.norm(state.ee.pose.position - state[self.obj].pose.position))
        return d if state.ee.attached != self.obj else 0.0

    def _check(self, prev, nxt):
        return nxt.ee.attached == self.obj and nxt[self.obj].zmin > self.clearance

    def _reward(self, nxt):
        if nxt.ee.attached == self.obj:
            return 0.9
        return 0.9 * _shaped(self.distance(nxt), self.d0)

    def anchor(self, state):
        return state[self.obj].pose.position

    def text(self):
        return f"Picked({self.obj})"

    def describe(self, names):
        return f"pick up {names.get(self.obj, self.obj)}"


class _TouchBase(Leaf):
    mode = ""

    def __init__(self, obj: str):
        super().__init__()
        self.obj = obj
        self.start = None

    def object_ids(self):
        return [self.obj]

    def _capture(self, state):
        self.start = state[self.obj].pose.position.copy()

    def moved(self, state) -> float:
        return float(np.linalg.norm(state[self.obj].pose.position - self.start))

    def distance(self, state):
        o = state[self.obj]
        top = np.array([o.pose.position[0], o.pose.position[1], o.zmax])
        return float(np.linalg.norm(state.ee.pose.position - top))

    def _reward(self, nxt):
        return 0.5 * _shaped(self.distance(nxt), self.d0) + (0.5 if self.contacted else 0.0)

    def anchor(self, state):
        return state[self.obj].pose.position

    def text(self):
        return f"Touch({self.obj}, {self.mode})"


class TouchedGently(_TouchBase):
    mode = "gentle"

    def __init__(self, obj: str, max_move: float = CONFIG.touch_max_move):
        super().__init__(obj)
        self.max_move = max_move

    def _failed(self, prev, nxt):
        return self.grasped

    def _check(self, prev, nxt):
        return self.contacted and not self.grasped and self.moved(nxt) <= self.max_move

    def describe(self, names):
        return f"touch {names.get(self.obj, self.obj)}"


class TouchPushed(_TouchBase):
    mode = "push"

    def __init__(self, obj: str, min_move: float = CONFIG.push_min_move,
                 forbid_topple: bool = True):
        super().__init__(obj)
        self.min_move = min_move
        self.forbid_topple = forbid_topple

    def _failed(self, prev, nxt):
        return self.grasped or (self.forbid_topple and nxt[self.obj].toppled)

    def _check(self, prev, nxt):
        return (not self.grasped and not nxt[self.obj].toppled
                and self.moved(nxt) >= self.min_move)

    def _reward(self, nxt):
        push = min(1.0, self.moved(nxt) / self.min_move)
        return 0.3 * _shaped(self.distance(nxt), self.d0) + 0.7 * push

    def describe(self, names):
        return f"push {names.get(self.obj, self.obj)}"


class TouchToppled(_TouchBase):
    mode = "topple"

    def _check(self, prev, nxt):
        return self.contacted and vertical_axis_deviation(nxt[self.obj]) > nxt.config.topple_angle

    def describe(self, names):
        return f"topple {names.get(self.obj, self.obj)}"


TOUCH_MODES = {"gentle": TouchedGently, "push": TouchPushed, "topple": TouchToppled}


def Touch(obj: str, mode: str = "gentle") -> _TouchBase:
    """Touch predicate in one of the modes ``gentle``, ``push`` or ``topple``."""
    try:
        return TOUCH_MODES[mode](obj)
    except KeyError:
        raise ValueError(f"unknown touch mode {mode!r}") from None


class Hit(Leaf):
    """``thrown`` landed on or struck ``target`` in flight (optionally toppling it)."""

    def __init__(self, thrown: str, target: str, require_topple: bool = False):
        super().__init__()
        self.thrown = thrown
        self.target = target
        self.require_topple = require_topple
        self.hit = False

    def object_ids(self):
        return [self.thrown, self.target]

    def reset(self, state):
        self.hit = False
        super().reset(state)

    def _observe(self, prev, nxt):
        super()._observe(prev, nxt)
        for e in nxt.events:
            if e.kind == "hit" and e.a == self.thrown and e.b == self.target:
                self.hit = True

    def distance(self, state):
        return float(np.linalg.norm(state[self.thrown].pose.position[:2]
                                    - state[self.target].pose.position[:2]))

    def _check(self, prev, nxt):
        if not self.hit:
            return False
        return not self.require_topple or nxt[self.target].toppled

    def _reward(self, nxt):
        if self.hit:
            return 0.8
        return 0.8 * _shaped(self.distance(nxt), self.d0)

    def anchor(self, state):
        return state[self.thrown].pose.position

    def text(self):
        flag = ", topple" if self.require_topple else ""
        return f"Hit({self.thrown}, {self.target}{flag})"

    def describe(self, names):
        s = f"throw {names.get(self.thrown, self.thrown)} at {names.get(self.target, self.target)}"
        return s + " to knock it over" if self.require_topple else s


class ToppleStructure(Leaf):
    """Every listed object resting directly on the table."""

    def __init__(self, objs):
        super().__init__()
        self.objs = list(objs)

    def object_ids(self):
        return list(self.objs)

    def grounded(self, state) -> list[bool]:
        return [_resting(state, o) and state.supports.get(o) == TABLE
                and abs(state[o].zmin) <= 1e-6 for o in self.objs]

    def _check(self, prev, nxt):
        return all(self.grounded(nxt))

    def _reward(self, nxt):
        g = self.grounded(nxt)
        return sum(g) / len(g)

    def anchor(self, state):
        return max((state[o].pose.position for o in self.objs), key=lambda p: p[2])

    def text(self):
        return f"ToppleStructure({_fmt(self.objs)})"

    def describe(self, names):
        return "topple the stack"


class PushProgress(Leaf):
    """Object pushed (never grasped) toward a goal object within a direction cone."""

    def __init__(self, obj: str, goal_obj: str, reduce_frac: float = CONFIG.push_reduce_fraction,
                 cone_deg: float = CONFIG.push_cone_deg):
        super().__init__()
        self.obj = obj
        self.goal_obj = goal_obj
        self.reduce_frac = reduce_frac
        self.cone_deg = cone_deg
        self.base_d = 0.0
        self.start = None
        self.dir = None

    def object_ids(self):
        return [self.obj, self.goal_obj]

    def _capture(self, state):
        self.start = state[self.obj].pose.position[:2].copy()
        g = state[self.goal_obj].pose.position[:2]
        v = g - self.start
        self.base_d = float(np.linalg.norm(v))
        self.dir = v / self.base_d if self.base_d > 0 else np.array([1.0, 0.0])

    def current(self, state) -> float:
        return float(np.linalg.norm(state[self.obj].pose.position[:2]
                                    - state[self.goal_obj].pose.position[:2]))

    def within_cone(self, state) -> bool:
        disp = state[self.obj].pose.position[:2] - self.start
        n = float(np.linalg.norm(disp))
        if n < 1e-12:
            return False
        cosang = float(disp @ self.dir) / n
        return cosang >= math.cos(math.radians(self.cone_deg)) - 1e-12

    def _failed(self, prev, nxt):
        return self.grasped

    def _check(self, prev, nxt):
        return (not self.grasped and self.current(nxt) <= (1.0 - self.reduce_frac) * self.base_d
                and self.within_cone(nxt))

    def _reward(self, nxt):
        gain = (self.base_d - self.current(nxt)) / (self.reduce_frac * self.base_d)
        return max(0.0, min(1.0, gain))

    def anchor(self, state):
        return state[self.obj].pose.position

    def text(self):
        return (f"PushProgress({self.obj}, {self.goal_obj}, {_fmt(self.reduce_frac)}, "
                f"{_fmt(self.cone_deg)})")

    def describe(self, names):
        return (f"push {names.get(self.obj, self.obj)} towards "
                f"{names.get(self.goal_obj, self.goal_obj)}")


class RotatedBy(Leaf):
    """Signed yaw change from the reset pose; clockwise is negative yaw.

    ``pos_tol=None`` drops the position-drift condition.
    """

    def __init__(self, obj: str, angle_deg: float, direction: str = "clockwise",
                 angle_tol_deg: float = CONFIG.rotate_angle_tol_deg,
                 pos_tol: Optional[float] = CONFIG.rotate_pos_tol):
        super().__init__()
        if int(angle_deg) != angle_deg or int(angle_deg) not in ROTATE_ANGLES:
            raise ValueError(f"rotation angle must be one of {ROTATE_ANGLES}, got {angle_deg}")
        if direction not in ("clockwise", "anticlockwise"):
            raise ValueError(f"direction must be clockwise or anticlockwise, got {direction!r}")
        self.obj = obj
        self.angle_deg = int(angle_deg)
        self.direction = direction
        self.angle_tol_deg = angle_tol_deg
        self.pos_tol = pos_tol
        self.yaw0 = 0.0
        self.q0 = None
        self.pos0 = None

    @property
    def target(self) -> float:
        sign = -1.0 if self.direction == "clockwise" else 1.0
        return sign * math.radians(self.angle_deg)

    def object_ids(self):
        return [self.obj]

    def _capture(self, state):
        o = state[self.obj]
        self.yaw0 = o.pose.yaw
        self.q0 = o.pose.orientation.copy()
        self.pos0 = o.pose.position.copy()

    def achieved(self, state) -> float:
        return geom.wrap_angle(state[self.obj].pose.yaw - self.yaw0)

    def angle_error(self, state) -> float:
        return abs(geom.wrap_angle(self.achieved(state) - self.target))

    def drift(self, state) -> float:
        return float(np.linalg.norm(state[self.obj].pose.position - self.pos0))

    def _check(self, prev, nxt):
        if not _resting(nxt, self.obj) or _ee_touching(nxt, self.obj):
            return False
        if self.angle_error(nxt) > math.radians(self.angle_tol_deg) + 1e-12:
            return False
        return self.pos_tol is None or self.drift(nxt) <= self.pos_tol

    def _reward(self, nxt):
        return max(0.0, 1.0 - self.angle_error(nxt) / abs(self.target))

    def anchor(self, state):
        return state[self.obj].pose.position

    def text(self):
        pt = "none" if self.pos_tol is None else _fmt(self.pos_tol)
        return (f"RotatedBy({self.obj}, {self.angle_deg}, {self.direction}, "
                f"{_fmt(self.angle_tol_deg)}, {pt})")

    def describe(self, names):
        return f"rotate {names.get(self.obj, self.obj)} {self.angle_deg} degrees {self.direction}"


class Balanced(Leaf):
    """All listed objects on the scale pans and the beam level within ``tol``."""

    def __init__(self, objs, tol: float = CONFIG.balance_tolerance):
        super().__init__()
        self.objs = list(objs)
        self.tol = tol

    def object_ids(self):
        return list(self.objs)

    def on_scale(self, state) -> list[bool]:
        pans = {state.scale.left_pan, state.scale.right_pan}
        out = []
        for oid in self.objs:
            cur, seen, ok = oid, set(), False
            if _resting(state, oid):
                while cur in state.supports and cur not in seen:
                    seen.add(cur)
                    cur = state.supports[cur]
                    if cur in pans:
                        ok = True
                        break
            out.append(ok)
        return out

    def _check(self, prev, nxt):
        if nxt.scale is None:
            return False
        return all(self.on_scale(nxt)) and abs(nxt.scale.tilt) <= self.tol and not any(
            _ee_touching(nxt, o) for o in self.objs)

    def _reward(self, nxt):
        if nxt.scale is None:
            return 0.0
        on = self.on_scale(nxt)
        frac = sum(on) / len(on) if on else 1.0
        level = 1.0 - min(1.0, abs(nxt.scale.tilt) / nxt.config.tilt_limit)
        return 0.5 * frac + 0.5 * frac * level

    def anchor(self, state):
        return np.array([*state.scale.pivot, 0.0]) if state.scale else state.ee.pose.position

    def text(self):
        return f"Balanced({_fmt(self.objs)}, {_fmt(self.tol)})"

    def describe(self, names):
        return "place the objects on the scale keeping it balanced"


class TraceGoals(Leaf):
    """All trace goals touched in order (the world enforces the order)."""

    def __init__(self, n_goals: int):
        super().__init__()
        self.n_goals = n_goals

    def reset(self, state):
        if len(state.goals) != self.n_goals:
            raise PredicateError(f"expected {self.n_goals} trace goals, world has {len(state.goals)}")
        super().reset(state)

    def _check(self, prev, nxt):
        return all(g.status == "done" for g in nxt.goals)

    def _reward(self, nxt):
        done = sum(g.status == "done" for g in nxt.goals)
        active = [g for g in nxt.goals if g.status == "active"]
        part = 0.0
        if active:
            d = float(np.linalg.norm(nxt.ee.center - active[0].position))
            part = _shaped(d, 1.0)
        return (done + 0.5 * part) / self.n_goals

    def anchor(self, state):
        act = [g for g in state.goals if g.status == "active"]
        return act[0].position if act else state.ee.pose.position

    def text(self):
        return f"TraceGoals({self.n_goals})"

    def describe(self, names):
        return "touch the next green goal"


class NotTouching(Leaf):
    """Guard: fails permanently on any contact with the listed obstacles.

    A guard never completes on its own; its parent treats it as satisfied
    while it has not failed.
    """

    guard = True

    def __init__(self, obstacles):
        super().__init__()
        self.obstacles = list(obstacles)

    def object_ids(self):
        return list(self.obstacles)

    def _failed(self, prev, nxt):
        obs = set(self.obstacles)
        return any(e.kind == "contact" and (e.a in obs or e.b in obs) for e in nxt.events)

    def _check(self, prev, nxt):
        return False

    def _reward(self, nxt):
        return 1.0

    def text(self):
        return f"NotTouching({_fmt(self.obstacles)})"

    def describe(self, names):
        return "avoid the obstacles"


# ---------------------------------------------------------------- logical


class Set(Node):
    """All (non-guard) children complete, in any order."""

    def __init__(self, children):
        super().__init__()
        self.children = tuple(children)

    def _on_activate(self, state):
        for c in self.children:
            c.activate(state)

    def evaluate(self, prev, nxt):
        rewards = []
        for c in self.children:
            r, _ = c.evaluate(prev, nxt)
            rewards.append(r)
        if self.status == ACTIVE:
            if any(c.status == FAILED for c in self.children):
                self.status = FAILED
            elif all(c.status == DONE for c in self.children if not c.guard):
                self.status = DONE
                self.done_step = nxt.step
        if self.status == DONE:
            self.reward = 1.0
        elif self.status == FAILED:
            self.reward = 0.0
        else:
            self.reward = float(np.mean(rewards)) if rewards else 1.0
        return self.reward, self.status == DONE

    def text(self):
        return "Set(" + ", ".join(c.text() for c in self.children) + ")"

    def describe(self, names):
        return " and ".join(c.describe(names) for c in self.children if not c.guard)


class Sequence(Node):
    """Children complete strictly in order.

    A child activated because its predecessor finished at step t is first
    tested at step t + 1, so completion steps are strictly increasing.
    """

    def __init__(self, children):
        super().__init__()
        self.children = tuple(children)
        if any(c.guard for c in self.children):
            raise ValueError("guards belong in a Set, not a Sequence")
        self.cursor = 0

    def reset(self, state):
        self.cursor = 0
        super().reset(state)

    def _on_activate(self, state):
        if self.children:
            self.children[0].activate(state)

    def evaluate(self, prev, nxt):
        n = len(self.children)
        cur_reward = 0.0
        for i, c in enumerate(self.children):
            if i == self.cursor and self.status == ACTIVE:
                cur_reward, _ = c.evaluate(prev, nxt)
            else:
                c.evaluate(prev, nxt)
        if self.status == ACTIVE:
            if n == 0:
                self.status = DONE
                self.done_step = nxt.step
            else:
                c = self.children[self.cursor]
                if c.status == FAILED:
                    self.status = FAILED
                elif c.status == DONE:
                    self.cursor += 1
                    cur_reward = 0.0
                    if self.cursor == n:
                        self.status = DONE
                        self.done_step = nxt.step
                    else:
                        self.children[self.cursor].activate(nxt)
        if self.status == DONE:
            self.reward = 1.0
        elif self.status == FAILED:
            self.reward = 0.0
        elif n == 0:
            self.reward = 1.0
        else:
            self.reward = (self.cursor + cur_reward) / n
        return self.reward, self.status == DONE

    def text(self):
        return "Sequence(" + ", ".join(c.text() for c in self.children) + ")"

    def describe(self, names):
        return ", then ".join(c.describe(names) for c in self.children)


class Once(Node):
    """Pass-through whose success, once reached, is kept."""

    def __init__(self, child: Node):
        super().__init__()
        self.children = (child,)

    @property
    def child(self) -> Node:
        return self.children[0]

    @property
    def guard(self):  # noqa: D401 - mirrors the wrapped node
        return self.child.guard

    def _on_activate(self, state):
        self.child.activate(state)

    def evaluate(self, prev, nxt):
        r, _ = self.child.evaluate(prev, nxt)
        if self.status == ACTIVE:
            if self.child.status == DONE:
                self.status = DONE
                self.done_step = nxt.step
            elif self.child.status == FAILED:
                self.status = FAILED
        self.reward = 1.0 if self.status == DONE else (0.0 if self.status == FAILED else r)
        return self.reward, self.status == DONE

    def text(self):
        return f"Once({self.child.text()})"

    def describe(self, names):
        return self.child.describe(names)


# ------------------------------------------------------------------ runtime


def start(tree: Node, state: WorldState) -> Node:
    """Capture baselines on the initial state and activate the root."""
    tree.reset(state)
    tree.activate(state)
    return tree


def evaluate(tree: Node, prev: WorldState, nxt: WorldState) -> tuple[float, bool]:
    return tree.evaluate(prev, nxt)


def report(tree: Node) -> list[tuple[str, str, str]]:
    """Pre-order ``(path, text, status)`` for every node."""
    out = []

    def rec(node, path):
        out.append((path, node.text(), node.status))
        for i, c in enumerate(node.children):
            rec(c, f"{path}.{i}")

    rec(tree, "0")
    return out


def task_success(tree: Node, state: Optional[WorldState] = None):
    """Root success flag plus the per-node status report."""
    return tree.status == DONE, report(tree)


def active_leaves(tree: Node) -> list[Node]:
    return [n for n in tree.walk() if isinstance(n, Leaf) and n.status == ACTIVE and not n.guard]
