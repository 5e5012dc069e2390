"""Quasi-static 2.5-D tabletop dynamics.

The world is a table plane at ``z = 0`` holding rigid primitives, a
free-flying suction end-effector (EE), optional trace goals and an optional
balance scale. Objects are either resting on a supporter (another object or
the table), attached to the EE, or in ballistic flight. There are no
momenta apart from flight: pushes are resolved kinematically and unsupported
objects settle straight down.
"""

from __future__ import annotations

import copy
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import geom
from .config import CONFIG, Config
from .geom import Box, Pose, Shape, Sphere

TABLE = "table"
EE = "ee"
OBJECT_KINDS = ("object", "area", "container", "pan", "obstacle")


class WorldError(ValueError):
    """Raised for malformed scenes or invalid actions."""


# --------------------------------------------------------------------- values


@dataclass(frozen=True)
class Action:
    """Per-step command: EE translation (m) and rotation vector (rad), plus grip."""

    delta: tuple
    grip: float = -1.0

    @classmethod
    def from_vector(cls, v) -> "Action":
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.shape != (7,):
            raise WorldError(f"action must have 7 components, got {v.shape[0]}")
        return cls(tuple(v[:6].tolist()), float(v[6]))

    @classmethod
    def zero(cls, grip: float = -1.0) -> "Action":
        return cls((0.0,) * 6, grip)

    def to_vector(self) -> np.ndarray:
        return np.array(list(self.delta) + [self.grip], dtype=float)

    def clamped(self, cfg: Config = CONFIG) -> "Action":
        v = self.to_vector()
        if v.shape != (7,) or not np.all(np.isfinite(v)):
            raise WorldError(f"action components must be finite, got {v.tolist()}")
        v[:3] = np.clip(v[:3], -cfg.max_translation, cfg.max_translation)
        v[3:6] = np.clip(v[3:6], -cfg.max_rotation, cfg.max_rotation)
        v[6] = min(1.0, max(-1.0, v[6]))
        return Action(tuple(v[:6].tolist()), float(v[6]))


@dataclass(frozen=True)
class Event:
    kind: str  # contact | grasp | release | hit | toppled | goal
    a: str = ""
    b: str = ""
    speed: float = 0.0
    index: int = -1


@dataclass
class WorldObject:
    id: str
    shape: Shape
    pose: Pose
    texture: str
    mass: float = 0.0
    graspable: bool = True
    static: bool = False
    toppled: bool = False
    in_flight: bool = False
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    kind: str = "object"
    template: str = ""
    wall: float = 0.0  # container wall thickness
    flight: Optional[tuple] = None  # (launch position, launch velocity, elapsed time)

    def __post_init__(self):
        if self.kind not in OBJECT_KINDS:
            raise WorldError(f"unknown object kind {self.kind!r}")
        if self.mass <= 0.0:
            self.mass = CONFIG.density * sum(s.volume for s, _ in self.parts())

    def parts(self) -> list[tuple[Shape, Pose]]:
        """Collision primitives; containers are a floor plus four walls."""
        if self.kind != "container":
            return [(self.shape, self.pose)]
        return _container_parts(self.shape, self.wall, self.pose)

    @property
    def body(self) -> geom.Body:
        return geom.body(self.shape, self.pose)

    @property
    def zmin(self) -> float:
        return self.body.zmin

    @property
    def zmax(self) -> float:
        return self.body.zmax

    @property
    def footprint(self) -> geom.Footprint:
        return self.body.footprint

    def interior(self) -> geom.Polygon:
        """Footprint of a container's cavity."""
        s = self.shape
        inner = Box(s.hx - self.wall, s.hy - self.wall, s.hz)
        return geom.footprint(inner, self.pose)

    @property
    def floor_top(self) -> float:
        return self.zmin + self.wall


def _container_parts(shape: Box, wall: float, pose: Pose):
    hx, hy, hz = shape.hx, shape.hy, shape.hz
    t = wall / 2
    specs = [
        (Box(hx, hy, t), (0.0, 0.0, -hz + t)),
        (Box(t, hy, hz), (hx - t, 0.0, 0.0)),
        (Box(t, hy, hz), (-hx + t, 0.0, 0.0)),
        (Box(hx, t, hz), (0.0, hy - t, 0.0)),
        (Box(hx, t, hz), (0.0, -hy + t, 0.0)),
    ]
    return [(s, pose.compose(Pose(np.array(off)))) for s, off in specs]


@dataclass
class Goal:
    position: np.ndarray
    radius: float = 0.02
    status: str = "pending"  # pending | active | done


@dataclass
class BalanceScale:
    pivot: np.ndarray  # (x, y)
    arm_length: float
    left_pan: str
    right_pan: str
    tilt: float = 0.0


@dataclass
class EndEffector:
    pose: Pose
    suction_on: bool = False
    attached: Optional[str] = None
    grasp_offset: Optional[Pose] = None
    window: deque = field(default_factory=lambda: deque(maxlen=CONFIG.velocity_window))

    def __post_init__(self):
        if not self.window:
            for _ in range(self.window.maxlen):
                self.window.append(self.pose.position.copy())

    @property
    def center(self) -> np.ndarray:
        """Center of the EE collision sphere, which sits on the tip."""
        return self.pose.position + np.array([0.0, 0.0, CONFIG.ee_radius])

    @property
    def grip(self) -> float:
        return 1.0 if self.suction_on else -1.0


@dataclass
class WorldState:
    objects: list
    ee: EndEffector
    scale: Optional[BalanceScale] = None
    goals: list = field(default_factory=list)
    events: list = field(default_factory=list)
    step: int = 0
    seed: int = 0
    supports: dict = field(default_factory=dict)  # resting object id -> supporter id
    rng: np.random.Generator = field(default=None, repr=False)
    config: Config = field(default=CONFIG, repr=False)

    def __post_init__(self):
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)
        self._index = {o.id: i for i, o in enumerate(self.objects)}
        if len(self._index) != len(self.objects):
            raise WorldError("duplicate object ids")

    def __getitem__(self, oid: str) -> WorldObject:
        try:
            return self.objects[self._index[oid]]
        except KeyError:
            raise KeyError(f"no object with id {oid!r}") from None

    def __contains__(self, oid: str) -> bool:
        return oid in self._index

    def ids(self) -> list[str]:
        return [o.id for o in self.objects]

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)

    def movable(self) -> list[WorldObject]:
        return [o for o in self.objects if not o.static]

    def resting(self) -> list[WorldObject]:
        att = self.ee.attached
        return [o for o in self.objects if o.id != att and not o.in_flight]

    def supported_by(self, oid: str) -> list[str]:
        return [k for k, v in self.supports.items() if v == oid]

    def descendants(self, oid: str) -> list[str]:
        out, todo = [], [oid]
        while todo:
            cur = todo.pop()
            for k in self.supported_by(cur):
                if k not in out:
                    out.append(k)
                    todo.append(k)
        return out

    def fingerprint(self) -> tuple:
        """Hashable snapshot of everything that evolves."""
        objs = tuple((o.id, o.pose.key, o.in_flight, o.toppled) for o in self.objects)
        ee = (self.ee.pose.key, self.ee.suction_on, self.ee.attached)
        goals = tuple(g.status for g in self.goals)
        tilt = self.scale.tilt if self.scale else 0.0
        return objs, ee, goals, tilt, self.step


# ----------------------------------------------------------------- queries


def vertical_axis_deviation(obj: WorldObject) -> float:
    """Angle between the object's local +z axis and world +z, in [0, pi]."""
    c = float(obj.pose.matrix[2, 2])
    return math.acos(max(-1.0, min(1.0, c)))


def ee_velocity(state: WorldState) -> np.ndarray:
    w = state.ee.window
    if len(w) < 2:
        return np.zeros(3)
    return (w[-1] - w[0]) / ((len(w) - 1) * state.config.dt)


def scale_tilt(scale: BalanceScale, objects: Iterable[WorldObject], supports: dict,
               cfg: Config = CONFIG) -> float:
    """Tilt from the mass imbalance of everything resting (transitively) on each pan."""
    masses = {o.id: o.mass for o in objects}

    def pan_mass(pan: str) -> float:
        total = 0.0
        for oid in masses:
            cur, seen = oid, set()
            while cur in supports and cur not in seen:
                seen.add(cur)
                cur = supports[cur]
                if cur == pan:
                    total += masses[oid]
                    break
        return total

    t = cfg.k_tilt * (pan_mass(scale.right_pan) - pan_mass(scale.left_pan)) * scale.arm_length
    return max(-cfg.tilt_limit, min(cfg.tilt_limit, t))


def on_table(state: WorldState, oid: str, tol: float = 1e-6) -> bool:
    obj = state[oid]
    return state.supports.get(oid) == TABLE and abs(obj.zmin) <= tol


def _z_overlap(a0, a1, b0, b1, eps=1e-6) -> bool:
    return a0 < b1 - eps and b0 < a1 - eps


def _fp_hits(a: geom.Footprint, b: geom.Footprint) -> bool:
    return geom.footprints_intersect(a, b)


def object_collision(a: WorldObject, b: WorldObject) -> Optional[geom.Contact]:
    best = None
    for sa, pa in a.parts():
        ba = geom.body(sa, pa)
        for sb, pb in b.parts():
            bb = geom.body(sb, pb)
            if not _z_overlap(ba.zmin, ba.zmax, bb.zmin, bb.zmax, 0.0):
                continue
            if not _fp_hits(ba.footprint, bb.footprint):
                continue
            c = geom.collide(sa, pa, sb, pb)
            if c is not None and (best is None or c.depth > best.depth):
                best = c
    return best


def interpenetrations(state: WorldState, tol: float = 1e-4) -> list[tuple[str, str, float]]:
    """Pairs of non-attached, grounded objects whose volumes overlap more than ``tol``."""
    objs = [o for o in state.resting()]
    out = []
    for i, a in enumerate(objs):
        for b in objs[i + 1:]:
            c = object_collision(a, b)
            if c is not None and c.depth > tol:
                out.append((a.id, b.id, c.depth))
    return out


# ---------------------------------------------------------------- settling


def _candidate_surfaces(state: WorldState, obj: WorldObject, exclude: set):
    """Parts below ``obj`` (or interpenetrating it) whose footprints meet obj's."""
    fp = obj.footprint
    out = []
    for other in state.resting():
        if other.id in exclude or other.id == obj.id:
            continue
        for s, p in other.parts():
            b = geom.body(s, p)
            if not _fp_hits(fp, b.footprint):
                continue
            if b.zmax <= obj.zmin + 1e-6:
                out.append((b.zmax, other, b))
            elif b.zmin < obj.zmax - 1e-6:
                c = geom.collide(obj.shape, obj.pose, s, p)
                if c is not None and c.depth > 1e-6:
                    out.append((b.zmax, other, b))
    return out


def _set_bottom(obj: WorldObject, z: float):
    dz = z - obj.zmin
    if dz != 0.0:
        obj.pose = obj.pose.translated((0.0, 0.0, dz))


def _settle_one(state: WorldState, obj: WorldObject):
    cfg = state.config
    exclude = set(state.descendants(obj.id))
    for _ in range(400):
        cands = _candidate_surfaces(state, obj, exclude)
        if not cands:
            _set_bottom(obj, 0.0)
            state.supports[obj.id] = TABLE
            return
        top = max(c[0] for c in cands)
        level = [c for c in cands if c[0] >= top - 1e-6]
        fp = obj.footprint
        scored = [(geom.footprint_fraction(fp, b.footprint), o, b) for _, o, b in level]
        frac, sup, sb = max(scored, key=lambda t: (t[0], -state._index[t[1].id]))
        if frac >= cfg.support_overlap:
            _set_bottom(obj, top)
            state.supports[obj.id] = sup.id
            return
        # not enough overlap: slide away from the supporter and retry
        d = fp.center - sb.footprint.center
        n = float(np.hypot(*d))
        d = d / n if n > 1e-9 else np.array([1.0, 0.0])
        while geom.footprints_intersect(obj.footprint, sb.footprint):
            obj.pose = obj.pose.translated((0.002 * d[0], 0.002 * d[1], 0.0))
            for k in exclude:
                state[k].pose = state[k].pose.translated((0.002 * d[0], 0.002 * d[1], 0.0))
    raise WorldError(f"settling {obj.id} did not terminate")


def settle(state: WorldState, ids: Optional[Iterable[str]] = None) -> WorldState:
    """Drop unsupported objects onto the highest surface beneath them.

    An object comes to rest on the highest part under its footprint when it
    covers at least ``support_overlap`` of the object's footprint; otherwise
    it slides off that part and keeps falling, ending on the table at worst.
    Objects carried on a settling object are re-settled afterwards.
    """
    att = state.ee.attached
    if ids is None:
        dirty = {o.id for o in state.objects
                 if not o.static and o.id != att and not o.in_flight}
    else:
        dirty = set(ids)
    dirty.discard(att)
    for oid in list(dirty):
        if state[oid].static or state[oid].in_flight:
            dirty.discard(oid)
    guard = 0
    while dirty:
        guard += 1
        if guard > 10 * len(state.objects) + 100:
            raise WorldError("settle did not converge")
        oid = min(dirty, key=lambda k: (state[k].zmin, state._index[k]))
        dirty.discard(oid)
        obj = state[oid]
        before = obj.pose
        above = state.supported_by(oid)
        state.supports.pop(oid, None)
        _settle_one(state, obj)
        if obj.pose != before:
            dirty.update(k for k in above if not state[k].static)
    _update_flags(state)
    return state


def infer_supports(state: WorldState) -> dict:
    """Supporter of every resting, non-static object from exact face contact."""
    sup = {}
    for obj in state.resting():
        if obj.static:
            continue
        if abs(obj.zmin) <= 1e-6:
            sup[obj.id] = TABLE
            continue
        best = None
        for other in state.resting():
            if other.id == obj.id:
                continue
            for s, p in other.parts():
                b = geom.body(s, p)
                if abs(b.zmax - obj.zmin) <= 1e-6 and _fp_hits(obj.footprint, b.footprint):
                    f = geom.footprint_fraction(obj.footprint, b.footprint)
                    if best is None or f > best[0]:
                        best = (f, other.id)
        if best is not None:
            sup[obj.id] = best[1]
    return sup


# ------------------------------------------------------------------ toppling


def _extent_along(obj: WorldObject, n: np.ndarray) -> float:
    fp = obj.footprint
    c = np.array([obj.pose.position[0], obj.pose.position[1]])
    if isinstance(fp, geom.Circle):
        return fp.r
    return float(np.max((fp.verts - c) @ n))


def can_topple(obj: WorldObject) -> bool:
    return (not obj.static and not obj.toppled and not obj.in_flight
            and not isinstance(obj.shape, Sphere))


def topple(state: WorldState, oid: str, direction) -> None:
    """Tip an object 90 degrees over its leading bottom edge toward ``direction``."""
    obj = state[oid]
    n = np.array([direction[0], direction[1]], dtype=float)
    norm = float(np.linalg.norm(n))
    if norm < 1e-12 or not can_topple(obj):
        return
    n /= norm
    a = _extent_along(obj, n)
    b = (obj.zmax - obj.zmin) / 2.0
    axis = np.array([-n[1], n[0], 0.0])  # z x n
    q = geom.quat_mul(geom.quat_from_axis_angle(axis, math.pi / 2), obj.pose.orientation)
    base = obj.zmin
    pos = obj.pose.position + np.array([(a + b) * n[0], (a + b) * n[1], 0.0])
    obj.pose = Pose(pos, q)
    _set_bottom(obj, base)
    above = state.descendants(oid)
    state.supports.pop(oid, None)
    settle(state, [oid] + [k for k in above if not state[k].static])


def _update_flags(state: WorldState):
    lim = state.config.topple_angle
    for o in state.objects:
        if o.static:
            continue
        flag = vertical_axis_deviation(o) > lim
        if flag and not o.toppled:
            state.events.append(Event("toppled", o.id))
        o.toppled = flag


# -------------------------------------------------------------------- flight


@dataclass
class FlightResult:
    t: float  # time of first contact since launch
    position: np.ndarray  # object center at contact
    velocity: np.ndarray
    target: str  # object id or TABLE


def _flight_pos(p0, v0, t, g):
    return p0 + v0 * t + np.array([0.0, 0.0, -0.5 * g * t * t])


def _flight_contact(state: WorldState, obj: WorldObject, pos: np.ndarray,
                    others: list) -> Optional[str]:
    pose = obj.pose.with_position(pos)
    b = geom.body(obj.shape, pose)
    if b.zmin <= 0.0:
        return TABLE
    for other in others:
        for s, p in other.parts():
            ob = geom.body(s, p)
            if not _z_overlap(b.zmin, b.zmax, ob.zmin, ob.zmax, 0.0):
                continue
            if not _fp_hits(b.footprint, ob.footprint):
                continue
            if geom.collide(obj.shape, pose, s, p) is not None:
                return other.id
    return None


def trace_flight(state: WorldState, obj: WorldObject, p0, v0, t0: float, t1: float,
                 ignore: Iterable[str] = ()) -> Optional[FlightResult]:
    """First contact of ``obj`` flying from ``p0`` with velocity ``v0`` in [t0, t1].

    The trajectory is the exact constant-gravity parabola; it is sampled at
    2.5 mm spacing and the first contact is refined by bisection.
    """
    g = state.config.gravity
    p0 = np.asarray(p0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    skip = set(ignore) | {obj.id}
    others = [o for o in state.resting() if o.id not in skip]
    a = _flight_pos(p0, v0, t0, g)
    b = _flight_pos(p0, v0, t1, g)
    speed = max(float(np.linalg.norm(v0 + np.array([0, 0, -g * t1]))),
                float(np.linalg.norm(v0 + np.array([0, 0, -g * t0]))))
    n = max(1, int(math.ceil(max(np.linalg.norm(b - a), speed * (t1 - t0)) / 0.0025)))
    prev_t = t0
    for k in range(1, n + 1):
        t = t0 + (t1 - t0) * k / n
        hit = _flight_contact(state, obj, _flight_pos(p0, v0, t, g), others)
        if hit is None:
            prev_t = t
            continue
        lo, hi = prev_t, t
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            h = _flight_contact(state, obj, _flight_pos(p0, v0, mid, g), others)
            if h is None:
                lo = mid
            else:
                hi, hit = mid, h
        pos = _flight_pos(p0, v0, lo, g)
        vel = v0 + np.array([0.0, 0.0, -g * lo])
        return FlightResult(lo, pos, vel, hit)
    return None


def simulate_flight(state: WorldState, oid: str, pose: Pose, velocity,
                    max_time: float = 5.0) -> FlightResult:
    """Predict where ``oid`` launched from ``pose`` first touches something."""
    obj = copy.copy(state[oid])
    obj.pose = pose
    res = trace_flight(state, obj, pose.position, velocity, 0.0, max_time,
                       ignore=[oid])
    if res is None:
        raise WorldError("flight did not end within the time limit")
    return res


def _advance_flights(state: WorldState):
    cfg = state.config
    for obj in state.objects:
        if not obj.in_flight:
            continue
        p0, v0, t0 = obj.flight
        res = trace_flight(state, obj, p0, v0, t0, t0 + cfg.dt)
        if res is None:
            obj.flight = (p0, v0, t0 + cfg.dt)
            obj.pose = obj.pose.with_position(_flight_pos(p0, v0, t0 + cfg.dt, cfg.gravity))
            obj.velocity = v0 + np.array([0.0, 0.0, -cfg.gravity * (t0 + cfg.dt)])
            continue
        obj.pose = obj.pose.with_position(res.position)
        obj.in_flight = False
        obj.velocity = np.zeros(3)
        obj.flight = None
        speed = float(np.linalg.norm(res.velocity))
        state.events.append(Event("hit", obj.id, res.target, speed))
        settle(state, [obj.id])
        if res.target != TABLE:
            target = state[res.target]
            if speed >= cfg.topple_hit_speed and can_topple(target):
                topple(state, target.id, res.velocity[:2])


# ------------------------------------------------------------------- stepping


def _ee_body(state: WorldState, pose: Optional[Pose] = None):
    pose = pose or state.ee.pose
    c = pose.position + np.array([0.0, 0.0, state.config.ee_radius])
    return Sphere(state.config.ee_radius), Pose(c)


def _clip_ws(p, cfg: Config) -> np.ndarray:
    return np.minimum(np.maximum(p, cfg.workspace_lo), cfg.workspace_hi)


def _attached_obj(state: WorldState) -> Optional[WorldObject]:
    return state[state.ee.attached] if state.ee.attached else None


def _sync_attached(state: WorldState):
    obj = _attached_obj(state)
    if obj is not None:
        obj.pose = state.ee.pose.compose(state.ee.grasp_offset)


def grasp_candidate(state: WorldState) -> Optional[str]:
    cfg = state.config
    tip = state.ee.pose.position
    best = None
    pt = np.array([[tip[0], tip[1]]])
    for o in state.resting():
        if not o.graspable or o.static:
            continue
        gap = tip[2] - o.zmax
        if gap < -1e-6 or gap > cfg.grasp_window:
            continue
        if not o.footprint.contains(pt, eps=1e-9)[0]:
            continue
        if best is None or gap < best[0]:
            best = (gap, o.id)
    return None if best is None else best[1]


def _push_chain(state: WorldState, first: str, shift: np.ndarray):
    """Translate ``first`` (and what it carries) and anything it shoves.

    Returns the set of moved ids, or None when a static object blocks.
    """
    moved: dict[str, np.ndarray] = {}
    queue = [(first, shift)]
    att = state.ee.attached
    while queue:
        oid, d = queue.pop(0)
        if oid in moved:
            continue
        obj = state[oid]
        if obj.static:
            return None
        group = [oid] + state.descendants(oid)
        for k in group:
            state[k].pose = state[k].pose.translated((d[0], d[1], 0.0))
            moved[k] = d
        b = obj.body
        for other in state.resting():
            if other.id in moved or other.id == att or other.id in group:
                continue
            if state.supports.get(oid) == other.id:
                continue
            for s, p in other.parts():
                ob = geom.body(s, p)
                if not _z_overlap(b.zmin, b.zmax, ob.zmin, ob.zmax):
                    continue
                pen = geom.footprint_penetration(b.footprint, ob.footprint)
                if pen is None:
                    continue
                depth, n = pen
                if other.static:
                    return None
                queue.append((other.id, n * (depth + 1e-7)))
                state.events.append(Event("contact", oid, other.id, 0.0))
                break
        if len(moved) > 4 * len(state.objects):
            return None
    return moved


def _resolve_ee_contacts(state: WorldState, ee_step: np.ndarray, dirty: set):
    cfg = state.config
    speed_h = float(np.hypot(ee_step[0], ee_step[1])) / cfg.dt
    att = _attached_obj(state)
    toppled_now: list = []
    for _ in range(6):
        changed = False
        s_ee, p_ee = _ee_body(state)
        for obj in state.resting():
            if att is not None and obj.id == att.id:
                continue
            c = None
            for s, p in obj.parts():
                cc = geom.collide(s, p, s_ee, p_ee)
                if cc is not None and (c is None or cc.depth > c.depth):
                    c = cc
            if c is None or c.depth <= 1e-12:
                continue
            n = c.normal  # from object to EE center
            side = abs(n[2]) < 0.5 and not obj.static
            if side and obj.id not in toppled_now:
                push_dir = -np.array([n[0], n[1]])
                push_dir /= np.linalg.norm(push_dir)
                h = obj.zmax - obj.zmin
                high = c.point[2] > obj.zmin + cfg.topple_height_fraction * h
                if high and speed_h >= cfg.topple_ee_speed and can_topple(obj):
                    moving = ee_step[:2]
                    d = moving if np.linalg.norm(moving) > 1e-12 else push_dir
                    topple(state, obj.id, d)
                    toppled_now.append(obj.id)
                    changed = True
                    break
                snapshot = {o.id: o.pose for o in state.objects}
                moved = _push_chain(state, obj.id, push_dir * (c.depth / max(0.2, float(np.hypot(n[0], n[1])))))
                if moved is not None:
                    dirty.update(moved)
                    changed = True
                    continue
                for o in state.objects:
                    o.pose = snapshot[o.id]
            # blocking contact: move the EE out along the normal
            newp = _clip_ws(state.ee.pose.position + n * c.depth, cfg)
            state.ee.pose = state.ee.pose.with_position(newp)
            _sync_attached(state)
            s_ee, p_ee = _ee_body(state)
            changed = True
        if att is not None:
            if att.zmin < 0.0:
                newp = _clip_ws(state.ee.pose.position + np.array([0, 0, -att.zmin]), cfg)
                state.ee.pose = state.ee.pose.with_position(newp)
                _sync_attached(state)
                changed = True
            for obj in state.resting():
                if obj.id == att.id:
                    continue
                c = object_collision(obj, att)
                if c is None or c.depth <= 1e-9:
                    continue
                newp = _clip_ws(state.ee.pose.position + c.normal * c.depth, cfg)
                state.ee.pose = state.ee.pose.with_position(newp)
                _sync_attached(state)
                changed = True
        if not changed:
            break


def _record_contacts(state: WorldState, speed: float):
    cfg = state.config
    m = cfg.contact_margin
    s_ee, p_ee = _ee_body(state)
    probe = Sphere(s_ee.radius + m)
    att = _attached_obj(state)
    for obj in state.resting():
        if att is not None and obj.id == att.id:
            continue
        if any(geom.collide(s, p, probe, p_ee) is not None for s, p in obj.parts()):
            state.events.append(Event("contact", EE, obj.id, speed))
    if att is not None:
        lifted = att.pose.translated((0.0, 0.0, m))
        grown = copy.copy(att)
        for obj in state.resting():
            if obj.id == att.id:
                continue
            for dz in (0.0, -m):
                grown.pose = lifted.translated((0.0, 0.0, dz - m / 2))
                if object_collision(obj, grown) is not None:
                    state.events.append(Event("contact", att.id, obj.id, speed))
                    break


def _update_goals(state: WorldState):
    center = state.ee.center
    for i, g in enumerate(state.goals):
        if g.status != "active":
            continue
        if np.linalg.norm(center - g.position) <= state.config.ee_radius + g.radius:
            g.status = "done"
            state.events.append(Event("goal", index=i))
            nxt = [j for j, h in enumerate(state.goals) if h.status == "pending"]
            if nxt:
                state.goals[nxt[0]].status = "active"
        break


def step(state: WorldState, action, inplace: bool = True) -> WorldState:
    """Advance one control step; returns the (by default mutated) state."""
    if not inplace:
        state = state.copy()
    if not isinstance(action, Action):
        action = Action.from_vector(action)
    cfg = state.config
    a = action.clamped(cfg)
    state.events = []
    ee = state.ee

    # motion
    d = np.array(a.delta)
    old = ee.pose.position.copy()
    pos = _clip_ws(old + d[:3], cfg)
    q = geom.quat_mul(geom.quat_from_rotvec(d[3:6]), ee.pose.orientation)
    ee.pose = Pose(pos, q)
    _sync_attached(state)
    dirty: set = set()
    _resolve_ee_contacts(state, pos - old, dirty)
    ee.window.append(ee.pose.position.copy())

    # suction
    want = a.grip > 0.0
    if want and not ee.suction_on:
        oid = grasp_candidate(state)
        if oid is not None:
            obj = state[oid]
            ee.attached = oid
            ee.grasp_offset = ee.pose.inverse().compose(obj.pose)
            above = state.supported_by(oid)
            state.supports.pop(oid, None)
            dirty.update(above)
            state.events.append(Event("grasp", EE, oid))
    elif not want and ee.attached is not None:
        obj = state[ee.attached]
        v = ee_velocity(state)
        speed = float(np.linalg.norm(v))
        ee.attached = None
        ee.grasp_offset = None
        state.events.append(Event("release", EE, obj.id, speed))
        if speed >= cfg.release_flight_speed:
            obj.in_flight = True
            obj.velocity = v.copy()
            obj.flight = (obj.pose.position.copy(), v.copy(), 0.0)
        else:
            dirty.add(obj.id)
    ee.suction_on = want

    # pushed objects may have lost their support
    for oid in list(dirty):
        if oid not in state or state[oid].static or state[oid].in_flight or oid == ee.attached:
            dirty.discard(oid)
            continue
        sup = state.supports.get(oid)
        obj = state[oid]
        if sup is None:
            continue
        if sup == TABLE:
            if abs(obj.zmin) <= 1e-6:
                dirty.discard(oid)
            continue
        sb = state[sup]
        f = max((geom.footprint_fraction(obj.footprint, geom.body(s, p).footprint)
                 for s, p in sb.parts()), default=0.0)
        if f >= cfg.support_overlap:
            dirty.discard(oid)
    if dirty:
        settle(state, dirty)

    _advance_flights(state)
    _record_contacts(state, float(np.linalg.norm(pos - old)) / cfg.dt)
    _update_flags(state)
    _update_goals(state)
    if state.scale is not None:
        state.scale.tilt = scale_tilt(state.scale, state.objects, state.supports, cfg)
    state.step += 1
    return state


def reset(initial: WorldState) -> WorldState:
    """Fresh copy of an initial state, validated and with supports inferred."""
    state = initial.copy()
    state.events = []
    state.step = 0
    bad = interpenetrations(state)
    if bad:
        a, b, depth = bad[0]
        raise WorldError(f"initial objects {a!r} and {b!r} overlap by {depth:.4f} m")
    for o in state.objects:
        if o.kind not in OBJECT_KINDS:
            raise WorldError(f"unknown kind {o.kind!r}")
    state.supports = infer_supports(state)
    _sync_attached(state)
    floating = [o.id for o in state.resting()
                if not o.static and o.id not in state.supports]
    if floating:
        raise WorldError(f"objects without support at reset: {floating}")
    for o in state.objects:
        o.toppled = vertical_axis_deviation(o) > state.config.topple_angle
    if state.goals and not any(g.status == "active" for g in state.goals):
        state.goals[0].status = "active"
    if state.scale is not None:
        state.scale.tilt = scale_tilt(state.scale, state.objects, state.supports, state.config)
    state.rng = np.random.default_rng(state.seed)
    return state


def make_state(objects: list, ee_pose: Optional[Pose] = None, **kw) -> WorldState:
    cfg = kw.pop("config", CONFIG)
    pose = ee_pose or Pose(np.array(cfg.home_position))
    return WorldState(objects=objects, ee=EndEffector(pose), config=cfg, **kw)
