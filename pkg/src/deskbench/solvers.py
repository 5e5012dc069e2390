"""Scripted oracle: skill solvers plus a greedy scheduler over the predicate tree.

Every skill derives its phase from the current world state (where the EE is,
what it holds, where the object sits), so a freshly built skill continues
any partially executed sub-goal. Skills may cache motion plans, but a cache
entry is keyed by the scene it was computed for and is dropped when the EE
strays from the plan.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import geom, planner
from . import predicates as P
from .config import CONFIG
from .geom import Pose
from .world import (TABLE, Action, WorldError, WorldState, can_topple, interpenetrations,
                    settle, simulate_flight, topple, vertical_axis_deviation)

RUNNING, DONE, FAILED = "running", "done", "failed"


@dataclass(frozen=True)
class SolverStatus:
    state: str
    reason: str = ""

    @property
    def terminal(self) -> bool:
        return self.state != RUNNING


S_RUNNING = SolverStatus(RUNNING)
S_DONE = SolverStatus(DONE)


def failed(reason: str) -> SolverStatus:
    return SolverStatus(FAILED, reason)


@dataclass
class Result:
    action: Action
    status: SolverStatus
    phase: str = ""


@dataclass
class Context:
    """Shared, episode-scoped solver resources."""

    names: dict = field(default_factory=dict)
    kinds_used: list = field(default_factory=list)
    cache: dict = field(default_factory=dict)
    reserved: list = field(default_factory=list)  # (x, y, radius) spots to keep free
    seed: int = 0

    def name(self, oid: str) -> str:
        return self.names.get(oid, oid)

    def use(self, kind: str):
        if kind not in self.kinds_used:
            self.kinds_used.append(kind)


# ------------------------------------------------------------------ helpers


def grip_of(state: WorldState) -> float:
    return 1.0 if state.ee.attached is not None else -1.0


def hold(state: WorldState, grip: Optional[float] = None) -> Action:
    return Action.zero(grip_of(state) if grip is None else grip)


def toward(state: WorldState, target: Pose, speed: float = CONFIG.move_speed,
           turn: float = CONFIG.turn_speed, grip: Optional[float] = None) -> Action:
    cfg = state.config
    ee = state.ee.pose
    d = target.position - ee.position
    n = float(np.linalg.norm(d))
    if n > speed:
        d = d * (speed / n)
    d = np.clip(d, -cfg.max_translation, cfg.max_translation)
    r = geom.quat_to_rotvec(geom.quat_mul(target.orientation, geom.quat_conj(ee.orientation)))
    rn = float(np.linalg.norm(r))
    if rn > turn:
        r = r * (turn / rn)
    r = np.clip(r, -cfg.max_rotation, cfg.max_rotation)
    return Action(tuple(d.tolist() + r.tolist()), grip_of(state) if grip is None else grip)


def at_pose(state: WorldState, target: Pose, pos_tol=1e-6, rot_tol=1e-6) -> bool:
    ee = state.ee.pose
    return (float(np.linalg.norm(ee.position - target.position)) <= pos_tol
            and geom.quat_angle(ee.orientation, target.orientation) <= rot_tol)


def scene_key(state: WorldState, skip=()) -> tuple:
    att = state.ee.attached
    return tuple((o.id, o.pose.key) for o in state.resting() if o.id != att and o.id not in skip)


def obstacles(state: WorldState, ignore=()) -> list:
    att = state.ee.attached
    out = []
    for o in state.resting():
        if o.id == att or o.id in ignore:
            continue
        out.extend(o.parts())
    return out


def held(state: WorldState):
    if state.ee.attached is None:
        return None
    o = state[state.ee.attached]
    return (o.shape, o.pose)


def surface_below(state: WorldState, fp: geom.Footprint, z_top: float, skip=()) -> float:
    """Highest part top under footprint ``fp`` that lies below ``z_top``."""
    best = 0.0
    att = state.ee.attached
    for o in state.resting():
        if o.id == att or o.id in skip:
            continue
        for s, p in o.parts():
            b = geom.body(s, p)
            if b.zmax <= z_top + 1e-6 and b.zmax > best and geom.footprints_intersect(fp, b.footprint):
                best = b.zmax
    return best


def object_pose_at(state: WorldState, oid: str, xy, orientation, support_z: float) -> Pose:
    """Pose placing ``oid`` with the given orientation, bottom at ``support_z``."""
    o = state[oid]
    pose = Pose(np.array([xy[0], xy[1], 0.0]), orientation)
    b = geom.body(o.shape, pose)
    return pose.translated((0.0, 0.0, support_z - b.zmin))


def _prisms_overlap(a: planner.Prism, b: planner.Prism) -> bool:
    if a.z1 <= b.z0 or b.z1 <= a.z0:
        return False
    axes = np.vstack([a.axes, b.axes])
    pa, pb = a.verts @ axes.T, b.verts @ axes.T
    return not np.any((pa.max(0) <= pb.min(0)) | (pb.max(0) <= pa.min(0)))


def occupants(state: WorldState, oid: str, target: Pose, skip=()) -> list[str]:
    """Objects overlapping ``oid``'s volume if it were at ``target``.

    Both sides carry the planner margin, so anything reported free here is
    also a valid goal for the planner.
    """
    o = state[oid]
    b = geom.body(o.shape, target)
    m = state.config.plan_margin
    mine = planner.prism_of(o.shape, target, m)
    out = []
    for other in state.resting():
        if other.id == oid or other.id in skip or other.id == state.ee.attached:
            continue
        for s, p in other.parts():
            ob = geom.body(s, p)
            if ob.zmax <= b.zmin + 1e-6 or ob.zmin >= b.zmax - 1e-6:
                continue
            if _prisms_overlap(mine, planner.prism_of(s, p, m)):
                out.append(other.id)
                break
    return out


def lifted(state: WorldState, oid: str, height: float = 0.03) -> bool:
    o = state[oid]
    return o.zmin >= surface_below(state, o.footprint, o.zmin, skip=[oid]) + height - 1e-9


def radius_of(state: WorldState, oid: str) -> float:
    o = state[oid]
    fp = o.footprint
    c = o.pose.position[:2]
    if isinstance(fp, geom.Circle):
        return fp.r
    return float(np.max(np.linalg.norm(fp.verts - c, axis=1)))


def free_spot(state: WorldState, oid: str, ctx: Context, avoid=(),
              anchor=(0.0, -0.3), clearance: float = 0.03) -> Optional[Pose]:
    """Deterministic free table position for ``oid`` (nearest to ``anchor``)."""
    o = state[oid]
    r = radius_of(state, oid)
    others = []
    for other in state.resting():
        if other.id in (oid, state.ee.attached) or other.id in avoid:
            continue
        for s, p in other.parts():
            b = geom.body(s, p)
            fp = b.footprint
            if isinstance(fp, geom.Circle):
                others.append((fp.cx, fp.cy, fp.r))
            else:
                c = fp.verts.mean(axis=0)
                others.append((c[0], c[1], float(np.max(np.linalg.norm(fp.verts - c, axis=1)))))
    spots = [(x, y, rr + r + 0.03) for x, y, rr in ctx.reserved]
    xs = np.arange(-0.48, 0.481, 0.03)
    gx, gy = np.meshgrid(xs, xs)
    cand = np.stack([gx.ravel(), gy.ravel()], axis=1)
    d = np.linalg.norm(cand - np.asarray(anchor), axis=1)
    order = np.lexsort((cand[:, 1], cand[:, 0], d))
    cand = cand[order]
    ok = np.ones(len(cand), dtype=bool)
    for x, y, rr in others:
        ok &= np.linalg.norm(cand - [x, y], axis=1) >= rr + r + clearance
    for x, y, rr in spots:
        ok &= np.linalg.norm(cand - [x, y], axis=1) >= rr
    idx = np.flatnonzero(ok)
    if len(idx) == 0:
        return None
    xy = cand[idx[0]]
    q = o.pose.orientation
    return object_pose_at(state, oid, xy, q, 0.0)


# ------------------------------------------------------------------- skills


class Skill:
    kind = "Skill"

    def __init__(self, ctx: Context):
        self.ctx = ctx

    def act(self, state: WorldState) -> Result:
        self.ctx.use(self.kind)
        return self._act(state)

    def _act(self, state: WorldState) -> Result:
        raise NotImplementedError


class Move(Skill):
    """Collision-free EE motion to a pose, following an RRT-Connect path."""

    kind = "Move"

    def __init__(self, ctx: Context, goal: Pose, ignore=(), label: str = "the goal",
                 speed: float = CONFIG.move_speed):
        super().__init__(ctx)
        self.goal = goal
        self.ignore = tuple(sorted(ignore))
        self.label = label
        self.speed = speed

    def _query(self, state: WorldState) -> planner.PlanQuery:
        return planner.PlanQuery(state.ee.pose, self.goal, obstacles(state, self.ignore),
                                 held=held(state), seed=self.ctx.seed + state.step)

    def _plan(self, state: WorldState):
        key = ("move", self.goal.key, self.ignore, scene_key(state, self.ignore),
               state.ee.attached, state.ee.grasp_offset.key if state.ee.grasp_offset else None)
        entry = self.ctx.cache.get(key)
        pos = state.ee.pose.position
        if entry is not None:
            path, cum = entry
            s, dev, seg = _project(path, cum, pos)
            if dev <= state.config.replan_deviation:
                return path, cum, s, seg
        q = self._query(state)
        path = planner.plan(q)
        p = path.positions
        cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(p, axis=0), axis=1))])
        self.ctx.cache[key] = (path, cum)
        s, _, seg = _project(path, cum, pos)
        return path, cum, s, seg

    def _act(self, state: WorldState) -> Result:
        phase = f"moving towards {self.label}"
        if at_pose(state, self.goal):
            return Result(hold(state), S_DONE, phase)
        try:
            path, cum, s, seg = self._plan(state)
        except planner.StartInCollision:
            if state.ee.pose.position[2] >= state.config.workspace_hi[2] - 0.05:
                return Result(hold(state), failed("trapped at start"), phase)
            up = state.ee.pose.translated((0.0, 0.0, self.speed))
            return Result(toward(state, up, self.speed), S_RUNNING, "moving up")
        except planner.GoalInCollision:
            return Result(hold(state), failed(f"goal for {self.label} in collision"), phase)
        except planner.PlanningFailed as exc:
            return Result(hold(state), failed(str(exc)), phase)
        end = cum[min(seg + 1, len(cum) - 1)]
        if s >= end - 1e-9 and seg + 2 < len(cum):
            end = cum[seg + 2]
        target = path.interpolate(min(s + self.speed, end))
        if float(np.linalg.norm(target.position - path.waypoints[-1].position)) < 1e-12:
            target = self.goal
        return Result(toward(state, target, self.speed), S_RUNNING, phase)


def approach(ctx: Context, state: WorldState, goal: Pose, label: str, rise: float = 0.015,
             grip: float = -1.0) -> Result:
    """Plan to a point ``rise`` above ``goal``, then drop straight down onto it.

    Lets contact poses sit closer to the table than the planner margin allows.
    """
    tip = state.ee.pose.position
    g = goal.position
    if (float(np.linalg.norm(tip[:2] - g[:2])) < 1e-5 and g[2] - 1e-6 <= tip[2] <= g[2] + rise + 1e-6
            and geom.quat_angle(state.ee.pose.orientation, goal.orientation) < 1e-6):
        if at_pose(state, goal):
            return Result(hold(state, grip), S_DONE, f"beside {label}")
        return Result(toward(state, goal, state.config.descend_speed, grip=grip), S_RUNNING,
                      f"lowering beside {label}")
    r = Move(ctx, goal.translated((0.0, 0.0, rise)), label=label).act(state)
    return Result(Action(r.action.delta, grip), r.status if r.status.state == FAILED else S_RUNNING,
                  r.phase)


def _project(path: planner.Path, cum: np.ndarray, pos: np.ndarray):
    """Arc length of the closest path point, its distance, and segment index."""
    p = path.positions
    if len(p) == 1:
        return 0.0, float(np.linalg.norm(pos - p[0])), 0
    best = (math.inf, 0.0, 0)
    for i in range(len(p) - 1):
        a, b = p[i], p[i + 1]
        ab = b - a
        L2 = float(ab @ ab)
        t = 0.0 if L2 < 1e-18 else min(1.0, max(0.0, float((pos - a) @ ab) / L2))
        d = float(np.linalg.norm(a + t * ab - pos))
        if d < best[0] - 1e-12:
            best = (d, cum[i] + t * math.sqrt(L2), i)
    return best[1], best[0], best[2]


class Pick(Skill):
    """Hover over the object's top, descend, engage suction, lift."""

    kind = "Pick"

    def __init__(self, ctx: Context, obj: str, lift: float = 0.03):
        super().__init__(ctx)
        self.obj = obj
        self.lift = lift

    def _act(self, state):
        ee = state.ee
        name = self.ctx.name(self.obj)
        if ee.attached == self.obj:
            if lifted(state, self.obj, self.lift):
                return Result(hold(state), S_DONE, f"lifting {name}")
            up = ee.pose.translated((0.0, 0.0, 0.03))
            return Result(toward(state, up, 0.03), S_RUNNING, f"lifting {name}")
        if ee.attached is not None:
            return Result(hold(state), failed("holding another object"), f"picking {name}")
        if ee.suction_on:
            return Result(hold(state, -1.0), S_RUNNING, "opening gripper")
        o = state[self.obj]
        grasp = np.array([o.pose.position[0], o.pose.position[1], o.zmax])
        pos = ee.pose.position
        aligned = float(np.hypot(*(pos[:2] - grasp[:2]))) < 1e-6
        gap = pos[2] - grasp[2]
        if aligned and -1e-6 <= gap <= 0.0075:
            return Result(hold(state, 1.0), S_RUNNING, "closing gripper")
        if aligned and 0.0 < gap <= state.config.hover + 1e-6:
            step = min(0.02, gap - 0.005)
            tgt = ee.pose.translated((0.0, 0.0, -step))
            return Result(toward(state, tgt, 0.02, grip=-1.0), S_RUNNING, f"lowering onto {name}")
        hover = Pose(grasp + np.array([0.0, 0.0, state.config.hover]), ee.pose.orientation)
        r = Move(self.ctx, hover, label=name).act(state)
        if r.status.state == DONE:
            r = Result(hold(state, -1.0), S_RUNNING, r.phase)
        return Result(Action(r.action.delta, -1.0), r.status, r.phase)


class Place(Skill):
    """Carry the held object above a target pose, lower it and release."""

    kind = "Place"

    def __init__(self, ctx: Context, obj: str, target: Pose, label: str = "the goal",
                 pos_tol: float = 0.01):
        super().__init__(ctx)
        self.obj = obj
        self.target = target
        self.label = label
        self.pos_tol = pos_tol

    def _act(self, state):
        ee = state.ee
        name = self.ctx.name(self.obj)
        o = state[self.obj]
        if ee.attached == self.obj:
            ee_goal = self.target.compose(ee.grasp_offset.inverse())
            pos = ee.pose.position
            aligned = (float(np.hypot(*(pos[:2] - ee_goal.position[:2]))) < 1e-6
                       and geom.quat_angle(ee.pose.orientation, ee_goal.orientation) < 1e-6)
            tb = geom.body(o.shape, self.target)
            surface = surface_below(state, tb.footprint, tb.zmin + 1e-4, skip=[self.obj])
            gap = o.zmin - surface
            if aligned and gap <= 0.003:
                return Result(hold(state, -1.0), S_RUNNING, f"releasing {name}")
            if aligned and gap <= state.config.hover + 0.005:
                step = min(0.02, gap - 0.001)
                tgt = ee.pose.translated((0.0, 0.0, -step))
                return Result(toward(state, tgt, 0.02, grip=1.0), S_RUNNING,
                              f"lowering {name} onto {self.label}")
            hover = ee_goal.translated((0.0, 0.0, surface - tb.zmin + state.config.hover))
            r = Move(self.ctx, hover, ignore=(), label=self.label).act(state)
            if r.status.state == DONE:
                r = Result(hold(state), S_RUNNING, r.phase)
            return Result(Action(r.action.delta, 1.0), r.status, f"moving {name} to {self.label}")
        if ee.attached is not None:
            return Result(hold(state), failed("holding another object"), f"placing {name}")
        if o.in_flight:
            return Result(hold(state), S_RUNNING, f"waiting for {name}")
        if float(np.hypot(*(o.pose.position[:2] - self.target.position[:2]))) > self.pos_tol:
            return Result(hold(state), failed(f"{name} is not at its target"), f"placing {name}")
        return retreat(state, self.obj, self.ctx)


def retreat(state: WorldState, oid: str, ctx: Context, clearance: float = 0.03) -> Result:
    """Lift the EE clear of ``oid``; done once it is well above or beside it."""
    o = state[oid]
    ee = state.ee
    c = ee.center
    near_xy = bool(geom.footprints_intersect(
        geom.Circle(float(c[0]), float(c[1]), state.config.ee_radius + 0.01), o.footprint))
    if near_xy and ee.pose.position[2] < o.zmax + clearance:
        up = ee.pose.translated((0.0, 0.0, 0.02))
        return Result(toward(state, up, 0.02, grip=-1.0), S_RUNNING, "retreating")
    if not near_xy and c[2] - state.config.ee_radius < o.zmax + 0.005:
        # beside the object at contact height: back off horizontally first
        d = c[:2] - o.pose.position[:2]
        n = float(np.linalg.norm(d))
        if n > 1e-9 and _ee_gap(state, oid) < 0.01:
            tgt = ee.pose.translated((0.02 * d[0] / n, 0.02 * d[1] / n, 0.0))
            return Result(toward(state, tgt, 0.02, grip=-1.0), S_RUNNING, "retreating")
    return Result(hold(state, -1.0), S_DONE, "retreating")


def _ee_gap(state: WorldState, oid: str) -> float:
    s, p = geom.Sphere(state.config.ee_radius), Pose(state.ee.center)
    o = state[oid]
    for probe in (0.0, 0.002, 0.005, 0.01):
        grown = geom.Sphere(s.radius + probe)
        if any(geom.collide(sh, ps, grown, p) is not None for sh, ps in o.parts()):
            return probe
    return 1.0


class PickMovePlace(Skill):
    """Move an object to a target pose, clearing anything in the way first.

    ``target_fn(state)`` gives the object's goal pose; ``at_target(state)``
    says whether the object already rests there.
    """

    kind = "PickMovePlace"

    def __init__(self, ctx: Context, obj: str, target_fn: Callable, at_target: Callable,
                 label: str = "the goal", depth: int = 0):
        super().__init__(ctx)
        self.obj = obj
        self.target_fn = target_fn
        self.at_target = at_target
        self.label = label
        self.depth = depth

    def _relocate(self, state, oid, avoid=()) -> Result:
        if self.depth > 3:
            return Result(hold(state), failed("relocation too deep"), "")
        spot = free_spot(state, oid, self.ctx, avoid=avoid)
        if spot is None:
            return Result(hold(state), failed(f"no free spot for {oid}"), "")
        xy = spot.position[:2].copy()

        def tfn(s, oid=oid, xy=xy):
            return object_pose_at(s, oid, xy, s[oid].pose.orientation, 0.0)

        def done(s, oid=oid, xy=xy):
            return (s.ee.attached != oid and not s[oid].in_flight
                    and float(np.hypot(*(s[oid].pose.position[:2] - xy))) <= 0.01)

        sub = PickMovePlace(self.ctx, oid, tfn, done, label="a free spot", depth=self.depth + 1)
        return sub.act(state)

    def _act(self, state):
        ee = state.ee
        name = self.ctx.name(self.obj)
        o = state[self.obj]
        if o.in_flight:
            return Result(hold(state), S_RUNNING, f"waiting for {name}")
        if ee.attached is None and self.at_target(state):
            target = self.target_fn(state)
            r = Place(self.ctx, self.obj, target, self.label, pos_tol=1.0).act(state)
            return r
        if ee.attached is not None and ee.attached != self.obj:
            return self._relocate(state, ee.attached, avoid=())
        target = self.target_fn(state)
        if target is None:
            return Result(hold(state), failed(f"no target for {name}"), "")
        blockers = occupants(state, self.obj, target)
        if ee.attached == self.obj:
            if blockers:
                return self._relocate(state, self.obj)
            return Place(self.ctx, self.obj, target, self.label).act(state)
        above = [k for k in state.descendants(self.obj) if not state[k].static]
        if above:
            top = max(above, key=lambda k: state[k].zmin)
            return self._relocate(state, top, avoid=())
        movable = [b for b in blockers if not state[b].static]
        if len(movable) != len(blockers):
            return Result(hold(state), failed(f"target for {name} blocked by a fixture"), "")
        if movable:
            top = max(movable, key=lambda k: state[k].zmax)
            stack = [k for k in state.descendants(top) if not state[k].static]
            if stack:
                top = max(stack, key=lambda k: state[k].zmin)
            return self._relocate(state, top)
        return Pick(self.ctx, self.obj).act(state)


class Push(Skill):
    """Push an object along its local axes until its center reaches ``target``."""

    kind = "Push"

    def __init__(self, ctx: Context, obj: str, target, tol: float = 0.004, gap: float = 0.02):
        super().__init__(ctx)
        self.obj = obj
        self.target = np.asarray(target, dtype=float)[:2]
        self.tol = tol
        self.gap = gap

    def _axes(self, state) -> list[np.ndarray]:
        o = state[self.obj]
        if isinstance(o.shape, geom.Box):
            R = o.pose.matrix
            u = R[:2, 0] / np.linalg.norm(R[:2, 0])
        else:
            r = self.target - o.pose.position[:2]
            n = float(np.linalg.norm(r))
            u = r / n if n > 1e-9 else np.array([1.0, 0.0])
        return [u, np.array([-u[1], u[0]])]

    def _sweep_free(self, state, start, legs) -> bool:
        o = state[self.obj]
        rel = planner.prism_of(o.shape, o.pose, 0.004)
        base = o.pose.position
        mover = planner.Mover([planner.Prism(rel.verts - base[:2], rel.z0 - base[2],
                                             rel.z1 - base[2])], [])
        obs = [planner.prism_of(s, p, 0.004) for s, p in obstacles(state, ignore=[self.obj])]
        chk = planner.CollisionChecker(mover, obs, bounds=((-2, -2, -1), (2, 2, 2)), floor=-1.0)
        p = np.array([start[0], start[1], base[2]])
        for leg in legs:
            q = p + np.array([leg[0], leg[1], 0.0])
            if not chk.segment_free(p, q):
                return False
            p = q
        return True

    def plan_legs(self, state) -> list[np.ndarray]:
        o = state[self.obj]
        c = o.pose.position[:2]
        r = self.target - c
        u, v = self._axes(state)
        a, b = float(r @ u), float(r @ v)
        la, lb = a * u, b * v
        orders = [[la, lb], [lb, la]] if abs(a) >= abs(b) else [[lb, la], [la, lb]]
        key = ("push-order", self.obj, tuple(self.target.round(9)), scene_key(state, [self.obj]),
               tuple(np.round(c, 9)))
        cached = self.ctx.cache.get(key)
        if cached is not None:
            return cached
        legs = orders[0]
        for cand in orders:
            if self._sweep_free(state, c, cand):
                legs = cand
                break
        legs = [l for l in legs if float(np.linalg.norm(l)) > self.tol / 2]
        self.ctx.cache[key] = legs
        return legs

    def _act(self, state):
        cfg = state.config
        o = state[self.obj]
        name = self.ctx.name(self.obj)
        c = o.pose.position[:2]
        r = self.target - c
        if float(np.linalg.norm(r)) <= self.tol:
            res = retreat(state, self.obj, self.ctx)
            return res
        if state.ee.attached is not None:
            return Result(hold(state), failed("cannot push while holding"), f"pushing {name}")
        legs = self.plan_legs(state)
        if not legs:
            return Result(hold(state), S_DONE, f"pushing {name}")
        leg = legs[0]
        L = float(np.linalg.norm(leg))
        d = leg / L
        R = cfg.ee_radius
        ext = _extent(o, d)
        h = o.zmax - o.zmin
        zc = o.pose.position[2] if isinstance(o.shape, geom.Sphere) else o.zmin + 0.4 * h
        zc = max(zc, R + 0.0005)
        ee_c = state.ee.center
        rel = ee_c[:2] - c
        along = -float(rel @ d)
        lateral = float(abs(rel @ np.array([-d[1], d[0]])))
        contact = ext + R
        if (lateral < 1e-5 and abs(ee_c[2] - zc) < 1e-5
                and contact - 0.003 <= along <= contact + self.gap + 1e-6):
            speed = cfg.push_speed
            if zc - o.zmin > cfg.topple_height_fraction * h - 1e-3:
                # contact this high would tip the object over at full speed
                speed = min(speed, 0.9 * cfg.topple_ee_speed * cfg.dt)
            adv = min(speed, L + (along - contact))
            tgt = state.ee.pose.translated((adv * d[0], adv * d[1], 0.0))
            return Result(toward(state, tgt, speed, grip=-1.0), S_RUNNING, f"pushing {name}")
        start_c = np.array([c[0] - d[0] * (contact + self.gap), c[1] - d[1] * (contact + self.gap), zc])
        goal = Pose(start_c - np.array([0.0, 0.0, R]), state.ee.pose.orientation)
        return approach(self.ctx, state, goal, f"behind {name}")


def _extent(o, d: np.ndarray) -> float:
    fp = o.footprint
    c = o.pose.position[:2]
    if isinstance(fp, geom.Circle):
        return fp.r
    return float(np.max((fp.verts - c) @ d))


class Touch(Skill):
    """Lower the EE gently onto the object's top face and rest there."""

    kind = "Touch"

    def __init__(self, ctx: Context, obj: str):
        super().__init__(ctx)
        self.obj = obj

    def _act(self, state):
        o = state[self.obj]
        name = self.ctx.name(self.obj)
        top = np.array([o.pose.position[0], o.pose.position[1], o.zmax])
        pos = state.ee.pose.position
        aligned = float(np.hypot(*(pos[:2] - top[:2]))) < 1e-6
        gap = pos[2] - top[2]
        if aligned and gap <= 1e-6:
            return Result(hold(state, -1.0), S_RUNNING, f"touching {name}")
        if aligned and gap <= state.config.hover + 1e-6:
            step = min(state.config.descend_speed, gap)
            tgt = state.ee.pose.translated((0.0, 0.0, -step))
            return Result(toward(state, tgt, step, grip=-1.0), S_RUNNING, f"lowering onto {name}")
        hover = Pose(top + np.array([0.0, 0.0, state.config.hover]), state.ee.pose.orientation)
        r = Move(self.ctx, hover, label=name).act(state)
        return Result(Action(r.action.delta, -1.0),
                      r.status if r.status.state == FAILED else S_RUNNING, r.phase)


class Topple(Skill):
    """Sweep the EE through the object high up so it tips over.

    With ``ground`` set, the object must end up resting on the table; an
    already toppled object still sitting on something is shoved off instead.
    """

    kind = "ToppleStructure"
    DIRS = 8

    def __init__(self, ctx: Context, obj: str, ground: bool = False, gap: float = 0.03):
        super().__init__(ctx)
        self.obj = obj
        self.ground = ground
        self.gap = gap

    def _finished(self, state) -> bool:
        o = state[self.obj]
        if self.ground:
            return state.supports.get(self.obj) == TABLE and abs(o.zmin) < 1e-6
        return vertical_axis_deviation(o) > state.config.topple_angle

    def _shove(self, state, o) -> bool:
        """Slide a thin or already fallen object off its support instead of tipping it."""
        sup = state.supports.get(self.obj, TABLE)
        return self.ground and sup != TABLE and (not can_topple(o) or o.zmax - o.zmin < 0.035)

    def _height(self, state, o) -> float:
        # keep the EE sphere clear of whatever the object stands on
        h = o.zmax - o.zmin
        low = state.config.ee_radius + 0.004
        return o.zmin + max(0.4 * h if self._shove(state, o) else 0.85 * h, low)

    def _directions(self, state, o) -> list[np.ndarray]:
        R = o.pose.matrix
        u = R[:2, 0]
        n = float(np.linalg.norm(u))
        u = u / n if n > 1e-9 else np.array([1.0, 0.0])
        base = math.atan2(u[1], u[0])
        out = []
        for k in range(self.DIRS):
            a = base + k * 2 * math.pi / self.DIRS
            out.append(np.array([math.cos(a), math.sin(a)]))
        return out

    def _choose(self, state):
        o = state[self.obj]
        key = ("topple", self.obj, self.ground, scene_key(state))
        if key in self.ctx.cache:
            return self.ctx.cache[key]
        cfg = state.config
        R = cfg.ee_radius
        zc = self._height(state, o)
        # the sweep is a short straight move, so it only needs a hairline margin
        chk = planner.PlanQuery(state.ee.pose, state.ee.pose, obstacles(state, [self.obj]),
                                margin=0.001).checker()
        full = planner.PlanQuery(state.ee.pose, state.ee.pose, obstacles(state)).checker()
        best = None
        for d in self._directions(state, o):
            ext = _extent(o, d)
            c = o.pose.position[:2]
            start = np.array([c[0] - d[0] * (ext + R + self.gap), c[1] - d[1] * (ext + R + self.gap),
                              zc - R])
            if not (chk.point_free(start) and full.point_free(start + [0.0, 0.0, 0.015])):
                continue
            end = start + np.array([d[0], d[1], 0.0]) * (2 * ext + 2 * R + self.gap)
            if not chk.segment_free(start, end):
                continue
            trial = state.copy()
            trial.events = []
            try:
                if self._shove(state, o):
                    b = state[state.supports[self.obj]]
                    shift = float((b.pose.position[:2] - c) @ d) + _extent(b, d) + ext + 0.005
                    trial[self.obj].pose = trial[self.obj].pose.translated(
                        (d[0] * shift, d[1] * shift, 0.0))
                    trial.supports.pop(self.obj, None)
                    settle(trial, [self.obj])
                else:
                    topple(trial, self.obj, d)
            except WorldError:
                continue
            to = trial[self.obj]
            grounded = trial.supports.get(self.obj) == TABLE and abs(to.zmin) < 1e-6
            clean = not interpenetrations(trial, 1e-4)
            inside = bool(np.all(np.abs(to.pose.position[:2]) < 0.75))
            score = (grounded, clean, inside)
            if best is None or score > best[0]:
                best = (score, d, start)
            if grounded and clean and inside:
                break
        result = None if best is None else (best[1], best[2])
        self.ctx.cache[key] = result
        return result

    def _act(self, state):
        o = state[self.obj]
        name = self.ctx.name(self.obj)
        if self._finished(state):
            return retreat(state, self.obj, self.ctx)
        if state.ee.attached is not None:
            return Result(hold(state), failed("cannot topple while holding"), f"toppling {name}")
        choice = self._choose(state)
        if choice is None:
            return Result(hold(state), failed(f"no clear approach to {name}"), f"toppling {name}")
        d, start = choice
        pos = state.ee.pose.position
        rel = pos - start
        lateral = abs(float(rel[:2] @ np.array([-d[1], d[0]])))
        along = float(rel[:2] @ d)
        if lateral < 1e-5 and abs(rel[2]) < 1e-5 and along >= -1e-6:
            cfg = state.config
            speed = cfg.sweep_speed
            if self._shove(state, o):
                speed = min(speed, 0.9 * cfg.topple_ee_speed * cfg.dt)
            tgt = state.ee.pose.translated((speed * d[0], speed * d[1], 0.0))
            return Result(toward(state, tgt, speed, grip=-1.0), S_RUNNING, f"knocking over {name}")
        return approach(self.ctx, state, Pose(start, state.ee.pose.orientation), name)


def launch_ramp(cfg) -> tuple:
    """Per-step speed fractions: linear ramp-up, then cruise, release on the last."""
    n = cfg.launch_ramp_steps
    return tuple((k + 1) / n for k in range(n)) + (1.0,) * cfg.launch_cruise_steps


class Hit(Skill):
    """Throw the held object so its first contact is the target.

    The EE runs up along the launch direction (linear ramp, then cruise steps
    filling the velocity window) and releases on the last step, so the
    windowed EE velocity equals the solved launch velocity exactly.
    """

    kind = "Hit"

    def __init__(self, ctx: Context, thrown: str, target: str, aim_fn: Callable,
                 accept: Callable, label: str = "the target"):
        super().__init__(ctx)
        self.thrown = thrown
        self.target = target
        self.aim_fn = aim_fn
        self.accept = accept
        self.label = label

    def _plan(self, state):
        o = state[self.thrown]
        off = o.pose.position - state.ee.pose.position
        key = ("throw", self.thrown, self.target, scene_key(state),
               tuple(np.round(off, 9)), o.pose.orientation.tobytes())
        if key in self.ctx.cache:
            return self.ctx.cache[key]
        cfg = state.config
        aim = np.asarray(self.aim_fn(state), dtype=float)
        lo, hi = np.array(cfg.workspace_lo), np.array(cfg.workspace_hi)
        q = planner.PlanQuery(state.ee.pose, state.ee.pose, obstacles(state), held=held(state))
        chk = q.checker()
        toward_center = -aim[:2]
        n = float(np.linalg.norm(toward_center))
        phi0 = math.atan2(toward_center[1], toward_center[0]) if n > 1e-9 else -math.pi / 2
        result = None
        vmax = cfg.max_translation / cfg.dt * 0.96
        for dphi in [0, 1, -1, 2, -2, 3, -3, 4, -4, 5, -5, 6, -6, 7, -7, 8]:
            phi = phi0 + dphi * math.pi / 8
            u = np.array([math.cos(phi), math.sin(phi)])
            for dist in (0.3, 0.35, 0.25, 0.4, 0.45, 0.2, 0.5, 0.55, 0.6, 0.65, 0.7):
                for height in (0.3, 0.4, 0.25, 0.5, 0.2, 0.6):
                    rc = np.array([aim[0] + u[0] * dist, aim[1] + u[1] * dist, height + off[2]])
                    tip = rc - off
                    if np.any(tip < lo) or np.any(tip > hi):
                        continue
                    v = planner.ballistic_release(rc, aim, cfg.throw_angle, cfg.gravity)
                    if v is None or np.any(np.abs(v) > vmax):
                        continue
                    start = tip - v * cfg.dt * sum(launch_ramp(cfg))
                    if np.any(start < lo) or np.any(start > hi):
                        continue
                    if not chk.segment_free(start, tip):
                        continue
                    try:
                        res = simulate_flight(state, self.thrown, o.pose.with_position(rc), v)
                    except WorldError:
                        continue
                    if not self.accept(state, res):
                        continue
                    result = (start, v)
                    break
                if result:
                    break
            if result:
                break
        self.ctx.cache[key] = result
        return result

    def _act(self, state):
        ee = state.ee
        o = state[self.thrown]
        name = self.ctx.name(self.thrown)
        if o.in_flight:
            return Result(hold(state, -1.0), S_RUNNING, f"watching {name} fly")
        if ee.attached != self.thrown:
            if ee.attached is not None:
                return Result(hold(state), failed("holding another object"), f"throwing {name}")
            return Pick(self.ctx, self.thrown, lift=0.03).act(state)
        plan = self._plan(state)
        if plan is None:
            return Result(hold(state), failed(f"no feasible throw of {name}"), f"throwing {name}")
        start, v = plan
        dt = state.config.dt
        rel = ee.pose.position - start
        cum = 0.0
        ramp = launch_ramp(state.config)
        for k, f in enumerate(ramp):
            if float(np.linalg.norm(rel - v * dt * cum)) < 1e-7:
                step = v * dt * f
                grip = -1.0 if k == len(ramp) - 1 else 1.0
                return Result(Action(tuple(step.tolist() + [0.0, 0.0, 0.0]), grip),
                              S_RUNNING, f"throwing {name} at {self.label}")
            cum += f
        goal = Pose(start, ee.pose.orientation)
        r = Move(self.ctx, goal, label="the throwing position").act(state)
        return Result(Action(r.action.delta, 1.0),
                      r.status if r.status.state == FAILED else S_RUNNING,
                      f"moving {name} to the throwing position")


class BalanceScale(Skill):
    """Split objects into equal-mass groups and place each group on one pan."""

    kind = "BalanceScale"

    def __init__(self, ctx: Context, objs: list):
        super().__init__(ctx)
        self.objs = list(objs)

    def assignment(self, state) -> Optional[dict]:
        masses = [state[o].mass for o in self.objs]
        part = planner.balance_partition(masses)
        if part is None:
            return None
        left, right = part
        sc = state.scale
        out = {}
        for pan, idx in ((sc.left_pan, left), (sc.right_pan, right)):
            spots = pan_spots(state, pan)
            if len(idx) > len(spots):
                return None
            for i, k in enumerate(idx):
                out[self.objs[k]] = (pan, spots[i])
        return out

    def _act(self, state):
        if state.scale is None:
            return Result(hold(state), failed("no scale"), "")
        plan = self.assignment(state)
        if plan is None:
            return Result(hold(state), failed("objects cannot be balanced"), "")
        order = list(self.objs)
        if state.ee.attached in plan:
            order.remove(state.ee.attached)
            order.insert(0, state.ee.attached)
        for oid in order:
            pan, xy = plan[oid]

            def tfn(s, oid=oid, pan=pan, xy=xy):
                return object_pose_at(s, oid, xy, s[oid].pose.orientation, s[pan].zmax)

            def done(s, oid=oid, pan=pan, xy=xy):
                return (s.ee.attached != oid and s.supports.get(oid) == pan
                        and float(np.hypot(*(s[oid].pose.position[:2] - xy))) <= 0.01)

            if done(state):
                continue
            return PickMovePlace(self.ctx, oid, tfn, done, label="the scale").act(state)
        return retreat(state, self.objs[-1], self.ctx)


def pan_spots(state: WorldState, pan: str) -> list:
    p = state[pan]
    c = p.pose.position[:2]
    s = p.shape
    ox, oy = s.hx / 2, s.hy / 2
    return [c + np.array(v) for v in ((-ox, -oy), (ox, -oy), (-ox, oy), (ox, oy))]


def area_spots(state: WorldState, area: str) -> list:
    a = state[area]
    c = a.pose.position[:2]
    R = a.pose.matrix[:2, :2]
    s = a.shape
    if a.kind == "container":
        off = (s.hx - a.wall) / 2
    else:
        off = s.hx / 2
    return [c + R @ np.array([-off, 0.0]), c + R @ np.array([off, 0.0]), c.copy()]


class Trace(Skill):
    """Touch the active trace goal with the EE."""

    kind = "Trace"

    def _act(self, state):
        act = [g for g in state.goals if g.status == "active"]
        if not act:
            return Result(hold(state), S_DONE, "all goals touched")
        g = act[0]
        goal = Pose(g.position - np.array([0.0, 0.0, state.config.ee_radius]),
                    state.ee.pose.orientation)
        r = Move(self.ctx, goal, label="the green goal").act(state)
        return Result(r.action, r.status if r.status.state == FAILED else S_RUNNING, r.phase)


# ---------------------------------------------------------------- mapping


def manipulated(leaf: P.Node) -> Optional[str]:
    for attr in ("obj", "thrown"):
        if hasattr(leaf, attr):
            return getattr(leaf, attr)
    return None


def _active_leaves_for(tree: P.Node, oid: str) -> list:
    return [n for n in tree.walk() if isinstance(n, P.Leaf) and n.status == P.ACTIVE
            and manipulated(n) == oid]


def object_goal(tree: P.Node, leaf: P.Node, state: WorldState) -> Optional[tuple]:
    """Target (xy, orientation, support id, center height) from the object's active leaves.

    The center height is only known for position goals; it keeps the object
    from being set down on whatever currently occupies the goal.
    """
    oid = manipulated(leaf)
    o = state[oid]
    xy = None
    orient = None
    support = None
    z = None
    rest_q = o.pose.orientation
    leaves = [leaf] + [n for n in _active_leaves_for(tree, oid) if n is not leaf]
    for n in leaves:
        if isinstance(n, P.AtPose) and xy is None:
            xy = n.target.position[:2]
            z = float(n.target.position[2])
            orient = n.target.orientation
        elif isinstance(n, P.AtPos) and xy is None:
            xy = n.target[:2]
            z = float(n.target[2])
        elif isinstance(n, P.RotatedBy) and orient is None:
            orient = geom.quat_mul(geom.quat_from_axis_angle((0, 0, 1), n.target), n.q0)
            if n.pos_tol is not None and xy is None:
                xy = n.pos0[:2]
        elif isinstance(n, (P.OnTop, P.Inside)) and xy is None:
            base = n.base if isinstance(n, P.OnTop) else n.container
            support = base
            b = state[base]
            if b.kind in ("area", "container", "pan"):
                xy = _free_fixture_spot(state, oid, base)
            else:
                xy = b.pose.position[:2]
    if xy is None:
        return None
    return np.asarray(xy, dtype=float), (orient if orient is not None else rest_q), support, z


def _free_fixture_spot(state: WorldState, oid: str, base: str):
    spots = area_spots(state, base)
    o = state[oid]
    if state.supports.get(oid) == base or (state.ee.attached != oid and base in _chain(state, oid)):
        return o.pose.position[:2]
    for xy in spots:
        trial = object_pose_at(state, oid, xy, o.pose.orientation, 0.0)
        b = geom.body(o.shape, trial)
        taken = False
        for other in state.resting():
            if other.id in (oid, base) or other.id == state.ee.attached:
                continue
            if geom.footprints_intersect(b.footprint, other.footprint):
                taken = True
                break
        if not taken:
            return xy
    return spots[-1]


def _chain(state: WorldState, oid: str) -> list:
    out, cur = [], oid
    while cur in state.supports and cur not in out:
        cur = state.supports[cur]
        out.append(cur)
    return out


def _support_top(state: WorldState, oid: str, xy, orient, support: Optional[str],
                 z: Optional[float] = None) -> float:
    o = state[oid]
    if support is not None:
        b = state[support]
        if b.kind == "container":
            return b.floor_top
        return b.zmax
    trial = Pose(np.array([xy[0], xy[1], 0.0]), orient)
    b = geom.body(o.shape, trial)
    ceiling = 10.0 if z is None else z + b.zmin + 0.005  # bottom height the goal asks for
    return surface_below(state, b.footprint, ceiling, skip=[oid])


def pmp_for(ctx: Context, tree: P.Node, leaf: P.Node) -> PickMovePlace:
    oid = manipulated(leaf)

    def target_fn(state):
        g = object_goal(tree, leaf, state)
        if g is None:
            return None
        xy, q, support, zc = g
        z = _support_top(state, oid, xy, q, support, zc)
        return object_pose_at(state, oid, xy, q, z)

    def at_target(state):
        g = object_goal(tree, leaf, state)
        if g is None or state.ee.attached == oid:
            return False
        xy, q, support, _ = g
        o = state[oid]
        if float(np.hypot(*(o.pose.position[:2] - xy))) > 0.01:
            return False
        if geom.quat_angle(o.pose.orientation, q) > math.radians(1.0):
            return False
        if support is not None and state.supports.get(oid) != support:
            return False
        return True

    base = getattr(leaf, "base", None) or getattr(leaf, "container", None)
    label = ctx.name(base) if base else "its goal"
    return PickMovePlace(ctx, oid, target_fn, at_target, label=label)


def _push_target_for(leaf, state: WorldState) -> np.ndarray:
    if isinstance(leaf, P.PushProgress):
        return leaf.start + leaf.dir * (0.45 * leaf.base_d)
    if isinstance(leaf, P.AtPos):
        return leaf.target[:2]
    # TouchPushed: shove 14 cm along the first clear local axis
    o = state[leaf.obj]
    R = o.pose.matrix
    u = R[:2, 0] / max(1e-12, float(np.linalg.norm(R[:2, 0])))
    v = np.array([-u[1], u[0]])
    start = leaf.start[:2]
    dist = leaf.min_move + 0.04
    ctx = Context()
    for d in (v, -v, u, -u):
        tgt = start + d * dist
        if np.any(np.abs(tgt) > 0.5):
            continue
        probe = Push(ctx, leaf.obj, tgt)
        if probe._sweep_free(state, start, [d * dist]):
            return tgt
    return start + v * dist


class SolverConfigError(LookupError):
    """No skill is registered for a predicate type."""


def solver_for(leaf: P.Node, ctx: Context, tree: Optional[P.Node] = None,
               state: Optional[WorldState] = None) -> Skill:
    """Fixed predicate-to-skill table."""
    tree = tree if tree is not None else leaf
    if isinstance(leaf, (P.EEAtPos, P.EEAtPose)):
        goal = leaf.target if isinstance(leaf, P.EEAtPose) else None
        if goal is None:
            q = state.ee.pose.orientation if state is not None else geom.IDENTITY_Q
            goal = Pose(leaf.target, q)
        return Move(ctx, goal, label="the goal pose")
    if isinstance(leaf, P.AtPos) and leaf.no_grasp:
        pair = _push_swap_pair(tree, leaf)
        return SwapPush(ctx, *pair) if pair else _LazyPush(ctx, leaf)
    if isinstance(leaf, (P.AtPos, P.AtPose, P.OnTop, P.Inside, P.RotatedBy)):
        return pmp_for(ctx, tree, leaf)
    if isinstance(leaf, P.Picked):
        return Pick(ctx, leaf.obj)
    if isinstance(leaf, P.TouchedGently):
        return Touch(ctx, leaf.obj)
    if isinstance(leaf, (P.TouchPushed, P.PushProgress)):
        return _LazyPush(ctx, leaf)
    if isinstance(leaf, P.TouchToppled):
        return Topple(ctx, leaf.obj)
    if isinstance(leaf, P.ToppleStructure):
        return _StructureTopple(ctx, leaf)
    if isinstance(leaf, P.Hit):
        return hit_for(ctx, leaf)
    if isinstance(leaf, P.Balanced):
        return BalanceScale(ctx, leaf.objs)
    if isinstance(leaf, P.TraceGoals):
        return Trace(ctx)
    raise SolverConfigError(f"no solver for {type(leaf).__name__}")


def _push_swap_pair(tree: P.Node, leaf: P.AtPos):
    """The two no-grasp position leaves of a Set that trade places, or None."""
    for n in tree.walk():
        if not isinstance(n, P.Set) or not any(c is leaf for c in n.children):
            continue
        pushes = [c for c in n.children if isinstance(c, P.AtPos) and c.no_grasp]
        if len(pushes) == 2:
            return pushes[0], pushes[1]
    return None


class SwapPush(Skill):
    """Exchange two boxes by pushing only, going around a rectangle.

    ``a`` is parked at the corner C1 = A0 + du*u, ``b`` then slides to
    C2 = A0 + dv*v and on to A0, and finally ``a`` slides from C1 to B0.
    The stage is read off the object positions.
    """

    kind = "SwapPush"

    def __init__(self, ctx: Context, first: P.AtPos, second: P.AtPos, tol: float = 0.008):
        super().__init__(ctx)
        self.a, self.b = first.obj, second.obj
        self.B0 = first.target[:2].copy()
        self.A0 = second.target[:2].copy()
        self.tol = tol

    def _corners(self, state):
        key = ("swap-push", self.a, self.b)
        if key not in self.ctx.cache:
            o = state[self.a]
            R = o.pose.matrix
            u = R[:2, 0] / np.linalg.norm(R[:2, 0])
            v = np.array([-u[1], u[0]])
            d = self.B0 - self.A0
            self.ctx.cache[key] = (self.A0 + (d @ u) * u, self.A0 + (d @ v) * v, u)
        return self.ctx.cache[key]

    def _act(self, state):
        c1, c2, u = self._corners(state)
        pa = state[self.a].pose.position[:2]
        pb = state[self.b].pose.position[:2]
        if np.linalg.norm(pb - self.A0) <= self.tol:
            return Push(self.ctx, self.a, self.B0).act(state)
        if np.linalg.norm(pa - c1) <= self.tol:
            if abs(float((pb - self.A0) @ u)) <= self.tol:
                return Push(self.ctx, self.b, self.A0).act(state)
            return Push(self.ctx, self.b, c2).act(state)
        return Push(self.ctx, self.a, c1).act(state)


class _LazyPush(Skill):
    """Push whose target is fixed from the predicate baselines on first use."""

    kind = "Push"

    def __init__(self, ctx: Context, leaf):
        super().__init__(ctx)
        self.leaf = leaf

    def _act(self, state):
        key = ("push-target", id(self.leaf))
        tgt = self.ctx.cache.get(key)
        if tgt is None:
            tgt = _push_target_for(self.leaf, state) if not isinstance(self.leaf, P.TouchPushed) \
                else _push_target_for(self.leaf, _baseline_state(self.leaf, state))
            self.ctx.cache[key] = tgt
        return Push(self.ctx, self.leaf.obj, tgt).act(state)


def _baseline_state(leaf, state: WorldState) -> WorldState:
    """State with the pushed object put back at its reset position (for target choice)."""
    s = copy.copy(state)
    s.objects = [copy.copy(o) for o in state.objects]
    s.__post_init__()
    o = s[leaf.obj]
    o.pose = o.pose.with_position(leaf.start)
    return s


class _StructureTopple(Skill):
    kind = "ToppleStructure"

    def __init__(self, ctx: Context, leaf: P.ToppleStructure):
        super().__init__(ctx)
        self.leaf = leaf

    def _act(self, state):
        flags = self.leaf.grounded(state)
        pending = [o for o, g in zip(self.leaf.objs, flags) if not g]
        if not pending:
            return retreat(state, self.leaf.objs[-1], self.ctx)
        top = max(pending, key=lambda k: (state[k].zmin, k))
        o = state[top]
        if state.ee.attached == top or o.zmax - o.zmin < state.config.ee_radius + 0.006:
            # too thin to catch from the side without hitting its support: set it down instead
            return self._set_down(state, top)
        return Topple(self.ctx, top, ground=True).act(state)

    def _set_down(self, state, oid):
        key = ("set-down", oid)
        if key not in self.ctx.cache:
            spot = free_spot(state, oid, self.ctx)
            if spot is None:
                return Result(hold(state), failed(f"no free spot for {oid}"), "")
            self.ctx.cache[key] = spot.position[:2].copy()
        xy = self.ctx.cache[key]

        def tfn(s):
            return object_pose_at(s, oid, xy, s[oid].pose.orientation, 0.0)

        def done(s):
            return s.ee.attached != oid and s.supports.get(oid) == TABLE

        return PickMovePlace(self.ctx, oid, tfn, done, label="the table").act(state)


def hit_for(ctx: Context, leaf: P.Hit) -> Hit:
    def aim_fn(state):
        t = state[leaf.target]
        o = state[leaf.thrown]
        half = (o.zmax - o.zmin) / 2
        if t.kind == "area":
            xy = _free_fixture_spot(state, leaf.thrown, leaf.target)
            return np.array([xy[0], xy[1], t.zmax + half])
        c = t.pose.position
        return np.array([c[0], c[1], max(c[2], t.zmin + 0.6 * (t.zmax - t.zmin))])

    def accept(state, res):
        if res.target != leaf.target:
            return False
        t = state[leaf.target]
        if t.kind == "area":
            aim = aim_fn(state)
            return float(np.hypot(*(res.position[:2] - aim[:2]))) <= 0.03
        if leaf.require_topple:
            return (float(np.linalg.norm(res.velocity)) >= state.config.topple_hit_speed * 1.2
                    and can_topple(t))
        return True

    return Hit(ctx, leaf.thrown, leaf.target, aim_fn, accept, label=ctx.name(leaf.target))


# --------------------------------------------------------------- scheduler


def next_predicate(tree: P.Node, state: WorldState, prefer: Optional[P.Node] = None
                   ) -> Optional[P.Node]:
    """Greedy choice of the leaf to work on next.

    Sequences yield their first unfinished child. Sets prefer a child whose
    object the EE already holds, then ``prefer`` (the leaf being worked on,
    so the choice does not flip-flop), then the anchor nearest the EE.
    """
    if tree.status in (P.DONE, P.FAILED):
        return None
    if isinstance(tree, P.Leaf):
        return None if tree.guard else tree
    if isinstance(tree, P.Once):
        return next_predicate(tree.child, state, prefer)
    if isinstance(tree, P.Sequence):
        for c in tree.children:
            if c.status != P.DONE:
                return next_predicate(c, state, prefer)
        return None
    cands = []
    for c in tree.children:
        if c.status == P.DONE or c.guard:
            continue
        leaf = next_predicate(c, state, prefer)
        if leaf is not None:
            cands.append(leaf)
    if not cands:
        return None
    att = state.ee.attached
    if att is not None:
        holding = [l for l in cands if manipulated(l) == att]
        if holding:
            return holding[0]
    if prefer is not None and any(l is prefer for l in cands):
        return prefer
    ee = state.ee.pose.position
    return min(cands, key=lambda l: float(np.linalg.norm(np.asarray(l.anchor(state)) - ee)))


def _reserved(tree: P.Node, state: WorldState) -> list:
    out = []
    for n in tree.walk():
        if not isinstance(n, P.Leaf) or n.status == P.DONE:
            continue
        if isinstance(n, (P.AtPos, P.AtPose)):
            t = n.target if isinstance(n, P.AtPos) else n.target.position
            out.append((float(t[0]), float(t[1]), 0.04))
        elif isinstance(n, P.RotatedBy) and n.pos0 is not None:
            out.append((float(n.pos0[0]), float(n.pos0[1]), 0.04))
    return out


class OraclePolicy:
    """Greedy predicate scheduler driving skill solvers."""

    def __init__(self, instance, timeout: int = CONFIG.episode_timeout):
        self.instance = instance
        self.tree = instance.fresh_tree()
        self.timeout = timeout
        self.ctx = Context(names=dict(instance.names), seed=instance.seed)
        self.failure: Optional[str] = None
        self.current: Optional[tuple] = None
        self.last: Optional[Result] = None
        self.leaf: Optional[P.Node] = None

    @property
    def kinds_used(self) -> list:
        return list(self.ctx.kinds_used)

    def reset(self, state: WorldState):
        P.start(self.tree, state)
        self.failure = None
        self.current = None
        self.reset_solvers()

    def reset_solvers(self):
        """Drop every cached plan and skill object (statelessness check)."""
        self.ctx.cache.clear()
        self.current = None

    def observe(self, prev: WorldState, nxt: WorldState):
        P.evaluate(self.tree, prev, nxt)

    def act(self, state: WorldState) -> Action:
        prev = self.current[0] if self.current is not None else None
        self.leaf = leaf = next_predicate(self.tree, state, prev)
        if leaf is None:
            self.last = Result(hold(state), S_DONE, "done")
            return self.last.action
        if self.current is None or self.current[0] is not leaf:
            self.current = (leaf, solver_for(leaf, self.ctx, self.tree, state))
        self.ctx.reserved = _reserved(self.tree, state)
        res = self.current[1].act(state)
        if res.status.state == FAILED:
            self.failure = res.status.reason
        self.last = res
        return res.action

    def __call__(self, state: WorldState) -> Action:
        return self.act(state)
