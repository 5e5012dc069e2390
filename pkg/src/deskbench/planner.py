"""Motion planning and the small numerical searches used by the oracle.

Planning happens over EE tip positions; orientation is slerped along arc
length. Collision checks use conservative vertical prisms: every obstacle
and every moving part is a convex polygon footprint extruded over its
z-interval, inflated by a safety margin. Circles are replaced by
circumscribed polygons, so a prism always contains the true shape.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import geom
from .config import CONFIG
from .geom import Pose, Shape, Sphere


class PlanningError(RuntimeError):
    pass


class StartInCollision(PlanningError):
    pass


class GoalInCollision(PlanningError):
    pass


class PlanningFailed(PlanningError):
    pass


# ------------------------------------------------------------------- prisms


@dataclass(frozen=True, eq=False)
class Prism:
    verts: np.ndarray  # (n, 2) ccw convex polygon
    z0: float
    z1: float

    @property
    def axes(self) -> np.ndarray:
        e = np.roll(self.verts, -1, axis=0) - self.verts
        n = np.stack([e[:, 1], -e[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1, keepdims=True)


def _inflate(poly: np.ndarray, margin: float) -> np.ndarray:
    """Offset a convex polygon outward by at least ``margin`` (vertex push)."""
    if margin <= 0:
        return poly
    c = poly.mean(axis=0)
    n = len(poly)
    out = []
    for i in range(n):
        p, a, b = poly[i], poly[i - 1], poly[(i + 1) % n]
        e1 = p - a
        e2 = b - p
        n1 = np.array([e1[1], -e1[0]]) / np.linalg.norm(e1)
        n2 = np.array([e2[1], -e2[0]]) / np.linalg.norm(e2)
        bis = n1 + n2
        bn = np.linalg.norm(bis)
        if bn < 1e-9:
            bis = p - c
            bn = np.linalg.norm(bis)
        bis /= bn
        cosh = max(0.2, float(bis @ n1))
        out.append(p + bis * margin / cosh)
    return np.array(out)


def footprint_polygon(fp: geom.Footprint) -> np.ndarray:
    if isinstance(fp, geom.Circle):
        return fp.polygon(16, circumscribed=True).verts
    return np.asarray(fp.verts)


def prism_of(shape: Shape, pose: Pose, margin: float = 0.0) -> Prism:
    b = geom.body(shape, pose)
    return Prism(_inflate(footprint_polygon(b.footprint), margin), b.zmin - margin, b.zmax + margin)


@dataclass
class Mover:
    """What travels with the EE tip: the EE sphere and an optional held object.

    Parts are prisms expressed relative to the tip position. ``for_rotation``
    returns rotation-invariant parts (discs about the tip axis).
    """

    parts: list
    radius_parts: list

    @classmethod
    def build(cls, ee_pose: Pose, held: Optional[tuple[Shape, Pose]] = None,
              margin: float = CONFIG.plan_margin) -> "Mover":
        r = CONFIG.ee_radius
        tip = ee_pose.position
        parts = [Prism(_inflate(geom.Circle(0.0, 0.0, r).polygon(16).verts, margin),
                       -margin, 2 * r + margin)]
        radius_parts = [(r + margin, -margin, 2 * r + margin)]
        if held is not None:
            shape, pose = held
            b = geom.body(shape, pose)
            poly = footprint_polygon(b.footprint) - tip[:2]
            parts.append(Prism(_inflate(poly, margin), b.zmin - tip[2] - margin,
                               b.zmax - tip[2] + margin))
            rad = float(np.max(np.linalg.norm(b.vertices[:, :2] - tip[:2], axis=1)))
            if isinstance(shape, (geom.Disc, Sphere)):
                rad = float(np.max(np.linalg.norm(poly, axis=1))) / math.cos(math.pi / 16) + 1e-9
            radius_parts.append((rad + margin, b.zmin - tip[2] - margin, b.zmax - tip[2] + margin))
        return cls(parts, radius_parts)

    def rotation_invariant(self) -> "Mover":
        parts = [Prism(geom.Circle(0.0, 0.0, r).polygon(16).verts, z0, z1)
                 for r, z0, z1 in self.radius_parts]
        return Mover(parts, self.radius_parts)

    @property
    def lowest(self) -> float:
        return min(p.z0 for p in self.parts)


class CollisionChecker:
    """Vectorized prism-vs-prism tests for batches of tip positions."""

    def __init__(self, mover: Mover, obstacles: Sequence[Prism],
                 bounds: tuple = (CONFIG.workspace_lo, CONFIG.workspace_hi),
                 floor: float = 0.0):
        self.mover = mover
        self.obstacles = list(obstacles)
        self.lo = np.asarray(bounds[0], dtype=float)
        self.hi = np.asarray(bounds[1], dtype=float)
        self.floor = floor
        self._pairs = []
        for mp in mover.parts:
            for ob in self.obstacles:
                axes = np.vstack([mp.axes, ob.axes])
                mproj = mp.verts @ axes.T
                oproj = ob.verts @ axes.T
                self._pairs.append((axes, mproj.min(0), mproj.max(0), oproj.min(0),
                                    oproj.max(0), mp.z0, mp.z1, ob.z0, ob.z1))

    def free(self, pts) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        ok = np.all((p >= self.lo - 1e-12) & (p <= self.hi + 1e-12), axis=1)
        ok &= p[:, 2] + self.mover.lowest >= self.floor - 1e-9
        for axes, mlo, mhi, olo, ohi, mz0, mz1, oz0, oz1 in self._pairs:
            zhit = (p[:, 2] + mz0 < oz1) & (p[:, 2] + mz1 > oz0)
            if not zhit.any():
                continue
            shift = p[:, :2] @ axes.T
            sep = np.any((mhi + shift <= olo) | (mlo + shift >= ohi), axis=1)
            ok &= ~(zhit & ~sep)
        return ok

    def point_free(self, p) -> bool:
        return bool(self.free(p)[0])

    def segment_free(self, a, b, res: float = CONFIG.plan_check_resolution) -> bool:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / res)))
        t = np.linspace(0.0, 1.0, n + 1)[:, None]
        return bool(np.all(self.free(a + t * (b - a))))


# --------------------------------------------------------------------- paths


@dataclass
class Path:
    waypoints: list
    resolution: float = CONFIG.plan_path_resolution

    @property
    def positions(self) -> np.ndarray:
        return np.array([w.position for w in self.waypoints])

    def length(self) -> float:
        p = self.positions
        return float(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1))) if len(p) > 1 else 0.0

    def interpolate(self, s: float) -> Pose:
        """Pose at arc length ``s`` (orientation slerped per segment)."""
        p = self.positions
        if len(p) == 1:
            return self.waypoints[0]
        seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
        acc = 0.0
        for i, L in enumerate(seg):
            if s <= acc + L or i == len(seg) - 1:
                t = 0.0 if L < 1e-15 else min(1.0, max(0.0, (s - acc) / L))
                a, b = self.waypoints[i], self.waypoints[i + 1]
                return Pose(a.position + t * (b.position - a.position),
                            geom.slerp(a.orientation, b.orientation, t))
            acc += L
        return self.waypoints[-1]

    def densify(self, spacing: Optional[float] = None) -> "Path":
        spacing = spacing or self.resolution
        out = [self.waypoints[0]]
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            d = float(np.linalg.norm(b.position - a.position))
            n = max(1, int(math.ceil(d / spacing - 1e-9)))
            for k in range(1, n + 1):
                t = k / n
                out.append(Pose(a.position + t * (b.position - a.position),
                                geom.slerp(a.orientation, b.orientation, t)))
        return Path(out, spacing)

    def samples(self, spacing: float = CONFIG.plan_check_resolution) -> list:
        L = self.length()
        n = max(1, int(math.ceil(L / spacing)))
        return [self.interpolate(L * k / n) for k in range(n + 1)]


def _orientations(start: Pose, goal: Pose, pts: np.ndarray) -> list:
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(seg.sum())
    acc = np.concatenate([[0.0], np.cumsum(seg)])
    out = []
    for s in acc:
        t = s / total if total > 0 else 1.0
        out.append(Pose(pts[len(out)], geom.slerp(start.orientation, goal.orientation, t)))
    out[0] = start
    out[-1] = goal
    return out


# ------------------------------------------------------------- RRT-Connect


@dataclass
class PlanQuery:
    start: Pose
    goal: Pose
    obstacles: list  # (Shape, Pose) pairs
    held: Optional[tuple] = None  # (Shape, Pose) of an attached object at start
    bounds: tuple = (CONFIG.workspace_lo, CONFIG.workspace_hi)
    seed: int = 0
    margin: float = CONFIG.plan_margin
    node_budget: int = CONFIG.plan_node_budget

    def checker(self) -> CollisionChecker:
        mover = Mover.build(self.start, self.held, self.margin)
        if geom.quat_angle(self.start.orientation, self.goal.orientation) > 1e-9:
            mover = mover.rotation_invariant()
        prisms = [prism_of(s, p, self.margin) for s, p in self.obstacles]
        return CollisionChecker(mover, prisms, self.bounds)


class _Tree:
    def __init__(self, root, cap):
        self.pts = np.empty((cap + 2, 3))
        self.parent = np.empty(cap + 2, dtype=int)
        self.pts[0] = root
        self.parent[0] = -1
        self.n = 1

    def add(self, p, parent) -> int:
        self.pts[self.n] = p
        self.parent[self.n] = parent
        self.n += 1
        return self.n - 1

    def nearest(self, q) -> int:
        d = self.pts[:self.n] - q
        return int(np.argmin(np.einsum("ij,ij->i", d, d)))

    def branch(self, i) -> list:
        out = []
        while i >= 0:
            out.append(self.pts[i].copy())
            i = int(self.parent[i])
        return out


def _steer(a, b, step):
    d = b - a
    n = float(np.linalg.norm(d))
    return b.copy() if n <= step else a + d * (step / n)


def rrt_connect(q: PlanQuery, checker: Optional[CollisionChecker] = None) -> Path:
    """Bidirectional RRT over tip positions; deterministic given ``q.seed``."""
    chk = checker or q.checker()
    start = q.start.position.astype(float)
    goal = q.goal.position.astype(float)
    if not chk.point_free(start):
        raise StartInCollision(f"start {start.round(4).tolist()} is in collision")
    if not chk.point_free(goal):
        raise GoalInCollision(f"goal {goal.round(4).tolist()} is in collision")
    if chk.segment_free(start, goal):
        return Path([q.start, q.goal])
    rng = np.random.default_rng(q.seed)
    step = CONFIG.plan_step
    lo, hi = chk.lo, chk.hi
    budget = q.node_budget
    ta, tb = _Tree(start, budget), _Tree(goal, budget)
    a_is_start = True

    def extend(tree, target):
        i = tree.nearest(target)
        new = _steer(tree.pts[i], target, step)
        if chk.segment_free(tree.pts[i], new):
            return tree.add(new, i), np.allclose(new, target)
        return None, False

    while ta.n + tb.n < budget:
        other_root = tb.pts[0]
        sample = other_root if rng.random() < CONFIG.plan_goal_bias else rng.uniform(lo, hi)
        ia, _ = extend(ta, sample)
        if ia is not None:
            target = ta.pts[ia]
            while ta.n + tb.n < budget:
                ib, reached = extend(tb, target)
                if ib is None:
                    break
                if reached:
                    pa, pb = ta.branch(ia), tb.branch(ib)
                    if not a_is_start:
                        pa, pb = pb, pa
                    pts = np.array(pa[::-1] + pb[1:])
                    return Path(_orientations(q.start, q.goal, pts))
        ta, tb = tb, ta
        a_is_start = not a_is_start
    raise PlanningFailed(f"no path within {budget} nodes")


def smooth(path: Path, checker: CollisionChecker, rng: np.random.Generator,
           attempts: int = CONFIG.smooth_attempts) -> Path:
    """Shortcut smoothing between waypoints; never lengthens the path."""
    pts = [w.position.copy() for w in path.waypoints]
    if len(pts) > 2 and checker.segment_free(pts[0], pts[-1]):
        pts = [pts[0], pts[-1]]
    for _ in range(attempts):
        if len(pts) <= 2:
            break
        i, j = sorted(rng.choice(len(pts), size=2, replace=False).tolist())
        if j - i < 2:
            continue
        if checker.segment_free(pts[i], pts[j]):
            pts = pts[:i + 1] + pts[j:]
    # drop collinear interior points
    k = 1
    while 0 < k < len(pts) - 1:
        a, b, c = pts[k - 1], pts[k], pts[k + 1]
        if np.linalg.norm(np.cross(b - a, c - b)) < 1e-12 and (b - a) @ (c - b) >= 0:
            pts.pop(k)
        else:
            k += 1
    if len(pts) == len(path.waypoints):
        return path
    return Path(_orientations(path.waypoints[0], path.waypoints[-1], np.array(pts)),
                path.resolution)


def plan(q: PlanQuery, smooth_path: bool = True) -> Path:
    chk = q.checker()
    path = rrt_connect(q, chk)
    if smooth_path and len(path.waypoints) > 2:
        path = smooth(path, chk, np.random.default_rng(q.seed + 1))
    return path


# -------------------------------------------------------------- ballistics


def ballistic_release(release_pos, target_pos, angle: float = None,
                      gravity: float = CONFIG.gravity) -> Optional[np.ndarray]:
    """Launch velocity at elevation ``angle`` whose parabola passes through target.

    Returns None when no speed works (the target sits above the line of fire).
    """
    angle = CONFIG.throw_angle if angle is None else angle
    r = np.asarray(release_pos, dtype=float)
    t = np.asarray(target_pos, dtype=float)
    h = t[:2] - r[:2]
    d = float(np.linalg.norm(h))
    if d <= 0.0:
        return None
    dz = float(t[2] - r[2])
    c = math.cos(angle)
    denom = 2.0 * c * c * (d * math.tan(angle) - dz)
    if denom <= 0.0 or c <= 0.0:
        return None
    v = math.sqrt(gravity * d * d / denom)
    u = h / d
    return np.array([v * c * u[0], v * c * u[1], v * math.sin(angle)])


def flight_landing(release_pos, velocity, z_land: float,
                   gravity: float = CONFIG.gravity) -> Optional[np.ndarray]:
    """Closed-form point where the parabola descends through ``z_land``."""
    p = np.asarray(release_pos, dtype=float)
    v = np.asarray(velocity, dtype=float)
    a, b, c = -0.5 * gravity, v[2], p[2] - z_land
    disc = b * b - 4 * a * c
    if disc < 0:
        return None
    t = (-b - math.sqrt(disc)) / (2 * a)
    return p + v * t + np.array([0.0, 0.0, -0.5 * gravity * t * t])


# ------------------------------------------------------------------ balance


def balance_partition(masses: Sequence[float]) -> Optional[tuple[tuple, tuple]]:
    """Equal-sum split of all items into two non-empty sides.

    Exhaustive over subsets; among valid splits the left index tuple is the
    lexicographically smallest.
    """
    n = len(masses)
    if n == 0:
        return None
    if n > 16:
        raise ValueError("balance_partition is exhaustive; at most 16 items")
    total = float(sum(masses))
    best = None
    for size in range(1, n):
        for left in itertools.combinations(range(n), size):
            s = float(sum(masses[i] for i in left))
            if math.isclose(2.0 * s, total, rel_tol=1e-9, abs_tol=1e-12):
                if best is None or left < best:
                    best = left
    if best is None:
        return None
    right = tuple(i for i in range(n) if i not in best)
    return best, right
