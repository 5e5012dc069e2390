"""Rigid poses, parametric shapes, contact queries and orthographic projection.

Quaternions are stored ``(w, x, y, z)``. Positions are meters in the table
frame: +x east, +y north, +z up, table surface at ``z = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional, Union

import numpy as np

from .config import CONFIG

IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])
DISC_SIDES = 16
RIM_SAMPLES = 32


# ---------------------------------------------------------------- quaternions


def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = math.sqrt(float(q @ q))
    if n == 0.0 or not math.isfinite(n):
        raise ValueError(f"invalid quaternion {q!r}")
    return q / n


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_rotate(q, v) -> np.ndarray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=float)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-15:
        return IDENTITY_Q.copy()
    s = math.sin(angle / 2.0) / n
    return np.array([math.cos(angle / 2.0), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_from_rotvec(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    angle = float(np.linalg.norm(r))
    if angle < 1e-15:
        return IDENTITY_Q.copy()
    return quat_from_axis_angle(r / angle, angle)


def quat_to_rotvec(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q[0] < 0:
        q = -q
    s = math.sqrt(max(0.0, 1.0 - q[0] * q[0]))
    angle = 2.0 * math.atan2(s, q[0])
    if s < 1e-12:
        return 2.0 * q[1:]
    return q[1:] / s * angle


def quat_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Orientation ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])


def quat_yaw(q) -> float:
    w, x, y, z = q
    return math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


def quat_angle(a, b) -> float:
    """Geodesic angle between two orientations, in [0, pi]."""
    d = abs(float(np.dot(a, b)))
    return 2.0 * math.acos(min(1.0, d))


def slerp(a, b, t: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = float(a @ b)
    if d < 0.0:
        b, d = -b, -d
    if d > 0.9995:
        return quat_normalize(a + t * (b - a))
    theta = math.acos(d)
    s = math.sin(theta)
    return (math.sin((1 - t) * theta) * a + math.sin(t * theta) * b) / s


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def yaw_quat(yaw: float) -> np.ndarray:
    return np.array([math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2)])


# ----------------------------------------------------------------------- pose


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: IDENTITY_Q.copy())

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        q = quat_normalize(np.array(self.orientation, dtype=float).reshape(4))
        object.__setattr__(self, "position", _frozen(p))
        object.__setattr__(self, "orientation", _frozen(q))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3))

    @classmethod
    def from_xyz_yaw(cls, x: float, y: float, z: float, yaw: float = 0.0) -> "Pose":
        return cls(np.array([x, y, z]), yaw_quat(yaw))

    def compose(self, other: "Pose") -> "Pose":
        """Rigid composition ``self ∘ other``."""
        pos = self.position + quat_rotate(self.orientation, other.position)
        return Pose(pos, quat_mul(self.orientation, other.orientation))

    __matmul__ = compose

    def inverse(self) -> "Pose":
        qi = quat_conj(self.orientation)
        return Pose(-quat_rotate(qi, self.position), qi)

    def transform_point(self, p) -> np.ndarray:
        return self.position + quat_rotate(self.orientation, p)

    def with_position(self, p) -> "Pose":
        return Pose(p, self.orientation)

    def translated(self, d) -> "Pose":
        return Pose(self.position + np.asarray(d, dtype=float), self.orientation)

    @property
    def yaw(self) -> float:
        return quat_yaw(self.orientation)

    @property
    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    @property
    def key(self) -> tuple:
        k = self.__dict__.get("_key")
        if k is None:
            k = (tuple(self.position.tolist()), tuple(self.orientation.tolist()))
            object.__setattr__(self, "_key", k)
        return k

    def to_list(self) -> list[float]:
        return self.position.tolist() + self.orientation.tolist()

    @classmethod
    def from_list(cls, v) -> "Pose":
        return cls(v[:3], v[3:7])

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.position, other.position, atol=atol)
                    and np.allclose(self.orientation, other.orientation, atol=atol))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        p = ", ".join(f"{v:.4f}" for v in self.position)
        q = ", ".join(f"{v:.4f}" for v in self.orientation)
        return f"Pose(({p}), ({q}))"


class PoseError(NamedTuple):
    position: float
    rotation: float
    combined: float


def pose_error(a: Pose, b: Pose, rot_weight: float | None = None) -> PoseError:
    """Position error (m), geodesic rotation error (rad), and their weighted sum."""
    w = CONFIG.pose_rot_weight if rot_weight is None else rot_weight
    pos = float(np.linalg.norm(a.position - b.position))
    rot = quat_angle(a.orientation, b.orientation)
    return PoseError(pos, rot, pos + w * rot)


# --------------------------------------------------------------------- shapes


def _check_positive(name, **vals):
    for k, v in vals.items():
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{name}.{k} must be positive, got {v!r}")


@dataclass(frozen=True)
class Box:
    hx: float
    hy: float
    hz: float

    def __post_init__(self):
        _check_positive("Box", hx=self.hx, hy=self.hy, hz=self.hz)

    @property
    def volume(self) -> float:
        return 8.0 * self.hx * self.hy * self.hz


@dataclass(frozen=True)
class Disc:
    """Solid cylinder with its axis along local z."""

    radius: float
    height: float

    def __post_init__(self):
        _check_positive("Disc", radius=self.radius, height=self.height)

    @property
    def volume(self) -> float:
        return math.pi * self.radius ** 2 * self.height


@dataclass(frozen=True)
class Sphere:
    radius: float

    def __post_init__(self):
        _check_positive("Sphere", radius=self.radius)

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius ** 3


Shape = Union[Box, Disc, Sphere]


def shape_to_dict(s: Shape) -> dict:
    if isinstance(s, Box):
        return {"kind": "box", "hx": s.hx, "hy": s.hy, "hz": s.hz}
    if isinstance(s, Disc):
        return {"kind": "disc", "radius": s.radius, "height": s.height}
    return {"kind": "sphere", "radius": s.radius}


def shape_from_dict(d: dict) -> Shape:
    kind = d["kind"]
    if kind == "box":
        return Box(d["hx"], d["hy"], d["hz"])
    if kind == "disc":
        return Disc(d["radius"], d["height"])
    if kind == "sphere":
        return Sphere(d["radius"])
    raise ValueError(f"unknown shape kind {kind!r}")


def local_vertices(shape: Shape, sides: int = RIM_SAMPLES) -> np.ndarray:
    """Sample points whose convex hull approximates the shape (exact for boxes)."""
    if isinstance(shape, Box):
        sx = np.array([-1, 1])
        g = np.array(np.meshgrid(sx, sx, sx, indexing="ij")).reshape(3, -1).T
        return g * np.array([shape.hx, shape.hy, shape.hz])
    t = np.arange(sides) * (2 * math.pi / sides)
    if isinstance(shape, Disc):
        ring = np.stack([shape.radius * np.cos(t), shape.radius * np.sin(t)], axis=1)
        h = shape.height / 2
        top = np.hstack([ring, np.full((sides, 1), h)])
        bot = np.hstack([ring, np.full((sides, 1), -h)])
        return np.vstack([top, bot])
    r = shape.radius
    ring = np.stack([r * np.cos(t), r * np.sin(t), np.zeros(sides)], axis=1)
    poles = np.array([[0, 0, r], [0, 0, -r]])
    side = np.stack([r * np.cos(t), np.zeros(sides), r * np.sin(t)], axis=1)
    return np.vstack([ring, side, poles])


# ------------------------------------------------------------------ footprints


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull (monotone chain), collinear points dropped."""
    pts = sorted(set((round(float(x), 12), round(float(y), 12)) for x, y in points))
    if len(pts) <= 2:
        return np.array(pts, dtype=float)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 1e-15:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 1e-15:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


@dataclass(frozen=True, eq=False)
class Circle:
    cx: float
    cy: float
    r: float

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.cx - self.r, self.cy - self.r, self.cx + self.r, self.cy + self.r)

    @property
    def area(self) -> float:
        return math.pi * self.r * self.r

    def contains(self, pts: np.ndarray, eps: float = 1e-12) -> np.ndarray:
        d = pts - np.array([self.cx, self.cy])
        return np.einsum("ij,ij->i", d, d) <= (self.r + eps) ** 2

    def polygon(self, sides: int = DISC_SIDES, circumscribed: bool = True) -> "Polygon":
        t = (np.arange(sides) + 0.5) * (2 * math.pi / sides)
        rr = self.r / math.cos(math.pi / sides) if circumscribed else self.r
        v = np.stack([self.cx + rr * np.cos(t), self.cy + rr * np.sin(t)], axis=1)
        return Polygon(v)

    def translated(self, dx: float, dy: float) -> "Circle":
        return Circle(self.cx + dx, self.cy + dy, self.r)

    @property
    def key(self):
        return ("c", self.cx, self.cy, self.r)


@dataclass(frozen=True, eq=False)
class Polygon:
    verts: np.ndarray  # (n, 2), counter-clockwise, convex

    def __post_init__(self):
        object.__setattr__(self, "verts", _frozen(np.array(self.verts, dtype=float)))

    @property
    def center(self) -> np.ndarray:
        return self.verts.mean(axis=0)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        lo = self.verts.min(axis=0)
        hi = self.verts.max(axis=0)
        return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

    @property
    def area(self) -> float:
        x, y = self.verts[:, 0], self.verts[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def contains(self, pts: np.ndarray, eps: float = 1e-12) -> np.ndarray:
        v = self.verts
        e = np.roll(v, -1, axis=0) - v
        rel = pts[:, None, :] - v[None, :, :]
        cr = e[None, :, 0] * rel[:, :, 1] - e[None, :, 1] * rel[:, :, 0]
        return np.all(cr >= -eps, axis=1)

    def translated(self, dx: float, dy: float) -> "Polygon":
        return Polygon(self.verts + np.array([dx, dy]))

    def polygon(self, *_, **__) -> "Polygon":
        return self

    @property
    def key(self):
        return ("p", self.verts.tobytes())


Footprint = Union[Circle, Polygon]


def _axes_2d(poly: Polygon) -> np.ndarray:
    e = np.roll(poly.verts, -1, axis=0) - poly.verts
    n = np.stack([e[:, 1], -e[:, 0]], axis=1)
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def footprint_penetration(a: Footprint, b: Footprint) -> Optional[tuple[float, np.ndarray]]:
    """Minimum 2-D penetration depth and unit normal (pointing from a to b), or None."""
    if isinstance(a, Circle) and isinstance(b, Circle):
        d = np.array([b.cx - a.cx, b.cy - a.cy])
        dist = float(np.linalg.norm(d))
        depth = a.r + b.r - dist
        if depth <= 0:
            return None
        n = d / dist if dist > 1e-12 else np.array([1.0, 0.0])
        return depth, n
    pa = a.polygon() if isinstance(a, Circle) else a
    pb = b.polygon() if isinstance(b, Circle) else b
    axes = np.vstack([_axes_2d(pa), _axes_2d(pb)])
    if isinstance(a, Circle) or isinstance(b, Circle):
        d = pb.center - pa.center
        if np.linalg.norm(d) > 1e-12:
            axes = np.vstack([axes, d / np.linalg.norm(d)])
    prj_a = pa.verts @ axes.T
    prj_b = pb.verts @ axes.T
    if isinstance(a, Circle):
        c = a.center @ axes.T
        amin, amax = c - a.r, c + a.r
    else:
        amin, amax = prj_a.min(axis=0), prj_a.max(axis=0)
    if isinstance(b, Circle):
        c = b.center @ axes.T
        bmin, bmax = c - b.r, c + b.r
    else:
        bmin, bmax = prj_b.min(axis=0), prj_b.max(axis=0)
    overlap = np.minimum(amax, bmax) - np.maximum(amin, bmin)
    if np.any(overlap <= 0):
        return None
    k = int(np.argmin(overlap))
    n = axes[k]
    if (pb.center - pa.center) @ n < 0:
        n = -n
    return float(overlap[k]), n


def footprints_intersect(a: Footprint, b: Footprint) -> bool:
    ax0, ay0, ax1, ay1 = a.bounds
    bx0, by0, bx1, by1 = b.bounds
    if ax1 <= bx0 or bx1 <= ax0 or ay1 <= by0 or by1 <= ay0:
        return False
    return footprint_penetration(a, b) is not None


def _grid(fp: Footprint, res: float) -> np.ndarray:
    x0, y0, x1, y1 = fp.bounds
    nx = max(1, int(math.ceil((x1 - x0) / res - 1e-9)))
    ny = max(1, int(math.ceil((y1 - y0) / res - 1e-9)))
    xs = x0 + (np.arange(nx) + 0.5) * res
    ys = y0 + (np.arange(ny) + 0.5) * res
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


@lru_cache(maxsize=8192)
def _overlap_cached(top_key, base_key, res) -> float:
    top, base = _FP_REGISTRY[top_key], _FP_REGISTRY[base_key]
    if not footprints_intersect(top, base):
        return 0.0
    pts = _grid(top, res)
    inside_top = top.contains(pts)
    n_top = int(inside_top.sum())
    if n_top == 0:
        return 0.0
    both = base.contains(pts[inside_top])
    return float(both.sum()) / n_top


_FP_REGISTRY: dict = {}


def footprint_fraction(top: Footprint, base: Footprint, res: float | None = None) -> float:
    """Fraction of ``top``'s area covered by ``base`` (1 mm grid sampling by default)."""
    res = CONFIG.footprint_resolution if res is None else res
    if len(_FP_REGISTRY) > 50000:
        _FP_REGISTRY.clear()
        _overlap_cached.cache_clear()
    _FP_REGISTRY[top.key] = top
    _FP_REGISTRY[base.key] = base
    return _overlap_cached(top.key, base.key, res)


# ---------------------------------------------------------------------- bodies


@dataclass(frozen=True, eq=False)
class Body:
    """A shape placed in the world with derived geometry."""

    shape: Shape
    pose: Pose
    vertices: np.ndarray
    zmin: float
    zmax: float
    footprint: Footprint

    @property
    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        x0, y0, x1, y1 = self.footprint.bounds
        return np.array([x0, y0, self.zmin]), np.array([x1, y1, self.zmax])

    @property
    def height(self) -> float:
        return self.zmax - self.zmin


def _is_upright(q) -> bool:
    return abs(quat_to_matrix(q)[2, 2]) > 1.0 - 1e-9


@lru_cache(maxsize=16384)
def _body_cached(shape: Shape, key: tuple) -> Body:
    pose = Pose(key[0], key[1])
    R = pose.matrix
    verts = local_vertices(shape) @ R.T + pose.position
    if isinstance(shape, Sphere):
        c = pose.position
        zmin, zmax = c[2] - shape.radius, c[2] + shape.radius
        fp: Footprint = Circle(float(c[0]), float(c[1]), shape.radius)
    else:
        zmin, zmax = float(verts[:, 2].min()), float(verts[:, 2].max())
        if isinstance(shape, Disc) and _is_upright(pose.orientation):
            c = pose.position
            fp = Circle(float(c[0]), float(c[1]), shape.radius)
            h = shape.height / 2
            zmin, zmax = float(c[2] - h), float(c[2] + h)
        else:
            fp = Polygon(convex_hull_2d(verts[:, :2]))
    return Body(shape, pose, verts, float(zmin), float(zmax), fp)


def body(shape: Shape, pose: Pose) -> Body:
    return _body_cached(shape, pose.key)


def footprint(shape: Shape, pose: Pose) -> Footprint:
    return body(shape, pose).footprint


def footprint_overlap(top: tuple[Shape, Pose], base: tuple[Shape, Pose],
                      res: float | None = None) -> float:
    """Fraction of the top footprint covered by the base footprint, in [0, 1]."""
    return footprint_fraction(footprint(*top), footprint(*base), res)


# -------------------------------------------------------------------- contacts


class Contact(NamedTuple):
    point: np.ndarray
    normal: np.ndarray  # unit, pointing from the first body towards the second
    depth: float


def _sphere_against(shape: Shape, pose: Pose, center: np.ndarray, radius: float):
    """Contact of a sphere against ``shape``; normal points from shape to sphere."""
    R = pose.matrix
    c = R.T @ (center - pose.position)
    if isinstance(shape, Sphere):
        d = float(np.linalg.norm(c))
        depth = shape.radius + radius - d
        if depth <= 0:
            return None
        n = c / d if d > 1e-12 else np.array([0.0, 0.0, 1.0])
        pt = n * shape.radius
    elif isinstance(shape, Box):
        h = np.array([shape.hx, shape.hy, shape.hz])
        q = np.clip(c, -h, h)
        diff = c - q
        d = float(np.linalg.norm(diff))
        if d > 1e-12:
            if d >= radius:
                return None
            n = diff / d
            depth = radius - d
            pt = q
        else:
            gaps = h - np.abs(c)
            k = int(np.argmin(gaps))
            n = np.zeros(3)
            n[k] = 1.0 if c[k] >= 0 else -1.0
            depth = radius + float(gaps[k])
            pt = c.copy()
            pt[k] = n[k] * h[k]
    else:
        r, hh = shape.radius, shape.height / 2
        rho = math.hypot(c[0], c[1])
        radial = np.array([c[0] / rho, c[1] / rho, 0.0]) if rho > 1e-12 else np.array([1.0, 0.0, 0.0])
        if rho <= r and abs(c[2]) <= hh:
            gap_r, gap_z = r - rho, hh - abs(c[2])
            if gap_z <= gap_r:
                n = np.array([0.0, 0.0, 1.0 if c[2] >= 0 else -1.0])
                depth = radius + gap_z
                pt = np.array([c[0], c[1], n[2] * hh])
            else:
                n = radial
                depth = radius + gap_r
                pt = np.array([radial[0] * r, radial[1] * r, c[2]])
        else:
            s = min(1.0, r / rho) if rho > 1e-12 else 1.0
            q = np.array([c[0] * s, c[1] * s, min(max(c[2], -hh), hh)])
            diff = c - q
            d = float(np.linalg.norm(diff))
            if d >= radius or d < 1e-15:
                return None
            n = diff / d
            depth = radius - d
            pt = q
    return Contact(pose.position + R @ pt, R @ n, float(depth))


def _polytope(shape: Shape, pose: Pose):
    R = pose.matrix
    if isinstance(shape, Box):
        verts = local_vertices(shape) @ R.T + pose.position
        return verts, R.T.copy(), R.T.copy()
    t = (np.arange(DISC_SIDES)) * (2 * math.pi / DISC_SIDES)
    ring = np.stack([shape.radius * np.cos(t), shape.radius * np.sin(t)], axis=1)
    h = shape.height / 2
    local = np.vstack([np.hstack([ring, np.full((DISC_SIDES, 1), h)]),
                       np.hstack([ring, np.full((DISC_SIDES, 1), -h)])])
    verts = local @ R.T + pose.position
    half = DISC_SIDES // 2
    mids = (np.arange(half) + 0.5) * (2 * math.pi / DISC_SIDES)
    side_n = np.stack([np.cos(mids), np.sin(mids), np.zeros(half)], axis=1)
    edge_t = np.arange(half) * (2 * math.pi / DISC_SIDES) + math.pi / 2 + math.pi / DISC_SIDES
    side_e = np.stack([np.cos(edge_t), np.sin(edge_t), np.zeros(half)], axis=1)
    axis = np.array([[0.0, 0.0, 1.0]])
    normals = np.vstack([side_n, axis]) @ R.T
    edges = np.vstack([side_e, axis]) @ R.T
    return verts, normals, edges


def _sat(sa: Shape, pa: Pose, sb: Shape, pb: Pose) -> Optional[Contact]:
    va, na, ea = _polytope(sa, pa)
    vb, nb, eb = _polytope(sb, pb)
    cr = np.cross(ea[:, None, :], eb[None, :, :]).reshape(-1, 3)
    norms = np.linalg.norm(cr, axis=1)
    cr = cr[norms > 1e-9] / norms[norms > 1e-9, None]
    axes = np.vstack([na, nb, cr])
    prj_a = va @ axes.T
    prj_b = vb @ axes.T
    amin, amax = prj_a.min(axis=0), prj_a.max(axis=0)
    bmin, bmax = prj_b.min(axis=0), prj_b.max(axis=0)
    overlap = np.minimum(amax, bmax) - np.maximum(amin, bmin)
    if np.any(overlap <= 0):
        return None
    k = int(np.argmin(overlap))
    n = axes[k]
    ca, cb = va.mean(axis=0), vb.mean(axis=0)
    if (cb - ca) @ n < 0:
        n = -n
    sup_a = va[(va @ n) >= (va @ n).max() - 1e-7].mean(axis=0)
    sup_b = vb[(vb @ n) <= (vb @ n).min() + 1e-7].mean(axis=0)
    return Contact((sup_a + sup_b) / 2, n, float(overlap[k]))


def collide(sa: Shape, pa: Pose, sb: Shape, pb: Pose) -> Optional[Contact]:
    """Penetration contact between two placed shapes, or None when disjoint.

    Sphere pairs are exact. Cylinders against boxes or cylinders use a
    16-sided prism, so depths there are accurate to a few tenths of a mm.
    """
    if isinstance(sb, Sphere):
        c = _sphere_against(sa, pa, pb.position, sb.radius)
        return c
    if isinstance(sa, Sphere):
        c = _sphere_against(sb, pb, pa.position, sa.radius)
        if c is None:
            return None
        return Contact(c.point, -c.normal, c.depth)
    return _sat(sa, pa, sb, pb)


# ---------------------------------------------------------------------- camera


@dataclass(frozen=True)
class Camera:
    id: str
    center: tuple[float, float]
    width: float
    height: float
    resolution: tuple[int, int]
    follows_ee: bool = False

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("camera window must have positive extent")
        if self.resolution[0] <= 0 or self.resolution[1] <= 0:
            raise ValueError("camera resolution must be positive")

    def following(self, ee_xy) -> "Camera":
        if not self.follows_ee:
            return self
        return Camera(self.id, (float(ee_xy[0]), float(ee_xy[1])), self.width,
                      self.height, self.resolution, True)

    def to_pixel(self, x, y):
        """Unclipped pixel coordinates (x right, y down) of world (x, y)."""
        w, h = self.resolution
        px = (x - (self.center[0] - self.width / 2)) / self.width * w
        py = ((self.center[1] + self.height / 2) - y) / self.height * h
        return px, py

    def to_world(self, px, py):
        w, h = self.resolution
        x = self.center[0] - self.width / 2 + px / w * self.width
        y = self.center[1] + self.height / 2 - py / h * self.height
        return x, y

    def to_dict(self) -> dict:
        return {"id": self.id, "center": list(self.center), "width": self.width,
                "height": self.height, "resolution": list(self.resolution),
                "follows_ee": self.follows_ee, "projection": "orthographic_top_down"}


def project(cam: Camera, world_point) -> Optional[tuple[float, float]]:
    """Orthographic pixel of a world point, or None when outside the window."""
    px, py = cam.to_pixel(float(world_point[0]), float(world_point[1]))
    w, h = cam.resolution
    if px < 0 or py < 0 or px > w or py > h:
        return None
    return px, py
