"""Flat-shaded top-down rendering, bounding boxes and prompt assets."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .. import geom
from ..config import CONFIG, Config
from ..geom import Camera
from ..tasks.catalog import Catalog, default_catalog

BACKGROUND = (214, 200, 176)
EE_COLOR = (40, 40, 48)
GOAL_COLORS = {"pending": (60, 200, 90), "active": (60, 200, 90), "done": (150, 150, 150)}
FIXTURE_COLORS = {"container": ((150, 110, 70),), "pan": ((175, 175, 185),),
                  "obstacle": ((105, 105, 110),)}
CHECKER = 0.01  # checker cell size, metres
ASSET_RES = (64, 64)
ASSET_SPAN = 0.24  # metres shown across an object asset


def default_cameras(config: Config = CONFIG) -> dict[str, Camera]:
    return {
        "base": Camera("base", (0.0, 0.0), config.base_window, config.base_window,
                       tuple(config.base_resolution)),
        "hand": Camera("hand", (0.0, 0.0), config.hand_window, config.hand_window,
                       tuple(config.hand_resolution), follows_ee=True),
    }


def texture_colors(name: str, catalog: Optional[Catalog] = None) -> tuple:
    if name in FIXTURE_COLORS:
        return FIXTURE_COLORS[name]
    catalog = catalog or default_catalog()
    try:
        return tuple(tuple(c) for c in catalog.texture(name).colors)
    except KeyError:
        # unknown names get a stable colour derived from the name bytes
        h = sum((i + 1) * b for i, b in enumerate(name.encode())) % 360
        return (_hue(h),)


def _hue(deg: int) -> tuple:
    c = [0.5 + 0.4 * math.cos(math.radians(deg - k)) for k in (0, 120, 240)]
    return tuple(int(round(255 * v)) for v in c)


def _pixel_grid(cam: Camera):
    w, h = cam.resolution
    xs = cam.center[0] - cam.width / 2 + (np.arange(w) + 0.5) * cam.width / w
    ys = cam.center[1] + cam.height / 2 - (np.arange(h) + 0.5) * cam.height / h
    return xs, ys


def _mask(fp, cam: Camera, xs, ys):
    """Boolean mask of pixel centers inside footprint ``fp`` restricted to its bbox."""
    x0, y0, x1, y1 = fp.bounds
    w, h = cam.resolution
    c0 = max(0, int(math.floor(cam.to_pixel(x0, 0)[0])) - 1)
    c1 = min(w, int(math.ceil(cam.to_pixel(x1, 0)[0])) + 1)
    r0 = max(0, int(math.floor(cam.to_pixel(0, y1)[1])) - 1)
    r1 = min(h, int(math.ceil(cam.to_pixel(0, y0)[1])) + 1)
    if c0 >= c1 or r0 >= r1:
        return None
    X, Y = np.meshgrid(xs[c0:c1], ys[r0:r1])
    if isinstance(fp, geom.Circle):
        m = (X - fp.cx) ** 2 + (Y - fp.cy) ** 2 <= fp.r ** 2
    else:
        v = fp.verts
        m = np.ones(X.shape, dtype=bool)
        for i in range(len(v)):
            a, b = v[i], v[(i + 1) % len(v)]
            m &= (b[0] - a[0]) * (Y - a[1]) - (b[1] - a[1]) * (X - a[0]) >= -1e-12
    if not m.any():
        return None
    return (r0, r1, c0, c1), m, X, Y


def _layers(state, catalog):
    """(height, order, id, footprint, colours, pose) for everything visible from above."""
    out = []
    for o in state.objects:
        cols = texture_colors(o.texture, catalog)
        for k, (s, p) in enumerate(o.parts()):
            b = geom.body(s, p)
            out.append((b.zmax, o.id, k, b.footprint, cols, o.pose))
    for i, g in enumerate(getattr(state, "goals", []) or []):
        fp = geom.Circle(float(g.position[0]), float(g.position[1]), 0.02)
        out.append((float(g.position[2]), f"~goal{i}", 0, fp, (GOAL_COLORS.get(g.status, (60, 200, 90)),),
                    None))
    ee = state.ee
    c = ee.center
    r = state.config.ee_radius
    out.append((float(c[2] + r), "~ee", 0, geom.Circle(float(c[0]), float(c[1]), r), (EE_COLOR,), None))
    out.sort(key=lambda t: (t[0], t[1], t[2]))
    return out


def _paint(img, ids, layer_idx, region, m, X, Y, cols, pose):
    r0, r1, c0, c1 = region
    sub = img[r0:r1, c0:c1]
    if len(cols) == 1 or pose is None:
        sub[m] = cols[0]
    else:
        yaw = pose.yaw
        ca, sa = math.cos(-yaw), math.sin(-yaw)
        dx, dy = X - pose.position[0], Y - pose.position[1]
        lx, ly = ca * dx - sa * dy, sa * dx + ca * dy
        parity = (np.floor(lx / CHECKER) + np.floor(ly / CHECKER)).astype(np.int64) % 2
        a, b = np.array(cols[0], dtype=np.uint8), np.array(cols[1], dtype=np.uint8)
        sub[m & (parity == 0)] = a
        sub[m & (parity == 1)] = b
    ids[r0:r1, c0:c1][m] = layer_idx


def render_with_ids(state, cam: Camera, catalog: Optional[Catalog] = None):
    """Image plus a per-pixel object id buffer (None where nothing was painted)."""
    cam = cam.following(state.ee.pose.position[:2])
    w, h = cam.resolution
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = BACKGROUND
    ids = np.full((h, w), -1, dtype=np.int32)
    xs, ys = _pixel_grid(cam)
    layers = _layers(state, catalog)
    names = []
    for zmax, oid, _k, fp, cols, pose in layers:
        hit = _mask(fp, cam, xs, ys)
        names.append(oid)
        if hit is None:
            continue
        region, m, X, Y = hit
        _paint(img, ids, len(names) - 1, region, m, X, Y, cols, pose)
    return img, ids, names, cam


def render_frame(state, cam: Camera, catalog: Optional[Catalog] = None) -> np.ndarray:
    return render_with_ids(state, cam, catalog)[0]


def bounding_boxes(state, cam: Camera, catalog: Optional[Catalog] = None) -> dict:
    """{object id: [x0, y0, x1, y1, visible]} in pixels for the camera's current window.

    Boxes cover the projected footprint corners, clipped to the frame. An
    object is visible when at least one pixel of the final frame shows it.
    """
    return render_and_boxes(state, cam, catalog)[1]


def render_and_boxes(state, cam: Camera, catalog: Optional[Catalog] = None):
    """One rasterization serving both the frame and its boxes."""
    img, ids, names, cam = render_with_ids(state, cam, catalog)
    owners = set(names[i] for i in np.unique(ids) if i >= 0)
    w, h = cam.resolution
    out = {}
    for o in state.objects:
        x0 = y0 = math.inf
        x1 = y1 = -math.inf
        for s, p in o.parts():
            bx0, by0, bx1, by1 = geom.body(s, p).footprint.bounds
            for x, y in ((bx0, by0), (bx1, by1)):
                px, py = cam.to_pixel(x, y)
                x0, x1 = min(x0, px), max(x1, px)
                y0, y1 = min(y0, py), max(y1, py)
        inside = x1 > 0 and y1 > 0 and x0 < w and y0 < h
        box = [max(0.0, x0), max(0.0, y0), min(float(w), x1), min(float(h), y1)]
        out[o.id] = [round(v, 3) for v in box] + [bool(inside and o.id in owners)]
    return img, out


# ------------------------------------------------------------- prompt assets


def render_object_asset(obj, catalog: Optional[Catalog] = None, res=ASSET_RES,
                        span: float = ASSET_SPAN) -> np.ndarray:
    """Side elevation of the object alone at a fixed scale, so size and height read."""
    w, h = res
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = BACKGROUND
    b = geom.body(obj.shape, obj.pose)
    x0, _, x1, _ = b.footprint.bounds
    px = span / w
    u = (np.arange(w) + 0.5) * px - span / 2  # horizontal offset from the object center
    z = (h - np.arange(h) - 0.5) * px - 0.1 * span  # ground line near the bottom
    U, Z = np.meshgrid(u, z)
    cx = (x0 + x1) / 2
    height = b.zmax - b.zmin
    if isinstance(obj.shape, geom.Sphere):
        r = obj.shape.radius
        m = U ** 2 + (Z - r) ** 2 <= r ** 2
    else:
        m = (np.abs(U) <= (x1 - x0) / 2) & (Z >= 0) & (Z <= height)
    cols = texture_colors(obj.texture, catalog)
    if len(cols) == 1:
        img[m] = cols[0]
    else:
        parity = (np.floor((U + cx) / CHECKER) + np.floor(Z / CHECKER)).astype(np.int64) % 2
        img[m & (parity == 0)] = cols[0]
        img[m & (parity == 1)] = cols[1]
    return img


def render_texture_asset(texture: str, catalog: Optional[Catalog] = None, res=ASSET_RES) -> np.ndarray:
    cols = texture_colors(texture, catalog)
    w, h = res
    img = np.empty((h, w, 3), dtype=np.uint8)
    if len(cols) == 1:
        img[:] = cols[0]
        return img
    cell = max(1, w // 8)
    yy, xx = np.mgrid[0:h, 0:w]
    parity = (xx // cell + yy // cell) % 2
    img[parity == 0] = cols[0]
    img[parity == 1] = cols[1]
    return img


def render_layout(state, layout: dict, cam: Camera, catalog: Optional[Catalog] = None) -> np.ndarray:
    """Render ``state`` with object / EE poses overridden by a keystep or goal-scene layout."""
    s = state.copy()
    for oid, pose in layout.get("objects", {}).items():
        s[oid].pose = pose
    if layout.get("ee") is not None:
        s.ee.pose = layout["ee"]
    return render_frame(s, cam, catalog)
