"""Task instances, the task registry and the rejection-sampling scene builder."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .. import geom
from .. import predicates as P
from ..config import CONFIG, Config
from ..geom import Box, Disc, Pose, Shape, Sphere
from ..world import BalanceScale, EndEffector, Goal, WorldObject, WorldState, reset
from .catalog import Catalog, Splits, Template, default_catalog, default_splits, derive_rng, _check_split
from .prompts import parse_template

LEVELS = ("L0", "L1", "L2")


class SamplerError(RuntimeError):
    """Scene rejection sampling gave up."""


class _Retry(Exception):
    """Internal: restart the scene from scratch."""


@dataclass(frozen=True)
class TaskId:
    level: str
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass
class TaskInstance:
    task: str
    level: str
    seed: int
    split: str
    initial: WorldState
    tree: P.Node
    prompt: list
    names: dict
    exemplars: dict = field(default_factory=dict)  # id -> WorldObject shown only in prompts
    keysteps: list = field(default_factory=list)  # [{"objects": {id: Pose}, "ee": Pose | None}]
    scenes: list = field(default_factory=list)  # goal scene layouts, same format
    metadata: dict = field(default_factory=dict)

    def fresh_tree(self) -> P.Node:
        return copy.deepcopy(self.tree)

    def reset(self) -> WorldState:
        return reset(self.initial)

    @property
    def task_id(self) -> TaskId:
        return TaskId(self.level, self.task)


_REGISTRY: dict[str, tuple[str, Callable]] = {}


def register(level: str, name: str):
    def deco(fn):
        _REGISTRY[name] = (level, fn)
        return fn
    return deco


def registry() -> dict:
    return _REGISTRY


# ------------------------------------------------------------------- builder


def shape_radius(shape: Shape, yaw: float = 0.0) -> float:
    """Circumscribed radius of the upright footprint."""
    if isinstance(shape, Box):
        return math.hypot(shape.hx, shape.hy)
    return shape.radius


def shape_height(shape: Shape) -> float:
    if isinstance(shape, Box):
        return 2 * shape.hz
    if isinstance(shape, Disc):
        return shape.height
    return 2 * shape.radius


def scale_shape(shape: Shape, xy: float = 1.0, z: float = 1.0) -> Shape:
    if isinstance(shape, Box):
        return Box(shape.hx * xy, shape.hy * xy, shape.hz * z)
    if isinstance(shape, Disc):
        return Disc(shape.radius * xy, shape.height * z)
    return Sphere(shape.radius * xy)


def template_min_height(t: Template) -> float:
    s = t.size
    if t.shape == "box":
        hz = s["hz"]
        hz = s[hz] if isinstance(hz, str) else hz
        return 2 * hz[0]
    if t.shape == "disc":
        return s["height"][0]
    return 2 * s["radius"][0]


def template_max_radius(t: Template) -> float:
    s = t.size

    def hi(k):
        v = s[k]
        return s[v][1] if isinstance(v, str) else v[1]

    if t.shape == "box":
        return math.hypot(hi("hx"), hi("hy"))
    return hi("radius")


# reusable template filters
def stackable(t: Template) -> bool:
    return t.stackable


def pushable(t: Template) -> bool:
    return t.shape != "sphere" and template_min_height(t) >= 0.02


def tall(t: Template) -> bool:
    return t.tall


def not_tall(t: Template) -> bool:
    return not t.tall


def angular(t: Template) -> bool:
    return t.shape == "box"


def not_ball(t: Template) -> bool:
    return t.shape != "sphere"


def fits(r: float):
    return lambda t: template_max_radius(t) <= r


def all_of(*fs):
    return lambda t: all(f(t) for f in fs)


class SceneBuilder:
    """Accumulates objects for one scene attempt."""

    REGION = ((-0.42, 0.42), (-0.38, 0.42))

    def __init__(self, task: str, seed: int, split: str, rng: np.random.Generator,
                 catalog: Catalog, splits: Splits, config: Config = CONFIG):
        self.task = task
        self.seed = seed
        self.split = split
        self.rng = rng
        self.catalog = catalog
        self.splits = splits
        self.config = config
        self.objects: list[WorldObject] = []
        self.names: dict[str, str] = {}
        self.exemplars: dict[str, WorldObject] = {}
        self.goals: list[Goal] = []
        self.scale: Optional[BalanceScale] = None
        self.ee_pose = Pose(np.array(config.home_position))
        self.attached: Optional[str] = None
        self._n = 0
        self._used: set = set()

    # -- catalog draws --------------------------------------------------
    def templates(self, filt: Optional[Callable] = None) -> list[Template]:
        out = [self.catalog.template(n) for n in self.splits.objects_for(self.split)]
        if filt is not None:
            out = [t for t in out if filt(t)]
        return out

    def template(self, filt: Optional[Callable] = None) -> Template:
        ts = self.templates(filt)
        if not ts:
            raise SamplerError(f"{self.task}: no template in split {self.split!r} fits the task "
                               f"(seed {self.seed})")
        return ts[int(self.rng.integers(len(ts)))]

    def textures(self) -> tuple:
        return self.splits.textures_for(self.split)

    def texture(self, exclude=()) -> str:
        ts = [t for t in self.textures() if t not in exclude]
        if not ts:
            raise _Retry()
        return ts[int(self.rng.integers(len(ts)))]

    def distinct_textures(self, n: int) -> list[str]:
        ts = list(self.textures())
        if n > len(ts):
            raise SamplerError(f"{self.task}: split {self.split!r} has only {len(ts)} textures, "
                               f"{n} needed (seed {self.seed})")
        idx = self.rng.permutation(len(ts))[:n]
        return [ts[i] for i in idx]

    # -- objects --------------------------------------------------------
    def new_object(self, template: Template, texture: str, shape: Optional[Shape] = None,
                   yaw: Optional[float] = None, unique: bool = True, prefix: str = "obj") -> WorldObject:
        if unique and (template.name, texture) in self._used:
            # pick another texture so every object reads differently
            free = [t for t in self.textures() if (template.name, t) not in self._used]
            if not free:
                raise _Retry()
            texture = free[int(self.rng.integers(len(free)))]
        shape = shape if shape is not None else template.sample(self.rng)
        yaw = float(self.rng.uniform(-math.pi, math.pi)) if yaw is None else yaw
        oid = f"{prefix}{self._n}"
        self._n += 1
        pose = Pose(np.array([0.0, 0.0, shape_height(shape) / 2]), geom.yaw_quat(yaw))
        obj = WorldObject(oid, shape, pose, texture, template=template.name)
        self._used.add((template.name, texture))
        self.names[oid] = f"{texture} {template.name}"
        return obj

    def add(self, obj: WorldObject) -> WorldObject:
        self.objects.append(obj)
        return obj

    def fixture(self, oid: str, kind: str, shape: Shape, pose: Pose, texture: str,
                name: str, wall: float = 0.0) -> WorldObject:
        obj = WorldObject(oid, shape, pose, texture, static=True, graspable=False, kind=kind,
                          wall=wall, template=kind)
        self.objects.append(obj)
        self.names[oid] = name
        return obj

    def exemplar(self, template: Template, texture: str, shape: Shape) -> str:
        oid = f"ex{len(self.exemplars)}"
        pose = Pose(np.array([0.0, 0.0, shape_height(shape) / 2]), geom.yaw_quat(0.3))
        self.exemplars[oid] = WorldObject(oid, shape, pose, texture, template=template.name)
        self.names[oid] = f"{texture} {template.name}"
        return oid

    def _clear(self, obj: WorldObject, xy, clearance: float, skip=()) -> bool:
        r = shape_radius(obj.shape)
        probe = geom.Circle(float(xy[0]), float(xy[1]), r + clearance)
        for other in self.objects:
            if other.id == obj.id or other.id in skip or other.id == self.attached:
                continue
            if other.kind == "obstacle":
                continue
            for s, p in other.parts():
                if geom.footprints_intersect(probe, geom.footprint(s, p)):
                    return False
        return True

    def place(self, obj: WorldObject, region=None, clearance: float = 0.04, tries: int = 200,
              avoid=(), add: bool = True) -> WorldObject:
        """Drop ``obj`` on the table at a random clear spot; ``avoid`` = [(x, y, r)]."""
        (x0, x1), (y0, y1) = region or self.REGION
        for _ in range(tries):
            xy = np.array([self.rng.uniform(x0, x1), self.rng.uniform(y0, y1)])
            if any(math.hypot(xy[0] - ax, xy[1] - ay) < ar for ax, ay, ar in avoid):
                continue
            if self._clear(obj, xy, clearance):
                self.set_xy(obj, xy)
                if add and obj not in self.objects:
                    self.objects.append(obj)
                return obj
        raise _Retry()

    @staticmethod
    def set_xy(obj: WorldObject, xy, z_bottom: float = 0.0):
        pose = obj.pose.with_position(np.array([xy[0], xy[1], 0.0]))
        b = geom.body(obj.shape, pose)
        obj.pose = pose.translated((0.0, 0.0, z_bottom - b.zmin))

    def attach(self, obj: WorldObject):
        """Start with ``obj`` held: its top face touches the EE tip."""
        self.attached = obj.id
        tip = self.ee_pose.position
        b = geom.body(obj.shape, obj.pose)
        obj.pose = obj.pose.translated((tip[0] - obj.pose.position[0], tip[1] - obj.pose.position[1],
                                        tip[2] - b.zmax))
        if obj not in self.objects:
            self.objects.append(obj)

    def state(self) -> WorldState:
        ee = EndEffector(self.ee_pose)
        if self.attached is not None:
            obj = next(o for o in self.objects if o.id == self.attached)
            ee.suction_on = True
            ee.attached = obj.id
            ee.grasp_offset = self.ee_pose.inverse().compose(obj.pose)
        return WorldState(objects=list(self.objects), ee=ee, scale=self.scale,
                          goals=list(self.goals), seed=self.seed, config=self.config)


def overlap_ok(top: WorldObject, base: WorldObject, minimum: float = 0.4) -> bool:
    """Would ``top`` centred on ``base`` (current yaws) get enough support?"""
    c = base.pose.position
    pose = top.pose.with_position(np.array([c[0], c[1], top.pose.position[2]]))
    return geom.footprint_fraction(geom.footprint(top.shape, pose), base.footprint) >= minimum


def prompt(template: str, **bindings) -> list:
    return parse_template(template, bindings)


def build(name: str, seed: int, split: str = "train", config: Config = CONFIG,
          catalog: Optional[Catalog] = None, splits: Optional[Splits] = None) -> TaskInstance:
    if name not in _REGISTRY:
        raise KeyError(f"unknown task {name!r}")
    _check_split(split)
    level, fn = _REGISTRY[name]
    catalog = catalog or default_catalog()
    splits = splits or default_splits(config.catalog_split_seed)
    rng = derive_rng("task", name, seed, split)
    for attempt in range(config.scene_retries):
        b = SceneBuilder(name, seed, split, rng, catalog, splits, config)
        try:
            out = fn(b)
        except _Retry:
            continue
        tree, segs = out[0], out[1]
        extra = out[2] if len(out) > 2 else {}
        state = b.state()
        try:
            reset(state)
        except ValueError:
            continue
        meta = {"task": name, "level": level, "seed": seed, "split": split, "attempts": attempt + 1,
                "splits": splits.to_dict()}
        meta.update(extra.get("metadata", {}))
        return TaskInstance(name, level, seed, split, state, tree, segs, dict(b.names),
                            dict(b.exemplars), extra.get("keysteps", []), extra.get("scenes", []),
                            meta)
    raise SamplerError(f"{name}: no valid scene after {config.scene_retries} attempts "
                       f"(seed {seed}, split {split})")
