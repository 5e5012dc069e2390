"""Tasks composing several skills or needing grounding from the prompt."""

from __future__ import annotations

import numpy as np

from .. import predicates as P
from ..geom import Box, Pose
from .base import (SceneBuilder, _Retry, all_of, angular, fits, not_ball, not_tall, overlap_ok,
                   prompt, register, shape_radius, stackable)
from .level0 import _obj_or_tex, _rotation, distractors, ks_list
from .words import adjective_pair, novel_word_binding

GRID_SPACING = 0.15
GRID_CENTER = (-0.17, 0.05)
BIN_CENTER = (0.30, 0.05)
BIN_HALF = 0.14
BIN_WALL = 0.01
BIN_HEIGHT = 0.08
DIRECTIONS = {"north": (0, 1), "south": (0, -1), "east": (1, 0), "west": (-1, 0)}
AREA_HALF = 0.12
AREA_THICK = 0.001


def _pose_at(obj, xy) -> Pose:
    return obj.pose.with_position(np.array([xy[0], xy[1], obj.pose.position[2]]))


def _goal_spot(b: SceneBuilder, obj, skip=(), away=(), min_move: float = 0.12,
               clearance: float = 0.04, region=((-0.38, 0.38), (-0.34, 0.38))):
    """A table spot for ``obj`` clear of everything but ``skip``; ``away`` = [(xy, r)]."""
    r = shape_radius(obj.shape)
    (x0, x1), (y0, y1) = region
    for _ in range(200):
        xy = np.array([b.rng.uniform(x0, x1), b.rng.uniform(y0, y1)])
        if np.linalg.norm(xy - obj.pose.position[:2]) < min_move:
            continue
        if any(np.linalg.norm(xy - q) < r + qr + clearance for q, qr in away):
            continue
        if b._clear(obj, xy, clearance, skip=tuple(skip) + (obj.id,)):
            return xy
    raise _Retry()


@register("L1", "simple_manipulation")
def simple_manipulation(b: SceneBuilder):
    a = b.place(b.new_object(b.template(), b.texture()))
    base = b.place(b.new_object(b.template(stackable), b.texture()))
    if not overlap_ok(a, base):
        raise _Retry()
    distractors(b, 0, 2)
    segs, variant = _obj_or_tex(
        b, "Put {obj:a} into {obj:b}.",
        "Put the object with {tex:a} texture into the object with {tex:b} texture.",
        {"a": a, "b": base})
    return P.OnTop(a.id, base.id), segs, {"metadata": {"variant": variant}}


def _follow_order(b: SceneBuilder, restore: bool):
    o = b.place(b.new_object(b.template(fits(0.05)), b.texture()))
    distractors(b, 1, 2)
    n = int(b.rng.integers(1, 4))
    spots, prev = [], [(o.pose.position[:2], shape_radius(o.shape))]
    for _ in range(n):
        xy = _goal_spot(b, o, away=prev[-1:])
        spots.append(xy)
        prev.append((xy, shape_radius(o.shape)))
    z = o.pose.position[2]
    leaves = [P.AtPos(o.id, [xy[0], xy[1], z]) for xy in spots]
    keysteps = [{"objects": {o.id: _pose_at(o, xy)}, "ee": None} for xy in spots]
    text = f"Follow the motion for {{obj:o}}: {ks_list(n)}"
    if restore:
        leaves.append(P.AtPose(o.id, o.pose))
        text += ", and then restore"
    tree = P.Sequence(leaves) if len(leaves) > 1 else leaves[0]
    return tree, prompt(text + ".", o=o.id), {"keysteps": keysteps}


@register("L1", "follow_order")
def follow_order(b: SceneBuilder):
    return _follow_order(b, False)


@register("L1", "follow_order_restore")
def follow_order_restore(b: SceneBuilder):
    return _follow_order(b, True)


def neighbour_of(grid: dict, obj: str, direction: str):
    """Object id in the cell next to ``obj``; ``grid`` maps id -> (col, row), +row is north."""
    dc, dr = DIRECTIONS[direction]
    c, r = grid[obj]
    for oid, cell in grid.items():
        if tuple(cell) == (c + dc, r + dr):
            return oid
    return None


@register("L1", "neighbour")
def neighbour(b: SceneBuilder):
    floor = BIN_HEIGHT / 2
    bin_ = b.fixture("bin", "container", Box(BIN_HALF, BIN_HALF, floor),
                     Pose(np.array([BIN_CENTER[0], BIN_CENTER[1], floor])), "container",
                     "bin", wall=BIN_WALL)
    cells = [(c, r) for c in (-1, 0, 1) for r in (-1, 0, 1)]
    k = int(b.rng.integers(5, 10))
    filled = [cells[i] for i in b.rng.permutation(9)[:k]]
    grid = {}
    for cell in filled:
        o = b.new_object(b.template(all_of(not_tall, fits(0.05))), b.texture())
        xy = (np.array(GRID_CENTER) + GRID_SPACING * np.array(cell)
              + b.rng.uniform(-0.01, 0.01, size=2))
        b.set_xy(o, xy)
        b.add(o)
        grid[o.id] = cell
    options = [(oid, d) for oid in grid for d in DIRECTIONS if neighbour_of(grid, oid, d)]
    if not options:
        raise _Retry()
    first, direction = options[int(b.rng.integers(len(options)))]
    second = neighbour_of(grid, first, direction)
    tree = P.Sequence([P.Inside(first, bin_.id), P.Inside(second, bin_.id)])
    segs = prompt("First put {obj:a} into {obj:bin} and then put the object that was at its "
                  "{word:dir} into the same {obj:bin}.", a=first, bin=bin_.id, dir=direction)
    meta = {"grid": {k: list(v) for k, v in grid.items()}, "direction": direction,
            "neighbour": second}
    return tree, segs, {"metadata": meta}


def _adjective_scene(b: SceneBuilder, exclude_words=()):
    """Target/other pair differing by a made-up adjective, plus two exemplar pairs."""
    T = b.template(all_of(not_ball, fits(0.045)))
    tex = b.texture()
    s0 = T.sample(b.rng)
    binding = novel_word_binding("adjective", b.rng, s0, exclude=exclude_words)
    yes, no = binding.pair
    target = b.place(b.new_object(T, tex, shape=yes, unique=False))
    other = b.place(b.new_object(T, tex, shape=no, unique=False))
    ex = []
    for _ in range(2):
        T2 = b.template(not_ball)
        tex2 = b.texture()
        p_yes, p_no = adjective_pair(binding.meaning, T2.sample(b.rng))
        ex.append((b.exemplar(T2, tex2, p_yes), b.exemplar(T2, tex2, p_no)))
    return binding, target, other, ex, (T, tex, s0)


@register("L1", "novel_adjective")
def novel_adjective(b: SceneBuilder):
    binding, target, other, ex, (T, tex, s0) = _adjective_scene(b)
    base = b.place(b.new_object(b.template(stackable), b.texture(exclude=(tex,))))
    if not overlap_ok(target, base):
        raise _Retry()
    kind = b.exemplar(T, tex, s0)
    segs = prompt("{obj:e0} is {word:w} than {obj:e1}. {obj:e2} is {word:w} than {obj:e3}. "
                  "Put the {word:w} {obj:k} into {obj:base}.",
                  e0=ex[0][0], e1=ex[0][1], e2=ex[1][0], e3=ex[1][1], w=binding.word, k=kind,
                  base=base.id)
    meta = {"word": binding.word, "meaning": binding.meaning, "distractor": other.id}
    return P.OnTop(target.id, base.id), segs, {"metadata": meta}


@register("L1", "novel_noun")
def novel_noun(b: SceneBuilder):
    n1 = novel_word_binding("noun", b.rng)
    n2 = novel_word_binding("noun", b.rng, exclude=(n1.word,))
    a = b.place(b.new_object(b.template(), b.texture()))
    base = b.place(b.new_object(b.template(stackable), b.texture()))
    if not overlap_ok(a, base) or a.template == base.template:
        raise _Retry()
    distractors(b, 1, 2)
    segs = prompt("This is a {word:n1} {obj:a}. This is a {word:n2} {obj:b}. "
                  "Put {word:n1} into {word:n2}.", n1=n1.word, n2=n2.word, a=a.id, b=base.id)
    return P.OnTop(a.id, base.id), segs, {"metadata": {"nouns": [n1.word, n2.word]}}


@register("L1", "novel_adj_noun")
def novel_adj_noun(b: SceneBuilder):
    binding, target, other, ex, (T, tex, s0) = _adjective_scene(b)
    n1 = novel_word_binding("noun", b.rng)
    n2 = novel_word_binding("noun", b.rng, exclude=(n1.word,))
    TB = b.template(stackable)
    if TB.name == T.name:
        raise _Retry()
    base = b.place(b.new_object(TB, b.texture(exclude=(tex,))))
    if not overlap_ok(target, base):
        raise _Retry()
    kind = b.exemplar(T, tex, s0)
    segs = prompt("This is a {word:n1} {obj:k}. This is a {word:n2} {obj:b}. "
                  "{obj:e0} is {word:w} than {obj:e1}. {obj:e2} is {word:w} than {obj:e3}. "
                  "Put the {word:w} {word:n1} into the {word:n2}.",
                  n1=n1.word, n2=n2.word, k=kind, b=base.id, e0=ex[0][0], e1=ex[0][1],
                  e2=ex[1][0], e3=ex[1][1], w=binding.word)
    meta = {"word": binding.word, "meaning": binding.meaning, "nouns": [n1.word, n2.word],
            "distractor": other.id}
    return P.OnTop(target.id, base.id), segs, {"metadata": meta}


def _rearrange(b: SceneBuilder, restore: bool):
    k = int(b.rng.integers(2, 4))
    movers = [b.place(b.new_object(b.template(fits(0.05)), b.texture())) for _ in range(k)]
    distractors(b, 0, 1)
    ids = {o.id for o in movers}
    goals, taken = {}, []
    for o in movers:
        xy = _goal_spot(b, o, skip=ids, away=taken, min_move=0.1)
        goals[o.id] = xy
        taken.append((xy, shape_radius(o.shape)))
    leaves = [P.AtPos(o.id, [*goals[o.id], o.pose.position[2]]) for o in movers]
    scene = {"objects": {o.id: _pose_at(o, goals[o.id]) for o in movers}, "ee": None}
    tree = P.Set(leaves)
    text = "Rearrange to this {scene:0}"
    if restore:
        tree = P.Sequence([tree, P.Set([P.AtPose(o.id, o.pose) for o in movers])])
        text += " and then restore"
    return tree, prompt(text + "."), {"scenes": [scene]}


@register("L1", "rearrange")
def rearrange(b: SceneBuilder):
    return _rearrange(b, False)


@register("L1", "rearrange_restore")
def rearrange_restore(b: SceneBuilder):
    return _rearrange(b, True)


@register("L1", "rotate_restore")
def rotate_restore(b: SceneBuilder):
    o = b.place(b.new_object(b.template(angular), b.texture()))
    distractors(b, 0, 2)
    angle, direction = _rotation(b)
    tree = P.Sequence([P.RotatedBy(o.id, angle, direction), P.AtPose(o.id, o.pose)])
    segs = prompt(f"Rotate {{obj:o}} {angle} degrees {direction} and then restore.", o=o.id)
    return tree, segs


@register("L1", "rotate_symmetry")
def rotate_symmetry(b: SceneBuilder):
    n = int(b.rng.integers(2, 4))
    tex = b.texture()
    objs = [b.place(b.new_object(b.template(angular), tex, unique=False)) for _ in range(n)]
    used = [tex]
    for _ in range(int(b.rng.integers(1, 3))):
        t = b.texture(exclude=used)
        used.append(t)
        b.place(b.new_object(b.template(), t, unique=False))
    angle, direction = _rotation(b)
    tree = P.Set([P.RotatedBy(o.id, angle, direction) for o in objs])
    segs = prompt(f"Rotate all objects with {{tex:t}} texture {angle} degrees {direction}.", t=tex)
    return tree, segs


@register("L1", "stack")
def stack(b: SceneBuilder):
    o1, o2, o3 = (b.place(b.new_object(b.template(stackable), b.texture())) for _ in range(3))
    if not (overlap_ok(o1, o2) and overlap_ok(o3, o1)):
        raise _Retry()
    distractors(b, 0, 1)
    tree = P.Sequence([P.OnTop(o1.id, o2.id), P.OnTop(o3.id, o1.id)])
    segs, variant = _obj_or_tex(
        b, "Stack {obj:a} on {obj:b}, and then {obj:c} on {obj:a}.",
        "Stack the object with {tex:a} texture on the object with {tex:b} texture, and then the "
        "object with {tex:c} texture on the object with {tex:a} texture.",
        {"a": o1, "b": o2, "c": o3})
    return tree, segs, {"metadata": {"variant": variant}}


@register("L1", "stack_reversed")
def stack_reversed(b: SceneBuilder):
    objs = [b.place(b.new_object(b.template(stackable), b.texture())) for _ in range(4)]
    for top, base in zip(objs[:-1], objs[1:]):
        if not overlap_ok(top, base):
            raise _Retry()
    tree = P.Sequence([P.OnTop(objs[i].id, objs[i + 1].id) for i in (2, 1, 0)])
    segs = prompt("Stack {obj:a}, {obj:b}, {obj:c} and {obj:d} in the reversed order.",
                  a=objs[0].id, b=objs[1].id, c=objs[2].id, d=objs[3].id)
    return tree, segs


@register("L1", "sort")
def sort(b: SceneBuilder):
    n = int(b.rng.integers(2, 4))
    texs = b.distinct_textures(n)
    xs = (-0.16, 0.16) if n == 2 else (-0.28, 0.0, 0.28)
    areas = []
    for i, (x, t) in enumerate(zip(xs, texs)):
        areas.append(b.fixture(f"area{i}", "area", Box(AREA_HALF, AREA_HALF, AREA_THICK),
                               Pose(np.array([x, 0.3, AREA_THICK])), t, f"{t} area"))
    leaves = []
    region = ((-0.42, 0.42), (-0.38, 0.1))
    for area in areas:
        for _ in range(int(b.rng.integers(1, 3))):
            o = b.place(b.new_object(b.template(fits(0.054)), area.texture, unique=False),
                        region=region)
            leaves.append(P.OnTop(o.id, area.id))
    return P.Set(leaves), prompt("Put each object into the area with the same texture.")


@register("L1", "swap")
def swap(b: SceneBuilder):
    a = b.place(b.new_object(b.template(fits(0.05)), b.texture()), clearance=0.06)
    bo = b.new_object(b.template(fits(0.05)), b.texture())
    for _ in range(50):
        b.place(bo, clearance=0.06, add=False)
        if np.linalg.norm(bo.pose.position[:2] - a.pose.position[:2]) >= 0.15:
            break
    else:
        raise _Retry()
    b.add(bo)
    distractors(b, 0, 2, clearance=0.06)
    pa, pb = a.pose.position, bo.pose.position
    tree = P.Set([P.AtPos(a.id, [pb[0], pb[1], pa[2]]), P.AtPos(bo.id, [pa[0], pa[1], pb[2]])])
    segs, variant = _obj_or_tex(
        b, "Swap {obj:a} and {obj:b}.",
        "Swap the object with {tex:a} texture and the object with {tex:b} texture.",
        {"a": a, "b": bo})
    return tree, segs, {"metadata": {"variant": variant}}
