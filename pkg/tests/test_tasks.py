import itertools
import math

import numpy as np
import pytest

from deskbench import predicates as P
from deskbench.geom import Box, Disc, Sphere
from deskbench.tasks import (LANGUAGE_UNSUPPORTED, TASKS, UnsupportedPromptError, instantiate,
                             neighbour_of, novel_word_binding, render_prompt, tasks_in)
from deskbench.tasks.catalog import Catalog, Texture, catalog_split, default_catalog, default_splits
from deskbench.tasks.prompts import IMAGE_SEGMENTS, ObjImage, Text

NAMES = [t.name for t in TASKS]


def _digest(inst):
    s = inst.reset()
    return (s.fingerprint(), inst.tree.text(), repr(inst.prompt), inst.names,
            sorted(inst.exemplars))


def test_suite_shape():
    assert len(TASKS) == 33 and len(set(NAMES)) == 33
    assert [len(tasks_in(lv)) for lv in ("L0", "L1", "L2")] == [12, 15, 6]


@pytest.mark.parametrize("name", NAMES)
def test_instances_deterministic_and_valid(name):
    a, b = instantiate(name, 7), instantiate(name, 7)
    assert _digest(a) == _digest(b)
    assert _digest(instantiate(name, 8)) != _digest(a)
    # every leaf references objects present in the scene
    s = a.reset()
    P.start(a.fresh_tree(), s)
    assert a.prompt and all(isinstance(seg, (Text,) + IMAGE_SEGMENTS) for seg in a.prompt)


@pytest.mark.parametrize("split", ["test_objects", "test_textures"])
def test_splits_only_use_their_assets(split):
    sp = default_splits()
    for name in ("pick", "stack", "sort", "novel_noun", "swap"):
        for seed in range(3):
            for which in ("train", split):
                inst = instantiate(name, seed, which)
                objs = [o for o in inst.initial.objects if o.kind == "object"]
                objs += list(inst.exemplars.values())
                templates = {o.template for o in objs}
                textures = {o.texture for o in objs}
                if which == "test_textures":
                    assert textures <= set(sp.test_textures)
                elif which == "train":
                    assert textures <= set(sp.train_textures)
                    assert templates <= set(sp.train_objects)


def test_test_objects_split_draws_held_out_templates():
    sp = default_splits()
    used = set()
    for seed in range(10):
        inst = instantiate("pick", seed, "test_objects")
        used |= {o.template for o in inst.initial.objects if o.kind == "object"}
    assert used & set(sp.test_objects)
    assert not (set(sp.test_objects) & set(sp.train_objects))


def test_catalog_split_ratio_and_determinism():
    base = default_catalog()
    texs = tuple(Texture(f"t{i}", "solid", ((i, i, i),)) for i in range(10))
    cat = Catalog(base.objects, texs, base.fixtures)
    s1, s2 = catalog_split(cat, 0), catalog_split(cat, 0)
    assert s1 == s2
    assert len(s1.train_textures) == 8 and len(s1.test_textures) == 2
    assert not set(s1.train_textures) & set(s1.test_textures)


def test_pick_language_only():
    inst = instantiate("pick", 7)
    oid = next(s.ref for s in inst.prompt if isinstance(s, ObjImage))
    text = render_prompt(inst.prompt, "language_only", inst.names, "pick")
    assert text == f"Pick up the {inst.names[oid]}."
    parts = render_prompt(inst.prompt, "multimodal")
    assert [p["type"] for p in parts] == ["text", "obj", "text"]


@pytest.mark.parametrize("name", sorted(LANGUAGE_UNSUPPORTED))
def test_language_only_unsupported(name):
    inst = instantiate(name, 0)
    with pytest.raises(UnsupportedPromptError):
        render_prompt(inst.prompt, "language_only", inst.names, name)


@pytest.mark.parametrize("name", sorted(set(NAMES) - LANGUAGE_UNSUPPORTED))
def test_language_only_has_no_placeholders(name):
    inst = instantiate(name, 1)
    text = render_prompt(inst.prompt, "language_only", inst.names, name)
    assert "{" not in text and text[0].isupper()


@pytest.mark.parametrize("seed", range(20))
def test_balance_masses_admit_equal_split(seed):
    inst = instantiate("balance", seed)
    s = inst.reset()
    ids = inst.tree.objs
    masses = [s[i].mass for i in ids]
    # brute force over every assignment to the two pans
    found = any(math.isclose(sum(m for m, side in zip(masses, mask) if side),
                             sum(m for m, side in zip(masses, mask) if not side), rel_tol=1e-9)
                for mask in itertools.product([0, 1], repeat=len(masses)))
    assert found


@pytest.mark.parametrize("seed", range(20))
def test_rotate_angles_from_allowed_set(seed):
    inst = instantiate("rotate", seed)
    leaves = [n for n in inst.tree.walk() if isinstance(n, P.RotatedBy)]
    assert leaves and all(n.angle_deg in (30, 60, 90, 120, 150) for n in leaves)


def test_neighbour_of_grid_rule():
    grid = {"a": (1, 1), "n": (1, 2), "e": (2, 1), "s": (1, 0)}
    assert neighbour_of(grid, "a", "north") == "n"
    assert neighbour_of(grid, "a", "east") == "e"
    assert neighbour_of(grid, "a", "south") == "s"
    assert neighbour_of(grid, "a", "west") is None


@pytest.mark.parametrize("shape", [Box(0.02, 0.03, 0.04), Disc(0.03, 0.05)])
def test_taller_exemplars_differ_only_in_height(shape):
    rng = np.random.default_rng(0)
    for _ in range(20):
        b = novel_word_binding("adjective", rng, shape)
        if b.meaning == "taller":
            break
    assert b.meaning == "taller"
    big, small = b.pair
    assert type(big) is type(small)
    if isinstance(big, Box):
        assert (big.hx, big.hy) == (small.hx, small.hy) and big.hz > small.hz
    else:
        assert big.radius == small.radius and big.height > small.height


def test_sphere_adjectives_avoid_height():
    rng = np.random.default_rng(1)
    meanings = {novel_word_binding("adjective", rng, Sphere(0.03)).meaning for _ in range(30)}
    assert meanings <= {"larger", "smaller"}


def test_unknown_task_and_split_rejected():
    with pytest.raises(KeyError):
        instantiate("juggle", 0)
    with pytest.raises(ValueError):
        instantiate("pick", 0, "validation")
