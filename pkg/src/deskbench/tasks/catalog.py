"""Object templates, textures and their train/test splits."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Optional

import numpy as np

from ..config import CONFIG
from ..geom import Box, Disc, Shape, Sphere

SPLITS = ("train", "test_objects", "test_textures")


def derive_rng(*parts) -> np.random.Generator:
    """Generator seeded from a stable hash of ``parts`` (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence(words))


@dataclass(frozen=True)
class Template:
    name: str
    shape: str
    group: str
    size: dict
    stackable: bool
    tall: bool

    def sample(self, rng: np.random.Generator, scale: float = 1.0) -> Shape:
        vals: dict = {}
        for key, rng_spec in self.size.items():
            if isinstance(rng_spec, str):
                continue
            lo, hi = rng_spec
            vals[key] = float(rng.uniform(lo, hi)) * scale
        for key, ref in self.size.items():
            if isinstance(ref, str):
                vals[key] = vals[ref]
        return make_shape(self.shape, vals)


def make_shape(kind: str, vals: dict) -> Shape:
    if kind == "box":
        return Box(vals["hx"], vals["hy"], vals["hz"])
    if kind == "disc":
        return Disc(vals["radius"], vals["height"])
    if kind == "sphere":
        return Sphere(vals["radius"])
    raise ValueError(f"unknown shape kind {kind!r}")


@dataclass(frozen=True)
class Texture:
    name: str
    pattern: str
    colors: tuple

    @property
    def rgb(self) -> tuple:
        return self.colors[0]


@dataclass(frozen=True)
class Catalog:
    objects: tuple
    textures: tuple
    fixtures: dict
    test_fraction: float = 0.2

    def template(self, name: str) -> Template:
        for t in self.objects:
            if t.name == name:
                return t
        raise KeyError(name)

    def texture(self, name: str) -> Texture:
        for t in self.textures:
            if t.name == name:
                return t
        raise KeyError(name)


def load_catalog(path: Optional[str] = None) -> Catalog:
    if path is None:
        text = resources.files("deskbench.tasks").joinpath("catalog.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    raw = json.loads(text)
    objs = tuple(Template(o["name"], o["shape"], o["group"], o["size"], o["stackable"],
                          o["tall"]) for o in raw["objects"])
    texs = tuple(Texture(t["name"], t["pattern"], tuple(tuple(c) for c in t["colors"]))
                 for t in raw["textures"])
    fixtures = {k: tuple(v) for k, v in raw["fixtures"].items()}
    return Catalog(objs, texs, fixtures, raw.get("test_fraction", 0.2))


@lru_cache(maxsize=1)
def default_catalog() -> Catalog:
    return load_catalog()


def _stratified(names: list, groups: list, frac: float, rng) -> tuple[list, list]:
    """Hold out ``round(frac * n)`` names, spread over groups as evenly as rounding allows."""
    n = len(names)
    n_test = int(round(frac * n))
    by_group: dict = {}
    for nm, g in zip(names, groups):
        by_group.setdefault(g, []).append(nm)
    keys = sorted(by_group)
    quota = {g: int(math.floor(frac * len(by_group[g]) + 0.5)) for g in keys}
    # never empty a group from the training side
    for g in keys:
        quota[g] = min(quota[g], len(by_group[g]) - 1)
    while sum(quota.values()) > n_test:
        g = max(keys, key=lambda k: (quota[k], len(by_group[k])))
        quota[g] -= 1
    while sum(quota.values()) < n_test:
        g = max((k for k in keys if quota[k] < len(by_group[k]) - 1),
                key=lambda k: (len(by_group[k]) - quota[k], k), default=None)
        if g is None:
            break
        quota[g] += 1
    test = []
    for g in keys:
        members = sorted(by_group[g])
        pick = rng.permutation(len(members))[:quota[g]]
        test.extend(members[i] for i in sorted(pick))
    train = [nm for nm in names if nm not in test]
    test = [nm for nm in names if nm in test]
    return train, test


@dataclass(frozen=True)
class Splits:
    train_objects: tuple
    test_objects: tuple
    train_textures: tuple
    test_textures: tuple

    def objects_for(self, split: str) -> tuple:
        _check_split(split)
        return self.test_objects if split == "test_objects" else self.train_objects

    def textures_for(self, split: str) -> tuple:
        _check_split(split)
        return self.test_textures if split == "test_textures" else self.train_textures

    def to_dict(self) -> dict:
        return {"objects": {"train": list(self.train_objects), "test": list(self.test_objects)},
                "textures": {"train": list(self.train_textures), "test": list(self.test_textures)}}


def _check_split(split: str):
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")


def catalog_split(catalog: Catalog, seed: int = CONFIG.catalog_split_seed) -> Splits:
    """Deterministic 80/20 partition of templates and of textures.

    Held-out templates are stratified by shape group and held-out textures by
    pattern, so every split still contains tall, flat and checkered items.
    """
    rng = derive_rng("catalog-split", seed)
    onames = [t.name for t in catalog.objects]
    tr_o, te_o = _stratified(onames, [t.group for t in catalog.objects],
                             catalog.test_fraction, rng)
    tnames = [t.name for t in catalog.textures]
    tr_t, te_t = _stratified(tnames, [t.pattern for t in catalog.textures],
                             catalog.test_fraction, rng)
    return Splits(tuple(tr_o), tuple(te_o), tuple(tr_t), tuple(te_t))


@lru_cache(maxsize=4)
def default_splits(seed: int = CONFIG.catalog_split_seed) -> Splits:
    return catalog_split(default_catalog(), seed)
