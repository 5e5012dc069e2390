"""Novel adjectives and nouns grounded by exemplar objects."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..geom import Shape, Sphere
from .base import scale_shape
from .prompts import ADJECTIVES, NOUNS

MEANINGS = ("taller", "shorter", "larger", "smaller")
HEIGHT_FACTOR = 1.6
SIZE_FACTOR = 1.4


@dataclass(frozen=True)
class WordBinding:
    word: str
    kind: str  # adjective | noun
    meaning: Optional[str] = None
    pair: Optional[tuple] = None  # (shape that is <word>, shape it is compared with)


def adjective_pair(meaning: str, shape: Shape) -> tuple[Shape, Shape]:
    """Two shapes identical except along the dimension the meaning names."""
    if meaning in ("taller", "shorter"):
        if isinstance(shape, Sphere):
            raise ValueError("a sphere cannot change height alone")
        big = scale_shape(shape, z=HEIGHT_FACTOR)
    elif meaning in ("larger", "smaller"):
        big = scale_shape(shape, xy=SIZE_FACTOR, z=SIZE_FACTOR)
    else:
        raise ValueError(f"unknown adjective meaning {meaning!r}")
    return (big, shape) if meaning in ("taller", "larger") else (shape, big)


def novel_word_binding(kind: str, rng: np.random.Generator, shape: Optional[Shape] = None,
                       exclude=()) -> WordBinding:
    """Draw a made-up word; adjectives also get a meaning and, given ``shape``, an exemplar pair."""
    if kind == "adjective":
        words = [w for w in ADJECTIVES if w not in exclude]
        word = words[int(rng.integers(len(words)))]
        meanings = MEANINGS if not isinstance(shape, Sphere) else ("larger", "smaller")
        meaning = meanings[int(rng.integers(len(meanings)))]
        pair = adjective_pair(meaning, shape) if shape is not None else None
        return WordBinding(word, kind, meaning, pair)
    if kind == "noun":
        words = [w for w in NOUNS if w not in exclude]
        return WordBinding(words[int(rng.integers(len(words)))], kind)
    raise ValueError(f"kind must be 'adjective' or 'noun', got {kind!r}")
