"""Prompt segments and their multimodal / language-only rendering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

LANGUAGE_UNSUPPORTED = frozenset({
    "match_pose", "move_without_hitting", "follow_order", "follow_order_restore",
    "rearrange", "rearrange_restore",
})

ADJECTIVES = ("daxer", "blicker", "modier", "kobar")
NOUNS = ("dax", "blicket", "wug", "zup")


class UnsupportedPromptError(ValueError):
    """The task's prompt depends on goal images that have no text equivalent."""


@dataclass(frozen=True)
class Text:
    text: str


@dataclass(frozen=True)
class ObjImage:
    ref: str  # scene object id or exemplar id
    article: bool = True


@dataclass(frozen=True)
class TexImage:
    texture: str


@dataclass(frozen=True)
class Keystep:
    index: int


@dataclass(frozen=True)
class SceneImage:
    index: int = 0


PromptSegment = Union[Text, ObjImage, TexImage, Keystep, SceneImage]
IMAGE_SEGMENTS = (ObjImage, TexImage, Keystep, SceneImage)


def segment_to_dict(s: PromptSegment) -> dict:
    if isinstance(s, Text):
        return {"type": "text", "text": s.text}
    if isinstance(s, ObjImage):
        return {"type": "obj", "ref": s.ref, "article": s.article}
    if isinstance(s, TexImage):
        return {"type": "tex", "texture": s.texture}
    if isinstance(s, Keystep):
        return {"type": "keystep", "index": s.index}
    return {"type": "scene", "index": s.index}


def segment_from_dict(d: dict) -> PromptSegment:
    t = d["type"]
    if t == "text":
        return Text(d["text"])
    if t == "obj":
        return ObjImage(d["ref"], d.get("article", True))
    if t == "tex":
        return TexImage(d["texture"])
    if t == "keystep":
        return Keystep(d["index"])
    if t == "scene":
        return SceneImage(d["index"])
    raise ValueError(f"unknown prompt segment type {t!r}")


def parse_template(template: str, bindings: dict) -> list:
    """Split ``"Put {obj:a} on {obj:b}."`` into segments using ``bindings``.

    Placeholders are ``{obj:key}``, ``{tex:key}``, ``{ks:index}``,
    ``{scene:index}`` and ``{word:key}`` (plain text substitution).
    """
    out: list = []
    i = 0
    buf = ""
    while i < len(template):
        if template[i] != "{":
            buf += template[i]
            i += 1
            continue
        j = template.index("}", i)
        kind, _, key = template[i + 1:j].partition(":")
        if kind == "word":
            buf += str(bindings[key])
        else:
            if buf:
                out.append(Text(buf))
                buf = ""
            if kind == "obj":
                ref = bindings[key]
                out.append(ObjImage(ref, not _has_determiner(out)))
            elif kind == "tex":
                out.append(TexImage(bindings[key]))
            elif kind == "ks":
                out.append(Keystep(int(key)))
            elif kind == "scene":
                out.append(SceneImage(int(key)))
            else:
                raise ValueError(f"unknown placeholder kind {kind!r}")
        i = j + 1
    if buf:
        out.append(Text(buf))
    return out


_DETERMINERS = frozenset(("a", "an", "the", "The", "same") + ADJECTIVES + NOUNS)


def _has_determiner(out: list) -> bool:
    """True when the text right before an object image already reads as a noun phrase."""
    if not out or not isinstance(out[-1], Text) or not out[-1].text.endswith(" "):
        return False
    words = out[-1].text.split()
    return bool(words) and words[-1] in _DETERMINERS


def render_prompt(segments: list, mode: str = "multimodal", names: dict | None = None,
                  task: str | None = None):
    """Multimodal: list of text/image parts; language-only: a single string."""
    if mode == "multimodal":
        parts = []
        asset = 0
        for s in segments:
            if isinstance(s, Text):
                parts.append({"type": "text", "text": s.text})
            else:
                d = segment_to_dict(s)
                d["asset"] = asset
                asset += 1
                parts.append(d)
        return parts
    if mode != "language_only":
        raise ValueError(f"unknown prompt mode {mode!r}")
    if task in LANGUAGE_UNSUPPORTED:
        raise UnsupportedPromptError(f"task {task!r} has no language-only prompt")
    names = names or {}
    text = ""
    for s in segments:
        if isinstance(s, Text):
            text += s.text
        elif isinstance(s, ObjImage):
            desc = names.get(s.ref, s.ref)
            if s.article:
                sentence_start = not text.strip() or text.rstrip().endswith(".")
                desc = ("The " if sentence_start else "the ") + desc
            text += desc
        elif isinstance(s, TexImage):
            text += s.texture
        else:
            raise UnsupportedPromptError("keystep and scene images have no language-only form")
    text = text.strip()
    return text[:1].upper() + text[1:]


def prompt_text(segments: list) -> str:
    """Compact single-line form with image placeholders, used in annotations."""
    out = ""
    for s in segments:
        if isinstance(s, Text):
            out += s.text
        elif isinstance(s, ObjImage):
            out += f"{{obj:{s.ref}}}"
        elif isinstance(s, TexImage):
            out += f"{{tex:{s.texture}}}"
        elif isinstance(s, Keystep):
            out += f"{{ks:{s.index}}}"
        else:
            out += f"{{scene:{s.index}}}"
    return out.strip()
