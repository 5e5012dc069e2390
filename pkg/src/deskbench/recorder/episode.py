"""Episode records and their on-disk directory layout."""

from __future__ import annotations

import json
import os
import shutil
from dataclasses import dataclass, field

import numpy as np

from .tensors import (EpisodeFormatError, IntegrityError, decode_ppm, decode_tensor, encode_ppm,
                      encode_tensor)

CAMERAS = ("base", "hand")


@dataclass
class EpisodeRecord:
    meta: dict
    actions: np.ndarray  # (N, 7) float32
    rewards: np.ndarray  # (N,) float32
    success: np.ndarray  # (N,) uint8
    frames: dict  # camera -> list of HxWx3 uint8
    boxes: list  # per step: {camera: {object id: [x0, y0, x1, y1, visible]}}
    annotations: list  # per step: {"task", "subtask", "step"}
    keysteps: list = field(default_factory=list)  # [{"index": i, "predicates": [...]}]
    keystep_images: list = field(default_factory=list)
    prompt_assets: list = field(default_factory=list)
    cameras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(len(self.actions))

    def check(self):
        """Raise IntegrityError unless the record's invariants hold."""
        n = len(self.actions)
        if self.actions.ndim != 2 or self.actions.shape[1] != 7:
            raise IntegrityError(f"actions must be N x 7, got {self.actions.shape}")
        if len(self.rewards) != n or len(self.success) != n:
            raise IntegrityError(f"{n} actions but {len(self.rewards)} rewards and "
                                 f"{len(self.success)} success flags")
        for cam, fr in self.frames.items():
            if len(fr) != n:
                raise IntegrityError(f"{n} actions but {len(fr)} {cam} frames")
        if len(self.boxes) != n or len(self.annotations) != n:
            raise IntegrityError(f"{n} actions but {len(self.boxes)} box rows and "
                                 f"{len(self.annotations)} annotation rows")
        if n and np.any(np.diff(self.success.astype(np.int16)) < 0):
            raise IntegrityError("success flags decrease")
        if len(self.keysteps) != len(self.keystep_images):
            raise IntegrityError("keystep list and keystep images differ in length")
        for k in self.keysteps:
            if not 0 <= int(k["index"]) < n:
                raise IntegrityError(f"keystep index {k['index']} outside episode of {n} steps")
        if "success" in self.meta and n and bool(self.success[-1]) != bool(self.meta["success"]):
            raise IntegrityError("final success flag disagrees with meta.json")
        if "length" in self.meta and int(self.meta["length"]) != n:
            raise IntegrityError(f"meta.json length {self.meta['length']} but {n} steps")

    def __eq__(self, other) -> bool:
        if not isinstance(other, EpisodeRecord):
            return NotImplemented
        same = (self.meta == other.meta and self.boxes == other.boxes
                and self.annotations == other.annotations and self.keysteps == other.keysteps
                and self.cameras == other.cameras
                and np.array_equal(self.actions, other.actions)
                and np.array_equal(self.rewards, other.rewards)
                and np.array_equal(self.success, other.success)
                and sorted(self.frames) == sorted(other.frames))
        if not same:
            return False
        pairs = [(self.frames[c], other.frames[c]) for c in self.frames]
        pairs += [(self.keystep_images, other.keystep_images),
                  (self.prompt_assets, other.prompt_assets)]
        return all(len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))
                   for a, b in pairs)


def dumps(obj) -> str:
    """Canonical JSON text so identical records give identical bytes."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


class EpisodeWriter:
    """Streams an episode to ``path``; frames go to disk as they arrive."""

    def __init__(self, path, cameras=CAMERAS):
        self.path = str(path)
        _prepare_dir(self.path)
        self.cameras = tuple(cameras)
        for cam in self.cameras:
            os.makedirs(os.path.join(self.path, "frames", cam))
        os.makedirs(os.path.join(self.path, "keysteps"))
        os.makedirs(os.path.join(self.path, "prompt_assets"))
        self.actions: list = []
        self.rewards: list = []
        self.success: list = []
        self.keysteps: list = []
        self._boxes = open(os.path.join(self.path, "boxes.jsonl"), "w", encoding="ascii", newline="\n")
        self._ann = open(os.path.join(self.path, "annotations.jsonl"), "w", encoding="ascii",
                         newline="\n")

    def add_step(self, action, reward: float, success: bool, frames: dict, boxes: dict,
                 annotation: dict):
        i = len(self.actions)
        for cam in self.cameras:
            _write_bytes(os.path.join(self.path, "frames", cam, f"{i:06d}.ppm"),
                         encode_ppm(frames[cam]))
        self.actions.append(np.asarray(action, dtype=np.float32))
        self.rewards.append(np.float32(reward))
        self.success.append(1 if success else 0)
        self._boxes.write(dumps({"index": i, "boxes": boxes}) + "\n")
        self._ann.write(dumps(dict(annotation, index=i)) + "\n")

    def add_keystep(self, index: int, predicates: list, image):
        k = len(self.keysteps)
        self.keysteps.append({"index": int(index), "predicates": list(predicates)})
        _write_bytes(os.path.join(self.path, "keysteps", f"{k:02d}.ppm"), encode_ppm(image))

    def set_prompt_assets(self, images):
        for k, img in enumerate(images):
            _write_bytes(os.path.join(self.path, "prompt_assets", f"{k:02d}.ppm"), encode_ppm(img))

    def finish(self, meta: dict, cameras: dict):
        self._boxes.close()
        self._ann.close()
        n = len(self.actions)
        actions = np.stack(self.actions).astype(np.float32) if n else np.zeros((0, 7), np.float32)
        _write_bytes(os.path.join(self.path, "actions.cskt"), encode_tensor(actions))
        _write_bytes(os.path.join(self.path, "rewards.cskt"),
                     encode_tensor(np.asarray(self.rewards, dtype=np.float32)))
        _write_bytes(os.path.join(self.path, "success.cskt"),
                     encode_tensor(np.asarray(self.success, dtype=np.uint8)))
        _write_text(os.path.join(self.path, "keysteps.json"), dumps(self.keysteps))
        _write_text(os.path.join(self.path, "cameras.json"), dumps(cameras))
        meta = dict(meta, length=n)
        _write_text(os.path.join(self.path, "meta.json"), dumps(meta))


def _prepare_dir(path: str):
    if os.path.isdir(path) and os.listdir(path):
        if not os.path.exists(os.path.join(path, "meta.json")) and not os.path.isdir(
                os.path.join(path, "frames")):
            raise FileExistsError(f"{path} is not empty and does not hold an episode")
        shutil.rmtree(path)
    os.makedirs(path, exist_ok=True)


def _write_bytes(path, data: bytes):
    with open(path, "wb") as f:
        f.write(data)


def _write_text(path, text: str):
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(text + "\n")


def write_episode(path, record: EpisodeRecord):
    record.check()
    w = EpisodeWriter(path, cameras=tuple(record.frames))
    for i in range(len(record)):
        ann = {k: v for k, v in record.annotations[i].items() if k != "index"}
        w.add_step(record.actions[i], float(record.rewards[i]), bool(record.success[i]),
                   {c: record.frames[c][i] for c in record.frames}, record.boxes[i], ann)
    for k, img in zip(record.keysteps, record.keystep_images):
        w.add_keystep(k["index"], k["predicates"], img)
    w.set_prompt_assets(record.prompt_assets)
    meta = {k: v for k, v in record.meta.items() if k != "length"}
    w.finish(meta, record.cameras)


# ------------------------------------------------------------------- reading


def _read(path) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except FileNotFoundError:
        raise IntegrityError(f"missing file {path}") from None


def _json(path):
    text = _read(path)
    try:
        return json.loads(text.decode("ascii"))
    except UnicodeDecodeError as e:
        raise EpisodeFormatError(path, e.start, "non-ASCII byte") from None
    except json.JSONDecodeError as e:
        raise EpisodeFormatError(path, e.pos, e.msg) from None


def _jsonl(path) -> list:
    data = _read(path)
    out, off = [], 0
    for line in data.split(b"\n"):
        if line.strip():
            try:
                out.append(json.loads(line.decode("ascii")))
            except (UnicodeDecodeError, json.JSONDecodeError) as e:
                pos = getattr(e, "pos", None) or getattr(e, "start", 0)
                raise EpisodeFormatError(path, off + pos, "malformed line") from None
        off += len(line) + 1
    for i, row in enumerate(out):
        if row.get("index") != i:
            raise IntegrityError(f"{path}: row {i} has index {row.get('index')}")
    return out


def _images(folder, n=None, width: int = 0) -> list:
    if not os.path.isdir(folder):
        if n:
            raise IntegrityError(f"missing folder {folder}")
        return []
    names = sorted(os.listdir(folder))
    if n is not None and len(names) != n:
        raise IntegrityError(f"{folder}: {len(names)} images, expected {n}")
    for i, name in enumerate(names):
        if name != f"{i:0{width}d}.ppm":
            raise IntegrityError(f"{folder}: unexpected file {name}")
    return [decode_ppm(_read(os.path.join(folder, nm)), os.path.join(folder, nm)) for nm in names]


def read_episode(path, frames: bool = True) -> EpisodeRecord:
    """Load an episode directory; ``frames=False`` skips the per-step images."""
    path = str(path)
    meta = _json(os.path.join(path, "meta.json"))
    actions = decode_tensor(_read(os.path.join(path, "actions.cskt")), os.path.join(path, "actions.cskt"))
    rewards = decode_tensor(_read(os.path.join(path, "rewards.cskt")), os.path.join(path, "rewards.cskt"))
    success = decode_tensor(_read(os.path.join(path, "success.cskt")), os.path.join(path, "success.cskt"))
    if actions.dtype != np.float32 or rewards.dtype != np.float32 or success.dtype != np.uint8:
        raise IntegrityError(f"{path}: tensor dtypes do not match the layout")
    if actions.ndim != 2 or rewards.ndim != 1 or success.ndim != 1:
        raise IntegrityError(f"{path}: tensor ranks do not match the layout")
    n = len(actions)
    cams = sorted(os.listdir(os.path.join(path, "frames"))) if os.path.isdir(
        os.path.join(path, "frames")) else []
    fr = {}
    for cam in cams:
        folder = os.path.join(path, "frames", cam)
        if frames:
            fr[cam] = _images(folder, n, 6)
        elif len(os.listdir(folder)) != n:
            raise IntegrityError(f"{folder}: frame count differs from {n} actions")
        else:
            fr[cam] = [None] * n
    keysteps = _json(os.path.join(path, "keysteps.json"))
    rec = EpisodeRecord(
        meta=meta, actions=actions, rewards=rewards, success=success, frames=fr,
        boxes=[r["boxes"] for r in _jsonl(os.path.join(path, "boxes.jsonl"))],
        annotations=[{k: v for k, v in r.items() if k != "index"}
                     for r in _jsonl(os.path.join(path, "annotations.jsonl"))],
        keysteps=keysteps,
        keystep_images=_images(os.path.join(path, "keysteps"), len(keysteps), 2),
        prompt_assets=_images(os.path.join(path, "prompt_assets"), None, 2),
        cameras=_json(os.path.join(path, "cameras.json")))
    rec.check()
    return rec


def validate_episode(path) -> list[str]:
    """Integrity problems of an episode directory (empty when it is sound)."""
    try:
        read_episode(path)
    except (IntegrityError, EpisodeFormatError) as e:
        return [str(e)]
    return []
