"""Turning a running episode into an EpisodeRecord or an episode directory."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .. import predicates as P
from ..config import CONFIG, Config
from ..tasks.catalog import Catalog
from ..tasks.prompts import (Keystep, ObjImage, SceneImage, TexImage, UnsupportedPromptError,
                             prompt_text, render_prompt, segment_to_dict)
from .episode import EpisodeRecord, EpisodeWriter
from .render import (default_cameras, render_and_boxes, render_frame, render_layout,
                     render_object_asset, render_texture_asset)


def task_annotation(instance) -> str:
    """Task-level string: the language-only prompt where one exists."""
    try:
        return render_prompt(instance.prompt, "language_only", instance.names, instance.task)
    except UnsupportedPromptError:
        return prompt_text(instance.prompt)


def annotate(task_text: str, tree: Optional[P.Node], names: dict, subtask: Optional[str] = None,
             phase: Optional[str] = None) -> dict:
    """Three annotation levels for one step.

    Missing solver context is filled from the predicate report: the first
    active leaf gives the subtask and its raw text stands in for the step.
    """
    leaf = None
    if (subtask is None or phase is None) and tree is not None:
        active = P.active_leaves(tree)
        leaf = active[0] if active else None
    if subtask is None:
        subtask = leaf.describe(names) if leaf is not None else ""
    if phase is None:
        phase = leaf.text() if leaf is not None else ""
    return {"task": task_text, "subtask": subtask, "step": phase}


def prompt_assets(instance, catalog: Optional[Catalog] = None, config: Config = CONFIG) -> list:
    """Images for the prompt's image segments, in prompt order."""
    cam = default_cameras(config)["base"]
    out = []
    for s in instance.prompt:
        if isinstance(s, ObjImage):
            obj = instance.exemplars.get(s.ref)
            if obj is None:
                obj = instance.initial[s.ref]
            out.append(render_object_asset(obj, catalog))
        elif isinstance(s, TexImage):
            out.append(render_texture_asset(s.texture, catalog))
        elif isinstance(s, Keystep):
            out.append(render_layout(instance.initial, instance.keysteps[s.index], cam, catalog))
        elif isinstance(s, SceneImage):
            out.append(render_layout(instance.initial, instance.scenes[s.index], cam, catalog))
    return out


def _statuses(tree: P.Node) -> list:
    return [n.status for n in tree.walk()]


def episode_meta(instance, success: bool) -> dict:
    return {"task": instance.task, "level": instance.level, "seed": int(instance.seed),
            "split": instance.split, "prompt": [segment_to_dict(s) for s in instance.prompt],
            "prompt_text": prompt_text(instance.prompt), "names": dict(instance.names),
            "success": bool(success)}


class Recorder:
    """Collects one episode step by step.

    With ``out_dir`` set, frames stream to disk and nothing large stays in
    memory; otherwise ``finish`` returns the full EpisodeRecord.
    """

    def __init__(self, instance, out_dir=None, cameras: Optional[dict] = None,
                 catalog: Optional[Catalog] = None, config: Config = CONFIG):
        self.instance = instance
        self.cameras = cameras or default_cameras(config)
        self.catalog = catalog
        self.task_text = task_annotation(instance)
        self.writer = EpisodeWriter(out_dir, tuple(self.cameras)) if out_dir is not None else None
        self.rows: list = []
        self.frames: dict = {c: [] for c in self.cameras}
        self.keysteps: list = []
        self.keystep_images: list = []
        self.hand_centers: list = []
        self._before: Optional[list] = None

    def render(self, state) -> tuple[dict, dict]:
        """Frames and boxes for every camera, as seen in ``state``."""
        frames, boxes = {}, {}
        for name, cam in self.cameras.items():
            frames[name], boxes[name] = render_and_boxes(state, cam, self.catalog)
        return frames, boxes

    def before_step(self, tree: P.Node):
        self._before = _statuses(tree)

    def add_step(self, prev, nxt, action, reward: float, success: bool, tree: P.Node,
                 subtask: Optional[str] = None, phase: Optional[str] = None,
                 rendered: Optional[tuple] = None):
        """Record the step that took ``prev`` to ``nxt``; call ``before_step`` first."""
        i = len(self.rows)
        frames, boxes = rendered if rendered is not None else self.render(prev)
        ann = annotate(self.task_text, tree, self.instance.names, subtask, phase)
        act = np.asarray(action, dtype=np.float32)
        hand = [c for c in self.cameras.values() if c.follows_ee]
        self.hand_centers.append([float(v) for v in hand[0].following(prev.ee.pose.position[:2]).center]
                                 if hand else None)
        if self.writer is not None:
            self.writer.add_step(act, reward, success, frames, boxes, ann)
        else:
            for c in self.cameras:
                self.frames[c].append(frames[c])
        self.rows.append((act, np.float32(reward), 1 if success else 0, boxes, ann))
        if self._before is not None:
            nodes = list(tree.walk())
            done = [n.describe(self.instance.names) for n, s in zip(nodes, self._before)
                    if s != P.DONE and n.status == P.DONE]
            if done:
                img = render_frame(nxt, self.cameras["base"] if "base" in self.cameras
                                   else next(iter(self.cameras.values())), self.catalog)
                if self.writer is not None:
                    self.writer.add_keystep(i, done, img)
                else:
                    self.keystep_images.append(img)
                self.keysteps.append({"index": i, "predicates": done})
        self._before = None

    def camera_params(self) -> dict:
        out = {name: cam.to_dict() for name, cam in self.cameras.items()}
        out["hand_centers"] = self.hand_centers
        return out

    def finish(self, success: bool) -> Optional[EpisodeRecord]:
        meta = episode_meta(self.instance, success)
        assets = prompt_assets(self.instance, self.catalog)
        if self.writer is not None:
            self.writer.set_prompt_assets(assets)
            self.writer.finish(meta, self.camera_params())
            return None
        n = len(self.rows)
        actions = (np.stack([r[0] for r in self.rows]) if n else np.zeros((0, 7))).astype(np.float32)
        rec = EpisodeRecord(
            meta=dict(meta, length=n), actions=actions,
            rewards=np.array([r[1] for r in self.rows], dtype=np.float32),
            success=np.array([r[2] for r in self.rows], dtype=np.uint8),
            frames=self.frames, boxes=[r[3] for r in self.rows],
            annotations=[r[4] for r in self.rows], keysteps=self.keysteps,
            keystep_images=self.keystep_images, prompt_assets=assets,
            cameras=self.camera_params())
        rec.check()
        return rec
