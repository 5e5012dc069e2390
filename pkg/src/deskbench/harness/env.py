"""Running one policy episode, optionally recording it."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import predicates as P
from ..config import CONFIG, Config
from ..recorder import EpisodeRecord, Recorder, prompt_assets
from ..world import Action, WorldError, step
from .policies import Policy, ProtocolError, prompt_payload

log = logging.getLogger(__name__)


@dataclass
class EpisodeResult:
    task: str
    level: str
    seed: int
    split: str
    success: bool
    total_reward: float
    length: int
    error: Optional[str] = None
    kinds: list = field(default_factory=list)
    record: Optional[EpisodeRecord] = None


def run_episode(instance, policy: Policy, max_steps: Optional[int] = None, record_dir=None,
                keep_record: bool = False, config: Config = CONFIG) -> EpisodeResult:
    """Roll ``policy`` out on ``instance`` until success, give-up, error or the step cap.

    An endpoint error ends the episode as a failure; the reward of the
    remaining steps counts as zero.
    """
    max_steps = config.eval_max_steps if max_steps is None else max_steps
    recorder = None
    if record_dir is not None or keep_record:
        recorder = Recorder(instance, out_dir=record_dir, config=config)
    state = instance.reset()
    tree = instance.fresh_tree()
    P.start(tree, state)
    total, ok, n, error = 0.0, False, 0, None
    obs: dict = {}
    try:
        policy.reset(instance, state)
        if policy.needs_frames:
            obs["prompt"] = prompt_payload(instance, prompt_assets(instance))
        while n < max_steps:
            rendered = None
            if recorder is not None or policy.needs_frames:
                rendered = recorder.render(state) if recorder is not None else _render(state, config)
                obs["frames"] = rendered[0]
            vec = policy.act(state, obs)
            try:
                action = Action.from_vector(vec).clamped(config)
            except WorldError as e:
                raise ProtocolError(str(e)) from None
            nxt = step(state, action, inplace=False)
            policy.observe(state, nxt)
            if recorder is not None:
                recorder.before_step(tree)
            r, ok = P.evaluate(tree, state, nxt)
            if recorder is not None:
                _leaf, sub, phase = policy.context()
                recorder.add_step(state, nxt, action.to_vector(), r, ok, tree, sub, phase, rendered)
            total += float(np.float32(r))
            n += 1
            state = nxt
            if ok or policy.gave_up:
                break
    except ProtocolError as e:
        error = f"{type(e).__name__}: {e}"
        log.error("%s seed %d: %s", instance.task, instance.seed, error)
        ok = False
    rec = recorder.finish(ok) if recorder is not None else None
    return EpisodeResult(instance.task, instance.level, int(instance.seed), instance.split, bool(ok),
                         total, n, error, list(getattr(policy, "kinds_used", [])), rec)


def _render(state, config):
    from ..recorder import default_cameras, render_frame
    return {name: render_frame(state, cam) for name, cam in default_cameras(config).items()}, None


@dataclass
class Metrics:
    episodes: int
    successes: int
    success_rate: float  # percent
    ar: float  # mean total reward per episode
    rs: float  # AR / mean episode length
    mean_length: float
    per_task: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)

    @classmethod
    def from_results(cls, results: list, breakdown: bool = True) -> "Metrics":
        n = len(results)
        succ = sum(r.success for r in results)
        ar = float(np.mean([r.total_reward for r in results])) if n else 0.0
        ml = float(np.mean([r.length for r in results])) if n else 0.0
        per = {}
        if breakdown:
            for task in sorted({r.task for r in results}):
                per[task] = cls.from_results([r for r in results if r.task == task], False)
        errors = [{"task": r.task, "seed": r.seed, "error": r.error} for r in results if r.error]
        return cls(n, succ, 100.0 * succ / n if n else 0.0, ar, ar / ml if ml > 0 else 0.0, ml,
                   per, errors)

    def to_dict(self) -> dict:
        d = {"episodes": self.episodes, "successes": self.successes,
             "success_rate": self.success_rate, "ar": self.ar, "rs": self.rs,
             "mean_length": self.mean_length}
        if self.per_task:
            d["per_task"] = {k: v.to_dict() for k, v in self.per_task.items()}
        if self.errors:
            d["errors"] = self.errors
        return d

    def table(self) -> str:
        rows = [(k, v) for k, v in self.per_task.items()] + [("overall", self)]
        w = max(len(k) for k, _ in rows)
        lines = [f"{'task':<{w}}  {'eps':>4}  {'suc%':>6}  {'AR':>9}  {'R/S':>7}  {'len':>7}"]
        for k, m in rows:
            lines.append(f"{k:<{w}}  {m.episodes:>4}  {m.success_rate:>6.1f}  {m.ar:>9.3f}  "
                         f"{m.rs:>7.4f}  {m.mean_length:>7.1f}")
        return "\n".join(lines)
