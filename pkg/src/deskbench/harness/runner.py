"""Batch evaluation, dataset generation and dataset statistics."""

from __future__ import annotations

import logging
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..config import CONFIG, Config
from ..recorder import EpisodeFormatError, IntegrityError, dumps, read_episode
from ..tasks import TASKS, LEVELS, instantiate
from .env import EpisodeResult, Metrics, run_episode
from .policies import make_policy

log = logging.getLogger(__name__)

LENGTH_BIN = 50  # episode-length histogram bin width, steps


def resolve_tasks(spec) -> list[str]:
    """Task names from ``all``, a level name, or a comma list of task names."""
    if not isinstance(spec, str):
        return [str(t) for t in spec]
    out = []
    for part in [p.strip() for p in spec.split(",") if p.strip()]:
        if part == "all":
            out += [t.name for t in TASKS]
        elif part in LEVELS:
            out += [t.name for t in TASKS if t.level == part]
        elif part in {t.name for t in TASKS}:
            out.append(part)
        else:
            raise ValueError(f"unknown task or level {part!r}")
    return list(dict.fromkeys(out))


def parse_seeds(spec) -> list[int]:
    """``a..b`` (inclusive), ``a,b,c`` or a single integer."""
    if not isinstance(spec, str):
        return [int(s) for s in spec]
    if ".." in spec:
        a, b = spec.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(s) for s in spec.split(",") if s.strip()]


# ----------------------------------------------------------------- evaluate

_WORKER_POLICY: dict = {}


def _policy(spec: str, config: Config):
    if spec not in _WORKER_POLICY:
        _WORKER_POLICY[spec] = make_policy(spec, config)
    return _WORKER_POLICY[spec]


def _eval_one(job) -> EpisodeResult:
    spec, task, seed, split, max_steps, config = job
    pol = _policy(spec, config)
    res = run_episode(instantiate(task, seed, split, config=config), pol, max_steps, config=config)
    if res.error and spec.startswith("cmd:"):
        pol.close()  # restart a misbehaving endpoint for the next episode
    return res


def _close_policies():
    for p in _WORKER_POLICY.values():
        p.close()
    _WORKER_POLICY.clear()


def _map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(fn, jobs, chunksize=1))


def evaluate(policy: str, tasks, seeds, split: str = "train", workers: int = 1,
             max_steps: Optional[int] = None, config: Config = CONFIG) -> tuple[Metrics, list]:
    """Metrics (overall and per task) plus the per-episode results, in job order."""
    jobs = [(policy, t, s, split, max_steps, config) for t in resolve_tasks(tasks)
            for s in parse_seeds(seeds)]
    try:
        results = _map(_eval_one, jobs, workers)
    finally:
        _close_policies()
    return Metrics.from_results(results), results


# ----------------------------------------------------------------- generate


@dataclass
class GenerationReport:
    attempted: int = 0
    written: int = 0
    discarded: int = 0
    failures: list = field(default_factory=list)  # {"task", "seed", "reason"}
    per_task: dict = field(default_factory=dict)  # task -> {"written", "discarded"}

    def to_dict(self) -> dict:
        return {"attempted": self.attempted, "written": self.written, "discarded": self.discarded,
                "failures": self.failures, "per_task": self.per_task}


def episode_dir(out_dir, task: str, seed: int) -> str:
    return os.path.join(str(out_dir), task, f"traj_{seed}")


def _gen_one(job) -> dict:
    task, seed, split, out_dir, config = job
    final = episode_dir(out_dir, task, seed)
    tmp = os.path.join(os.path.dirname(final), f".tmp_traj_{seed}")
    try:
        os.makedirs(os.path.dirname(final), exist_ok=True)
        inst = instantiate(task, seed, split, config=config)
        res = run_episode(inst, make_policy("oracle", config), config.episode_timeout,
                          record_dir=tmp, config=config)
        if not res.success:
            shutil.rmtree(tmp, ignore_errors=True)
            return {"task": task, "seed": seed, "ok": False, "reason": res.error or "oracle failed"}
        if os.path.isdir(final):
            shutil.rmtree(final)
        os.rename(tmp, final)
        return {"task": task, "seed": seed, "ok": True, "length": res.length}
    except Exception as e:  # one broken episode must not abort the batch
        shutil.rmtree(tmp, ignore_errors=True)
        return {"task": task, "seed": seed, "ok": False, "reason": f"{type(e).__name__}: {e}"}


def generate(tasks, seeds, split: str, out_dir, workers: int = 1,
             config: Config = CONFIG) -> GenerationReport:
    """Oracle episodes for every (task, seed); failures are logged and discarded."""
    jobs = [(t, s, split, str(out_dir), config) for t in resolve_tasks(tasks)
            for s in parse_seeds(seeds)]
    os.makedirs(out_dir, exist_ok=True)
    rep = GenerationReport()
    for r in _map(_gen_one, jobs, workers):
        rep.attempted += 1
        pt = rep.per_task.setdefault(r["task"], {"written": 0, "discarded": 0})
        if r["ok"]:
            rep.written += 1
            pt["written"] += 1
        else:
            rep.discarded += 1
            pt["discarded"] += 1
            rep.failures.append({"task": r["task"], "seed": r["seed"], "reason": r["reason"]})
            log.warning("discarded %s seed %d: %s", r["task"], r["seed"], r["reason"])
    return rep


# -------------------------------------------------------------------- stats


def find_episodes(root) -> list[str]:
    root = str(root)
    if os.path.exists(os.path.join(root, "meta.json")):
        return [root]
    out = []
    for d, subdirs, files in os.walk(root):
        subdirs[:] = sorted(s for s in subdirs if not s.startswith("."))
        if "meta.json" in files:
            out.append(d)
            subdirs[:] = []
    return sorted(out)


def stats(root) -> dict:
    """Per-dimension action ranges and per-task episode-length histograms."""
    eps = find_episodes(root)
    acts, lengths, skipped = [], {}, []
    levels: dict = {}
    for d in eps:
        try:
            rec = read_episode(d, frames=False)
        except (IntegrityError, EpisodeFormatError) as e:
            log.warning("skipping %s: %s", d, e)
            skipped.append({"episode": d, "error": str(e)})
            continue
        acts.append(rec.actions)
        lengths.setdefault(rec.meta["task"], []).append(len(rec))
        levels.setdefault(rec.meta["level"], []).append(len(rec))
    if not acts:
        raise IntegrityError(f"no readable episodes under {root}")
    a = np.concatenate(acts).astype(np.float64)
    if len(a):
        dims = {"min": a.min(0).tolist(), "max": a.max(0).tolist(), "mean": a.mean(0).tolist()}
    else:
        dims = {"min": [0.0] * 7, "max": [0.0] * 7, "mean": [0.0] * 7}
    per_task = {}
    for task, ls in sorted(lengths.items()):
        hist: dict = {}
        for n in ls:
            lo = (n // LENGTH_BIN) * LENGTH_BIN
            key = f"{lo}-{lo + LENGTH_BIN - 1}"
            hist[key] = hist.get(key, 0) + 1
        per_task[task] = {"episodes": len(ls), "mean_length": float(np.mean(ls)),
                          "histogram": dict(sorted(hist.items(), key=lambda kv: int(kv[0].split("-")[0])))}
    return {"episodes": len(acts), "steps": int(len(a)), "actions": dims, "per_task": per_task,
            "per_level": {k: float(np.mean(v)) for k, v in sorted(levels.items())},
            "skipped": skipped}


def write_report(path, report: dict):
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(dumps(report) + "\n")
