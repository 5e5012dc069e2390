"""Command line entry point: ``deskbench <command>``.

Config overrides are read from the file named by ``DESKBENCH_CONFIG``.
Exit codes: 0 success, 1 task failure, 2 integrity or protocol error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from ..config import CONFIG
from ..recorder import (EpisodeFormatError, IntegrityError, default_cameras, dumps, prompt_assets,
                        read_episode, render_frame, write_ppm)
from ..tasks import TASKS, LEVELS, instantiate, render_prompt
from ..tasks.prompts import UnsupportedPromptError, prompt_text
from .env import run_episode
from .policies import make_policy
from .runner import evaluate, find_episodes, generate, resolve_tasks, stats, write_report

EXIT_FAIL = 1
EXIT_INTEGRITY = 2


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_list_tasks(a) -> int:
    for t in TASKS:
        if a.level is None or t.level == a.level:
            print(f"{t.level}  {t.name}")
    return 0


def cmd_gen_data(a) -> int:
    rep = generate(a.tasks, a.seeds, a.split, a.out, a.workers)
    write_report(os.path.join(a.out, "generation.json"), rep.to_dict())
    print(f"attempted {rep.attempted}  written {rep.written}  discarded {rep.discarded}")
    for f in rep.failures:
        print(f"  discarded {f['task']} seed {f['seed']}: {f['reason']}")
    io_errors = [f for f in rep.failures if f["reason"].startswith(("OSError", "PermissionError"))]
    return EXIT_INTEGRITY if io_errors else 0


def cmd_solve(a) -> int:
    inst = instantiate(a.task, a.seed, a.split)
    res = run_episode(inst, make_policy("oracle"), CONFIG.episode_timeout, record_dir=a.record)
    print(f"{a.task} seed {a.seed}: {'success' if res.success else 'failure'} in {res.length} steps, "
          f"reward {res.total_reward:.3f}, solvers {', '.join(res.kinds)}")
    return 0 if res.success else EXIT_FAIL


def cmd_eval(a) -> int:
    tasks = a.tasks if a.tasks else (a.level or "all")
    metrics, _ = evaluate(a.policy, tasks, a.seeds, a.split, a.workers, a.max_steps)
    if a.format == "json":
        _print_json(metrics.to_dict())
    else:
        print(metrics.table())
        for e in metrics.errors:
            print(f"error: {e['task']} seed {e['seed']}: {e['error']}")
    return EXIT_INTEGRITY if metrics.errors else 0


def cmd_inspect(a) -> int:
    eps = find_episodes(a.dir)
    if not eps:
        print(f"{a.dir}: no episodes found")
        return EXIT_INTEGRITY
    bad = 0
    for d in eps:
        try:
            rec = read_episode(d)
        except (IntegrityError, EpisodeFormatError) as e:
            bad += 1
            print(f"BAD  {d}: {e}")
            continue
        m = rec.meta
        print(f"ok   {d}: {m['task']} seed {m['seed']} {m['split']} {len(rec)} steps "
              f"success={m['success']} keysteps={len(rec.keysteps)}")
    return EXIT_INTEGRITY if bad else 0


def cmd_stats(a) -> int:
    try:
        s = stats(a.dir)
    except IntegrityError as e:
        print(f"error: {e}")
        return EXIT_INTEGRITY
    if a.format == "json":
        _print_json(s)
        return 0
    print(f"{s['episodes']} episodes, {s['steps']} steps")
    for k in ("min", "max", "mean"):
        print(f"  {k:<5}" + " ".join(f"{v:+.4f}" for v in s["actions"][k]))
    for task, t in s["per_task"].items():
        hist = ", ".join(f"{b}: {n}" for b, n in t["histogram"].items())
        print(f"  {task:<24} n={t['episodes']:<4} mean={t['mean_length']:.1f}  [{hist}]")
    for w in s["skipped"]:
        print(f"  skipped {w['episode']}: {w['error']}")
    return 0


def cmd_render(a) -> int:
    inst = instantiate(a.task, a.seed, a.split)
    os.makedirs(a.out, exist_ok=True)
    state = inst.reset()
    for name, cam in default_cameras().items():
        write_ppm(os.path.join(a.out, f"{name}.ppm"), render_frame(state, cam))
    for i, img in enumerate(prompt_assets(inst)):
        write_ppm(os.path.join(a.out, f"prompt_{i:02d}.ppm"), img)
    try:
        lang = render_prompt(inst.prompt, "language_only", inst.names, inst.task)
    except UnsupportedPromptError:
        lang = None
    with open(os.path.join(a.out, "prompt.json"), "w", encoding="ascii") as f:
        f.write(dumps({"multimodal": render_prompt(inst.prompt), "text": prompt_text(inst.prompt),
                       "language_only": lang}) + "\n")
    print(prompt_text(inst.prompt))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deskbench", description="Tabletop manipulation benchmark")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("list-tasks", help="list the task suite")
    p.add_argument("--level", choices=LEVELS)
    p.set_defaults(fn=cmd_list_tasks)

    p = sub.add_parser("gen-data", help="record oracle episodes")
    p.add_argument("--tasks", required=True, help="task names, a level, or all")
    p.add_argument("--seeds", required=True, help="a..b (inclusive) or a comma list")
    p.add_argument("--split", default="train")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("solve", help="run the oracle on one task instance")
    p.add_argument("--task", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--record", help="write the episode directory here")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("eval", help="evaluate a policy")
    p.add_argument("--policy", required=True, help="oracle, random, zero or cmd:<command>")
    p.add_argument("--level", choices=LEVELS)
    p.add_argument("--tasks", help="task names (overrides --level)")
    p.add_argument("--seeds", default=f"0..{CONFIG.eval_seeds - 1}")
    p.add_argument("--split", default="train")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-steps", type=int, default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("inspect", help="validate episode directories")
    p.add_argument("dir")
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("stats", help="action ranges and episode lengths of a dataset")
    p.add_argument("dir")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("render", help="render a task's initial scene and prompt assets")
    p.add_argument("--task", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_render)
    return ap


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(a, "tasks", None) and a.command == "gen-data":
            resolve_tasks(a.tasks)
        return a.fn(a)
    except (IntegrityError, EpisodeFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
