"""The task suite: 33 procedurally generated tabletop tasks in three levels."""

from . import level0, level1, level2  # noqa: F401  registers the builders
from .base import LEVELS, SamplerError, TaskId, TaskInstance, build, registry
from .level1 import neighbour_of
from .prompts import LANGUAGE_UNSUPPORTED, UnsupportedPromptError, render_prompt
from .words import WordBinding, novel_word_binding

TASKS: list[TaskId] = [TaskId(level, name) for name, (level, _) in registry().items()]


def task_id(name: str) -> TaskId:
    for t in TASKS:
        if t.name == name:
            return t
    raise KeyError(f"unknown task {name!r}")


def tasks_in(level: str) -> list[TaskId]:
    return [t for t in TASKS if t.level == level]


def instantiate(task, seed: int, split: str = "train", **kw) -> TaskInstance:
    """Build the task instance for ``(task, seed, split)``; same inputs give the same scene."""
    name = task.name if isinstance(task, TaskId) else task
    return build(name, seed, split, **kw)


__all__ = ["LEVELS", "TASKS", "TaskId", "TaskInstance", "SamplerError", "instantiate", "task_id",
           "tasks_in", "neighbour_of", "novel_word_binding", "WordBinding", "render_prompt",
           "LANGUAGE_UNSUPPORTED", "UnsupportedPromptError"]
