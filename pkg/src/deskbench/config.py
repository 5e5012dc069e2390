"""Engine-wide tunable constants.

Every threshold used by the world, planner, solvers and harness lives here so
that a single JSON file can override them. Point the ``DESKBENCH_CONFIG``
environment variable at such a file; unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field

CONFIG_ENV_VAR = "DESKBENCH_CONFIG"


@dataclass(frozen=True)
class Config:
    # time and dynamics
    dt: float = 0.02
    gravity: float = 9.81
    density: float = 1000.0

    # action limits, per step
    max_translation: float = 0.05
    max_rotation: float = 0.2

    # end-effector workspace (tip position)
    workspace_lo: tuple[float, float, float] = (-0.6, -0.6, 0.0)
    workspace_hi: tuple[float, float, float] = (0.6, 0.6, 0.8)
    home_position: tuple[float, float, float] = (0.0, -0.1, 0.35)
    ee_radius: float = 0.015
    velocity_window: int = 5

    # contact and grasping
    grasp_window: float = 0.02
    contact_margin: float = 0.001
    release_flight_speed: float = 0.8

    # support and toppling
    support_overlap: float = 0.25
    footprint_resolution: float = 0.001
    topple_angle_deg: float = 45.0
    topple_hit_speed: float = 1.0
    topple_ee_speed: float = 0.15
    topple_height_fraction: float = 2.0 / 3.0

    # balance scale
    k_tilt: float = 0.5
    tilt_limit: float = 0.3
    balance_tolerance: float = 0.01

    # predicate thresholds
    pose_rot_weight: float = 0.1
    pose_tolerance: float = 0.05
    position_tolerance: float = 0.05
    push_reduce_fraction: float = 0.30
    push_cone_deg: float = 45.0
    rotate_angle_tol_deg: float = 5.0
    rotate_pos_tol: float = 0.05
    touch_max_move: float = 0.03
    push_min_move: float = 0.10
    inside_overlap: float = 0.9
    lift_clearance: float = 0.005

    # planner
    plan_node_budget: int = 20000
    plan_step: float = 0.04
    plan_goal_bias: float = 0.1
    plan_check_resolution: float = 0.005
    plan_path_resolution: float = 0.02
    plan_margin: float = 0.006
    smooth_attempts: int = 100
    throw_angle_deg: float = 45.0

    # solvers
    move_speed: float = 0.04
    turn_speed: float = 0.15
    descend_speed: float = 0.01
    push_speed: float = 0.01
    sweep_speed: float = 0.01
    hover: float = 0.06
    replan_deviation: float = 0.05
    launch_ramp_steps: int = 5
    launch_cruise_steps: int = 4
    episode_timeout: int = 2000

    # tasks
    scene_retries: int = 1000
    neighbour_spacing: float = 0.15
    catalog_split_seed: int = 0

    # recorder
    base_resolution: tuple[int, int] = (256, 256)
    hand_resolution: tuple[int, int] = (128, 128)
    base_window: float = 2.0
    hand_window: float = 0.3

    # harness
    eval_seeds: int = 20
    eval_max_steps: int = 2000
    step_timeout_ms: float = 20000.0

    extra: dict = field(default_factory=dict, compare=False)

    @property
    def topple_angle(self) -> float:
        return math.radians(self.topple_angle_deg)

    @property
    def throw_angle(self) -> float:
        return math.radians(self.throw_angle_deg)

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)


def _coerce(name: str, value):
    default = getattr(Config(), name)
    if isinstance(default, tuple):
        return tuple(type(default[0])(v) for v in value)
    if isinstance(default, bool):
        return bool(value)
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def load_config(path: str | os.PathLike | None = None) -> Config:
    """Build a Config, applying overrides from ``path`` or ``$DESKBENCH_CONFIG``."""
    path = path if path is not None else os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return Config()
    with open(path, encoding="utf-8") as fh:
        overrides = json.load(fh)
    names = {f.name for f in dataclasses.fields(Config)}
    unknown = sorted(set(overrides) - names)
    if unknown:
        raise ValueError(f"unknown config keys in {path}: {unknown}")
    return Config(**{k: _coerce(k, v) for k, v in overrides.items()})


CONFIG = load_config()
