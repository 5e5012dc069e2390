"""Policy endpoints: in-process oracle and random baselines, and external subprocesses."""

from __future__ import annotations

import base64
import json
import math
import os
import select
import shlex
import subprocess
import time
from typing import Optional

import numpy as np

from ..config import CONFIG, Config
from ..recorder.tensors import encode_ppm
from ..solvers import OraclePolicy
from ..tasks.prompts import prompt_text, render_prompt

ACTION_DIM = 7


class ProtocolError(RuntimeError):
    """The external policy broke the wire protocol or missed a deadline."""


class Policy:
    """Interface every endpoint implements.

    ``act`` receives the true state (in-process policies may use it) and the
    observation dict built by the environment; ``needs_frames`` tells the
    environment whether that dict must contain rendered frames.
    """

    name = "policy"
    needs_frames = False

    def reset(self, instance, state) -> None:
        pass

    def act(self, state, obs: dict) -> np.ndarray:
        raise NotImplementedError

    def observe(self, prev, nxt) -> None:
        pass

    def context(self) -> tuple:
        """(active leaf, subtask text, step text); None entries when unknown."""
        return None, None, None

    @property
    def gave_up(self) -> bool:
        return False

    def close(self) -> None:
        pass


class OracleEndpoint(Policy):
    name = "oracle"

    def __init__(self, timeout: Optional[int] = None):
        self.timeout = timeout
        self.pol: Optional[OraclePolicy] = None
        self.instance = None

    def reset(self, instance, state):
        self.instance = instance
        kw = {} if self.timeout is None else {"timeout": self.timeout}
        self.pol = OraclePolicy(instance, **kw)
        self.pol.reset(state)

    def act(self, state, obs):
        return self.pol(state).to_vector()

    def observe(self, prev, nxt):
        self.pol.observe(prev, nxt)

    def context(self):
        leaf = self.pol.leaf
        sub = leaf.describe(self.instance.names) if leaf is not None else ""
        return leaf, sub, self.pol.last.phase if self.pol.last is not None else None

    @property
    def gave_up(self) -> bool:
        return self.pol is not None and self.pol.failure is not None

    @property
    def kinds_used(self) -> list:
        return self.pol.kinds_used if self.pol is not None else []


class RandomPolicy(Policy):
    """Uniform actions inside the clamp box, seeded from the episode seed."""

    name = "random"

    def __init__(self, config: Config = CONFIG):
        self.config = config
        self.rng = np.random.default_rng(0)

    def reset(self, instance, state):
        self.rng = np.random.default_rng([int(instance.seed), 0x5EED])

    def act(self, state, obs):
        c = self.config
        v = np.empty(ACTION_DIM)
        v[:3] = self.rng.uniform(-c.max_translation, c.max_translation, 3)
        v[3:6] = self.rng.uniform(-c.max_rotation, c.max_rotation, 3)
        v[6] = self.rng.choice([-1.0, 1.0])
        return v


class ZeroPolicy(Policy):
    name = "zero"

    def act(self, state, obs):
        return np.zeros(ACTION_DIM)


# ------------------------------------------------------------ wire protocol


def encode_frame(img) -> str:
    return base64.b64encode(encode_ppm(img)).decode("ascii")


def proprio(state) -> dict:
    p = state.ee.pose
    return {"pose": [float(v) for v in p.position] + [float(v) for v in p.orientation],
            "grip": float(state.ee.grip)}


def prompt_payload(instance, assets: list) -> dict:
    return {"segments": render_prompt(instance.prompt, "multimodal"),
            "text": prompt_text(instance.prompt),
            "assets": [encode_frame(a) for a in assets]}


def parse_action(msg) -> np.ndarray:
    if not isinstance(msg, dict) or msg.get("type") != "act":
        raise ProtocolError(f"expected an act message, got {msg!r:.200}")
    a = msg.get("action")
    if not isinstance(a, list) or len(a) != ACTION_DIM:
        n = len(a) if isinstance(a, list) else type(a).__name__
        raise ProtocolError(f"action must be a list of {ACTION_DIM} numbers, got {n}")
    if not all(isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)
               for x in a):
        raise ProtocolError("action entries must be finite numbers")
    return np.array(a, dtype=float)


class LineChannel:
    """JSON lines over a child's stdin/stdout with per-reply deadlines."""

    def __init__(self, argv: list, timeout_ms: float):
        self.timeout = timeout_ms / 1000.0
        self.proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     bufsize=0)
        self._buf = b""

    def send(self, msg: dict):
        try:
            self.proc.stdin.write((json.dumps(msg, separators=(",", ":")) + "\n").encode())
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise ProtocolError(f"policy process closed its input ({e})") from None

    def recv(self) -> dict:
        deadline = time.monotonic() + self.timeout
        fd = self.proc.stdout.fileno()
        while b"\n" not in self._buf:
            left = deadline - time.monotonic()
            if left <= 0:
                raise ProtocolError(f"no reply within {self.timeout * 1000:.0f} ms")
            ready, _, _ = select.select([fd], [], [], left)
            if not ready:
                continue
            chunk = os.read(fd, 1 << 16)
            if not chunk:
                raise ProtocolError(f"policy process exited (code {self.proc.poll()})")
            self._buf += chunk
        line, _, self._buf = self._buf.partition(b"\n")
        try:
            return json.loads(line)
        except (json.JSONDecodeError, UnicodeDecodeError):
            raise ProtocolError(f"malformed line {line[:80]!r}") from None

    def request(self, msg: dict) -> dict:
        self.send(msg)
        return self.recv()

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


class SubprocessPolicy(Policy):
    """An external command speaking the line protocol on stdin/stdout.

    The act reply may carry ``info: {"subtask", "step"}``; recorders use it
    for the lower annotation levels.
    """

    needs_frames = True

    def __init__(self, command, timeout_ms: float = CONFIG.step_timeout_ms,
                 cameras=("base", "hand")):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.name = "cmd:" + " ".join(self.argv)
        self.timeout_ms = timeout_ms
        self.cameras = list(cameras)
        self.chan: Optional[LineChannel] = None
        self._info: dict = {}
        self._first = True
        self._step = 0

    def _start(self):
        self.chan = LineChannel(self.argv, self.timeout_ms)
        reply = self.chan.request({"type": "hello", "action_dim": ACTION_DIM,
                                   "cameras": self.cameras})
        if reply.get("type") != "ready":
            raise ProtocolError(f"expected ready after hello, got {reply!r:.200}")

    def reset(self, instance, state):
        if self.chan is None or self.chan.proc.poll() is not None:
            self._start()
        reply = self.chan.request({"type": "reset", "task": instance.task, "level": instance.level,
                                   "seed": int(instance.seed), "split": instance.split})
        if reply.get("type") != "ready":
            raise ProtocolError(f"expected ready after reset, got {reply!r:.200}")
        self._first = True
        self._step = 0

    def act(self, state, obs):
        msg = {"type": "obs", "step": self._step,
               "frames": {c: encode_frame(obs["frames"][c]) for c in self.cameras},
               "proprio": proprio(state)}
        if self._first:
            msg["prompt"] = obs["prompt"]
            self._first = False
        self._step += 1
        reply = self.chan.request(msg)
        action = parse_action(reply)
        info = reply.get("info")
        self._info = info if isinstance(info, dict) else {}
        return action

    def context(self):
        return None, self._info.get("subtask"), self._info.get("step")

    @property
    def gave_up(self) -> bool:
        return bool(self._info.get("gave_up"))

    def close(self):
        if self.chan is not None:
            self.chan.close()
            self.chan = None


def make_policy(spec: str, config: Config = CONFIG) -> Policy:
    """``oracle``, ``random``, ``zero`` or ``cmd:<command line>``."""
    if spec == "oracle":
        return OracleEndpoint()
    if spec == "random":
        return RandomPolicy(config)
    if spec == "zero":
        return ZeroPolicy()
    if spec.startswith("cmd:"):
        return SubprocessPolicy(spec[4:], config.step_timeout_ms)
    raise ValueError(f"unknown policy {spec!r}; use oracle, random, zero or cmd:<command>")
