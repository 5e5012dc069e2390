"""Reference endpoint speaking the line protocol on stdin/stdout.

``python3 -m deskbench.harness.serve --policy oracle`` exposes the oracle
across the process boundary. The oracle needs privileged state, so on every
reset it rebuilds the task from (task, seed, split) and keeps its own copy of
the world in lockstep with the harness, stepping it with the actions it sends.
"""

from __future__ import annotations

import argparse
import json
import sys

from ..tasks import instantiate
from ..world import Action, step
from .policies import ACTION_DIM, OracleEndpoint, RandomPolicy, ZeroPolicy


def _send(out, msg):
    out.write(json.dumps(msg, separators=(",", ":")) + "\n")
    out.flush()


def serve(policy: str = "oracle", inp=None, out=None, bad_action_dim: int = 0) -> int:
    inp = inp or sys.stdin
    out = out or sys.stdout
    pol = {"oracle": OracleEndpoint, "random": RandomPolicy, "zero": ZeroPolicy}[policy]()
    state = inst = None
    for line in inp:
        msg = json.loads(line)
        kind = msg.get("type")
        if kind == "hello":
            if msg.get("action_dim") != ACTION_DIM:
                return 2
            _send(out, {"type": "ready"})
        elif kind == "reset":
            inst = instantiate(msg["task"], int(msg["seed"]), msg.get("split", "train"))
            state = inst.reset()
            pol.reset(inst, state)
            _send(out, {"type": "ready"})
        elif kind == "obs":
            vec = pol.act(state, msg)
            action = Action.from_vector(vec).clamped(state.config)
            nxt = step(state, action, inplace=False)
            pol.observe(state, nxt)
            state = nxt
            _leaf, sub, phase = pol.context()
            reply = {"type": "act", "action": [float(v) for v in vec]}
            if bad_action_dim:
                reply["action"] = reply["action"][:bad_action_dim]
            if sub is not None:
                reply["info"] = {"subtask": sub, "step": phase, "gave_up": pol.gave_up}
            _send(out, reply)
        else:
            return 2
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--policy", choices=("oracle", "random", "zero"), default="oracle")
    ap.add_argument("--truncate-action", type=int, default=0,
                    help="reply with this many action entries (protocol error tests)")
    a = ap.parse_args(argv)
    return serve(a.policy, bad_action_dim=a.truncate_action)


if __name__ == "__main__":
    sys.exit(main())
