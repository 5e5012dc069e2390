"""Random predicate trees, scripted world traces and the properties checked on them."""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from deskbench import predicates as P
from deskbench.geom import Pose
from deskbench.world import EE, Event, infer_supports
from helpers import cube, state_with

OBJS = ("a", "b", "c")
GRID = [(x, y) for x in (-0.2, 0.0, 0.2) for y in (-0.2, 0.0, 0.2)]


def base_state():
    s = state_with(*(cube(o, *GRID[i * 4]) for i, o in enumerate(OBJS)))
    s.supports = infer_supports(s)
    return s


def _at_pos(o, g, ng):
    x, y = GRID[g]
    return P.AtPos(o, [x, y, 0.02], tol=0.01, no_grasp=ng)


obj = st.sampled_from(OBJS)
leaf = st.one_of(
    st.builds(_at_pos, obj, st.integers(0, len(GRID) - 1), st.booleans()),
    st.builds(lambda o: P.Touch(o, "gentle"), obj),
    st.builds(lambda o: P.Touch(o, "push"), obj),
)


def _set(children, guard):
    kids = list(children) + ([P.NotTouching([guard])] if guard else [])
    return P.Set(kids)


trees = st.recursive(
    leaf,
    lambda ch: st.one_of(
        st.builds(_set, st.lists(ch, min_size=1, max_size=3), st.one_of(st.none(), obj)),
        st.builds(P.Sequence, st.lists(ch, min_size=1, max_size=3)),
        st.builds(P.Once, ch)),
    max_leaves=6)

moves = st.lists(st.tuples(obj, st.integers(0, len(GRID) - 1),
                           st.sampled_from(["none", "contact", "grasp"])), min_size=1, max_size=25)


def run_trace(tree, trace):
    """Evaluate ``tree`` over the scripted trace; yield per-step snapshots."""
    s = base_state()
    P.start(tree, s)
    for oid, g, ev in trace:
        nxt = s.copy()
        nxt.step = s.step + 1
        x, y = GRID[g]
        nxt[oid].pose = Pose(np.array([x, y, 0.02]))
        nxt.supports = infer_supports(nxt)
        nxt.events = []
        if ev == "contact":
            nxt.events.append(Event("contact", EE, oid))
        elif ev == "grasp":
            nxt.events.append(Event("grasp", EE, oid))
        r, ok = P.evaluate(tree, s, nxt)
        yield r, ok, [(n, n.status, n.reward, n.done_step) for n in tree.walk()]
        s = nxt


def check_latched_and_absorbing(tree, trace):
    """Root success never un-latches; DONE and FAILED nodes never change state."""
    seen = {}
    prev_ok = False
    for r, ok, nodes in run_trace(tree, trace):
        assert not (prev_ok and not ok), "root success un-latched"
        prev_ok = ok
        for n, status, reward, _ in nodes:
            before = seen.get(id(n))
            if before in (P.DONE, P.FAILED):
                assert status == before, f"{n.text()} left terminal state {before}"
            if status == P.DONE:
                assert reward == 1.0
            if status == P.FAILED:
                assert reward == 0.0
            seen[id(n)] = status


def check_sequence_order(tree, trace):
    for _ in run_trace(tree, trace):
        for n in tree.walk():
            if isinstance(n, P.Sequence):
                steps = [c.done_step for c in n.children]
                done = [c.status == P.DONE for c in n.children]
                # done children form a prefix and finished at strictly increasing steps
                assert done == sorted(done, reverse=True)
                ds = [d for d, f in zip(steps, done) if f]
                assert all(a < b for a, b in zip(ds, ds[1:]))
                if n.status == P.DONE:
                    assert all(done) and n.done_step == ds[-1]


def check_set_bounds(tree, trace):
    for r, ok, nodes in run_trace(tree, trace):
        assert 0.0 <= r <= 1.0
        for n, status, reward, _ in nodes:
            assert 0.0 <= reward <= 1.0
            if isinstance(n, P.Set):
                kids = [c.reward for c in n.children]
                if status == P.ACTIVE:
                    assert abs(reward - float(np.mean(kids))) < 1e-12
                    assert min(kids) - 1e-12 <= reward <= max(kids) + 1e-12
                goals = [c for c in n.children if not c.guard]
                if status == P.DONE:
                    assert all(c.status == P.DONE for c in goals)
