import numpy as np
import pytest

from deskbench import predicates as P
from deskbench import solvers as S
from deskbench.config import CONFIG
from deskbench.tasks import instantiate, tasks_in
from deskbench.world import step
from helpers import cube, state_with


def _ctx():
    return S.Context(names={}, seed=0)


@pytest.mark.parametrize("leaf,kind", [
    (P.EEAtPos([0.1, 0.1, 0.2]), S.Move),
    (P.Picked("a"), S.Pick),
    (P.Touch("a", "gentle"), S.Touch),
    (P.Touch("a", "topple"), S.Topple),
    (P.OnTop("a", "b"), S.PickMovePlace),
    (P.Inside("a", "b"), S.PickMovePlace),
    (P.AtPos("a", [0.1, 0.1, 0.02]), S.PickMovePlace),
    (P.RotatedBy("a", 60), S.PickMovePlace),
    (P.Balanced(["a", "b"]), S.BalanceScale),
    (P.TraceGoals(3), S.Trace),
])
def test_predicate_to_skill_table(leaf, kind):
    assert isinstance(S.solver_for(leaf, _ctx(), state=state_with()), kind)


def test_unknown_predicate_has_no_solver():
    with pytest.raises(S.SolverConfigError):
        S.solver_for(P.NotTouching(["a"]), _ctx())


def test_launch_ramp_profile():
    r = S.launch_ramp(CONFIG)
    n, m = CONFIG.launch_ramp_steps, CONFIG.launch_cruise_steps
    assert len(r) == n + m
    assert list(r[:n]) == sorted(r[:n]) and r[n - 1] == 1.0 and set(r[n:]) <= {1.0}
    # the cruise fills the velocity window with full-speed samples
    assert m >= CONFIG.velocity_window - 1


def test_next_predicate_sequence_and_hold_preference():
    s = state_with(cube("a", 0.3, 0.0), cube("b", -0.3, 0.0))
    a, b = P.Picked("a"), P.Picked("b")
    seq = P.Sequence([a, b])
    P.start(seq, s)
    assert S.next_predicate(seq, s) is a
    st = P.Set([P.AtPos("a", [0, 0.3, 0.02]), P.AtPos("b", [0, -0.3, 0.02])])
    P.start(st, s)
    s.ee.attached, s.ee.suction_on = "b", True
    assert S.manipulated(S.next_predicate(st, s)) == "b"


def test_pick_skill_lifts_the_cube():
    s = state_with(cube("a", 0.15, 0.1))
    from deskbench.world import infer_supports
    s.supports = infer_supports(s)
    leaf = P.Picked("a")
    P.start(leaf, s)
    skill = S.Pick(_ctx(), "a")
    for _ in range(200):
        res = skill.act(s)
        nxt = step(s, res.action, inplace=False)
        _, ok = P.evaluate(leaf, s, nxt)
        s = nxt
        if ok:
            break
    assert ok and s.ee.attached == "a"


def _run(name, seed, reset_at=None):
    inst = instantiate(name, seed)
    state = inst.reset()
    tree = inst.fresh_tree()
    P.start(tree, state)
    pol = S.OraclePolicy(inst)
    pol.reset(state)
    actions = []
    for t in range(CONFIG.episode_timeout):
        if t == reset_at:
            pol.reset_solvers()
        a = pol(state)
        actions.append(a.to_vector())
        nxt = step(state, a, inplace=False)
        pol.observe(state, nxt)
        _, ok = P.evaluate(tree, state, nxt)
        state = nxt
        if ok or pol.failure:
            break
    return ok, pol, np.array(actions)


@pytest.mark.parametrize("name", [t.name for t in tasks_in("L0")])
def test_oracle_solves_level0(name):
    ok, pol, _ = _run(name, 0)
    assert ok, pol.failure


@pytest.mark.parametrize("name,at", [("stack", 20), ("swap", 35), ("throw", 12), ("rotate", 9)])
def test_stateless_reset_mid_episode(name, at):
    ok, _, _ = _run(name, 1, reset_at=at)
    assert ok


def test_oracle_deterministic():
    _, _, a1 = _run("sort", 2)
    _, _, a2 = _run("sort", 2)
    assert np.array_equal(a1, a2)


def test_kinds_recorded_per_episode():
    _, pol, _ = _run("stack_topple", 0)
    assert len(pol.kinds_used) >= 2
