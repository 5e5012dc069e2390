import json
import os
import shutil
import sys

import pytest

from deskbench.harness import (EpisodeResult, Metrics, ProtocolError, SubprocessPolicy,
                               ZeroPolicy, evaluate, find_episodes, generate, make_policy,
                               parse_seeds, resolve_tasks, run_episode, stats)
from deskbench.harness import cli, runner
from deskbench.harness.policies import parse_action
from deskbench.tasks import instantiate
from helpers import tree_digest

SERVE = [sys.executable, "-m", "deskbench.harness.serve"]


def _res(task, ok, reward, length, error=None):
    return EpisodeResult(task, "L0", 0, "train", ok, reward, length, error)


def test_metrics_consistency():
    rs = [_res("a", True, 2.0, 10), _res("a", False, 1.0, 30), _res("b", True, 3.0, 20, None),
          _res("b", False, 0.0, 5, "ProtocolError: x")]
    m = Metrics.from_results(rs)
    assert m.episodes == 4 and m.successes == 2 and m.success_rate == 50.0
    assert m.ar == pytest.approx(1.5) and m.mean_length == pytest.approx(16.25)
    assert m.rs == pytest.approx(1.5 / 16.25)
    assert m.per_task["a"].success_rate == 50.0 and m.per_task["b"].ar == pytest.approx(1.5)
    assert m.errors == [{"task": "b", "seed": 0, "error": "ProtocolError: x"}]
    d = m.to_dict()
    assert d["per_task"]["a"]["episodes"] == 2
    assert "overall" in m.table()


def test_task_and_seed_specs():
    assert len(resolve_tasks("all")) == 33
    assert len(resolve_tasks("L2")) == 6
    assert resolve_tasks("pick,stack,pick") == ["pick", "stack"]
    with pytest.raises(ValueError):
        resolve_tasks("juggle")
    assert parse_seeds("3..6") == [3, 4, 5, 6]
    assert parse_seeds("1,5") == [1, 5] and parse_seeds("9") == [9]


@pytest.mark.parametrize("msg", [
    {"type": "act", "action": [0] * 6},
    {"type": "act", "action": [0] * 6 + [float("nan")]},
    {"type": "act", "action": [0] * 6 + [True]},
    {"type": "obs", "action": [0] * 7},
    {"type": "act"},
])
def test_parse_action_rejects(msg):
    with pytest.raises(ProtocolError):
        parse_action(msg)


def test_zero_policy_episode_runs_to_cap():
    res = run_episode(instantiate("pick", 0), ZeroPolicy(), max_steps=25)
    assert not res.success and res.length == 25 and res.error is None


def test_oracle_episode_reward_bounds():
    res = run_episode(instantiate("pick", 3), make_policy("oracle"))
    assert res.success and 0 < res.total_reward <= res.length
    assert "Pick" in res.kinds


def _script(tmp_path, body):
    p = tmp_path / "endpoint.py"
    p.write_text(body)
    return f"{sys.executable} {p}"


READY = """import sys, json, time
for line in sys.stdin:
    m = json.loads(line)
    if m['type'] in ('hello', 'reset'):
        print(json.dumps({'type': 'ready'}), flush=True)
        continue
"""


@pytest.mark.parametrize("reply,match", [
    ("    time.sleep(30)\n", "no reply"),
    ("    print('this is not json', flush=True)\n", "malformed"),
    ("    sys.exit(0)\n", "exited"),
])
def test_endpoint_failures_end_episode(tmp_path, reply, match):
    pol = SubprocessPolicy(_script(tmp_path, READY + reply), timeout_ms=1500)
    try:
        res = run_episode(instantiate("pick", 0), pol, max_steps=5)
    finally:
        pol.close()
    assert not res.success and res.length == 0
    assert res.error.startswith("ProtocolError") and match in res.error


def test_truncated_action_is_protocol_error():
    pol = SubprocessPolicy(SERVE + ["--truncate-action", "6"])
    try:
        res = run_episode(instantiate("pick", 0), pol, max_steps=5)
    finally:
        pol.close()
    assert res.error and "7" in res.error and not res.success


def test_subprocess_oracle_matches_in_process(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    r1 = run_episode(instantiate("place", 4), make_policy("oracle"), record_dir=a)
    pol = SubprocessPolicy(SERVE + ["--policy", "oracle"])
    try:
        r2 = run_episode(instantiate("place", 4), pol, record_dir=b)
    finally:
        pol.close()
    assert r1.success and r2.success and r1.length == r2.length
    assert tree_digest(a) == tree_digest(b)


def test_evaluate_zero_policy():
    m, res = evaluate("zero", "touch", "0..1", max_steps=10)
    assert m.episodes == 2 and m.success_rate == 0.0 and all(r.length == 10 for r in res)


def test_generate_accounting(tmp_path, monkeypatch):
    rep = generate("pick", "0..1", "train", tmp_path)
    assert (rep.attempted, rep.written, rep.discarded) == (2, 2, 0)
    assert sorted(os.listdir(tmp_path / "pick")) == ["traj_0", "traj_1"]
    # an oracle that never succeeds: episodes are discarded and leave nothing behind
    monkeypatch.setattr(runner, "make_policy", lambda spec, cfg=None: ZeroPolicy())
    monkeypatch.setattr(runner, "run_episode",
                        lambda inst, pol, steps, **kw: run_episode(inst, pol, 5, **kw))
    rep = generate("touch", "0", "train", tmp_path)
    assert (rep.attempted, rep.written, rep.discarded) == (1, 0, 1)
    assert rep.failures[0]["task"] == "touch"
    assert not (tmp_path / "touch").exists() or os.listdir(tmp_path / "touch") == []


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    rep = generate("pick,stack", "0..1", "train", root)
    assert rep.written == 4
    return root


def test_stats_histograms(dataset):
    s = stats(dataset)
    assert s["episodes"] == 4 and set(s["per_task"]) == {"pick", "stack"}
    for t in s["per_task"].values():
        assert sum(t["histogram"].values()) == t["episodes"]
    assert all(lo <= hi for lo, hi in zip(s["actions"]["min"], s["actions"]["max"]))
    assert len(find_episodes(dataset)) == 4


def test_stats_skips_corrupt(dataset, tmp_path):
    root = tmp_path / "d"
    shutil.copytree(dataset, root)
    p = root / "pick" / "traj_0" / "actions.cskt"
    p.write_bytes(p.read_bytes()[:-5])
    s = stats(root)
    assert s["episodes"] == 3 and len(s["skipped"]) == 1


def test_cli_exit_codes(dataset, tmp_path, capsys):
    assert cli.main(["list-tasks", "--level", "L2"]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 6
    assert cli.main(["solve", "--task", "pick", "--seed", "2"]) == 0
    assert cli.main(["solve", "--task", "juggle", "--seed", "2"]) == 1
    assert cli.main(["inspect", str(dataset)]) == 0
    assert cli.main(["inspect", str(tmp_path / "empty")]) == 2
    assert cli.main(["stats", str(dataset), "--format", "json"]) == 0
    out = capsys.readouterr().out
    assert json.loads(out[out.index("{"):])["episodes"] == 4
    bad = tmp_path / "bad"
    shutil.copytree(dataset / "stack" / "traj_1", bad)
    (bad / "meta.json").write_text("{")
    assert cli.main(["inspect", str(bad)]) == 2
    assert cli.main(["eval", "--policy", "zero", "--tasks", "touch", "--seeds", "0",
                     "--max-steps", "3", "--format", "json"]) == 0


def test_cli_gen_data_writes_report(tmp_path):
    out = tmp_path / "g"
    assert cli.main(["gen-data", "--tasks", "touch", "--seeds", "0", "--out", str(out)]) == 0
    rep = json.loads((out / "generation.json").read_text())
    assert rep["written"] == 1 and rep["per_task"]["touch"]["written"] == 1


def test_cli_render(tmp_path):
    assert cli.main(["render", "--task", "stack", "--seed", "0", "--out", str(tmp_path)]) == 0
    names = os.listdir(tmp_path)
    assert "base.ppm" in names and "prompt.json" in names
