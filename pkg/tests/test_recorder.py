import json
import os
import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings

from deskbench.geom import Camera
from deskbench.harness import make_policy, run_episode
from deskbench.recorder import (EpisodeFormatError, IntegrityError, annotate, bounding_boxes,
                                decode_ppm, decode_tensor, encode_ppm, encode_tensor,
                                read_episode, render_frame, write_episode)
from deskbench.recorder.render import BACKGROUND, EE_COLOR
from deskbench.tasks import instantiate
from helpers import cube, episode_records, state_with

CAM = Camera("base", (0.0, 0.0), 1.0, 1.0, (100, 100))


def test_actions_header_bytes():
    data = encode_tensor(np.zeros((100, 7), np.float32))
    assert data[:16] == b"CSKT" + bytes([0, 2]) + b"\x00\x00" + struct.pack("<II", 100, 7)
    assert len(data) == 16 + 100 * 7 * 4


def test_u8_tensor_roundtrip():
    a = np.array([0, 1, 1], np.uint8)
    data = encode_tensor(a)
    assert data[4] == 1 and data[5] == 1
    assert np.array_equal(decode_tensor(data), a)


def test_truncated_payload_is_integrity_error():
    data = encode_tensor(np.ones((4, 7), np.float32))
    with pytest.raises(IntegrityError):
        decode_tensor(data[:-3])


def test_bad_magic_names_offset():
    data = b"XSKT" + encode_tensor(np.ones(3, np.float32))[4:]
    with pytest.raises(EpisodeFormatError) as e:
        decode_tensor(data, "rewards.cskt")
    assert e.value.offset == 0 and "rewards.cskt" in str(e.value)


def test_nonzero_reserved_rejected():
    data = bytearray(encode_tensor(np.ones(3, np.float32)))
    data[6] = 1
    with pytest.raises(EpisodeFormatError) as e:
        decode_tensor(bytes(data))
    assert e.value.offset == 6


def test_ppm_roundtrip_and_comments():
    img = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    assert np.array_equal(decode_ppm(encode_ppm(img)), img)
    commented = b"P6\n# made by hand\n3 2\n255\n" + img.tobytes()
    assert np.array_equal(decode_ppm(commented), img)
    with pytest.raises(EpisodeFormatError):
        decode_ppm(b"P3\n3 2\n255\n" + img.tobytes())


def test_empty_table_renders_background():
    img = render_frame(state_with(ee=(5.0, 5.0, 0.3)), CAM)
    assert np.all(img == BACKGROUND)


def test_centered_cube_width_matches_projection():
    # 0.1 m cube in a 1 m window at 100 px: 10 px wide, centred
    s = state_with(cube("c", 0, 0, half=0.05, texture="red"), ee=(5.0, 5.0, 0.3))
    img = render_frame(s, CAM)
    painted = np.any(img != BACKGROUND, axis=2)
    rows, cols = np.nonzero(painted)
    assert cols.max() - cols.min() + 1 == 10 and rows.max() - rows.min() + 1 == 10
    assert (cols.min() + cols.max()) / 2 == pytest.approx(49.5)


def test_render_deterministic():
    s = instantiate("stack", 3).reset()
    assert render_frame(s, CAM).tobytes() == render_frame(s.copy(), CAM).tobytes()


def test_box_matches_projected_extents():
    s = state_with(cube("c", 0.1, -0.2, half=0.03), ee=(5.0, 5.0, 0.3))
    x0, y0, x1, y1, vis = bounding_boxes(s, CAM)["c"]
    # independent arithmetic: x in [0.07, 0.13] -> px 57..63 ; y in [-0.23, -0.17] -> py 67..73
    assert (x0, y0, x1, y1) == pytest.approx((57, 67, 63, 73), abs=1.0)
    assert vis


def test_fully_covered_object_invisible():
    small = cube("s", 0, 0, half=0.01)
    big = cube("b", 0, 0, half=0.05, z=0.2)
    boxes = bounding_boxes(state_with(small, big, ee=(5.0, 5.0, 0.5)), CAM)
    assert not boxes["s"][4] and boxes["b"][4]


def test_out_of_hand_window_invisible():
    hand = Camera("hand", (0, 0), 0.3, 0.3, (64, 64), follows_ee=True)
    s = state_with(cube("c", 0.4, 0.4), ee=(-0.3, -0.3, 0.3))
    assert bounding_boxes(s, hand)["c"][4] is False


def test_hand_camera_follows_ee():
    hand = Camera("hand", (0, 0), 0.3, 0.3, (60, 60), follows_ee=True)
    s = state_with(ee=(0.2, 0.1, 0.1))
    img = render_frame(s, hand)
    assert tuple(img[30, 30]) == EE_COLOR


def test_annotate_fallback_uses_active_predicate():
    inst = instantiate("pick", 0)
    tree = inst.fresh_tree()
    from deskbench import predicates as P
    P.start(tree, inst.reset())
    a = annotate("Pick it.", tree, inst.names)
    assert a["task"] == "Pick it."
    assert a["subtask"] == tree.describe(inst.names)
    a2 = annotate("t", tree, inst.names, subtask="x", phase="closing gripper")
    assert a2 == {"task": "t", "subtask": "x", "step": "closing gripper"}


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(rec=episode_records())
def test_roundtrip_random_records(tmp_path, rec):
    d = tmp_path / "ep"
    write_episode(d, rec)
    assert read_episode(d) == rec


@pytest.fixture(scope="module")
def oracle_episode(tmp_path_factory):
    d = tmp_path_factory.mktemp("ep") / "stack"
    res = run_episode(instantiate("stack", 2), make_policy("oracle"), record_dir=d)
    assert res.success
    return d, res


def test_episode_layout(oracle_episode):
    d, res = oracle_episode
    names = sorted(os.listdir(d))
    assert names == sorted(["meta.json", "cameras.json", "actions.cskt", "rewards.cskt",
                            "success.cskt", "frames", "boxes.jsonl", "annotations.jsonl",
                            "keysteps.json", "keysteps", "prompt_assets"])
    assert len(os.listdir(d / "frames" / "base")) == res.length
    assert sorted(os.listdir(d / "frames" / "hand"))[0] == "000000.ppm"
    meta = json.loads((d / "meta.json").read_text())
    assert meta["length"] == res.length and meta["success"] is True


def test_episode_invariants(oracle_episode):
    d, res = oracle_episode
    rec = read_episode(d)
    n = len(rec)
    assert rec.actions.shape == (n, 7) and len(rec.rewards) == n == len(rec.frames["base"])
    assert np.all(np.diff(rec.success.astype(int)) >= 0)
    assert bool(rec.success[-1]) == rec.meta["success"]
    assert all(0 <= k["index"] < n for k in rec.keysteps)
    # the last keystep is the step that completed the task
    assert rec.keysteps[-1]["index"] == int(np.argmax(rec.success))
    assert float(rec.rewards.sum()) == pytest.approx(res.total_reward, rel=1e-6)


def test_subtask_changes_with_active_predicate(oracle_episode):
    d, _ = oracle_episode
    rec = read_episode(d, frames=False)
    subs = [a["subtask"] for a in rec.annotations]
    changes = [i for i in range(1, len(subs)) if subs[i] != subs[i - 1]]
    # stack has two ordered OnTop goals: the subtask switches after the first keystep
    first_done = rec.keysteps[0]["index"]
    assert changes and changes[0] == first_done + 1


def _corrupt(src, tmp_path, name, mutate):
    import shutil
    d = tmp_path / "c"
    shutil.copytree(src, d)
    p = d / name
    p.write_bytes(mutate(p.read_bytes()))
    return d


@pytest.mark.parametrize("name,mutate,err", [
    ("actions.cskt", lambda b: b[:-4], IntegrityError),
    ("rewards.cskt", lambda b: b"JUNK" + b[4:], EpisodeFormatError),
    ("meta.json", lambda b: b[:10], EpisodeFormatError),
    ("boxes.jsonl", lambda b: b"{oops\n" + b, EpisodeFormatError),
    ("frames/base/000001.ppm", lambda b: b[:-1], IntegrityError),
    ("success.cskt", lambda b: encode_tensor(np.zeros(3, np.uint8)), IntegrityError),
])
def test_corruption_detected(oracle_episode, tmp_path, name, mutate, err):
    d = _corrupt(oracle_episode[0], tmp_path, name, mutate)
    with pytest.raises(err) as e:
        read_episode(d)
    if err is EpisodeFormatError:
        assert name.split("/")[-1] in e.value.path


def test_missing_frame_is_integrity_error(oracle_episode, tmp_path):
    import shutil
    d = tmp_path / "m"
    shutil.copytree(oracle_episode[0], d)
    os.remove(d / "frames" / "hand" / "000003.ppm")
    with pytest.raises(IntegrityError):
        read_episode(d)
