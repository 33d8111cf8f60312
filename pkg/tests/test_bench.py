import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chainplan.bench import cli
from chainplan.bench.dataset import MANIFEST, export_dataset, roundtrip_ok
from chainplan.bench.runner import EpisodeResult, RunStats, distinct_curve, run_episodes, two_proportion_z
from chainplan.bench.tasks import TASKS, episode_config, episode_rng, get_task, sample_offsets
from chainplan.executor.recorder import ACTION_DIM, read_traj
from chainplan.scene.scene import load_scene


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.parametrize("task", sorted(TASKS))
def test_offsets_stay_in_ranges(task):
    spec = TASKS[task]
    rng = np.random.default_rng(0)
    draws = np.array([sample_offsets(spec, rng) for _ in range(10_000)]).reshape(-1, 3)
    x1, x2, y1, y2 = spec.box
    a1, a2 = spec.yaw
    assert draws[:, 0].min() >= x1 and draws[:, 0].max() <= x2
    assert draws[:, 1].min() >= y1 and draws[:, 1].max() <= y2
    assert draws[:, 2].min() >= a1 and draws[:, 2].max() <= a2


@pytest.mark.parametrize("task", ["blocks_stack_hard", "pyramid_stack", "block_handover"])
def test_loaded_objects_inside_boxes(task):
    spec = TASKS[task]
    x1, x2, y1, y2 = spec.box
    for ep in range(20):
        _, state = load_scene(episode_config(spec, 1, ep))
        for o in spec.objects:
            dx, dy = state.object_poses[(o.name, o.obj_id)].p[:2] - np.array(o.xy)
            assert x1 - 1e-12 <= dx <= x2 + 1e-12 and y1 - 1e-12 <= dy <= y2 + 1e-12


def test_episode_streams_are_independent():
    a = episode_rng(3, 0).random(4)
    assert not np.array_equal(a, episode_rng(3, 1).random(4))
    assert np.array_equal(a, episode_rng(3, 0).random(4))


def test_unknown_task():
    with pytest.raises(KeyError):
        get_task("juggling")


def test_zero_episodes_write_nothing(tmp_path):
    stats = run_episodes(TASKS["open_drawer"], 0, 0, out_dir=tmp_path)
    assert stats.episodes == 0 and list(tmp_path.iterdir()) == []


def test_runs_are_byte_identical_and_roundtrip(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        run_episodes(TASKS["open_drawer"], 3, 5, out_dir=d)
    assert tree_bytes(a) == tree_bytes(b)
    trajs = sorted(a.rglob("*.traj"))
    assert len(trajs) == 3
    for p in trajs:
        assert roundtrip_ok(p)
        head, frames = read_traj(p)
        assert head["task"] == "open_drawer" and head["seed"] == 5
        assert all(len(f["action"]) == ACTION_DIM for f in frames)


def test_search_run_writes_trees_and_stats(tmp_path):
    from chainplan.search.mcts import SearchConfig
    stats = run_episodes(TASKS["block_stack_single"], 2, 1, "noisy", 0.3, SearchConfig(n_max=3), tmp_path)
    base = tmp_path / "block_stack_single" / "1"
    assert sorted(p.name for p in base.glob("tree_*.json")) == ["tree_0.json", "tree_1.json"]
    rows = (base / "stats.csv").read_text().splitlines()
    assert rows[0] == "episode,success,status,cause,expansions,plan_id,frames" and len(rows) == 3
    assert len(list(base.glob("*.traj"))) == stats.successes


def test_export_manifest(tmp_path):
    run_episodes(TASKS["open_drawer"], 3, 0, out_dir=tmp_path)
    m = export_dataset(tmp_path)
    assert [e["episode"] for e in m["episodes"]] == [0, 1, 2] and m["errors"] == []
    assert json.loads((tmp_path / MANIFEST).read_text()) == m
    victim = tmp_path / m["episodes"][1]["file"]
    victim.write_text(victim.read_text().replace('"t":0', '"t": 0', 1))
    m2 = export_dataset(tmp_path)
    assert len(m2["episodes"]) == 2 and m2["errors"][0]["file"] == m["episodes"][1]["file"]


def test_export_empty_dir(tmp_path):
    assert export_dataset(tmp_path)["episodes"] == []


def _result(i, ok, sig=None, cause=None):
    return EpisodeResult(i, ok, "success" if ok else "failed", cause, 2, sig)


@given(st.lists(st.tuples(st.booleans(), st.integers(0, 3)), max_size=12),
       st.lists(st.tuples(st.booleans(), st.integers(0, 3)), max_size=12))
def test_runstats_merge_commutes(xs, ys):
    def stats(items, start):
        s = RunStats("t")
        for i, (ok, k) in enumerate(items):
            s.add(_result(start + i, ok, ((("left", "move", f"o{k}", ()),),) if ok else None, None if ok else "x"))
        return s
    a, b = stats(xs, 0), stats(ys, 100)
    assert a.merge(b).summary() == b.merge(a).summary()
    assert a.merge(b).episodes == len(xs) + len(ys)


def test_runstats_summary():
    s = RunStats("t")
    s.add(_result(0, True, (("a",),)))
    s.add(_result(1, True, (("a",),)))
    s.add(_result(2, False, cause="collision"))
    d = s.summary()
    assert d["successes"] == 2 and d["distinct_plans"] == 1 and d["failure_causes"] == {"collision": 1}
    assert s.rate == pytest.approx(2 / 3)


def test_distinct_curve():
    assert distinct_curve([(1,), (1,), (2,), (1,), (3,)]) == [1, 1, 2, 2, 3]


def test_two_proportion_z_hand_value():
    # pooled rate 0.5: se = sqrt(0.25 * 0.02), z = 0.2 / se = 2 sqrt 2, p = erfc(2) / 2
    z, p = two_proportion_z(60, 100, 40, 100)
    assert z == pytest.approx(2 * math.sqrt(2))
    assert p == pytest.approx(0.5 * math.erfc(2.0))
    assert two_proportion_z(5, 5, 5, 5) == (0.0, 0.5)
    # 5/5 against 0/5: se = sqrt(0.25 * 0.4), z = sqrt 10
    z, p = two_proportion_z(5, 5, 0, 5)
    assert z == pytest.approx(math.sqrt(10)) and p == pytest.approx(0.5 * math.erfc(math.sqrt(5)))


# ---------------------------------------------------------------- command line

def test_cli_run_and_export(tmp_path, capsys):
    assert cli.main(["run", "--task", "open_drawer", "--episodes", "2", "--out", str(tmp_path), "--json"]) == 0
    rows = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert rows[0]["episodes"] == 2
    assert cli.main(["export", "--out", str(tmp_path)]) == 0
    assert (tmp_path / MANIFEST).exists()


def test_cli_search_compare_dump(tmp_path, capsys):
    assert cli.main(["search", "--task", "block_stack_single", "--episodes", "1", "--n-max", "2"]) == 0
    assert cli.main(["compare", "--task", "block_stack_single", "--episodes", "2", "--n-max", "1,2",
                     "--noise-p", "0.3", "--json"]) == 0
    out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert [r["mode"] for r in out[0]["rows"]] == ["single", "mcts", "mcts"]
    path = tmp_path / "tree.json"
    assert cli.main(["dump-tree", "--task", "block_stack_single", "--n-max", "2", "--out", str(path)]) == 0
    assert "nodes" in json.loads(path.read_text())


def test_cli_rebase(tmp_path):
    room = tmp_path / "room.json"
    room.write_text(json.dumps({"origin": [2.0, 1.0, 0.1], "axes": [[0, 1, 0], [-1, 0, 0], [0, 0, 1]]}))
    out = tmp_path / "rebase.json"
    assert cli.main(["rebase", "--task", "open_drawer", "--room-frame", str(room), "--out", str(out)]) == 0
    (row,) = json.loads(out.read_text())
    assert row["table_status"] == row["room_status"] == "success" and row["residual_gap"] <= 1e-9


@pytest.mark.parametrize("argv", [
    ["run", "--task", "juggling"],
    ["run", "--episodes", "-1"],
    ["run", "--noise-p", "2"],
    ["compare", "--n-max", "0"],
    ["search", "--gamma", "1.5", "--episodes", "1"],
    ["export", "--out", "/nonexistent/dir"],
    ["rebase"],
    ["run", "--bogus"],
    ["fly"],
])
def test_cli_config_errors_exit_2(argv):
    assert cli.main(argv) == 2


def test_cli_remote_without_env_exit_2(monkeypatch):
    monkeypatch.delenv("CHAINPLAN_LLM_ENDPOINT", raising=False)
    monkeypatch.delenv("CHAINPLAN_LLM_API_KEY", raising=False)
    assert cli.main(["run", "--proposer", "remote", "--episodes", "1"]) == 2


def test_cli_harness_error_exit_1(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("disk on fire")
    monkeypatch.setattr(cli, "run_episodes", boom)
    assert cli.main(["run", "--episodes", "1"]) == 1
