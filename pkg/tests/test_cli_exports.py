import csv
import json

import pytest

from crewsim.baselines import GreedyController
from crewsim.cli import EXIT_INVALID, EXIT_OK, EXIT_USAGE, main
from crewsim.environment import EnvConfig, reset, run_episode
from crewsim.exports import (COMPARISON_HEADER, GANTT_HEADER, GanttRow, agent_gantt_rows, arrival_order, gantt_svg,
                             read_gantt_csv, task_gantt_rows, trajectory_rows, write_comparison, write_gantt_csv,
                             write_run)
from crewsim.scenario import build_toy_scenario, build_two_task_scenario, save_scenario


def _toy_env(seed=0, trace=True):
    env = reset(build_toy_scenario(), EnvConfig(record_trace=trace), seed)
    return run_episode(env, GreedyController(seed=seed))


def _read(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_agent_gantt_is_gap_free():
    env = _toy_env()
    rows = agent_gantt_rows(env)
    for a in env.agent_ids:
        mine = [r for r in rows if r.subject == a]
        assert mine[0].start == 0 and mine[-1].end == env.tick
        assert all(x.end == y.start for x, y in zip(mine, mine[1:]))
        assert {r.kind for r in mine} <= {"idle", "navigating", "tasking", "fetching_or_waiting"}
        assert all(r.detail.startswith("idle") for r in mine if r.kind == "idle")


def test_task_gantt_rows_sorted_and_complete():
    env = _toy_env()
    rows = task_gantt_rows(env)
    assert len(rows) == env.metrics()["completed_tasks"]
    assert [(r.start, r.subject) for r in rows] == sorted((r.start, r.subject) for r in rows)


def test_gantt_csv_round_trip(tmp_path):
    rows = [GanttRow("a", "idle", 0, 3, "idle_pre"), GanttRow("a", "navigating", 3, 9)]
    write_gantt_csv(rows, tmp_path / "g.csv")
    assert read_gantt_csv(tmp_path / "g.csv") == rows


def test_gantt_row_rejects_reversed_interval():
    with pytest.raises(ValueError):
        GanttRow("a", "idle", 5, 4)


def test_svg_has_one_rect_per_row():
    rows = agent_gantt_rows(_toy_env())
    svg = gantt_svg(rows)
    assert svg.count("<rect") == len(rows) and svg.startswith("<svg")


def test_trajectory_numbers_component_arrivals():
    env = _toy_env()
    comps = {c.id for c in env.scenario.components}
    a = env.agent_ids[0]
    rows = trajectory_rows(env.trace, a, components=comps)
    assert len(rows) == env.tick
    numbered = [r for r in rows if r[4] != ""]
    assert [r[4] for r in numbered] == list(range(1, len(numbered) + 1))
    assert all(r[3] in comps for r in numbered)
    assert arrival_order(env.trace, a, comps) == [r[3] for r in numbered]


def test_trajectory_window_keeps_global_numbering():
    env = _toy_env()
    a = env.agent_ids[0]
    full = trajectory_rows(env.trace, a)
    part = trajectory_rows(env.trace, a, start=100, end=200)
    assert part == [r for r in full if 100 <= r[0] <= 200]


def test_trajectory_unknown_agent():
    with pytest.raises(KeyError):
        trajectory_rows(_toy_env().trace, "nobody")


def test_zero_episode_comparison_is_header_only():
    assert write_comparison([]) == ",".join(COMPARISON_HEADER) + "\n"


def test_write_run_layout(tmp_path):
    paths = write_run(_toy_env(), tmp_path, scenario="toy")
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == sorted(["agents.gantt.csv", "tasks.gantt.csv", "metrics.json", "manifest.json", "trace.jsonl",
                            "trajectory.HIC1.csv", "trajectory.RC1.csv"])
    assert _read(paths["agents_gantt"])[0] == GANTT_HEADER
    manifest = json.loads(paths["manifest"].read_text())
    assert manifest["seed"] == 0 and manifest["scenario"] == "toy" and "code_version" in manifest
    assert json.loads(paths["metrics"].read_text())["incomplete"] is False


def test_seeded_runs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    write_run(_toy_env(5), a)
    write_run(_toy_env(5), b)
    for p in a.iterdir():
        assert p.read_bytes() == (b / p.name).read_bytes(), p.name


# ---------------------------------------------------------------- CLI

def test_cli_simulate_priority(tmp_path, capsys):
    code = main(["simulate", "--scenario", "toy", "--baseline", "priority", "--out", str(tmp_path / "run")])
    assert code == EXIT_OK
    assert "complete" in capsys.readouterr().out
    assert (tmp_path / "run" / "trace.jsonl").exists()


def test_cli_simulate_ga_writes_history(tmp_path):
    out = tmp_path / "ga"
    code = main(["simulate", "--scenario", "two-task", "--baseline", "ga", "--ga-population", "4",
                 "--ga-generations", "2", "--no-trace", "--out", str(out)])
    assert code == EXIT_OK
    assert len(_read(out / "ga_history.csv")) == 3
    genes = json.loads((out / "genes.json").read_text())
    assert set(genes) == {"TA", "TB"}
    assert not (out / "trace.jsonl").exists()


def test_cli_simulate_needs_a_method(tmp_path, capsys):
    assert main(["simulate", "--scenario", "toy", "--out", str(tmp_path)]) == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["bogus"], ["simulate"], ["compare", "--methods", "nope", "--out", "x.csv"]])
def test_cli_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_cli_missing_scenario_file(tmp_path):
    code = main(["simulate", "--scenario", str(tmp_path / "missing.json"), "--baseline", "priority",
                 "--out", str(tmp_path)])
    assert code == EXIT_INVALID


def test_cli_invalid_scenario_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{broken")
    assert main(["simulate", "--scenario", str(p), "--baseline", "priority", "--out", str(tmp_path)]) == EXIT_INVALID


def test_cli_missing_checkpoint(tmp_path):
    code = main(["simulate", "--scenario", "toy", "--policy", str(tmp_path / "none.json"), "--out", str(tmp_path)])
    assert code == EXIT_INVALID


def test_cli_scenario_from_json(tmp_path):
    p = tmp_path / "s.json"
    save_scenario(build_two_task_scenario(), p)
    assert main(["simulate", "--scenario", str(p), "--baseline", "priority", "--out", str(tmp_path / "r")]) == EXIT_OK


def test_cli_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CMDP_SEED", "4")
    main(["simulate", "--scenario", "toy", "--baseline", "priority", "--no-trace", "--out", str(tmp_path / "a")])
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["seed"] == 4
    monkeypatch.setenv("CMDP_SEED", "four")
    assert main(["simulate", "--scenario", "toy", "--baseline", "priority", "--out", str(tmp_path / "b")]) == EXIT_USAGE


def test_cli_repeat_runs_identical(tmp_path):
    for d in ("a", "b"):
        main(["simulate", "--scenario", "toy", "--baseline", "priority", "--seed", "2", "--out", str(tmp_path / d)])
    for p in (tmp_path / "a").iterdir():
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes(), p.name


def test_cli_compare_zero_episodes(tmp_path, capsys):
    out = tmp_path / "cmp.csv"
    assert main(["compare", "--scenario", "toy", "--methods", "priority,ga", "--episodes", "0",
                 "--out", str(out)]) == EXIT_OK
    assert _read(out) == [COMPARISON_HEADER]


def test_cli_compare_rows(tmp_path):
    out = tmp_path / "cmp.csv"
    assert main(["compare", "--scenario", "toy", "--episodes", "2", "--out", str(out)]) == EXIT_OK
    rows = _read(out)
    assert len(rows) == 3 and [r[2] for r in rows[1:]] == ["0", "1"]


def test_cli_train_and_use_policy(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_envs": 1, "rollout": 32, "minibatch": 16, "epochs": 1, "hidden": [8, 8],
                               "train_max_ticks": 200}))
    out = tmp_path / "train"
    assert main(["train", "--scenario", "two-task", "--config", str(cfg), "--stage", "1", "--stage1-steps", "40",
                 "--quiet", "--out", str(out)]) == EXIT_OK
    assert (out / "final.json").exists() and (out / "reach_curve.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["train_config"]["stage"] == 1
    run = tmp_path / "run"
    assert main(["simulate", "--scenario", "two-task", "--policy", str(out / "final.json"), "--max-ticks", "300",
                 "--out", str(run)]) == EXIT_OK
    assert json.loads((run / "manifest.json").read_text())["method"] == "trained"


def test_cli_train_rejects_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"learning_rate": 1.0}))
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "t")]) == EXIT_INVALID


def test_cli_export_trajectory(tmp_path, capsys):
    run = tmp_path / "run"
    main(["simulate", "--scenario", "toy", "--baseline", "priority", "--out", str(run)])
    capsys.readouterr()
    assert main(["export-trajectory", "--trace", str(run / "trace.jsonl"), "--agent", "RC1", "--start", "0",
                 "--end", "9"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "tick,x,y,arrived,arrival_order" and len(lines) == 11
    assert main(["export-trajectory", "--trace", str(run / "trace.jsonl"), "--agent", "ZZ"]) == EXIT_INVALID
    assert main(["export-trajectory", "--trace", str(tmp_path / "nope.jsonl"), "--agent", "RC1"]) == EXIT_INVALID
