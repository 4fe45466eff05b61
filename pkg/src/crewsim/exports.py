"""Run artifacts: Gantt tables, trajectories, metrics, traces and a run manifest.

Every writer produces deterministic bytes for identical inputs so repeated
seeded runs can be compared with a plain file diff.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .environment import ConstructionEnv

AGENT_KINDS = ("idle", "navigating", "tasking", "fetching_or_waiting")
GANTT_HEADER = ["subject", "kind", "start", "end", "detail"]
TRAJECTORY_HEADER = ["tick", "x", "y", "arrived", "arrival_order"]
COMPARISON_HEADER = ["method", "episode", "seed", "ticks", "reaching_steps", "idle_steps", "idle_area_steps",
                     "completed"]
GA_HEADER = ["generation", "best_fitness", "mean_fitness"]


@dataclass(frozen=True)
class GanttRow:
    subject: str
    kind: str
    start: int
    end: int
    detail: str = ""

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"segment of {self.subject} ends before it starts")


def _write_csv(header, rows, path: str | Path | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def _dump_json(obj, path: str | Path | None) -> str:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


# ---------------------------------------------------------------- Gantt

def agent_gantt_rows(env: ConstructionEnv) -> list[GanttRow]:
    """Activity segments per agent; the idle causes are kept in ``detail``."""
    rows = []
    for a in env.agent_ids:
        for cat, start, end in env.segments[a]:
            kind = "idle" if cat.startswith("idle") else cat
            rows.append(GanttRow(a, kind, start, end, cat if kind == "idle" else ""))
    return rows


def task_gantt_rows(env: ConstructionEnv) -> list[GanttRow]:
    """One row per completed task, ordered by start tick then id."""
    cs = env.cstate
    done = [t for t in cs.end_tick if t in cs.start_tick]
    done.sort(key=lambda t: (cs.start_tick[t], t))
    return [GanttRow(t, "executing", cs.start_tick[t], cs.end_tick[t]) for t in done]


def write_gantt_csv(rows: list[GanttRow], path: str | Path | None = None) -> str:
    return _write_csv(GANTT_HEADER, ([r.subject, r.kind, r.start, r.end, r.detail] for r in rows), path)


def read_gantt_csv(path: str | Path) -> list[GanttRow]:
    with open(path, newline="") as f:
        return [GanttRow(r["subject"], r["kind"], int(r["start"]), int(r["end"]), r["detail"])
                for r in csv.DictReader(f)]


_COLORS = {"idle": "#b0b0b0", "navigating": "#f2c531", "tasking": "#d9534f", "fetching_or_waiting": "#5cb85c",
           "executing": "#d9534f"}


def gantt_svg(rows: list[GanttRow], width: int = 1000, row_height: int = 14) -> str:
    """Minimal SVG rendering, one lane per subject in first-seen order."""
    lanes: list[str] = []
    for r in rows:
        if r.subject not in lanes:
            lanes.append(r.subject)
    end = max((r.end for r in rows), default=1) or 1
    scale = (width - 80) / end
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{row_height * len(lanes) + 4}">']
    for i, s in enumerate(lanes):
        out.append(f'<text x="2" y="{i * row_height + row_height - 3}" font-size="{row_height - 4}">{s}</text>')
    for r in rows:
        y = lanes.index(r.subject) * row_height + 1
        x = 80 + r.start * scale
        w = max((r.end - r.start) * scale, 0.5)
        out.append(f'<rect x="{x:.2f}" y="{y}" width="{w:.2f}" height="{row_height - 2}" '
                   f'fill="{_COLORS.get(r.kind, "#000")}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- trace and trajectory

def parse_trace(trace) -> list[dict]:
    """Accept JSON lines, a path to a .jsonl file, or already-parsed records."""
    if isinstance(trace, (str, Path)) and Path(trace).exists():
        trace = Path(trace).read_text().splitlines()
    return [json.loads(r) if isinstance(r, str) else r for r in trace if r]


def write_trace(env: ConstructionEnv, path: str | Path | None = None) -> str:
    text = "".join(line + "\n" for line in env.trace)
    if path is not None:
        Path(path).write_text(text)
    return text


def trajectory_rows(trace, agent_id: str, start: int | None = None, end: int | None = None,
                    components: set[str] | None = None) -> list[list]:
    """(tick, x, y, arrived, arrival_order) for one agent.

    ``arrival_order`` numbers arrivals at task targets; when ``components`` is
    given only those ids count, so storage and outlet visits stay unnumbered.
    """
    recs = [r for r in parse_trace(trace) if r["agent"] == agent_id]
    if not recs:
        raise KeyError(f"no trace records for agent {agent_id!r}")
    rows = []
    n = 0
    for r in recs:
        arrived = r.get("arrived") or ""
        order = ""
        if arrived and (components is None or arrived in components):
            n += 1
            order = n
        if (start is not None and r["tick"] < start) or (end is not None and r["tick"] > end):
            continue
        rows.append([r["tick"], r["x"], r["y"], arrived, order])
    return rows


def export_trajectory(trace, agent_id: str, path: str | Path | None = None, start: int | None = None,
                      end: int | None = None, components: set[str] | None = None) -> str:
    return _write_csv(TRAJECTORY_HEADER, trajectory_rows(trace, agent_id, start, end, components), path)


def arrival_order(trace, agent_id: str, components: set[str] | None = None) -> list[str]:
    return [r[3] for r in trajectory_rows(trace, agent_id, components=components) if r[4] != ""]


# ---------------------------------------------------------------- metrics, manifest, tables

def write_metrics(env: ConstructionEnv, path: str | Path | None = None, **extra) -> str:
    m = env.metrics()
    m["incomplete"] = not m["completed"]
    m.update(extra)
    return _dump_json(m, path)


def write_manifest(path: str | Path | None, **fields) -> str:
    from . import __version__

    return _dump_json({"code_version": __version__, **fields}, path)


def write_comparison(rows: list[dict], path: str | Path | None = None) -> str:
    return _write_csv(COMPARISON_HEADER, ([r[k] for k in COMPARISON_HEADER] for r in rows), path)


def write_ga_history(best: list[float], mean: list[float], path: str | Path | None = None) -> str:
    return _write_csv(GA_HEADER, ([g, f"{b:.9g}", f"{m:.9g}"] for g, (b, m) in enumerate(zip(best, mean))), path)


def write_run(env: ConstructionEnv, out_dir: str | Path, trajectory_agent: str | None = None,
              **manifest) -> dict[str, Path]:
    """Write every per-episode artifact into ``out_dir`` and return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "agents_gantt": out / "agents.gantt.csv",
        "tasks_gantt": out / "tasks.gantt.csv",
        "metrics": out / "metrics.json",
        "manifest": out / "manifest.json",
    }
    write_gantt_csv(agent_gantt_rows(env), paths["agents_gantt"])
    write_gantt_csv(task_gantt_rows(env), paths["tasks_gantt"])
    write_metrics(env, paths["metrics"])
    if env.cfg.record_trace:
        paths["trace"] = out / "trace.jsonl"
        write_trace(env, paths["trace"])
        comps = {c.id for c in env.scenario.components}
        agents = [trajectory_agent] if trajectory_agent else env.agent_ids
        for a in agents:
            p = out / f"trajectory.{a}.csv"
            export_trajectory(env.trace, a, p, components=comps)
            paths[f"trajectory_{a}"] = p
    write_manifest(paths["manifest"], seed=env.seed, env_config=env_config_dict(env), **manifest)
    return paths


def env_config_dict(env: ConstructionEnv) -> dict:
    c = env.cfg
    return {
        "max_ticks": c.max_ticks,
        "k_reeval": c.k_reeval,
        "dynamics": asdict(c.dynamics),
        "perception": asdict(c.perception),
        "rewards": asdict(c.rewards),
        "record_trace": c.record_trace,
    }
