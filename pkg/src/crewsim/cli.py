"""Command-line entry point: simulate, train, compare and export trajectories.

Exit codes: 0 success, 1 usage, 2 invalid input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .baselines import (GAConfig, evaluate_genes, ga_optimize, make_controller, policy_controller, policy_valuer,
                        priority_valuer)
from .environment import EnvConfig, apply_stage1, apply_stage2, reset, run_episode
from .exports import export_trajectory, write_comparison, write_ga_history, write_manifest, write_run
from .policy import load_checkpoint
from .scenario import ScenarioError, resolve_scenario
from .training import TrainingDiverged, config_from_dict, config_to_dict, train_two_stage

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3
METHODS = ("trained", "priority", "ga")


class UsageError(Exception):
    pass


class InvalidInput(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("CMDP_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"CMDP_SEED must be an integer, got {env!r}") from None


def _scenario(name: str):
    try:
        return resolve_scenario(name)
    except FileNotFoundError as exc:
        raise InvalidInput(f"scenario file not found: {name}") from exc
    except ScenarioError as exc:
        raise InvalidInput(f"invalid scenario {name}: {exc}") from exc


def _checkpoint(path: str | None):
    if path is None:
        return None
    if not Path(path).exists():
        raise InvalidInput(f"checkpoint not found: {path}")
    try:
        return load_checkpoint(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"unreadable checkpoint {path}: {exc}") from exc


def _genes(path: str) -> dict[str, float]:
    if not Path(path).exists():
        raise InvalidInput(f"genes file not found: {path}")
    try:
        d = json.loads(Path(path).read_text())
        return {str(k): float(v) for k, v in d.items()}
    except (ValueError, AttributeError) as exc:
        raise InvalidInput(f"genes file {path} must map task ids to numbers") from exc


def _env_cfg(args, record_trace: bool = False) -> EnvConfig:
    cfg = EnvConfig(max_ticks=args.max_ticks, record_trace=record_trace)
    return apply_stage1(cfg) if args.stage == 1 else apply_stage2(cfg)


def _ga_genes(sc, args, cfg: EnvConfig, reach, seed: int) -> tuple[dict[str, float], object]:
    if args.genes:
        genes = _genes(args.genes)
        missing = [t.id for t in sc.tasks if t.id not in genes]
        if missing:
            raise InvalidInput(f"genes file lacks tasks {missing[:5]}")
        return genes, None
    ga = GAConfig(population=args.ga_population, generations=args.ga_generations, seed=seed, env_seed=seed)
    res = ga_optimize(sc, ga, cfg, reach)
    return res.genes_by_task(), res


def _episode(sc, method: str, cfg: EnvConfig, seed: int, reach, genes=None):
    if method == "trained":
        return run_episode(reset(sc, cfg, seed), policy_controller(reach, seed), policy_valuer(reach, seed))
    if method == "priority":
        controller, _ = make_controller(reach, seed)
        return run_episode(reset(sc, cfg, seed), controller, priority_valuer())
    if method == "ga":
        return evaluate_genes(sc, genes, cfg, seed, reach)
    raise UsageError(f"unknown method {method!r}")


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    sc = _scenario(args.scenario)
    seed = _seed(args.seed)
    reach = _checkpoint(args.policy)
    if reach is None and args.baseline is None:
        raise UsageError("simulate needs --policy, --baseline or both")
    cfg = _env_cfg(args, record_trace=not args.no_trace)
    method = args.baseline or "trained"
    genes, ga_res = (None, None)
    if method == "ga":
        genes, ga_res = _ga_genes(sc, args, cfg, reach, seed)
    env = _episode(sc, method, cfg, seed, reach, genes)
    out = Path(args.out)
    paths = write_run(env, out, args.agent, scenario=sc.name, method=method, policy=args.policy,
                      controller="trained" if reach is not None else "scripted")
    if ga_res is not None:
        write_ga_history(ga_res.best_history, ga_res.mean_history, out / "ga_history.csv")
        (out / "genes.json").write_text(json.dumps(genes, sort_keys=True, indent=2) + "\n")
    m = env.metrics()
    status = "complete" if m["completed"] else "INCOMPLETE"
    print(f"{method}: {m['episode_ticks']} ticks, {m['completed_tasks']}/{m['total_tasks']} tasks ({status}); "
          f"wrote {len(paths)} files to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    sc = _scenario(args.scenario)
    overrides = {}
    if args.config:
        if not Path(args.config).exists():
            raise InvalidInput(f"config not found: {args.config}")
        try:
            overrides = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"config {args.config} is not valid JSON: {exc}") from exc
    for key in ("stage", "total_steps", "stage1_steps"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    if args.seed is not None or "seed" not in overrides:
        overrides["seed"] = _seed(args.seed)
    try:
        cfg = config_from_dict(overrides)
    except (TypeError, ValueError) as exc:
        raise InvalidInput(f"invalid training config: {exc}") from exc
    params = _checkpoint(args.resume)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def log(d, row):
        if not args.quiet:
            print(f"stage {row.stage} update {row.update} step {row.step} reach_reward {row.mean_reward:.5f}",
                  flush=True)

    res = train_two_stage(sc, cfg, EnvConfig(max_ticks=cfg.train_max_ticks), params, out, log)
    write_manifest(out / "manifest.json", scenario=sc.name, seed=cfg.seed, train_config=config_to_dict(cfg),
                   resumed_from=args.resume, final_step=res.params.step)
    print(f"trained to step {res.params.step}; checkpoint {res.checkpoints[-1]}")
    return EXIT_OK


def cmd_compare(args) -> int:
    sc = _scenario(args.scenario)
    seed = _seed(args.seed)
    if args.episodes < 0:
        raise UsageError("--episodes must be non-negative")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown methods {bad}; choose from {list(METHODS)}")
    reach = _checkpoint(args.policy)
    if "trained" in methods and reach is None:
        raise UsageError("method 'trained' needs --policy")
    cfg = _env_cfg(args)
    genes = None
    if "ga" in methods and args.episodes > 0:
        genes, _ = _ga_genes(sc, args, cfg, reach, seed)
    rows = []
    for m in methods:
        for ep in range(args.episodes):
            s = seed + ep
            met = _episode(sc, m, cfg, s, reach, genes).metrics()
            rows.append({"method": m, "episode": ep, "seed": s, "ticks": met["episode_ticks"],
                         "reaching_steps": met["reaching_steps"], "idle_steps": met["idle_steps"],
                         "idle_area_steps": met["idle_area_steps"], "completed": int(met["completed"])})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_comparison(rows, out)
    means = {m: float(np.mean([r["ticks"] for r in rows if r["method"] == m])) for m in methods if args.episodes}
    for m, v in means.items():
        print(f"{m}: mean ticks {v:.1f}")
    if "trained" in means and "priority" in means:
        print(f"trained/priority mean ticks ratio {means['trained'] / means['priority']:.4f}")
    return EXIT_OK


def cmd_export_trajectory(args) -> int:
    if not Path(args.trace).exists():
        raise InvalidInput(f"trace not found: {args.trace}")
    comps = None
    if args.scenario:
        comps = {c.id for c in _scenario(args.scenario).components}
    try:
        text = export_trajectory(args.trace, args.agent, args.out, args.start, args.end, comps)
    except KeyError as exc:
        raise InvalidInput(str(exc.args[0])) from exc
    if args.out is None:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _episode_flags(p):
    p.add_argument("--scenario", default="case-study", help="built-in name (case-study, toy, two-task) or JSON path")
    p.add_argument("--seed", type=int, default=None, help="falls back to $CMDP_SEED, then 0")
    p.add_argument("--max-ticks", type=int, default=60000)
    p.add_argument("--stage", type=int, choices=(1, 2), default=2, help="dynamics used for the episode")
    p.add_argument("--policy", help="trained checkpoint; also drives reaching for the baselines")
    p.add_argument("--genes", help="JSON task->gene map for the ga method (skips optimization)")
    p.add_argument("--ga-population", type=int, default=GAConfig.population)
    p.add_argument("--ga-generations", type=int, default=GAConfig.generations)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="crewsim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="run one episode and write Gantt, trajectory, trace and metrics")
    _episode_flags(p)
    p.add_argument("--baseline", choices=("priority", "ga"))
    p.add_argument("--agent", help="write the trajectory of this agent only")
    p.add_argument("--no-trace", action="store_true", help="skip trace.jsonl and trajectory CSVs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="two-stage MAPPO training")
    p.add_argument("--scenario", default="toy")
    p.add_argument("--config", help="JSON object of training config fields")
    p.add_argument("--stage", type=int, choices=(1, 2), default=None)
    p.add_argument("--total-steps", type=int, default=None)
    p.add_argument("--stage1-steps", type=int, default=None)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="per-episode ticks, reaching and idle steps for several methods")
    _episode_flags(p)
    p.add_argument("--methods", default="priority", help="comma list of trained, priority, ga")
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--out", required=True, help="comparison CSV path")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-trajectory", help="(tick, x, y) CSV of one agent from a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--agent", required=True)
    p.add_argument("--start", type=int, default=None)
    p.add_argument("--end", type=int, default=None)
    p.add_argument("--scenario", help="number arrivals at this scenario's components only")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export_trajectory)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "func", None) is None:
            raise UsageError("a subcommand is required: simulate, train, compare, export-trajectory")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidInput as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (RuntimeError, OSError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
