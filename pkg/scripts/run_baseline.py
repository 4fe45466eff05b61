"""Run the closed-form priority baseline on a scenario and write the episode artifacts.

    python3 scripts/run_baseline.py --scenario case-study --seed 0 --out runs/priority
"""

import argparse
import json
import time

from crewsim.baselines import run_priority_baseline
from crewsim.environment import EnvConfig
from crewsim.exports import write_run
from crewsim.scenario import resolve_scenario


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario", default="case-study")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--no-trace", action="store_true")
    p.add_argument("--out", default="runs/priority")
    args = p.parse_args()

    sc = resolve_scenario(args.scenario)
    cfg = EnvConfig(record_trace=not args.no_trace)
    for ep in range(args.episodes):
        seed = args.seed + ep
        t0 = time.perf_counter()
        env = run_priority_baseline(sc, cfg, seed)
        out = f"{args.out}/seed{seed}" if args.episodes > 1 else args.out
        write_run(env, out, scenario=sc.name, method="priority")
        m = env.metrics()
        print(json.dumps({"seed": seed, "ticks": m["episode_ticks"], "completed": m["completed"],
                          "tasks": f"{m['completed_tasks']}/{m['total_tasks']}", "reaching": m["reaching_steps"],
                          "idle": m["idle_steps"], "wall_s": round(time.perf_counter() - t0, 1)}))


if __name__ == "__main__":
    main()
