"""Two-stage training on the toy scenario, then steps-to-target against a uniform-random policy.

    python3 scripts/train_toy.py --seed 0 --out runs/toy
"""

import argparse
import time

import numpy as np

from crewsim.baselines import policy_controller, random_controller, steps_to_target
from crewsim.environment import EnvConfig, apply_stage1, reset, run_episode
from crewsim.scenario import build_toy_scenario
from crewsim.training import TrainConfig, train_two_stage


def mean_steps(sc, cfg, make_ctl, episodes):
    xs = []
    for ep in range(episodes):
        env = run_episode(reset(sc, cfg, 1000 + ep), make_ctl(ep))
        xs += steps_to_target(env)
    return float(np.mean(xs)) if xs else float("nan")


def window_means(curve, stage):
    r = [c.mean_reward for c in curve if c.stage == stage]
    if not r:
        return float("nan"), float("nan")
    n = max(1, len(r) // 10)
    return float(np.mean(r[:n])), float(np.mean(r[-n:]))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stage1-steps", type=int, default=250_000)
    p.add_argument("--total-steps", type=int, default=500_000)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--out", default="runs/toy")
    args = p.parse_args()

    sc = build_toy_scenario()
    cfg = TrainConfig(stage=2, stage1_steps=args.stage1_steps, total_steps=args.total_steps, rollout=512, n_envs=4,
                      train_max_ticks=3000, seed=args.seed)
    t0 = time.perf_counter()
    res = train_two_stage(sc, cfg, out_dir=args.out,
                          log=lambda d, r: print(f"step {r.step:7d} stage {r.stage} reward {r.mean_reward:.5f}"))
    print(f"trained in {time.perf_counter() - t0:.0f} s")

    s1 = window_means(res.reach_curve, 1)
    s2 = window_means(res.reach_curve, 2)
    print(f"reach reward: stage-1 end {s1[1]:.5f}, stage-2 start {s2[0]:.5f}, stage-2 end {s2[1]:.5f}")

    eval_cfg = apply_stage1(EnvConfig(max_ticks=cfg.train_max_ticks))
    rnd = mean_steps(sc, eval_cfg, random_controller, args.episodes)
    snap = res.stage1_params or res.params
    trn = mean_steps(sc, eval_cfg, lambda s: policy_controller(snap, s), args.episodes)
    print(f"steps-to-target over {args.episodes} episodes: trained {trn:.1f}, random {rnd:.1f}, ratio {trn / rnd:.3f}")


if __name__ == "__main__":
    main()
