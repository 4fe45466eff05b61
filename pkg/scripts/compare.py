"""Per-episode comparison of trained, priority and GA methods on one scenario.

    python3 scripts/compare.py --scenario toy --policy runs/toy/final.json --episodes 5 --out runs/compare.csv
"""

import argparse
import sys

from crewsim.cli import main as cli_main


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario", default="toy")
    p.add_argument("--policy", default=None)
    p.add_argument("--episodes", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ga-population", type=int, default=20)
    p.add_argument("--ga-generations", type=int, default=30)
    p.add_argument("--out", default="runs/compare.csv")
    args = p.parse_args()

    methods = "trained,priority,ga" if args.policy else "priority,ga"
    argv = ["compare", "--scenario", args.scenario, "--methods", methods, "--episodes", str(args.episodes),
            "--seed", str(args.seed), "--ga-population", str(args.ga_population),
            "--ga-generations", str(args.ga_generations), "--out", args.out]
    if args.policy:
        argv += ["--policy", args.policy]
    code = cli_main(argv)
    if code == 0:
        print(open(args.out).read(), end="")
    sys.exit(code)


if __name__ == "__main__":
    main()
