"""How often the GA recovers the near-first visit order on the two-task fixture.

    python3 scripts/ga_dominance.py --runs 20
"""

import argparse

from crewsim.baselines import GAConfig, evaluate_genes, ga_optimize
from crewsim.scenario import build_two_task_scenario


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--population", type=int, default=8)
    p.add_argument("--generations", type=int, default=10)
    args = p.parse_args()

    sc = build_two_task_scenario()
    a_first = evaluate_genes(sc, {"TA": 1.0, "TB": 0.0}).tick
    b_first = evaluate_genes(sc, {"TA": 0.0, "TB": 1.0}).tick
    print(f"A first: {a_first} ticks, B first: {b_first} ticks")
    wins = 0
    for seed in range(args.runs):
        res = ga_optimize(sc, GAConfig(population=args.population, generations=args.generations, seed=seed))
        g = res.genes_by_task()
        wins += g["TA"] > g["TB"]
        print(f"seed {seed:2d}: TA {g['TA']:.3f} TB {g['TB']:.3f} best {res.best.fitness:.1f}")
    print(f"dominant order recovered in {wins}/{args.runs} runs")


if __name__ == "__main__":
    main()
