"""Convergence of permutation sampling: error and std_err versus sample count.

Runs the sampler at geometrically growing budgets on a random payoff table
and prints the reported standard errors next to the true error against exact
enumeration; both should shrink like 1/sqrt(S).

    python scripts/sampling_convergence.py --players 8 --seed 11
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from conftest import random_table_game

from shaprank.exact import shapley_exact_subsets
from shaprank.sampling import SamplingConfig, shapley_sample_permutations


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--players", type=int, default=8)
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--budgets", default="250,1000,4000,16000")
    args = parser.parse_args()

    game = random_table_game(args.players, seed=args.seed)
    exact = shapley_exact_subsets(game).values
    print(f"N={args.players} seed={args.seed} target={game.target_quantity():.3f}")
    print(f"{'S':>8} {'max |err|':>12} {'median std_err':>16} {'sqrt(S)*std_err':>16}")
    for budget in (int(b) for b in args.budgets.split(",")):
        est = shapley_sample_permutations(
            game, SamplingConfig(n_permutations=budget, seed=args.seed)
        )
        max_err = float(np.max(np.abs(est.values - exact)))
        med_se = float(np.median(est.std_err))
        print(f"{budget:>8} {max_err:>12.4f} {med_se:>16.4f} {med_se * budget**0.5:>16.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
