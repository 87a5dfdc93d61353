"""Ablation study on a redundancy-heavy toy-network game.

Builds a 10-unit detector network (some units duplicated into half-amplitude
twins, some pure dummies), computes player rankings with every estimator in
the package, and scores each against the brute-force oracle benchmark in
both keep and remove modes.

    python scripts/run_ablation.py --seed 0 --pairs 2
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from conftest import build_redundancy_game  # reuses the seeded game builder

from shaprank.exact import shapley_exact_subsets
from shaprank.oracle import build_oracle_rank, compute_oracle_subsets, score_ranking
from shaprank.partial import SizeBand, leave_one_out, shapley_partial
from shaprank.regression import RegressionConfig, shapley_regression
from shaprank.sampling import SamplingConfig, shapley_sample_permutations


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--pairs", type=int, default=2, choices=[1, 2, 3])
    parser.add_argument("--k-max", type=int, default=5)
    parser.add_argument("--perms", type=int, default=300)
    parser.add_argument("--samples", type=int, default=1000)
    args = parser.parse_args()

    game = build_redundancy_game(seed=args.seed, n_pairs=args.pairs)
    print(f"game: 10 units, {args.pairs} twin pair(s), seed {args.seed}")
    print(f"accuracy full={game.evaluate_mask(game.grand_mask):.4f} "
          f"empty={game.evaluate_mask(0):.4f}")

    estimates = {
        "leave-one-out": leave_one_out(game),
        "partial-3": shapley_partial(game, SizeBand(high_d=3)),
        "regression": shapley_regression(
            game, RegressionConfig(n_samples=args.samples, seed=args.seed)
        ),
        "permutations": shapley_sample_permutations(
            game, SamplingConfig(n_permutations=args.perms, seed=args.seed)
        ),
        "exact": shapley_exact_subsets(game),
    }
    print(f"total distinct coalition evaluations: {game.eval_count}")

    k_range = range(1, args.k_max + 1)
    for mode in ("keep", "remove"):
        oracle = compute_oracle_subsets(game, mode, k_range)
        reference = build_oracle_rank(oracle)
        print(f"\n=== best to {mode} (weighted overlap with oracle subsets, K=1..{args.k_max})")
        rows = []
        for name, est in estimates.items():
            rank = est.ranking()
            if mode == "remove":
                rank = rank.reversed()
            rows.append((name, score_ranking(rank, oracle).weighted_total))
        rows.append(("oracle-rank", score_ranking(reference, oracle).weighted_total))
        width = max(len(name) for name, _ in rows)
        for name, total in rows:
            print(f"  {name:<{width}}  {total:.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
