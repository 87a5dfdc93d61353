"""Ground-truth Shapley values by exhaustive enumeration.

Two independent routes are provided: a sum over all subsets with the
closed-form per-size weights, and a brute-force average of marginal
contributions over all N! player orderings.  They must agree to floating
precision and serve as the oracle for every approximation in this package.
"""

from __future__ import annotations

import functools
import math

import numpy as np

from .errors import CapacityError
from .games import Game, ShapleyEstimate, popcount_table

SUBSET_ENUM_MAX_PLAYERS = 24
PERM_ENUM_MAX_PLAYERS = 10

_PERM_CHUNK_ROWS = 1 << 18


def subset_weights(n_players: int) -> np.ndarray:
    """Weight of a size-k coalition in the subset-sum formulation.

    ``w[k] = 1 / (N * C(N-1, k))``; the weights over all subsets of the other
    players sum to 1.  ``math.comb`` is exact, so each weight suffers a
    single rounding.
    """
    return np.array(
        [1.0 / (n_players * math.comb(n_players - 1, k)) for k in range(n_players)]
    )


def _dense_value_table(game: Game, workers: int = 1) -> np.ndarray:
    masks = range(1 << game.n_players)
    return game.evaluate_masks(list(masks), workers=workers)


def shapley_exact_subsets(game: Game, workers: int = 1) -> ShapleyEstimate:
    """Exact per-player values via full subset enumeration.

    Evaluates every one of the ``2**N`` coalitions once (through the shared
    cache) and accumulates weighted marginal contributions per player.
    """
    n = game.n_players
    if n > SUBSET_ENUM_MAX_PLAYERS:
        raise CapacityError(
            f"subset enumeration supports at most {SUBSET_ENUM_MAX_PLAYERS} "
            f"players (got {n}); use permutation sampling or kernel regression"
        )
    before = game.eval_count
    table = _dense_value_table(game, workers=workers)
    weights = subset_weights(n)
    sizes = popcount_table(n).astype(np.int64)
    all_masks = np.arange(1 << n, dtype=np.int64)
    phi = np.zeros(n)
    for i in range(n):
        without = all_masks[(all_masks >> i) & 1 == 0]
        gains = table[without | (1 << i)] - table[without]
        phi[i] = float(np.dot(weights[sizes[without]], gains))
    return ShapleyEstimate(
        values=phi,
        method="exact-subsets",
        evals_used=game.eval_count - before,
    )


@functools.lru_cache(maxsize=4)
def _all_permutations(n: int) -> np.ndarray:
    """All permutations of range(n) as an (n!, n) int8 array."""
    if n == 1:
        return np.zeros((1, 1), dtype=np.int8)
    smaller = _all_permutations(n - 1)
    rows = smaller.shape[0]
    out = np.empty((rows * n, n), dtype=np.int8)
    for pos in range(n):
        block = out[pos * rows:(pos + 1) * rows]
        block[:, :pos] = smaller[:, :pos]
        block[:, pos] = n - 1
        block[:, pos + 1:] = smaller[:, pos:]
    return out


def shapley_exact_permutations(game: Game, workers: int = 1) -> ShapleyEstimate:
    """Exact per-player values by averaging marginals over all N! orderings.

    Each ordering contributes one marginal per player, read off the chain of
    payoffs along its growing prefix; the average over the full permutation
    group equals the subset-sum route.  Kept as a genuinely separate
    computation so the two can cross-check each other.
    """
    n = game.n_players
    if n > PERM_ENUM_MAX_PLAYERS:
        raise CapacityError(
            f"permutation enumeration supports at most {PERM_ENUM_MAX_PLAYERS} "
            f"players (got {n}); use shapley_exact_subsets or sampling"
        )
    before = game.eval_count
    table = _dense_value_table(game, workers=workers)
    empty_value = table[0]
    perms = _all_permutations(n)
    totals = np.zeros(n)
    for start in range(0, perms.shape[0], _PERM_CHUNK_ROWS):
        chunk = perms[start:start + _PERM_CHUNK_ROWS].astype(np.int64)
        prefix_masks = np.bitwise_or.accumulate(np.left_shift(1, chunk), axis=1)
        chain = table[prefix_masks]
        marginals = np.empty_like(chain)
        marginals[:, 0] = chain[:, 0] - empty_value
        marginals[:, 1:] = np.diff(chain, axis=1)
        totals += np.bincount(chunk.ravel(), weights=marginals.ravel(), minlength=n)
    phi = totals / math.factorial(n)
    return ShapleyEstimate(
        values=phi,
        method="exact-permutations",
        evals_used=game.eval_count - before,
    )
