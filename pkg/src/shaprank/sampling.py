"""Monte-Carlo Shapley estimation over random player orderings.

Each sampled ordering is walked front to back, evaluating the payoff of the
growing prefix; consecutive differences are the players' marginal
contributions for that ordering, so one ordering costs at most N+1 distinct
coalition evaluations.  Averaging over orderings gives an unbiased estimate,
and the per-ordering marginals always telescope to the full target quantity,
so the estimate distributes the target exactly at any sample count.

Orderings are drawn from a counter-based generator keyed on
``(seed, ordering index)``: the stream is identical no matter how many
workers evaluate it, which keeps results bit-reproducible under parallelism.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .games import Game, ShapleyEstimate

# Coalitions are warmed in fixed-size blocks of orderings so that the set of
# evaluations performed never depends on the worker count.
_BLOCK = 32


@dataclass(frozen=True)
class EarlyStop:
    """Stop once the running means stay inside an ``epsilon`` corridor.

    After each ordering the per-player running means are recorded; when the
    spread (max minus min) of every player's mean over the last ``window``
    orderings drops below ``epsilon``, sampling halts.
    """

    window: int
    epsilon: float

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("early-stop window must be >= 2")
        if not self.epsilon > 0:
            raise ValueError("early-stop epsilon must be > 0")


@dataclass(frozen=True)
class SamplingConfig:
    n_permutations: int
    seed: int = 0
    early_stop: Optional[EarlyStop] = None
    antithetic: bool = False

    def __post_init__(self):
        if self.n_permutations < 1:
            raise ValueError("n_permutations must be >= 1")


def permutation_at(seed: int, index: int, n_players: int) -> np.ndarray:
    """The ``index``-th ordering of the stream for ``seed``; pure function."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, index], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return rng.permutation(n_players)


def _stream(cfg: SamplingConfig, n_players: int) -> Callable[[int], np.ndarray]:
    if not cfg.antithetic:
        return lambda j: permutation_at(cfg.seed, j, n_players)

    def paired(j: int) -> np.ndarray:
        base = permutation_at(cfg.seed, j // 2, n_players)
        return base if j % 2 == 0 else base[::-1]

    return paired


def _prefix_masks(perm: np.ndarray) -> list[int]:
    masks = []
    mask = 0
    for p in perm[:-1]:
        mask |= 1 << int(p)
        masks.append(mask)
    return masks


def shapley_sample_permutations(
    game: Game,
    cfg: SamplingConfig,
    workers: int = 1,
    permutation_source: Optional[Callable[[int], np.ndarray]] = None,
) -> ShapleyEstimate:
    """Average marginal contributions over sampled orderings.

    ``std_err`` is the per-player sample standard deviation of the marginals
    divided by sqrt of the realized ordering count.  ``permutation_source``
    overrides the seeded stream entirely (used by tests to force an
    exhaustive pass over all orderings); it takes the ordering index.
    """
    n = game.n_players
    source = permutation_source or _stream(cfg, n)
    empty_value = game.evaluate_mask(0)
    full_value = game.evaluate_mask(game.grand_mask)
    before = game.eval_count

    sums = np.zeros(n)
    sq_sums = np.zeros(n)
    stopper = cfg.early_stop
    history: deque[np.ndarray] = deque(maxlen=stopper.window if stopper else 1)
    realized = 0
    stopped = False

    for block_start in range(0, cfg.n_permutations, _BLOCK):
        block = [
            source(j)
            for j in range(block_start, min(block_start + _BLOCK, cfg.n_permutations))
        ]
        needed = [m for perm in block for m in _prefix_masks(perm)]
        game.evaluate_masks(needed, workers=workers)

        for perm in block:
            prev = empty_value
            mask = 0
            marginals = np.empty(n)
            for p in perm[:-1]:
                mask |= 1 << int(p)
                cur = game.evaluate_mask(mask)
                marginals[int(p)] = cur - prev
                prev = cur
            marginals[int(perm[-1])] = full_value - prev
            sums += marginals
            sq_sums += marginals * marginals
            realized += 1

            if stopper:
                history.append(sums / realized)
                if len(history) == stopper.window:
                    stacked = np.stack(history)
                    spread = stacked.max(axis=0) - stacked.min(axis=0)
                    if spread.max() < stopper.epsilon:
                        stopped = True
                        break
        if stopped:
            break

    values = sums / realized
    if realized > 1:
        variance = np.maximum(sq_sums - realized * values**2, 0.0) / (realized - 1)
        std_err = np.sqrt(variance / realized)
    else:
        std_err = np.zeros(n)
    return ShapleyEstimate(
        values=values,
        method=f"permutation-sampling(S={realized})",
        std_err=std_err,
        evals_used=game.eval_count - before,
        seed=cfg.seed,
    )
