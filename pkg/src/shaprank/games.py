"""Players, coalitions, characteristic functions, and the shared value cache.

A game is a pair (set of players, characteristic function): the function maps
any subset of players to a real payoff.  Every estimator in this package
consumes payoffs exclusively through :class:`Game`, whose memoizing cache
guarantees that each distinct coalition is evaluated at most once, even when
several worker threads request it concurrently.

Coalitions are represented as bitmasks (bit ``i`` set means player ``i`` is a
member), which caps the number of players at 64.
"""

from __future__ import annotations

import itertools
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import CharacteristicFunctionError, FormatError

MAX_PLAYERS = 64


def full_mask(n_players: int) -> int:
    return (1 << n_players) - 1


def mask_from_members(members: Iterable[int], n_players: int) -> int:
    mask = 0
    for i in members:
        if not 0 <= i < n_players:
            raise ValueError(f"player index {i} out of range for {n_players} players")
        mask |= 1 << i
    return mask


def popcount_table(n_players: int) -> np.ndarray:
    """Subset sizes for every bitmask in ``[0, 2**n_players)``."""
    pc = np.zeros(1 << n_players, dtype=np.uint8)
    step = 1
    while step < (1 << n_players):
        pc[step:2 * step] = pc[:step] + 1
        step *= 2
    return pc


def masks_of_size(n_players: int, size: int) -> Iterable[int]:
    """All bitmasks over ``n_players`` with exactly ``size`` bits set."""
    for combo in itertools.combinations(range(n_players), size):
        yield sum(1 << i for i in combo)


@dataclass(frozen=True)
class Coalition:
    """A subset of the players of an ``n_players``-player game.

    ``bits`` is the membership bitmask; only the low ``n_players`` bits may
    be set.
    """

    bits: int
    n_players: int

    def __post_init__(self):
        if not 0 <= self.n_players <= MAX_PLAYERS:
            raise ValueError(f"n_players must be in [0, {MAX_PLAYERS}]")
        if self.bits < 0 or self.bits >> self.n_players:
            raise ValueError(
                f"bitmask {self.bits:#x} has bits above player {self.n_players - 1}"
            )

    @classmethod
    def from_members(cls, members: Iterable[int], n_players: int) -> "Coalition":
        return cls(mask_from_members(members, n_players), n_players)

    @classmethod
    def empty(cls, n_players: int) -> "Coalition":
        return cls(0, n_players)

    @classmethod
    def grand(cls, n_players: int) -> "Coalition":
        return cls(full_mask(n_players), n_players)

    @property
    def size(self) -> int:
        return self.bits.bit_count()

    def members(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n_players) if (self.bits >> i) & 1)

    def contains(self, player: int) -> bool:
        return bool((self.bits >> player) & 1)

    def complement(self) -> "Coalition":
        return Coalition(self.bits ^ full_mask(self.n_players), self.n_players)

    def union(self, other: "Coalition") -> "Coalition":
        if other.n_players != self.n_players:
            raise ValueError("coalitions belong to games of different sizes")
        return Coalition(self.bits | other.bits, self.n_players)

    def add(self, player: int) -> "Coalition":
        return Coalition(self.bits | (1 << player), self.n_players)

    def remove(self, player: int) -> "Coalition":
        return Coalition(self.bits & ~(1 << player), self.n_players)


class Game:
    """An ``n_players`` coalition game with a memoized characteristic function.

    ``char_fn`` maps a bitmask (int) to a float payoff.  The payoffs of the
    grand coalition and of the empty coalition are computed eagerly so that
    ``target_quantity`` is always available.

    The cache provides atomic read-or-compute semantics: concurrent requests
    for the same uncached coalition block all callers but one, and the single
    computed value is shared.  ``eval_count`` counts distinct characteristic
    function invocations; ``cache_hits`` counts lookups served from memory.
    """

    def __init__(
        self,
        n_players: int,
        char_fn: Callable[[int], float],
        preloaded: Optional[Mapping[int, float]] = None,
    ):
        if not 1 <= n_players <= MAX_PLAYERS:
            raise ValueError(f"n_players must be in [1, {MAX_PLAYERS}]")
        self.n_players = n_players
        self.char_fn = char_fn
        self.eval_count = 0
        self.cache_hits = 0
        self._cache: dict[int, float] = {}
        self._lock = threading.Lock()
        self._inflight: dict[int, threading.Event] = {}
        self._failures: dict[int, BaseException] = {}
        if preloaded:
            for mask, value in preloaded.items():
                if mask < 0 or mask >> n_players:
                    raise ValueError(f"preloaded mask {mask} out of range")
                self._cache[int(mask)] = float(value)
        self.evaluate_mask(0)
        self.evaluate_mask(full_mask(n_players))

    @property
    def grand_mask(self) -> int:
        return full_mask(self.n_players)

    def evaluate(self, coalition: Coalition) -> float:
        if coalition.n_players != self.n_players:
            raise ValueError(
                f"coalition is over {coalition.n_players} players, "
                f"game has {self.n_players}"
            )
        return self.evaluate_mask(coalition.bits)

    def evaluate_mask(self, mask: int) -> float:
        mask = int(mask)
        with self._lock:
            if mask in self._cache:
                self.cache_hits += 1
                return self._cache[mask]
            event = self._inflight.get(mask)
            if event is None:
                event = threading.Event()
                self._inflight[mask] = event
                owner = True
            else:
                owner = False
        if not owner:
            event.wait()
            with self._lock:
                if mask in self._cache:
                    self.cache_hits += 1
                    return self._cache[mask]
                failure = self._failures[mask]
            raise CharacteristicFunctionError(
                f"characteristic function failed for coalition {mask:#x}",
                coalition=Coalition(mask, self.n_players),
            ) from failure
        try:
            value = float(self.char_fn(mask))
        except BaseException as exc:
            with self._lock:
                self._failures[mask] = exc
                del self._inflight[mask]
            event.set()
            raise CharacteristicFunctionError(
                f"characteristic function failed for coalition {mask:#x}",
                coalition=Coalition(mask, self.n_players),
            ) from exc
        with self._lock:
            self._cache[mask] = value
            self.eval_count += 1
            del self._inflight[mask]
        event.set()
        return value

    def evaluate_masks(self, masks: Sequence[int], workers: int = 1) -> np.ndarray:
        """Evaluate many coalitions, optionally with a thread pool.

        Results are ordered like ``masks`` regardless of worker count, and so
        are ``eval_count``/``cache_hits``: every uncached distinct mask costs
        one evaluation, then each requested mask registers one cache hit.
        """
        distinct = list(dict.fromkeys(int(m) for m in masks))
        uncached = [m for m in distinct if not self.is_cached(m)]
        if workers > 1 and len(uncached) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(self.evaluate_mask, uncached))
        else:
            for mask in uncached:
                self.evaluate_mask(mask)
        return np.array([self.evaluate_mask(m) for m in masks], dtype=np.float64)

    def target_quantity(self) -> float:
        """Payoff of the grand coalition minus the payoff of the empty one."""
        return self.evaluate_mask(self.grand_mask) - self.evaluate_mask(0)

    def cached_values(self) -> dict[int, float]:
        with self._lock:
            return dict(self._cache)

    def is_cached(self, mask: int) -> bool:
        with self._lock:
            return int(mask) in self._cache


class TableGame(Game):
    """A game whose characteristic function is a dense payoff table.

    ``values[mask]`` is the payoff of the coalition with that bitmask, so the
    table has exactly ``2**n_players`` entries.
    """

    def __init__(self, values: Sequence[float]):
        values = np.asarray(values, dtype=np.float64)
        n_players = int(values.size).bit_length() - 1
        if values.ndim != 1 or values.size != (1 << n_players) or n_players < 1:
            raise ValueError(
                f"table length {values.size} is not 2**n for n >= 1 players"
            )
        self.values = values
        super().__init__(n_players, lambda mask: values[mask])

    def to_json_dict(self) -> dict:
        return {
            "n_players": self.n_players,
            "values": {str(m): float(v) for m, v in enumerate(self.values)},
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TableGame":
        if not isinstance(doc, dict):
            raise FormatError("game spec must be a JSON object")
        try:
            n_players = int(doc["n_players"])
            raw = doc["values"]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError("game spec needs integer 'n_players' and 'values'") from exc
        if not 1 <= n_players <= MAX_PLAYERS:
            raise FormatError(f"n_players must be in [1, {MAX_PLAYERS}]")
        if not isinstance(raw, dict):
            raise FormatError("'values' must map bitmask strings to payoffs")
        size = 1 << n_players
        expected = {str(m) for m in range(size)}
        present = set(raw)
        if present != expected:
            missing = sorted(expected - present)[:5]
            extra = sorted(present - expected)[:5]
            raise FormatError(
                f"game spec must contain exactly the {size} coalition keys; "
                f"missing {missing}, unexpected {extra}"
            )
        table = np.empty(size, dtype=np.float64)
        for key, value in raw.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise FormatError(f"payoff for coalition {key} is not a number")
            table[int(key)] = float(value)
        if not np.all(np.isfinite(table)):
            raise FormatError("game spec contains non-finite payoffs")
        return cls(table)


def save_game_json(game: TableGame, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(game.to_json_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_game_json(path) -> TableGame:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    return TableGame.from_json_dict(doc)


def make_fig2_game() -> TableGame:
    """Bundled 3-player demo game with hand-checkable attribution values.

    Payoffs are percentages; the exact per-player values are (25, 25, 30), so
    player 2 (0-based) contributes most, while single-player-removal scores
    invert the picture.  Used throughout the tests and available from the CLI
    as ``make-fig2``.
    """
    table = np.empty(8, dtype=np.float64)
    table[0b000] = 10.0
    table[0b001] = 55.0
    table[0b010] = 40.0
    table[0b011] = 55.0
    table[0b100] = 35.0
    table[0b101] = 70.0
    table[0b110] = 85.0
    table[0b111] = 90.0
    return TableGame(table)


@dataclass
class ShapleyEstimate:
    """Per-player attribution values plus bookkeeping about how they were made.

    ``values[i]`` is the estimated contribution of player ``i``.  ``std_err``
    is populated by sampling estimators only.  ``evals_used`` counts the new
    distinct characteristic-function evaluations the estimator triggered.
    """

    values: np.ndarray
    method: str
    std_err: Optional[np.ndarray] = None
    evals_used: int = 0
    seed: Optional[int] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("values must be a vector")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("estimate contains non-finite values")
        if self.std_err is not None:
            self.std_err = np.asarray(self.std_err, dtype=np.float64)
            if self.std_err.shape != self.values.shape:
                raise ValueError("std_err must align with values")
            if np.any(self.std_err < 0):
                raise ValueError("std_err must be non-negative")

    @property
    def n_players(self) -> int:
        return int(self.values.size)

    def ranking(self) -> "Ranking":
        return Ranking.from_values(self.values)


@dataclass
class Ranking:
    """A total order of players, most important first.

    ``scores[j]`` belongs to player ``order[j]`` and is non-increasing in
    ``j``.  Ties in the underlying values are broken by ascending player
    index so rankings are reproducible across platforms.
    """

    order: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self.order = np.asarray(self.order, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        n = self.order.size
        if sorted(self.order.tolist()) != list(range(n)):
            raise ValueError("order must be a permutation of 0..N-1")
        if self.scores.shape != self.order.shape:
            raise ValueError("scores must align with order")
        if np.any(np.diff(self.scores) > 0):
            raise ValueError("scores must be non-increasing along the order")

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "Ranking":
        values = np.asarray(values, dtype=np.float64)
        order = np.lexsort((np.arange(values.size), -values))
        return cls(order=order, scores=values[order])

    @property
    def n_players(self) -> int:
        return int(self.order.size)

    def top(self, k: int) -> Coalition:
        """The coalition formed by the first ``k`` positions."""
        return Coalition.from_members(self.order[:k].tolist(), self.n_players)

    def reversed(self) -> "Ranking":
        """Same order read back to front, with scores negated to stay sorted."""
        return Ranking(order=self.order[::-1].copy(), scores=-self.scores[::-1])
