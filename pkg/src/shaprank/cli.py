"""Command-line front end: rank players, benchmark rankings, prune models.

Subcommands: ``rank``, ``oracle``, ``prune``, ``train-toy``, ``make-fig2``.
Reports are JSON documents written with sorted keys so identical inputs and
seeds reproduce byte-identical files regardless of worker count; volatile
diagnostics (wall time) go to stderr instead.  Exit codes: 0 success,
2 usage, 3 capacity/budget, 4 numerical failure, 5 I/O or format.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import (
    BudgetError,
    CapacityError,
    CharacteristicFunctionError,
    FormatError,
    InvalidBandError,
    ShapRankError,
    SingularSystemError,
    TrainingDivergedError,
)
from .exact import shapley_exact_permutations, shapley_exact_subsets
from .games import Coalition, Game, Ranking, load_game_json, make_fig2_game, save_game_json
from .oracle import build_oracle_rank, compute_oracle_subsets, score_ranking, score_report_dict
from .partial import SizeBand, shapley_partial
from .regression import RegressionConfig, shapley_regression
from .sampling import EarlyStop, SamplingConfig, shapley_sample_permutations
from .toynet import (
    load_dataset_csv,
    load_model,
    make_blobs_dataset,
    save_dataset_csv,
    save_model,
    split_dataset,
    train_toy_model,
    MaskedModel,
    accuracy_char_fn,
)

CACHE_FORMAT = "shaprank-cache-v1"


class UsageError(ShapRankError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _sha256_file(path) -> str:
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return f"sha256:{digest}"


def _sha256_text(text: str) -> str:
    return "sha256:" + hashlib.sha256(text.encode("utf-8")).hexdigest()


def _dump_json(doc, path) -> None:
    Path(path).write_text(
        json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )


def _stderr_note(doc) -> None:
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)


def _parse_fractions(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"--split expects train:val:test, got {text!r}")
    try:
        fracs = tuple(float(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"--split fractions must be numbers: {exc}") from exc
    return fracs  # type: ignore[return-value]


def _parse_k_range(text: str, n_players: int) -> list[int]:
    if ":" in text:
        lo, hi = text.split(":", 1)
        try:
            return list(range(int(lo), int(hi) + 1))
        except ValueError as exc:
            raise UsageError(f"bad --k-range {text!r}") from exc
    try:
        ks = [int(p) for p in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --k-range {text!r}") from exc
    if not ks:
        raise UsageError("--k-range selects no sizes")
    for k in ks:
        if not 1 <= k <= n_players:
            raise UsageError(f"k={k} outside [1, {n_players}]")
    return ks


# ---------------------------------------------------------------------------
# Game sources and cache persistence
# ---------------------------------------------------------------------------


def _bake_mask(masked: MaskedModel):
    """Zero the parameters of masked-off units so the spec alone reproduces
    the masked function (the zeroed units then behave as dummy players)."""
    spec = masked.spec
    removed = [i for i in range(masked.mask.n_players) if not masked.mask.contains(i)]
    if not removed:
        return spec
    layers = list(spec.layers)
    layer = layers[spec.prunable_layer]
    weights = layer.weights.copy()
    bias = layer.bias.copy()
    weights[removed] = 0.0
    bias[removed] = 0.0
    norm = layer.norm
    if norm is not None:
        norm = dataclasses.replace(
            norm,
            gamma=np.where(np.isin(np.arange(len(norm.gamma)), removed), 0.0, norm.gamma),
            beta=np.where(np.isin(np.arange(len(norm.beta)), removed), 0.0, norm.beta),
        )
    layers[spec.prunable_layer] = dataclasses.replace(
        layer, weights=weights, bias=bias, norm=norm
    )
    return dataclasses.replace(spec, layers=layers)


def _load_game_source(args) -> tuple[int, object, dict, str]:
    """Resolve --game or --model/--data into (n_players, char_fn, input
    provenance dict, cache source fingerprint)."""
    if args.game and args.model:
        raise UsageError("give either --game or --model, not both")
    if args.game:
        table = load_game_json(args.game)
        inputs = {"game": _sha256_file(args.game)}
        return table.n_players, table.char_fn, inputs, inputs["game"]
    if not args.model or not args.data:
        raise UsageError("need --game, or --model together with --data")
    masked = load_model(args.model)
    spec = _bake_mask(masked)
    if args.layer is not None:
        if not 0 <= args.layer < len(spec.layers):
            raise UsageError(f"--layer {args.layer} out of range")
        spec = spec.with_prunable_layer(args.layer)
    data = load_dataset_csv(args.data)
    fractions = _parse_fractions(args.split)
    parts = split_dataset(data, fractions, seed=args.split_seed)
    val = parts["val"]
    if val is None:
        raise UsageError(f"--split {args.split} leaves the validation part empty")
    inputs = {
        "model": _sha256_file(args.model),
        "data": _sha256_file(args.data),
        "layer": spec.prunable_layer,
        "split": args.split,
        "split_seed": args.split_seed,
    }
    source = _sha256_text(
        "|".join(
            [
                inputs["model"],
                inputs["data"],
                f"layer={spec.prunable_layer}",
                f"split={args.split}",
                f"split_seed={args.split_seed}",
            ]
        )
    )
    return spec.n_players, accuracy_char_fn(spec, val), inputs, source


def _load_cache(path, source: str, n_players: int) -> dict[int, float]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise FormatError(f"{path}: empty cache file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: corrupt cache header") from exc
    if (
        not isinstance(header, dict)
        or header.get("format") != CACHE_FORMAT
        or "source" not in header
    ):
        raise FormatError(f"{path}: corrupt cache header")
    if header["source"] != source or header.get("n_players") != n_players:
        raise FormatError(
            f"{path}: cache was built for a different game "
            f"(source {header['source']!r}, {header.get('n_players')} players)"
        )
    values: dict[int, float] = {}
    for ln, line in enumerate(lines[1:], start=2):
        try:
            mask, value = json.loads(line)
            values[int(mask)] = float(value)
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{ln}: corrupt cache entry") from exc
    return values


def _save_cache(path, source: str, game: Game) -> None:
    rows = sorted(game.cached_values().items())
    header = json.dumps(
        {"format": CACHE_FORMAT, "source": source, "n_players": game.n_players},
        sort_keys=True,
    )
    body = "\n".join(json.dumps([mask, value]) for mask, value in rows)
    Path(path).write_text(header + "\n" + body + "\n", encoding="utf-8")


def _game_with_cache(args) -> tuple[Game, dict, str]:
    n_players, char_fn, inputs, source = _load_game_source(args)
    preloaded = None
    if args.cache and Path(args.cache).exists():
        preloaded = _load_cache(args.cache, source, n_players)
    return Game(n_players, char_fn, preloaded=preloaded), inputs, source


# ---------------------------------------------------------------------------
# Estimator dispatch
# ---------------------------------------------------------------------------


def _run_method(game: Game, args):
    method = args.method
    workers = args.workers
    if method == "exact":
        est = shapley_exact_subsets(game, workers=workers)
        params = {"route": "subsets"}
    elif method == "exact-perm":
        est = shapley_exact_permutations(game, workers=workers)
        params = {"route": "permutations"}
    elif method == "partial":
        band = SizeBand(high_d=args.high_d, low_d=args.low_d)
        est = shapley_partial(game, band, renormalize=not args.raw_sum, workers=workers)
        params = {
            "high_d": args.high_d,
            "low_d": args.low_d,
            "renormalize": not args.raw_sum,
        }
    elif method == "perm":
        early = None
        if args.early_stop_window is not None or args.early_stop_eps is not None:
            if args.early_stop_window is None or args.early_stop_eps is None:
                raise UsageError(
                    "--early-stop-window and --early-stop-eps go together"
                )
            early = EarlyStop(window=args.early_stop_window, epsilon=args.early_stop_eps)
        cfg = SamplingConfig(
            n_permutations=args.perms,
            seed=args.seed,
            early_stop=early,
            antithetic=args.antithetic,
        )
        est = shapley_sample_permutations(game, cfg, workers=workers)
        params = {
            "perms": args.perms,
            "antithetic": args.antithetic,
            "early_stop": None
            if early is None
            else {"window": early.window, "epsilon": early.epsilon},
        }
    elif method == "kernel":
        cfg = RegressionConfig(
            n_samples=args.samples,
            sampler=args.sampler,
            seed=args.seed,
            ridge=args.ridge,
            enforce_efficiency=not args.no_efficiency,
            fit_intercept=args.fit_intercept,
        )
        est = shapley_regression(game, cfg, workers=workers)
        params = {
            "samples": args.samples,
            "sampler": args.sampler,
            "ridge": args.ridge,
            "enforce_efficiency": not args.no_efficiency,
            "fit_intercept": args.fit_intercept,
        }
    else:
        raise UsageError(f"unknown method {method!r}")
    return est, params


def _provenance(inputs: dict, game: Game, params: dict, est=None) -> dict:
    doc = {
        "tool": "shaprank",
        "version": __version__,
        "inputs": inputs,
        "params": params,
        "n_players": game.n_players,
        "cache_hits": game.cache_hits,
        "seed": None,
    }
    if est is not None:
        doc["seed"] = est.seed
        doc["evals_used"] = est.evals_used
    return doc


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_rank(args) -> int:
    game, inputs, source = _game_with_cache(args)
    started = time.perf_counter()
    est, params = _run_method(game, args)
    elapsed = time.perf_counter() - started
    ranking = est.ranking()
    report = {
        "report": "ranking",
        "method": est.method,
        "order": ranking.order.tolist(),
        "scores": ranking.scores.tolist(),
        "values": est.values.tolist(),
        **_provenance(inputs, game, params, est),
    }
    if est.std_err is not None:
        report["std_err"] = est.std_err[ranking.order].tolist()
    _dump_json(report, args.out)
    if args.csv:
        _write_rank_csv(args.out, ranking, est)
    if args.cache:
        _save_cache(args.cache, source, game)
    _stderr_note({"command": "rank", "out": str(args.out), "wall_time_s": elapsed})
    return 0


def _write_rank_csv(out_path, ranking: Ranking, est) -> None:
    lines = ["position,player,score" + (",std_err" if est.std_err is not None else "")]
    for pos, (player, score) in enumerate(zip(ranking.order, ranking.scores)):
        row = f"{pos},{int(player)},{float(score)!r}"
        if est.std_err is not None:
            row += f",{float(est.std_err[player])!r}"
        lines.append(row)
    Path(str(out_path) + ".csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _ranking_from_report(path) -> tuple[str, Ranking]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        order = np.array(doc["order"], dtype=np.int64)
        scores = np.array(doc["scores"], dtype=np.float64)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: not a ranking report") from exc
    return Path(path).stem, Ranking(order=order, scores=scores)


def cmd_oracle(args) -> int:
    game, inputs, source = _game_with_cache(args)
    k_range = _parse_k_range(args.k_range, game.n_players)
    started = time.perf_counter()
    oracle = compute_oracle_subsets(game, args.mode, k_range, workers=args.workers)
    oracle_rank = build_oracle_rank(oracle, strategy=args.rank_strategy)
    rows = [
        {
            "name": "oracle-rank",
            "order": oracle_rank.order.tolist(),
            **score_report_dict(args.mode, score_ranking(oracle_rank, oracle)),
        }
    ]
    for path in args.rank or []:
        name, ranking = _ranking_from_report(path)
        # importance rankings list best-to-keep first; removal benchmarks
        # judge what gets deleted first, so flip them
        oriented = ranking.reversed() if args.mode == "remove" else ranking
        rows.append(
            {
                "name": name,
                "order": oriented.order.tolist(),
                **score_report_dict(args.mode, score_ranking(oriented, oracle)),
            }
        )
    elapsed = time.perf_counter() - started
    report = {
        "report": "oracle",
        "mode": args.mode,
        "k_range": k_range,
        "oracle_subsets": {
            str(k): [list(c.members()) for c in oracle.per_k[k]] for k in oracle.k_range
        },
        "oracle_best_value": {str(k): oracle.best_value[k] for k in oracle.k_range},
        "rank_strategy": args.rank_strategy,
        "scores": rows,
        **_provenance(inputs, game, {"mode": args.mode, "k_range": k_range}),
    }
    report["evals_used"] = game.eval_count
    _dump_json(report, args.out)
    if args.csv:
        _write_oracle_csv(args.out, rows)
    if args.cache:
        _save_cache(args.cache, source, game)
    _stderr_note({"command": "oracle", "out": str(args.out), "wall_time_s": elapsed})
    return 0


def _write_oracle_csv(out_path, rows) -> None:
    lines = ["name,k,jaccard,weighted_total"]
    for row in rows:
        for k, value in sorted(row["per_k"].items(), key=lambda kv: int(kv[0])):
            lines.append(f"{row['name']},{k},{value!r},{row['weighted_total']!r}")
    Path(str(out_path) + ".csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_prune(args) -> int:
    if args.game:
        raise UsageError("prune operates on --model/--data, not --game")
    game, inputs, source = _game_with_cache(args)
    n = game.n_players
    if args.count is not None and args.fraction is not None:
        raise UsageError("give --count or --fraction, not both")
    if args.count is not None:
        count = args.count
    elif args.fraction is not None:
        count = int(round(args.fraction * n))
    else:
        raise UsageError("need --count or --fraction")
    if not 0 < count < n:
        raise UsageError(f"remove count must be in (0, {n}), got {count}")

    started = time.perf_counter()
    est, params = _run_method(game, args)
    ranking = est.ranking()
    removed = sorted(int(p) for p in ranking.order[n - count:])
    kept = Coalition.from_members(
        (i for i in range(n) if i not in removed), n
    )
    nu_before = game.evaluate_mask(game.grand_mask)
    nu_after = game.evaluate_mask(kept.bits)
    elapsed = time.perf_counter() - started

    masked = load_model(args.model)
    spec = _bake_mask(masked)
    if args.layer is not None:
        spec = spec.with_prunable_layer(args.layer)
    save_model(MaskedModel(spec=spec, mask=kept), args.out)

    summary = {
        "report": "prune",
        "method": est.method,
        "removed_players": removed,
        "kept_players": list(kept.members()),
        "nu_before": nu_before,
        "nu_after": nu_after,
        "count": count,
        **_provenance(inputs, game, params, est),
    }
    summary_path = args.summary or (str(args.out) + ".summary.json")
    _dump_json(summary, summary_path)
    if args.cache:
        _save_cache(args.cache, source, game)
    _stderr_note({"command": "prune", "out": str(args.out), "wall_time_s": elapsed})
    return 0


def cmd_train_toy(args) -> int:
    if args.data:
        data = load_dataset_csv(args.data)
        inputs = {"data": _sha256_file(args.data)}
    else:
        data = make_blobs_dataset(seed=args.data_seed)
        inputs = {"data": f"blobs(seed={args.data_seed})"}
    fractions = _parse_fractions(args.split)
    parts = split_dataset(data, fractions, seed=args.split_seed)
    train_part = parts["train"]
    if train_part is None:
        raise UsageError(f"--split {args.split} leaves the training part empty")
    hidden = [int(h) for h in args.hidden.split(",") if h]
    started = time.perf_counter()
    spec = train_toy_model(
        hidden, train_part, epochs=args.epochs, lr=args.lr, seed=args.seed
    )
    elapsed = time.perf_counter() - started
    save_model(spec, args.out)
    if args.write_data:
        save_dataset_csv(data, args.write_data)
    train_game_fn = accuracy_char_fn(spec, train_part)
    train_acc = train_game_fn((1 << spec.n_players) - 1)
    _stderr_note(
        {
            "command": "train-toy",
            "out": str(args.out),
            "train_accuracy": train_acc,
            "split": args.split,
            "inputs": inputs,
            "wall_time_s": elapsed,
        }
    )
    return 0


def cmd_make_fig2(args) -> int:
    save_game_json(make_fig2_game(), args.out)
    _stderr_note({"command": "make-fig2", "out": str(args.out)})
    return 0


# ---------------------------------------------------------------------------
# Argument wiring
# ---------------------------------------------------------------------------


def _add_game_source(p: _Parser) -> None:
    p.add_argument("--game", help="payoff-table game spec (JSON)")
    p.add_argument("--model", help="toy model file (JSON)")
    p.add_argument("--data", help="labeled dataset (CSV)")
    p.add_argument("--layer", type=int, default=None, help="prunable layer override")
    p.add_argument("--split", default="0:1:0", help="train:val:test fractions")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--cache", help="coalition-value cache file (JSON lines)")
    p.add_argument("--workers", type=int, default=1)


def _add_method(p: _Parser) -> None:
    p.add_argument(
        "--method",
        required=True,
        choices=["exact", "exact-perm", "partial", "perm", "kernel"],
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--high-d", type=int, default=1, dest="high_d")
    p.add_argument("--low-d", type=int, default=None, dest="low_d")
    p.add_argument("--raw-sum", action="store_true", dest="raw_sum")
    p.add_argument("--perms", type=int, default=100)
    p.add_argument("--early-stop-window", type=int, default=None)
    p.add_argument("--early-stop-eps", type=float, default=None)
    p.add_argument("--antithetic", action="store_true")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument(
        "--sampler",
        default="size-stratified",
        choices=["exhaustive", "size-stratified", "bernoulli-half", "permutation-prefix"],
    )
    p.add_argument("--ridge", type=float, default=1e-8)
    p.add_argument("--no-efficiency", action="store_true", dest="no_efficiency")
    p.add_argument("--fit-intercept", action="store_true", dest="fit_intercept")


def build_parser() -> _Parser:
    parser = _Parser(prog="shaprank", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_rank = sub.add_parser("rank", help="estimate player values and rank them")
    _add_game_source(p_rank)
    _add_method(p_rank)
    p_rank.add_argument("--out", required=True)
    p_rank.add_argument("--csv", action="store_true")
    p_rank.set_defaults(handler=cmd_rank)

    p_oracle = sub.add_parser("oracle", help="oracle subsets, reference rank, scores")
    _add_game_source(p_oracle)
    p_oracle.add_argument("--mode", required=True, choices=["keep", "remove"])
    p_oracle.add_argument("--k-range", required=True, dest="k_range")
    p_oracle.add_argument(
        "--rank", action="append", help="ranking report to score (repeatable)"
    )
    p_oracle.add_argument(
        "--rank-strategy", default="auto", choices=["auto", "optimal", "greedy"]
    )
    p_oracle.add_argument("--out", required=True)
    p_oracle.add_argument("--csv", action="store_true")
    p_oracle.set_defaults(handler=cmd_oracle)

    p_prune = sub.add_parser("prune", help="mask the least important units")
    _add_game_source(p_prune)
    _add_method(p_prune)
    p_prune.add_argument("--count", type=int, default=None)
    p_prune.add_argument("--fraction", type=float, default=None)
    p_prune.add_argument("--out", required=True)
    p_prune.add_argument("--summary", default=None)
    p_prune.set_defaults(handler=cmd_prune)

    p_train = sub.add_parser("train-toy", help="train a small dense fixture model")
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--data", help="CSV dataset; omit for bundled blobs")
    p_train.add_argument("--data-seed", type=int, default=0)
    p_train.add_argument("--hidden", default="16")
    p_train.add_argument("--epochs", type=int, default=200)
    p_train.add_argument("--lr", type=float, default=0.1)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--split", default="1:0:0")
    p_train.add_argument("--split-seed", type=int, default=0)
    p_train.add_argument("--write-data", default=None)
    p_train.set_defaults(handler=cmd_train_toy)

    p_fig2 = sub.add_parser("make-fig2", help="write the bundled 3-player demo game")
    p_fig2.add_argument("--out", required=True)
    p_fig2.set_defaults(handler=cmd_make_fig2)

    return parser


_EXIT_CODES: list[tuple[type, int]] = [
    (UsageError, 2),
    (InvalidBandError, 2),
    (ValueError, 2),
    (CapacityError, 3),
    (BudgetError, 3),
    (SingularSystemError, 4),
    (TrainingDivergedError, 4),
    (CharacteristicFunctionError, 4),
    (np.linalg.LinAlgError, 4),
    (FormatError, 5),
    (OSError, 5),
]


def _exit_code_for(exc: BaseException) -> int:
    for klass, code in _EXIT_CODES:
        if isinstance(exc, klass):
            return code
    return 1


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except Exception as exc:  # noqa: BLE001 - single funnel to structured stderr
        code = _exit_code_for(exc)
        print(
            json.dumps(
                {
                    "error": type(exc).__name__,
                    "message": str(exc),
                    "exit_code": code,
                },
                sort_keys=True,
            ),
            file=sys.stderr,
        )
        return code


if __name__ == "__main__":
    sys.exit(main())
