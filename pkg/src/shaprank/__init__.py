"""Shapley-value attribution over coalition games, with estimators at every
cost point (exact enumeration, size-banded sums, permutation sampling,
kernel-weighted regression), a brute-force oracle benchmark for rankings,
and a maskable toy network that turns layers into games."""

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
from .games import (
    Coalition,
    Game,
    Ranking,
    ShapleyEstimate,
    TableGame,
    load_game_json,
    make_fig2_game,
    save_game_json,
)
from .oracle import (
    OracleSubsets,
    RankScore,
    build_oracle_rank,
    compute_oracle_subsets,
    jaccard,
    score_ranking,
)
from .partial import SizeBand, leave_one_out, shapley_partial
from .regression import (
    KernelSample,
    RegressionConfig,
    draw_kernel_samples,
    shapley_kernel_weight,
    shapley_regression,
)
from .sampling import EarlyStop, SamplingConfig, shapley_sample_permutations
from .toynet import (
    LabeledDataset,
    Layer,
    MaskedModel,
    ModelSpec,
    accuracy_char_fn,
    forward,
    load_model,
    make_accuracy_game,
    make_blobs_dataset,
    save_model,
    train_toy_model,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetError",
    "CapacityError",
    "CharacteristicFunctionError",
    "Coalition",
    "EarlyStop",
    "FormatError",
    "Game",
    "InvalidBandError",
    "KernelSample",
    "LabeledDataset",
    "Layer",
    "MaskedModel",
    "ModelSpec",
    "OracleSubsets",
    "RankScore",
    "Ranking",
    "RegressionConfig",
    "SamplingConfig",
    "ShapRankError",
    "ShapleyEstimate",
    "SingularSystemError",
    "SizeBand",
    "TableGame",
    "TrainingDivergedError",
    "accuracy_char_fn",
    "build_oracle_rank",
    "compute_oracle_subsets",
    "draw_kernel_samples",
    "forward",
    "jaccard",
    "leave_one_out",
    "load_game_json",
    "load_model",
    "make_accuracy_game",
    "make_blobs_dataset",
    "make_fig2_game",
    "save_game_json",
    "save_model",
    "score_ranking",
    "shapley_exact_permutations",
    "shapley_exact_subsets",
    "shapley_kernel_weight",
    "shapley_partial",
    "shapley_regression",
    "shapley_sample_permutations",
    "train_toy_model",
]
