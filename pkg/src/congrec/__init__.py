"""Congruity-regularized matrix factorization for social recommendation."""
from .congruity import (
    StrengthFunction,
    congruity_matrix,
    cosine_user_similarity,
    count_interactions,
    pair_taxonomy,
)
from .data import Dataset, HelpfulnessEvents, IdMap, SocialGraph, SparseRatings, UserPairMatrix
from .errors import (
    CongrecError,
    ConfigurationError,
    DivergenceError,
    DuplicateRecordError,
    EmptyAfterPreprocessingError,
    ParseError,
    ValidationError,
)
from .experiment import mae, rmse, run_ablation, run_comparison, split
from .factorization import (
    ClosenessSpec,
    FactorModel,
    TrainConfig,
    build_closeness,
    gradient,
    load_model,
    objective,
    predict,
    save_model,
    train,
)
from .ingest import load_dataset, preprocess
from .stats import congruity_preference_test, friend_congruence_test, welch_t_test
from .synth import generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "ClosenessSpec",
    "ConfigurationError",
    "CongrecError",
    "Dataset",
    "DivergenceError",
    "DuplicateRecordError",
    "EmptyAfterPreprocessingError",
    "FactorModel",
    "HelpfulnessEvents",
    "IdMap",
    "ParseError",
    "SocialGraph",
    "SparseRatings",
    "StrengthFunction",
    "TrainConfig",
    "UserPairMatrix",
    "ValidationError",
    "build_closeness",
    "congruity_matrix",
    "congruity_preference_test",
    "cosine_user_similarity",
    "count_interactions",
    "friend_congruence_test",
    "generate_synthetic",
    "gradient",
    "load_dataset",
    "load_model",
    "mae",
    "objective",
    "pair_taxonomy",
    "predict",
    "preprocess",
    "rmse",
    "run_ablation",
    "run_comparison",
    "save_model",
    "split",
    "train",
    "welch_t_test",
]
