"""Entropic hetero-associative memory over quantized feature functions."""

from .memory import (DEFAULT_CAP, Hamr4D, MemParams, PairCue, QuantizedFn,
                     RecognitionResult)
from .retrieval import (Direction, EmptyColumnError, RetrievalOutcome,
                        SearchConfig, WeightedPlane, distance, eta_plane,
                        neighbor, reduce, retrieve_rs, retrieve_ss,
                        retrieve_st, sample_plane)
from .featurizer import (CentroidModel, LabeledSet, classify, featurize,
                         featurize_values, fit_centroids, load_features,
                         load_idx, save_features, save_idx, write_pgm,
                         EMNIST_BALANCED_CLASSES, MNIST_CLASSES)
from .experiments import (ClassMap, DEFAULT_CLASS_MAP, ExperimentConfig,
                          MetricsRow, Partition, PRESETS, build_pairs,
                          cross_validate, load_config, make_partitions,
                          parse_config, recognition_experiment,
                          retrieval_experiment, run_fold, summarize,
                          write_csv, CSV_HEADER)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CAP", "Hamr4D", "MemParams", "PairCue", "QuantizedFn",
    "RecognitionResult",
    "Direction", "EmptyColumnError", "RetrievalOutcome", "SearchConfig",
    "WeightedPlane", "distance", "eta_plane", "neighbor", "reduce",
    "retrieve_rs", "retrieve_ss", "retrieve_st", "sample_plane",
    "CentroidModel", "LabeledSet", "classify", "featurize",
    "featurize_values", "fit_centroids", "load_features", "load_idx",
    "save_features", "save_idx", "write_pgm", "EMNIST_BALANCED_CLASSES",
    "MNIST_CLASSES",
    "ClassMap", "DEFAULT_CLASS_MAP", "ExperimentConfig", "MetricsRow",
    "Partition", "PRESETS", "build_pairs", "cross_validate", "load_config",
    "make_partitions", "parse_config", "recognition_experiment",
    "retrieval_experiment", "run_fold", "summarize", "write_csv",
    "CSV_HEADER",
]
