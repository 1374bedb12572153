"""Experiment orchestration: data, configuration, training, scoring."""

from .config import ExperimentConfig, Paths, config_from_mapping, load_config
from .data import (AudioStore, ProtocolEntry, generate_toy_dataset, held_out_noise,
                   parse_protocol, prepare_segment, toy_utterance, write_protocol)
from .train import (Inputs, MatrixRow, MatrixTable, SeedRun, TrainResult, evaluate_runs,
                    load_model, run_experiment_matrix, score, score_entries, train,
                    train_seed)

__all__ = [
    "AudioStore", "ExperimentConfig", "Inputs", "MatrixRow", "MatrixTable", "Paths",
    "ProtocolEntry", "SeedRun", "TrainResult", "config_from_mapping", "evaluate_runs",
    "generate_toy_dataset", "held_out_noise", "load_config", "load_model", "parse_protocol",
    "prepare_segment", "run_experiment_matrix", "score", "score_entries", "toy_utterance",
    "train", "train_seed", "write_protocol",
]
