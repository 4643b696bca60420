"""Structured channel pruning with a reinforcement-learned sparsity
distribution, plus the graph runtime, serialization and distillation
utilities it is built on."""

from .backend import backend_name
from .config import (REWARD_PRESETS, DistillConfig, RewardSpec, SearchConfig,
                     search_config_from_dict)
from .dependency import (ChannelMap, CoupledGroup, CoupledGroupSet,
                         DependencyEdge, DependencyGraph,
                         build_dependency_graph, check_coverage,
                         partition_coupled_groups, trace_execution,
                         trace_input)
from .dependency import build as build_dependency
from .distill import TeacherState, post_train, train_baseline, update_teacher
from .errors import (BudgetUnplaceable, ConfigError, DataError, NumericError,
                     RLPruneError, ShapeError, StateError, ValidationError)
from .graph import (INPUT_ID, LayerNode, ModelGraph, backward, count_flops,
                    count_params, deep_clone, model_hash, run_forward,
                    validate_graph)
from .losses import cross_entropy, kd_loss
from .pruning import (CalibrationSet, allocate_prune_counts, apply_pruning,
                      least_important, prune_with_action, taylor_scores)
from .search import (HISTORY_COLUMNS, PruningPolicy, ReplayBuffer,
                     compute_reward, epsilon_at, estimate_q, evaluate_accuracy,
                     run_pruning_search, run_uniform_pruning, sample_action,
                     select_action, update_policy, update_replay)
from .serial import deserialize, load, save, serialize

__version__ = "0.1.0"

__all__ = [
    "BudgetUnplaceable", "CalibrationSet", "ChannelMap", "ConfigError",
    "CoupledGroup", "CoupledGroupSet", "DataError", "DependencyEdge",
    "DependencyGraph", "DistillConfig", "HISTORY_COLUMNS", "INPUT_ID",
    "LayerNode", "ModelGraph", "NumericError", "PruningPolicy",
    "REWARD_PRESETS", "RLPruneError", "ReplayBuffer", "RewardSpec",
    "SearchConfig", "ShapeError", "StateError", "TeacherState",
    "ValidationError", "allocate_prune_counts", "apply_pruning", "backend_name",
    "backward", "build_dependency", "build_dependency_graph", "check_coverage",
    "compute_reward", "count_flops", "count_params", "cross_entropy",
    "deep_clone", "deserialize", "epsilon_at", "estimate_q",
    "evaluate_accuracy", "kd_loss", "least_important", "load", "model_hash",
    "partition_coupled_groups", "post_train", "prune_with_action",
    "run_forward", "run_pruning_search", "run_uniform_pruning", "sample_action",
    "save", "search_config_from_dict", "select_action", "serialize",
    "taylor_scores", "trace_execution", "trace_input", "train_baseline",
    "update_policy", "update_replay", "update_teacher", "validate_graph",
    "__version__",
]
