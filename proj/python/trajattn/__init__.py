"""Trajectory-constrained visual attention for event prediction and planning.

Thin wrapper over the C++ core: experiment configs, world/dataset artifacts,
and the pipeline commands (generate, collect, train, evaluate, export).
"""

from _trajattn import (
    ExperimentConfig,
    Tensor,
    WorldSpec,
    collect,
    config_hash,
    dataset_info,
    eval_offline,
    eval_onpolicy,
    export_attention,
    gen_world,
    gradient_check,
    load_config,
    load_world,
    parse_config,
    reproduce_toy,
    save_config,
    serialize_config,
    swap_terrain,
    train,
)

__all__ = [
    "ExperimentConfig",
    "Tensor",
    "WorldSpec",
    "collect",
    "config_hash",
    "dataset_info",
    "eval_offline",
    "eval_onpolicy",
    "export_attention",
    "gen_world",
    "gradient_check",
    "load_config",
    "load_world",
    "parse_config",
    "reproduce_toy",
    "save_config",
    "serialize_config",
    "swap_terrain",
    "train",
]
