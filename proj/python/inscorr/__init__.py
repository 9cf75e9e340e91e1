"""Open-set noisy label experiments: small-loss selection, instance correction
and mixed retraining, backed by a C++ core."""

from ._inscorr import (
    ConfigError,
    Dataset,
    InscorrError,
    Model,
    config_hash,
    correct_instance,
    drop_rate,
    generate_ood_source,
    generate_synthetic,
    init_model,
    inject_noise,
    kept_count,
    load_checkpoint_model,
    load_dataset,
    noise_count,
    resolve_config,
    run_and_record,
    run_experiment,
    select_small_loss,
)

__all__ = [
    "ConfigError",
    "Dataset",
    "InscorrError",
    "Model",
    "config_hash",
    "correct_instance",
    "drop_rate",
    "generate_ood_source",
    "generate_synthetic",
    "init_model",
    "inject_noise",
    "kept_count",
    "load_checkpoint_model",
    "load_dataset",
    "noise_count",
    "resolve_config",
    "run_and_record",
    "run_experiment",
    "select_small_loss",
]
