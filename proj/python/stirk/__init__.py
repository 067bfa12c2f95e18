"""Koopman-operator learning with stable parameterizations and condensed MPC."""

from ._stirk import (
    Dictionary,
    EpochRecord,
    KoopmanModel,
    SystemSpec,
    TrainConfig,
    Trajectory,
    add_noise,
    closed_loop,
    decaying_sine_inputs,
    fit_edmd,
    load_model,
    make_cartpole,
    make_vdp,
    mse_per_timestep,
    noise_levels,
    normalized_error,
    rollout_predict,
    sample_initial_conditions,
    save_model,
    simulate,
    spectral_radius,
    train,
)

__all__ = [
    "Dictionary",
    "EpochRecord",
    "KoopmanModel",
    "SystemSpec",
    "TrainConfig",
    "Trajectory",
    "add_noise",
    "closed_loop",
    "decaying_sine_inputs",
    "fit_edmd",
    "load_model",
    "make_cartpole",
    "make_vdp",
    "mse_per_timestep",
    "noise_levels",
    "normalized_error",
    "rollout_predict",
    "sample_initial_conditions",
    "save_model",
    "simulate",
    "spectral_radius",
    "train",
]
