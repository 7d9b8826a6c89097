"""Federated learning with client unlearning.

Simulates FedAvg training over Dirichlet-partitioned clients, erases one
client's contribution by contrastive feature unlearning with periodic
frequency-domain memory preservation, and evaluates the result against
retraining-from-scratch and fine-tuning baselines.
"""

__version__ = "0.1.0"

from fcu.config import ConfigError, RunConfig, load_config
from fcu.data import Dataset, SyntheticSpec, generate_synthetic, split_712
from fcu.federation import (
    ClientState,
    FederationConfig,
    dirichlet_partition,
    fedavg_aggregate,
    fl_train,
    post_train,
    retrain_baseline,
)
from fcu.metrics import MetricsReport, efficacy_gap
from fcu.nn import NetworkModel, ParameterSet, build_conv_model, build_dense_model
from fcu.spectral import FrequencyMask, build_mask, fgmp_apply, fgmp_blend
from fcu.unlearn import UnlearnConfig, local_unlearn, mcu_loss, mcu_loss_grad

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "Dataset",
    "SyntheticSpec",
    "generate_synthetic",
    "split_712",
    "ClientState",
    "FederationConfig",
    "dirichlet_partition",
    "fedavg_aggregate",
    "fl_train",
    "post_train",
    "retrain_baseline",
    "MetricsReport",
    "efficacy_gap",
    "NetworkModel",
    "ParameterSet",
    "build_conv_model",
    "build_dense_model",
    "FrequencyMask",
    "build_mask",
    "fgmp_apply",
    "fgmp_blend",
    "UnlearnConfig",
    "local_unlearn",
    "mcu_loss",
    "mcu_loss_grad",
]
