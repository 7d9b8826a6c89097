"""End-to-end pipeline wiring shared by the command line and the test harness.

Builds the dataset, the stratified split, the Dirichlet client shards with
optional per-client feature bias, and the template model, all from one
:class:`fcu.config.RunConfig`.  The per-client bias is what makes the
departing client's contribution *visible*: the target's shard is shifted
partly along the class axis (so some of its samples sit on the wrong side of
the clean decision boundary and can only be classified right by memorizing
them) and partly along a client-specific orthogonal marker direction.  Other
clients receive mild markers only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fcu import data, metrics, nn, streams
from fcu.config import ConfigError, RunConfig
from fcu.data import Dataset
from fcu.federation import ClientState, FederationConfig, dirichlet_partition

TARGET_AXIS_WEIGHT = 0.6     # target bias component along the class axis
OTHER_AXIS_WEIGHT = 0.15     # non-target clients get a slight alternating nudge
MARKER_WEIGHT = 1.2          # client-identity component, orthogonal to the axis


@dataclass
class Experiment:
    cfg: RunConfig
    template: nn.NetworkModel  # architecture + the seeded initialization
    train: Dataset
    val: Dataset
    test: Dataset
    clients: list[ClientState]

    @property
    def fed_cfg(self) -> FederationConfig:
        return self.cfg.federation

    @property
    def target_client(self) -> int:
        return self.cfg.target_client

    @property
    def forget_data(self) -> Dataset:
        return self.clients[self.cfg.target_client].dataset

    def retain_data(self) -> Dataset:
        """Union of the non-target shards (a fresh dataset, fresh counter)."""
        keep = [c.dataset for c in self.clients if c.client_id != self.cfg.target_client]
        return Dataset(
            np.vstack([d.features for d in keep]),
            np.concatenate([d.labels for d in keep]),
            keep[0].n_classes,
            provenance="retained",
        )

    def initial_params(self) -> nn.ParameterSet:
        return self.template.params.clone()


def class_axis(ds: Dataset) -> np.ndarray:
    """Unit vector from the largest class's mean to the second largest's."""
    counts = ds.class_histogram()
    first, second = np.argsort(counts)[::-1][:2]
    mu_a = ds.features[ds.labels == first].mean(axis=0)
    mu_b = ds.features[ds.labels == second].mean(axis=0)
    diff = mu_b - mu_a
    norm = np.linalg.norm(diff)
    if norm == 0:
        raise ValueError("class means coincide; no axis to bias along")
    return diff / norm


def client_bias_vectors(
    n_features: int, n_clients: int, scale: float, axis: np.ndarray, target: int
) -> list[np.ndarray]:
    """Deterministic per-client shift vectors; zero scale disables all of them."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    vecs = []
    taken = [axis]
    # walk the basis from the top: high dimensions carry no class structure,
    # so each client's identity direction stays decoupled from the boundary
    basis_cursor = n_features - 1
    for k in range(n_clients):
        marker = None
        while marker is None:
            if basis_cursor < 0:
                raise ValueError(
                    "not enough feature dimensions for distinct client markers; "
                    f"need roughly {n_clients + 1}, have {n_features}"
                )
            residual = np.zeros(n_features)
            residual[basis_cursor] = 1.0
            basis_cursor -= 1
            for prev in taken:
                residual -= (residual @ prev) * prev
            if np.linalg.norm(residual) > 1e-6:
                marker = residual / np.linalg.norm(residual)
                taken.append(marker)
        if k == target:
            along = TARGET_AXIS_WEIGHT
        else:
            along = OTHER_AXIS_WEIGHT * (1.0 if k % 2 == 0 else -1.0)
        vecs.append(scale * (along * axis + MARKER_WEIGHT * marker))
    return vecs


def build_model(cfg: RunConfig) -> nn.NetworkModel:
    if cfg.model.conv_channels > 0:
        side = int(round(np.sqrt(cfg.data.features)))
        if side * side != cfg.data.features:
            raise ConfigError(
                f"model.conv_channels: features={cfg.data.features} is not a square image"
            )
        return nn.build_conv_model(
            (1, side, side),
            cfg.model.conv_channels,
            (cfg.model.conv_kernel, cfg.model.conv_kernel),
            cfg.model.hidden,
            cfg.data.classes,
            seed=cfg.seed,
        )
    return nn.build_dense_model(cfg.data.features, cfg.model.hidden, cfg.data.classes, seed=cfg.seed)


def build_experiment(cfg: RunConfig) -> Experiment:
    if cfg.data.source == "synthetic":
        full = data.generate_synthetic(
            cfg.data.synthetic_spec(), seed=[cfg.seed, streams.DATA]
        )
    else:
        try:
            full = data.load_csv(cfg.data.source)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"data.source: {exc}") from exc
        if full.n_classes != cfg.data.classes or full.n_features != cfg.data.features:
            raise ConfigError(
                f"data.source: file has {full.n_classes} classes x {full.n_features} features, "
                f"config says {cfg.data.classes} x {cfg.data.features}"
            )

    train, val, test = data.split_712(full, seed=[cfg.seed, streams.SPLIT])
    shards = dirichlet_partition(
        train,
        cfg.federation.n_clients,
        cfg.federation.dirichlet_alpha,
        seed=[cfg.seed, streams.PARTITION],
    )
    if cfg.data.client_bias_scale > 0:
        axis = class_axis(train)
        vecs = client_bias_vectors(
            train.n_features,
            cfg.federation.n_clients,
            cfg.data.client_bias_scale,
            axis,
            cfg.target_client,
        )
        shards = [data.with_feature_bias(s, v) for s, v in zip(shards, vecs)]
    clients = [
        ClientState(k, shard, is_target=(k == cfg.target_client))
        for k, shard in enumerate(shards)
    ]
    return Experiment(
        cfg=cfg,
        template=build_model(cfg),
        train=train,
        val=val,
        test=test,
        clients=clients,
    )


def evaluate(
    model: nn.NetworkModel,
    exp: Experiment,
    method: str,
    runtime_seconds: float,
    gap: float | None = None,
) -> metrics.MetricsReport:
    """Score one method against the experiment's test/retain/forget sets."""
    acc = metrics.accuracy(model, exp.test)
    return metrics.MetricsReport(
        method=method,
        seed=exp.cfg.seed,
        accuracy=acc,
        f1=metrics.f1(model, exp.test),
        error_t=100.0 - acc,
        error_r=metrics.error(model, exp.retain_data()),
        error_f=metrics.error(model, exp.forget_data),
        efficacy_gap=gap,
        runtime_seconds=runtime_seconds,
        config_digest=exp.cfg.digest(),
    )
