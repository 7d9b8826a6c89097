"""FedAvg simulation over client shards, with client-exclusion auditing.

One round: every participating client copies the global parameters, runs a
fixed number of Adam steps on its own shard, and the server aggregates the
results weighted by shard size.  Batch order is drawn from a generator seeded
by (seed, stream, round, client), so results are identical however many
worker threads run the clients.  When a client is excluded, its shard's
access counter is asserted unchanged across the whole phase; exclusion is
enforced and audited, not assumed.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from fcu import nn, streams
from fcu.data import Dataset, batch_stream


class ExclusionError(RuntimeError):
    """An excluded client's data was read during a training phase."""


@dataclass
class FederationConfig:
    n_clients: int = 5
    rounds: int = 30
    local_iterations: int = 20
    learning_rate: float = 1e-4
    batch_size: int = 64
    dirichlet_alpha: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_clients < 2:
            raise ValueError("n_clients: need at least 2 clients")
        if self.rounds < 1:
            raise ValueError("rounds: must be at least 1")
        if self.local_iterations < 1:
            raise ValueError("local_iterations: must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate: must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size: must be positive")
        if not self.dirichlet_alpha > 0:
            raise ValueError("dirichlet_alpha: must be positive")


@dataclass
class ClientState:
    client_id: int
    dataset: Dataset
    is_target: bool = False
    optimizer: nn.AdamState | None = None

    @property
    def n(self) -> int:
        return len(self.dataset)


@dataclass
class GlobalModel:
    round_index: int
    params: nn.ParameterSet


@dataclass
class TrainResult:
    model: nn.NetworkModel
    global_model: GlobalModel
    per_round: list[dict] = field(default_factory=list)
    elapsed_seconds: float = 0.0


def max_workers(n_tasks: int) -> int:
    """Worker-thread cap: min(tasks, cpus), overridable via FCU_THREADS."""
    env = os.environ.get("FCU_THREADS", "")
    if env:
        try:
            cap = int(env)
        except ValueError as exc:
            raise ValueError(f"FCU_THREADS must be an integer, got {env!r}") from exc
        if cap < 1:
            raise ValueError("FCU_THREADS must be at least 1")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(n_tasks, cap))


def dirichlet_partition(ds: Dataset, n_clients: int, alpha: float, seed) -> list[Dataset]:
    """Label-skewed shards: per class, Dirichlet(alpha) proportions over clients.

    Every shard ends up non-empty; if sampling leaves one empty, the largest
    shard donates items deterministically (ties broken by lowest index).
    """
    if n_clients < 1:
        raise ValueError("n_clients must be positive")
    if len(ds) < n_clients:
        raise ValueError(f"cannot split {len(ds)} items across {n_clients} clients")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(n_clients)]
    for c in range(ds.n_classes):
        idx = np.flatnonzero(ds.labels == c)
        if idx.size == 0:
            continue
        rng.shuffle(idx)
        props = rng.dirichlet(alpha * np.ones(n_clients))
        cuts = (np.cumsum(props)[:-1] * idx.size).astype(int)
        for k, part in enumerate(np.split(idx, cuts)):
            buckets[k].extend(part.tolist())
    while any(len(b) == 0 for b in buckets):
        sizes = [len(b) for b in buckets]
        donor = int(np.argmax(sizes))
        taker = sizes.index(0)
        buckets[taker].append(buckets[donor].pop())
    return [ds.subset(np.sort(b), provenance=f"{ds.provenance}/client{k}") for k, b in enumerate(buckets)]


def fedavg_aggregate(
    param_sets: list[nn.ParameterSet],
    sizes: list[int],
    exclude: int | None = None,
) -> nn.ParameterSet:
    """Size-weighted average; `exclude` drops one list position entirely.

    Each element is summed over clients in ascending value order, which makes
    the result bit-identical under any permutation of the inputs.
    """
    if len(param_sets) != len(sizes) or not param_sets:
        raise ValueError("need matching, non-empty parameter and size lists")
    if any(s <= 0 for s in sizes):
        raise ValueError("client sizes must be positive")
    if exclude is not None and not 0 <= exclude < len(param_sets):
        raise ValueError(f"exclude index {exclude} out of range")
    keep = [i for i in range(len(param_sets)) if i != exclude]
    if not keep:
        raise ValueError("cannot aggregate zero clients")
    base = param_sets[keep[0]]
    for i in keep[1:]:
        base.require_congruent(param_sets[i], "fedavg_aggregate")
    total = sum(sizes[i] for i in keep)
    weights = {i: sizes[i] / total for i in keep}
    entries = {}
    for name in base.names:
        stacked = np.stack([weights[i] * param_sets[i][name] for i in keep])
        entries[name] = np.sort(stacked, axis=0).sum(axis=0)
    out = nn.ParameterSet(entries, base.meta)
    out.require_finite("fedavg_aggregate")
    return out


def local_train(
    template: nn.NetworkModel,
    start: nn.ParameterSet,
    client: ClientState,
    cfg: FederationConfig,
    round_index: int,
    stream_tag: int,
) -> tuple[nn.ParameterSet, float]:
    """One client's local pass: `local_iterations` Adam steps from `start`."""
    model = template.with_params(start.clone())
    state = nn.AdamState.for_params(model.params, lr=cfg.learning_rate)
    rng = np.random.default_rng([cfg.seed, stream_tag, round_index, client.client_id])
    stream = batch_stream(client.dataset, cfg.batch_size, rng)
    losses = []
    for _ in range(cfg.local_iterations):
        x, y = next(stream)
        out = nn.forward(model, x, train=True)
        loss, grad_logits = nn.cross_entropy(out.logits, y)
        grads = nn.backward(model, grad_logits)
        nn.adam_step(model.params, grads, state)
        losses.append(loss)
    client.optimizer = state
    return model.params, float(np.mean(losses))


def fl_train(
    template: nn.NetworkModel,
    clients: list[ClientState],
    cfg: FederationConfig,
    initial: nn.ParameterSet | None = None,
    exclude_client: int | None = None,
    stream_tag: int = streams.FL_TRAIN,
    rounds: int | None = None,
) -> TrainResult:
    """Run FedAvg rounds; `exclude_client` (a client_id) never participates."""
    ids = [c.client_id for c in clients]
    if len(set(ids)) != len(ids):
        raise ValueError("client ids must be unique")
    active = [c for c in clients if c.client_id != exclude_client]
    if exclude_client is not None and len(active) == len(clients):
        raise ValueError(f"exclude_client {exclude_client} not found")
    if not active:
        raise ValueError("no clients left to train")
    excluded = [c for c in clients if c.client_id == exclude_client]
    audit_before = [c.dataset.access_count for c in excluded]

    n_rounds = cfg.rounds if rounds is None else rounds
    if n_rounds < 1:
        raise ValueError("rounds must be at least 1")
    params = initial.clone() if initial is not None else nn.init_params(template.layers, cfg.seed)
    params.require_congruent(template.params, "fl_train initial parameters")

    per_round: list[dict] = []
    t0 = time.perf_counter()
    workers = max_workers(len(active))
    for t in range(1, n_rounds + 1):
        if workers == 1:
            results = [local_train(template, params, c, cfg, t, stream_tag) for c in active]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(local_train, template, params, c, cfg, t, stream_tag)
                    for c in active
                ]
                results = [f.result() for f in futures]
        params = fedavg_aggregate([r[0] for r in results], [c.n for c in active])
        per_round.append(
            {
                "round": t,
                "mean_loss": float(np.mean([r[1] for r in results])),
                "client_losses": {c.client_id: r[1] for c, r in zip(active, results)},
                "participants": [c.client_id for c in active],
            }
        )
    elapsed = time.perf_counter() - t0

    for c, before in zip(excluded, audit_before):
        after = c.dataset.access_count
        if after != before:
            raise ExclusionError(
                f"client {c.client_id} data was read {after - before} times during an excluding phase"
            )
    return TrainResult(
        model=template.with_params(params),
        global_model=GlobalModel(n_rounds, params),
        per_round=per_round,
        elapsed_seconds=elapsed,
    )


def post_train(
    template: nn.NetworkModel,
    unlearned: nn.ParameterSet,
    clients: list[ClientState],
    cfg: FederationConfig,
    target_client: int,
    rounds: int,
) -> TrainResult:
    """Recovery rounds on the remaining clients, starting from the unlearned model."""
    return fl_train(
        template,
        clients,
        cfg,
        initial=unlearned,
        exclude_client=target_client,
        stream_tag=streams.FL_POST,
        rounds=rounds,
    )


def retrain_baseline(
    template: nn.NetworkModel,
    clients: list[ClientState],
    cfg: FederationConfig,
    target_client: int,
) -> TrainResult:
    """Train from a fresh seeded init with the target excluded throughout."""
    fresh = nn.init_params(template.layers, [cfg.seed, streams.FL_RETRAIN])
    return fl_train(
        template,
        clients,
        cfg,
        initial=fresh,
        exclude_client=target_client,
        stream_tag=streams.FL_RETRAIN,
    )


def finetune_baseline(
    template: nn.NetworkModel,
    trained: nn.ParameterSet,
    clients: list[ClientState],
    cfg: FederationConfig,
    target_client: int,
    rounds: int,
) -> TrainResult:
    """Recovery rounds straight from the trained model, skipping unlearning."""
    return post_train(template, trained, clients, cfg, target_client, rounds)
