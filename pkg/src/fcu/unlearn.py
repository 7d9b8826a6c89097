"""Contrastive client unlearning with periodic frequency blending.

The working model starts as a copy of the trained global model and is pushed,
on the departing client's data only, toward the feature geometry of a
*downgraded* reference (the seeded initialization that began federated
training) and away from the trained model's own features.  For a sample with
working features z, downgraded features z_d and trained features z_t, the
loss is

    L = -log( e^{sim(z, z_d)/tau} / (e^{sim(z, z_d)/tau} + e^{sim(z, z_t)/tau}) )
      = log(1 + e^{(sim(z, z_t) - sim(z, z_d))/tau}),

with cosine similarity and both references held fixed.  Every
``fgmp_interval`` updates the low-frequency amplitude band of the trained
parameters is grafted back (see :mod:`fcu.spectral`), which is what keeps
accuracy on the retained data from eroding while the features move.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from fcu import nn, spectral, streams
from fcu.data import Dataset, batch_stream


@dataclass
class UnlearnConfig:
    temperature: float = 0.5
    iterations: int = 100
    fgmp_interval: int = 10
    learning_rate: float = 1e-5
    blend_ratio: float = 0.5
    fgmp_enabled: bool = True
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature: must be positive")
        if self.iterations < 0:
            raise ValueError("iterations: must be nonnegative")
        if self.fgmp_interval < 1:
            raise ValueError("fgmp_interval: must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate: must be positive")
        if not 0.0 <= self.blend_ratio <= 1.0:
            raise ValueError("blend_ratio: must be in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size: must be positive")


def _as_batch(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return z[None, :] if z.ndim == 1 else z


def _cos_grad(z: np.ndarray, a: np.ndarray, sims: np.ndarray) -> np.ndarray:
    # d cos(z, a) / dz = a / (|z||a|) - cos * z / |z|^2, zero for degenerate rows
    nz = np.linalg.norm(z, axis=1)
    na = np.linalg.norm(a, axis=1)
    degenerate = (nz == 0.0) | (na == 0.0)
    denom = np.where(degenerate, 1.0, nz * na)
    zz = np.where(nz == 0.0, 1.0, nz * nz)
    grad = a / denom[:, None] - sims[:, None] * z / zz[:, None]
    grad[degenerate] = 0.0
    return grad


def _mcu_terms(z, z_down, z_tr, tau):
    z, z_down, z_tr = _as_batch(z), _as_batch(z_down), _as_batch(z_tr)
    if not (z.shape == z_down.shape == z_tr.shape):
        raise ValueError("feature batches must share one shape")
    if not tau > 0:
        raise ValueError("temperature must be positive")
    s_down = nn.cosine_rows(z, z_down)
    s_tr = nn.cosine_rows(z, z_tr)
    margin = (s_tr - s_down) / tau
    loss = float(np.mean(np.logaddexp(0.0, margin)))
    # dL/dmargin = sigmoid(margin); mean over the batch
    sig = 1.0 / (1.0 + np.exp(-margin))
    coef = sig / (tau * z.shape[0])
    grad = coef[:, None] * (_cos_grad(z, z_tr, s_tr) - _cos_grad(z, z_down, s_down))
    return loss, grad, float(np.mean(s_down)), float(np.mean(s_tr))


def mcu_loss(z, z_down, z_tr, tau: float = 0.5) -> float:
    """Mean contrastive unlearning loss over a feature batch."""
    return _mcu_terms(z, z_down, z_tr, tau)[0]


def mcu_loss_grad(z, z_down, z_tr, tau: float = 0.5) -> np.ndarray:
    """Gradient of :func:`mcu_loss` w.r.t. `z` (references held fixed)."""
    grad = _mcu_terms(z, z_down, z_tr, tau)[1]
    return grad[0] if np.asarray(z).ndim == 1 else grad


@dataclass
class UnlearnResult:
    model: nn.NetworkModel
    loss_history: list[float] = field(default_factory=list)
    sim_gap_history: list[float] = field(default_factory=list)  # mean sim(z,z_down) - sim(z,z_tr)
    elapsed_seconds: float = 0.0


def local_unlearn(
    trained: nn.NetworkModel,
    downgraded: nn.NetworkModel,
    target_data: Dataset,
    cfg: UnlearnConfig,
    probe=None,
    probe_every: int = 0,
) -> UnlearnResult:
    """Unlearn `target_data` from a copy of `trained`.

    `probe(iteration, model)` is called every `probe_every` iterations, after
    that iteration's update and any frequency blend, so a probe at iteration k
    sees exactly the model a fresh k-iteration run would return.  The final
    blend is skipped when the last iteration already applied one.
    """
    if trained.layers != downgraded.layers:
        raise nn.CongruenceError("trained and downgraded models differ in architecture")
    trained.params.require_congruent(downgraded.params, "local_unlearn")
    t0 = time.perf_counter()
    working = trained.clone()
    result = UnlearnResult(model=working)
    if cfg.iterations == 0:
        result.elapsed_seconds = time.perf_counter() - t0
        return result

    state = nn.AdamState.for_params(working.params, lr=cfg.learning_rate)
    rng = np.random.default_rng([cfg.seed, streams.UNLEARN])
    stream = batch_stream(target_data, cfg.batch_size, rng)
    for it in range(1, cfg.iterations + 1):
        x, _ = next(stream)
        out = nn.forward(working, x, train=True)
        z_tr = nn.forward(trained, x).features
        z_down = nn.forward(downgraded, x).features
        loss, grad_z, s_down, s_tr = _mcu_terms(out.features, z_down, z_tr, cfg.temperature)
        grads = nn.backward(working, grad_features=grad_z)
        nn.adam_step(working.params, grads, state)
        if cfg.fgmp_enabled and it % cfg.fgmp_interval == 0:
            working.params = spectral.fgmp_apply(trained.params, working.params, cfg.blend_ratio)
        result.loss_history.append(loss)
        result.sim_gap_history.append(s_down - s_tr)
        if probe is not None and probe_every > 0 and it % probe_every == 0:
            probe(it, working)
    if cfg.fgmp_enabled and cfg.iterations % cfg.fgmp_interval != 0:
        working.params = spectral.fgmp_apply(trained.params, working.params, cfg.blend_ratio)
    working.params.require_finite("local_unlearn")
    result.elapsed_seconds = time.perf_counter() - t0
    return result
