"""Feed-forward networks with hand-written backprop, in float64 numpy.

A model is a stack of layer specs plus a :class:`ParameterSet`.  The stack is
an optional first convolution followed by ReLU dense layers and a linear
classifier head.  The post-activation output of the last hidden layer is the
model's feature vector; :func:`backward` accepts a gradient injected at the
logits, at the features, or both, which is what contrastive feature-level
objectives need.

Models are single-writer: ``forward(train=True)`` stores the activation cache
that the next ``backward`` on the same model consumes.  Nothing here touches
a global RNG; initialization derives its generator from an explicit seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from fcu import streams

KINDS = ("conv-weight", "dense-weight", "bias", "other")


class CongruenceError(ValueError):
    """Two parameter sets (or a model and a payload) do not share a layout."""


class DegenerateSimilarityWarning(UserWarning):
    """Cosine similarity against a zero-norm vector; defined as 0."""


@dataclass(frozen=True)
class ParamMeta:
    """Layout metadata for one tensor: its role and, for convolutions, dims."""

    kind: str
    conv_dims: tuple[int, int, int, int] | None = None  # (in_ch, out_ch, kh, kw)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown parameter kind {self.kind!r}")
        if (self.kind == "conv-weight") != (self.conv_dims is not None):
            raise ValueError("conv_dims must be given exactly for conv-weight tensors")


class ParameterSet:
    """Ordered mapping of tensor name -> float64 array, with layout metadata."""

    def __init__(self, entries: dict[str, np.ndarray], meta: dict[str, ParamMeta]):
        if set(entries) != set(meta):
            raise CongruenceError("entries and metadata name different tensors")
        self.entries: dict[str, np.ndarray] = {}
        self.meta = dict(meta)
        for name, arr in entries.items():
            arr = np.asarray(arr, dtype=np.float64)
            if meta[name].kind == "conv-weight" and arr.shape != meta[name].conv_dims:
                raise CongruenceError(
                    f"{name}: shape {arr.shape} does not match conv dims {meta[name].conv_dims}"
                )
            self.entries[name] = arr

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.entries)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.entries[name]

    def __len__(self) -> int:
        return len(self.entries)

    def clone(self) -> "ParameterSet":
        return ParameterSet({k: v.copy() for k, v in self.entries.items()}, self.meta)

    def congruent(self, other: "ParameterSet") -> bool:
        return (
            self.names == other.names
            and all(self.entries[n].shape == other.entries[n].shape for n in self.names)
            and all(self.meta[n] == other.meta[n] for n in self.names)
        )

    def require_congruent(self, other: "ParameterSet", context: str = "operation"):
        if not self.congruent(other):
            raise CongruenceError(f"{context}: parameter sets are not congruent")

    def require_finite(self, context: str = "operation"):
        for name, arr in self.entries.items():
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"{context}: non-finite values in {name}")

    def l2_distance(self, other: "ParameterSet") -> float:
        self.require_congruent(other, "l2_distance")
        return float(
            np.sqrt(
                sum(
                    float(np.sum((self.entries[n] - other.entries[n]) ** 2))
                    for n in self.names
                )
            )
        )


def zeros_like(params: ParameterSet) -> ParameterSet:
    return ParameterSet(
        {k: np.zeros_like(v) for k, v in params.entries.items()}, params.meta
    )


@dataclass(frozen=True)
class DenseSpec:
    name: str
    in_dim: int
    out_dim: int
    activation: str = "relu"  # "relu" or "none"


@dataclass(frozen=True)
class Conv2dSpec:
    """Valid-padding stride-1 convolution; weight layout (in_ch, out_ch, kh, kw)."""

    name: str
    in_ch: int
    out_ch: int
    kh: int
    kw: int
    in_h: int
    in_w: int
    activation: str = "relu"

    @property
    def out_h(self) -> int:
        return self.in_h - self.kh + 1

    @property
    def out_w(self) -> int:
        return self.in_w - self.kw + 1

    @property
    def in_dim(self) -> int:
        return self.in_ch * self.in_h * self.in_w

    @property
    def out_dim(self) -> int:
        return self.out_ch * self.out_h * self.out_w


LayerSpec = DenseSpec | Conv2dSpec


class NetworkModel:
    """Layer stack + parameters.  ``feature_index`` is the last hidden layer."""

    def __init__(self, layers: tuple[LayerSpec, ...], params: ParameterSet):
        layers = tuple(layers)
        if len(layers) < 2:
            raise ValueError("need at least one hidden layer and a head")
        if not isinstance(layers[-1], DenseSpec) or layers[-1].activation != "none":
            raise ValueError("the final layer must be a linear dense head")
        for i, spec in enumerate(layers):
            if isinstance(spec, Conv2dSpec) and i != 0:
                raise ValueError("a convolution is only supported as the first layer")
        params.require_congruent(_params_template(layers), "model construction")
        self.layers = layers
        self.params = params
        self.feature_index = len(layers) - 2
        self._cache: list[dict] | None = None

    @property
    def n_classes(self) -> int:
        return self.layers[-1].out_dim

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    def clone(self) -> "NetworkModel":
        return NetworkModel(self.layers, self.params.clone())

    def with_params(self, params: ParameterSet) -> "NetworkModel":
        return NetworkModel(self.layers, params)

    def descriptor(self) -> dict:
        out = []
        for spec in self.layers:
            d = {"type": "conv2d" if isinstance(spec, Conv2dSpec) else "dense"}
            d.update(vars(spec))
            out.append(d)
        return {"layers": out}


def model_from_descriptor(desc: dict, params: ParameterSet | None = None) -> NetworkModel:
    layers = []
    for d in desc["layers"]:
        d = dict(d)
        kind = d.pop("type")
        layers.append(Conv2dSpec(**d) if kind == "conv2d" else DenseSpec(**d))
    layers = tuple(layers)
    if params is None:
        params = init_params(layers, seed=0)
    return NetworkModel(layers, params)


def _params_template(layers: tuple[LayerSpec, ...]) -> ParameterSet:
    entries, meta = {}, {}
    for spec in layers:
        wname, bname = f"{spec.name}.weight", f"{spec.name}.bias"
        if isinstance(spec, Conv2dSpec):
            dims = (spec.in_ch, spec.out_ch, spec.kh, spec.kw)
            entries[wname] = np.zeros(dims)
            meta[wname] = ParamMeta("conv-weight", dims)
            entries[bname] = np.zeros(spec.out_ch)
        else:
            entries[wname] = np.zeros((spec.in_dim, spec.out_dim))
            meta[wname] = ParamMeta("dense-weight")
            entries[bname] = np.zeros(spec.out_dim)
        meta[bname] = ParamMeta("bias")
    return ParameterSet(entries, meta)


def init_params(layers: tuple[LayerSpec, ...], seed) -> ParameterSet:
    """Kaiming-uniform weights (bound sqrt(6/fan_in)), zero biases.

    `seed` may be an int or a sequence of ints (a derived stream).
    """
    seed_seq = [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]
    rng = np.random.default_rng(seed_seq + [streams.INIT])
    template = _params_template(tuple(layers))
    entries = {}
    for spec in layers:
        wname, bname = f"{spec.name}.weight", f"{spec.name}.bias"
        if isinstance(spec, Conv2dSpec):
            fan_in = spec.in_ch * spec.kh * spec.kw
        else:
            fan_in = spec.in_dim
        bound = np.sqrt(6.0 / fan_in)
        entries[wname] = rng.uniform(-bound, bound, size=template[wname].shape)
        entries[bname] = np.zeros_like(template[bname])
    return ParameterSet(entries, template.meta)


def build_dense_model(in_dim: int, hidden: tuple[int, ...], n_classes: int, seed: int) -> NetworkModel:
    if len(hidden) < 1:
        raise ValueError("need at least one hidden layer")
    layers: list[LayerSpec] = []
    prev = in_dim
    for i, width in enumerate(hidden):
        layers.append(DenseSpec(f"dense{i}", prev, width, "relu"))
        prev = width
    layers.append(DenseSpec("head", prev, n_classes, "none"))
    specs = tuple(layers)
    return NetworkModel(specs, init_params(specs, seed))


def build_conv_model(
    in_shape: tuple[int, int, int],
    conv_channels: int,
    kernel: tuple[int, int],
    hidden: tuple[int, ...],
    n_classes: int,
    seed: int,
) -> NetworkModel:
    if len(hidden) < 1:
        raise ValueError("need at least one hidden layer")
    c, h, w = in_shape
    conv = Conv2dSpec("conv0", c, conv_channels, kernel[0], kernel[1], h, w, "relu")
    layers: list[LayerSpec] = [conv]
    prev = conv.out_dim
    for i, width in enumerate(hidden):
        layers.append(DenseSpec(f"dense{i}", prev, width, "relu"))
        prev = width
    layers.append(DenseSpec("head", prev, n_classes, "none"))
    specs = tuple(layers)
    return NetworkModel(specs, init_params(specs, seed))


def _activate(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(pre, 0.0)
    if activation == "none":
        return pre
    raise ValueError(f"unknown activation {activation!r}")


@dataclass
class ForwardResult:
    logits: np.ndarray
    features: np.ndarray


def forward(model: NetworkModel, x: np.ndarray, train: bool = False) -> ForwardResult:
    """Run the stack on a flat batch (B, in_dim); caches activations if train."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        raise ValueError(f"expected batch shape (B, {model.in_dim}), got {x.shape}")
    cache: list[dict] = []
    h: np.ndarray = x
    features = None
    for i, spec in enumerate(model.layers):
        w = model.params[f"{spec.name}.weight"]
        b = model.params[f"{spec.name}.bias"]
        if isinstance(spec, Conv2dSpec):
            imgs = h.reshape(-1, spec.in_ch, spec.in_h, spec.in_w)
            windows = sliding_window_view(imgs, (spec.kh, spec.kw), axis=(2, 3))
            pre = np.einsum("bchwij,coij->bohw", windows, w) + b[None, :, None, None]
            post = _activate(pre, spec.activation)
            entry = {"windows": windows, "pre": pre, "post_shape": post.shape}
            h = post.reshape(post.shape[0], -1)
        else:
            pre = h @ w + b
            post = _activate(pre, spec.activation)
            entry = {"inp": h, "pre": pre}
            h = post
        if train:
            cache.append(entry)
        if i == model.feature_index:
            features = h
    model._cache = cache if train else None
    assert features is not None
    return ForwardResult(logits=h, features=features)


def backward(
    model: NetworkModel,
    grad_logits: np.ndarray | None = None,
    grad_features: np.ndarray | None = None,
) -> ParameterSet:
    """Gradients w.r.t. parameters from gradients injected at logits/features.

    Requires a prior ``forward(train=True)`` on this model.  Injected
    gradients are taken as d(loss)/d(logits) and d(loss)/d(features) with any
    batch averaging already applied by the caller.
    """
    if model._cache is None:
        raise RuntimeError("backward requires a prior forward(train=True)")
    if grad_logits is None and grad_features is None:
        raise ValueError("need a gradient at the logits, the features, or both")
    cache = model._cache
    batch = cache[-1]["pre"].shape[0]
    head_dim = model.layers[-1].out_dim
    if grad_logits is None:
        g_post = np.zeros((batch, head_dim))
    else:
        g_post = np.asarray(grad_logits, dtype=np.float64)
        if g_post.shape != (batch, head_dim):
            raise ValueError(f"grad_logits shape {g_post.shape} != ({batch}, {head_dim})")

    grads = zeros_like(model.params)
    for i in range(len(model.layers) - 1, -1, -1):
        spec = model.layers[i]
        entry = cache[i]
        if i == model.feature_index and grad_features is not None:
            gf = np.asarray(grad_features, dtype=np.float64)
            if gf.shape != entry["pre"].shape[: gf.ndim] and gf.shape != (
                batch,
                spec.out_dim,
            ):
                raise ValueError(f"grad_features shape {gf.shape} incompatible")
            g_post = g_post + gf
        if spec.activation == "relu":
            g_pre = g_post * (entry["pre"] > 0.0)
        else:
            g_pre = g_post
        if isinstance(spec, Conv2dSpec):
            grads.entries[f"{spec.name}.weight"][:] = np.einsum(
                "bchwij,bohw->coij", entry["windows"], g_pre
            )
            grads.entries[f"{spec.name}.bias"][:] = g_pre.sum(axis=(0, 2, 3))
            break  # first layer; no input gradient needed
        grads.entries[f"{spec.name}.weight"][:] = entry["inp"].T @ g_pre
        grads.entries[f"{spec.name}.bias"][:] = g_pre.sum(axis=0)
        g_post = g_pre @ model.params[f"{spec.name}.weight"].T
        if i > 0 and isinstance(model.layers[i - 1], Conv2dSpec):
            g_post = g_post.reshape(cache[i - 1]["post_shape"])
    grads.require_finite("backward")
    return grads


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits.

    Log-sum-exp is stabilized by subtracting the row max, so large logits do
    not overflow.  The returned gradient already carries the 1/B factor.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ValueError("logits must be (B, n_classes)")
    if labels.shape != (logits.shape[0],):
        raise ValueError("labels must be (B,)")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError("label out of range")
    b = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=1))
    log_probs = shifted - log_z[:, None]
    loss = float(-np.mean(log_probs[np.arange(b), labels]))
    grad = np.exp(log_probs)
    grad[np.arange(b), labels] -= 1.0
    return loss, grad / b


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors; 0 (with a warning) if either is zero."""
    a = np.ravel(np.asarray(a, dtype=np.float64))
    b = np.ravel(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise ValueError("vectors must have the same length")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        warnings.warn("zero-norm vector in cosine similarity", DegenerateSimilarityWarning)
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarity with the same zero-norm convention."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError("expected two (B, d) arrays of equal shape")
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    degenerate = (na == 0.0) | (nb == 0.0)
    if np.any(degenerate):
        warnings.warn("zero-norm row in cosine similarity", DegenerateSimilarityWarning)
    denom = np.where(degenerate, 1.0, na * nb)
    sims = np.einsum("ij,ij->i", a, b) / denom
    sims = np.where(degenerate, 0.0, sims)
    return np.clip(sims, -1.0, 1.0)


@dataclass
class AdamState:
    """Bias-corrected Adam: moments, step counter, and the step size."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ParameterSet, lr: float, beta1: float = 0.9, beta2: float = 0.99) -> "AdamState":
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        return cls(
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            m={k: np.zeros_like(v) for k, v in params.entries.items()},
            v={k: np.zeros_like(v) for k, v in params.entries.items()},
        )


def adam_step(params: ParameterSet, grads: ParameterSet, state: AdamState) -> ParameterSet:
    """One Adam update, in place on `params`; returns it for chaining."""
    params.require_congruent(grads, "adam_step")
    if set(state.m) != set(params.names):
        raise CongruenceError("adam_step: optimizer state does not match parameters")
    grads.require_finite("adam_step")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name in params.names:
        g = grads[name]
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = state.m[name] / c1
        v_hat = state.v[name] / c2
        params.entries[name] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    params.require_finite("adam_step")
    return params
