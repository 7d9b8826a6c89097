"""Run configuration: INI files resolved into one validated RunConfig.

Sections/keys (all optional; defaults are the dataclass field defaults
below, written out in configs/default.ini):

    [run]         seed, target_client, out_dir
    [data]        source (synthetic | path.csv), classes, features,
                  samples_per_class, separation, noise, client_bias_scale
    [model]       hidden (comma list), conv_channels, conv_kernel
    [federation]  clients, rounds, local_iterations, learning_rate,
                  batch_size, dirichlet_alpha
    [unlearn]     temperature, iterations, fgmp_interval, learning_rate,
                  blend_ratio, batch_size
    [post_train]  rounds

The resolved configuration (including the seed and the fgmp/post-train
ablation switches) is what the report digest hashes, so two reports compare
cleanly only when every knob matched.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field
from pathlib import Path

from fcu.data import SyntheticSpec
from fcu.federation import FederationConfig
from fcu.metrics import config_digest
from fcu.unlearn import UnlearnConfig


class ConfigError(Exception):
    """Bad or missing configuration; maps to CLI exit code 2."""


@dataclass
class ModelConfig:
    hidden: tuple[int, ...] = (16, 16)
    conv_channels: int = 0  # 0 = dense-only stack
    conv_kernel: int = 3

    def __post_init__(self):
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError("hidden: need positive layer widths")
        if self.conv_channels < 0 or self.conv_kernel < 1:
            raise ValueError("conv settings must be positive")


@dataclass
class DataConfig:
    source: str = "synthetic"
    classes: int = 2
    features: int = 8
    samples_per_class: int = 2500
    separation: float = 4.0
    noise: float = 1.0
    client_bias_scale: float = 0.0

    def synthetic_spec(self, seed: int = 0) -> SyntheticSpec:
        return SyntheticSpec(
            classes=self.classes,
            features=self.features,
            samples_per_class=self.samples_per_class,
            separation=self.separation,
            noise=self.noise,
            seed=seed,
        )


@dataclass
class RunConfig:
    seed: int = 1
    target_client: int = 0
    out_dir: str = "runs/out"
    post_rounds: int = 10
    post_train_enabled: bool = True
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    federation: FederationConfig = field(default_factory=FederationConfig)
    unlearn: UnlearnConfig = field(default_factory=UnlearnConfig)

    def __post_init__(self):
        if not 0 <= self.target_client < self.federation.n_clients:
            raise ConfigError(
                f"run.target_client: {self.target_client} outside [0, {self.federation.n_clients})"
            )
        if self.post_rounds < 0:
            raise ConfigError("post_train.rounds: must be nonnegative")
        # one seed drives every phase stream
        self.federation.seed = self.seed
        self.unlearn.seed = self.seed

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "target_client": self.target_client,
            "post_rounds": self.post_rounds,
            "post_train_enabled": self.post_train_enabled,
            "data": asdict(self.data),
            "model": {**asdict(self.model), "hidden": list(self.model.hidden)},
            "federation": asdict(self.federation),
            "unlearn": asdict(self.unlearn),
        }

    def digest(self) -> str:
        return config_digest(self.to_dict())


def _section(parser: configparser.ConfigParser, name: str) -> dict:
    return dict(parser[name]) if parser.has_section(name) else {}


def _take(raw: dict, key: str, cast, default, where: str):
    if key not in raw:
        return default
    text = raw.pop(key)
    try:
        if cast is bool:
            lowered = text.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        return cast(text)
    except ValueError as exc:
        raise ConfigError(f"{where}.{key}: {exc}") from exc


def _hidden(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.replace(" ", "").split(",") if part)
    except ValueError as exc:
        raise ValueError(f"expected a comma list of ints, got {text!r}") from exc


def load_config(
    path,
    seed: int | None = None,
    out_dir: str | None = None,
    fgmp_enabled: bool | None = None,
    post_train_enabled: bool | None = None,
) -> RunConfig:
    """Parse an INI file and apply command-line overrides."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    known = {"run", "data", "model", "federation", "unlearn", "post_train"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {sorted(unknown)}")

    run_raw = _section(parser, "run")
    data_raw = _section(parser, "data")
    model_raw = _section(parser, "model")
    fed_raw = _section(parser, "federation")
    un_raw = _section(parser, "unlearn")
    post_raw = _section(parser, "post_train")

    def _build(section: str, ctor, **kwargs):
        try:
            return ctor(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"{path}: {section}.{exc}") from exc

    data_cfg = _build(
        "data", DataConfig,
        source=_take(data_raw, "source", str, "synthetic", "data"),
        classes=_take(data_raw, "classes", int, 2, "data"),
        features=_take(data_raw, "features", int, 8, "data"),
        samples_per_class=_take(data_raw, "samples_per_class", int, 2500, "data"),
        separation=_take(data_raw, "separation", float, 4.0, "data"),
        noise=_take(data_raw, "noise", float, 1.0, "data"),
        client_bias_scale=_take(data_raw, "client_bias_scale", float, 0.0, "data"),
    )
    model_cfg = _build(
        "model", ModelConfig,
        hidden=_take(model_raw, "hidden", _hidden, (16, 16), "model"),
        conv_channels=_take(model_raw, "conv_channels", int, 0, "model"),
        conv_kernel=_take(model_raw, "conv_kernel", int, 3, "model"),
    )
    fed_cfg = _build(
        "federation", FederationConfig,
        n_clients=_take(fed_raw, "clients", int, 5, "federation"),
        rounds=_take(fed_raw, "rounds", int, 30, "federation"),
        local_iterations=_take(fed_raw, "local_iterations", int, 20, "federation"),
        learning_rate=_take(fed_raw, "learning_rate", float, 1e-4, "federation"),
        batch_size=_take(fed_raw, "batch_size", int, 64, "federation"),
        dirichlet_alpha=_take(fed_raw, "dirichlet_alpha", float, 1.0, "federation"),
    )
    unlearn_cfg = _build(
        "unlearn", UnlearnConfig,
        temperature=_take(un_raw, "temperature", float, 0.5, "unlearn"),
        iterations=_take(un_raw, "iterations", int, 100, "unlearn"),
        fgmp_interval=_take(un_raw, "fgmp_interval", int, 10, "unlearn"),
        learning_rate=_take(un_raw, "learning_rate", float, 1e-5, "unlearn"),
        blend_ratio=_take(un_raw, "blend_ratio", float, 0.5, "unlearn"),
        batch_size=_take(un_raw, "batch_size", int, 64, "unlearn"),
    )
    cfg = _build(
        "run", RunConfig,
        seed=_take(run_raw, "seed", int, 1, "run"),
        target_client=_take(run_raw, "target_client", int, 0, "run"),
        out_dir=_take(run_raw, "out_dir", str, "runs/out", "run"),
        post_rounds=_take(post_raw, "rounds", int, 10, "post_train"),
        data=data_cfg,
        model=model_cfg,
        federation=fed_cfg,
        unlearn=unlearn_cfg,
    )

    for where, raw in (
        ("run", run_raw), ("data", data_raw), ("model", model_raw),
        ("federation", fed_raw), ("unlearn", un_raw), ("post_train", post_raw),
    ):
        if raw:
            raise ConfigError(f"{path}: unknown key(s) in [{where}]: {sorted(raw)}")

    if seed is not None:
        cfg.seed = int(seed)
        cfg.federation.seed = cfg.seed
        cfg.unlearn.seed = cfg.seed
    if out_dir is not None:
        cfg.out_dir = str(out_dir)
    if fgmp_enabled is not None:
        cfg.unlearn.fgmp_enabled = bool(fgmp_enabled)
    if post_train_enabled is not None:
        cfg.post_train_enabled = bool(post_train_enabled)
    return cfg
