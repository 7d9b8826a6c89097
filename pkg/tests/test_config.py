"""INI parsing, overrides, digests, and field-level error reporting."""

import json

import pytest

from fcu import config


MINIMAL = "[run]\nseed = 3\n"

FULL = """
[run]
seed = 7
target_client = 2
out_dir = runs/full

[data]
source = synthetic
classes = 2
features = 6
samples_per_class = 100
separation = 3.5
noise = 0.8
client_bias_scale = 1.5

[model]
hidden = 12, 8
conv_channels = 0
conv_kernel = 3

[federation]
clients = 4
rounds = 9
local_iterations = 5
learning_rate = 2e-4
batch_size = 32
dirichlet_alpha = 0.7

[unlearn]
temperature = 0.4
iterations = 50
fgmp_interval = 5
learning_rate = 1e-4
blend_ratio = 0.6
batch_size = 16

[post_train]
rounds = 4
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_defaults_from_minimal_config(tmp_path):
    cfg = config.load_config(write(tmp_path, MINIMAL))
    assert cfg.seed == 3
    assert cfg.federation.seed == 3 and cfg.unlearn.seed == 3
    assert cfg.federation.n_clients == 5 and cfg.federation.rounds == 30
    assert cfg.federation.local_iterations == 20
    assert cfg.federation.learning_rate == pytest.approx(1e-4)
    assert cfg.unlearn.temperature == 0.5
    assert cfg.unlearn.iterations == 100 and cfg.unlearn.fgmp_interval == 10
    assert cfg.unlearn.learning_rate == pytest.approx(1e-5)
    assert cfg.unlearn.blend_ratio == 0.5
    assert cfg.post_rounds == 10
    assert cfg.data.samples_per_class == 2500
    assert cfg.model.hidden == (16, 16)
    assert cfg.post_train_enabled and cfg.unlearn.fgmp_enabled


def test_full_config_parsed(tmp_path):
    cfg = config.load_config(write(tmp_path, FULL))
    assert cfg.target_client == 2 and cfg.out_dir == "runs/full"
    assert cfg.data.features == 6 and cfg.data.client_bias_scale == 1.5
    assert cfg.model.hidden == (12, 8)
    assert cfg.federation.n_clients == 4 and cfg.federation.dirichlet_alpha == 0.7
    assert cfg.unlearn.blend_ratio == 0.6 and cfg.unlearn.batch_size == 16
    assert cfg.post_rounds == 4


def test_overrides(tmp_path):
    path = write(tmp_path, FULL)
    cfg = config.load_config(path, seed=99, out_dir="elsewhere", fgmp_enabled=False, post_train_enabled=False)
    assert cfg.seed == 99
    assert cfg.federation.seed == 99 and cfg.unlearn.seed == 99
    assert cfg.out_dir == "elsewhere"
    assert cfg.unlearn.fgmp_enabled is False
    assert cfg.post_train_enabled is False


def test_missing_file_names_path(tmp_path):
    missing = tmp_path / "absent.ini"
    with pytest.raises(config.ConfigError, match="absent.ini"):
        config.load_config(missing)


def test_unknown_section_and_key(tmp_path):
    with pytest.raises(config.ConfigError, match="unknown section"):
        config.load_config(write(tmp_path, "[nonsense]\nx = 1\n"))
    with pytest.raises(config.ConfigError, match=r"unknown key.*federation.*typo"):
        config.load_config(write(tmp_path, "[federation]\ntypo = 1\n"))


def test_bad_values_name_the_field(tmp_path):
    with pytest.raises(config.ConfigError, match="run.seed"):
        config.load_config(write(tmp_path, "[run]\nseed = banana\n"))
    with pytest.raises(config.ConfigError, match="federation"):
        config.load_config(write(tmp_path, "[federation]\nclients = 1\n"))
    with pytest.raises(config.ConfigError, match="unlearn"):
        config.load_config(write(tmp_path, "[unlearn]\nblend_ratio = 2.0\n"))
    with pytest.raises(config.ConfigError, match="target_client"):
        config.load_config(write(tmp_path, "[run]\ntarget_client = 9\n"))
    with pytest.raises(config.ConfigError, match="hidden"):
        config.load_config(write(tmp_path, "[model]\nhidden = a,b\n"))


def test_digest_tracks_every_knob(tmp_path):
    path = write(tmp_path, FULL)
    base = config.load_config(path).digest()
    assert config.load_config(path).digest() == base
    assert config.load_config(path, seed=1234).digest() != base
    assert config.load_config(path, fgmp_enabled=False).digest() != base
    assert config.load_config(path, post_train_enabled=False).digest() != base
    # out_dir is bookkeeping, not an experiment knob: same digest
    assert config.load_config(path, out_dir="x").digest() == base


def test_to_dict_is_json_serializable(tmp_path):
    cfg = config.load_config(write(tmp_path, FULL))
    blob = json.dumps(cfg.to_dict(), sort_keys=True)
    assert "fgmp_enabled" in blob and "post_train_enabled" in blob


def test_inline_comments_allowed(tmp_path):
    cfg = config.load_config(write(tmp_path, "[run]\nseed = 5 ; the run seed\n"))
    assert cfg.seed == 5
