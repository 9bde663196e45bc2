from __future__ import annotations

from pathlib import Path

import pytest
import yaml

from lowlight_nerf.config import (
    RunConfig,
    TrainConfig,
    read_config_file,
    resolve_run_config,
    run_config_to_dict,
    write_run_config,
)
from lowlight_nerf.errors import ConfigError
from lowlight_nerf.field import FieldConfig


def _write(tmp_path, content) -> Path:
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(content), encoding="utf-8")
    return path


def test_defaults():
    cfg = resolve_run_config()
    assert cfg.train == TrainConfig()
    assert cfg.field == FieldConfig()
    train = cfg.train
    assert (train.eta, train.lr0, train.patch_w, train.n_samples) == (0.1, 5e-4, 32, 64)
    assert cfg.run_dir == Path("runs") / "default"
    assert cfg.data_dir is None


def test_file_overrides_defaults(tmp_path):
    path = _write(
        tmp_path,
        {
            "field": {"trunk_width": 64},
            "train": {"eta": 0.05, "iters": 10},
            "paths": {"data_dir": "data/blobs", "runs_dir": str(tmp_path / "runs")},
            "run": {"name": "dark", "threads": 1},
        },
    )
    cfg = resolve_run_config(path)
    assert cfg.field.trunk_width == 64
    assert (cfg.train.eta, cfg.train.iters) == (0.05, 10)
    assert cfg.data_dir == "data/blobs"
    assert cfg.run_dir == tmp_path / "runs" / "dark"
    assert cfg.threads == 1


def test_flags_override_the_file_and_unset_flags_do_not(tmp_path):
    path = _write(tmp_path, {"train": {"eta": 0.05, "seed": 3}})
    cfg = resolve_run_config(path, {"train": {"eta": 0.2, "seed": None}})
    assert cfg.train.eta == 0.2
    assert cfg.train.seed == 3


def test_sample_count_propagates_to_the_field(tmp_path):
    assert resolve_run_config(overrides={"train": {"n_samples": 16}}).field.n_samples == 16
    assert resolve_run_config(overrides={"field": {"n_samples": 12}}).train.n_samples == 12


def test_sample_counts_must_agree():
    with pytest.raises(ConfigError, match="disagree"):
        resolve_run_config(overrides={"train": {"n_samples": 16}, "field": {"n_samples": 8}})


def test_strings_from_the_command_line_are_coerced():
    cfg = resolve_run_config(
        overrides={"train": {"iters": "20", "lr0": "1e-3", "stratified": "false"}}
    )
    assert cfg.train.iters == 20
    assert cfg.train.lr0 == 1e-3
    assert cfg.train.stratified is False


@pytest.mark.parametrize(
    "overrides",
    [
        {"train": {"iters": 2.5}},
        {"train": {"stratified": "maybe"}},
        {"train": {"lr0": "fast"}},
        {"train": {"learning_rate": 1.0}},
        {"optimizer": {"lr0": 1.0}},
        {"run": {"colour": "red"}},
        {"run": {"threads": 0}},
        {"field": {"conv_kernel": 4}},
        {"train": {"eta": 0.0}},
        {"train": {"patch_w": 2}},
        {"train": {"lr0": 1e-6, "lr_min": 1e-5}},
        {"train": {"iters": -1}},
        {"train": {"seed": None, "eta": None, "checkpoint_every": 0}},
    ],
)
def test_invalid_values(overrides):
    with pytest.raises(ConfigError):
        resolve_run_config(overrides=overrides)


def test_vanilla_runs_accept_two_pixel_patches():
    cfg = TrainConfig(conceal=False, patch_w=2, patch_h=2)
    assert cfg.batch_rays == 4


def test_loss_weights_come_from_the_train_section():
    weights = TrainConfig(eta=0.05, lambda2=0.5, color_per_pixel=True).loss_weights
    assert (weights.eta, weights.lambda2, weights.color_per_pixel) == (0.05, 0.5, True)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        read_config_file(tmp_path / "nope.yaml")


@pytest.mark.parametrize(
    "text", ["train: [1, 2]\n", "- just\n- a list\n", "strange: {}\n", "train: {eta: [\n"]
)
def test_malformed_files(tmp_path, text):
    path = tmp_path / "config.yaml"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigError):
        read_config_file(path)


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("", encoding="utf-8")
    assert resolve_run_config(path) == RunConfig()


def test_written_config_reads_back(tmp_path):
    cfg = resolve_run_config(
        overrides={
            "train": {"eta": 0.05, "iters": 7, "n_samples": 16},
            "field": {"color_width": 32},
            "run": {"name": "x"},
        }
    )
    path = write_run_config(cfg, tmp_path / "run" / "config.yaml")
    assert resolve_run_config(path) == cfg
    assert run_config_to_dict(cfg)["train"]["eta"] == 0.05
