"""Training and run configuration.

A run is configured from three layers: dataclass defaults, a YAML file with the
sections ``field``, ``train``, ``paths`` and ``run``, and command-line
overrides. A flag wins over the file, the file wins over the default.

"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from lowlight_nerf.errors import ConfigError, DomainError
from lowlight_nerf.field import FieldConfig
from lowlight_nerf.losses import LossWeights


@dataclass(frozen=True)
class TrainConfig:
    iters: int = 5000
    lr0: float = 5e-4
    lr_min: float = 5e-6
    lr_step: int = 2500
    patch_w: int = 32
    patch_h: int = 32
    eta: float = 0.1
    lambda1: float = 1e-4
    lambda2: float = 1e-3
    lambda3: float = 1e-4
    color_per_pixel: bool = False
    n_samples: int = 64
    stratified: bool = True
    conceal: bool = True
    seed: int = 0
    checkpoint_every: int = 1000
    log_every: int = 100
    f64: bool = False

    def __post_init__(self) -> None:
        if self.iters < 0:
            raise ConfigError(f"iters must be >= 0, got {self.iters}")
        if not self.lr0 >= self.lr_min >= 0:
            raise ConfigError(f"need lr0 >= lr_min >= 0, got {self.lr0}, {self.lr_min}")
        if self.lr_step < 1:
            raise ConfigError(f"lr_step must be >= 1, got {self.lr_step}")
        min_width = 3 if self.conceal else 2
        if self.patch_w < min_width or self.patch_h < 2:
            raise ConfigError(
                f"patch must be at least {min_width}x2, got {self.patch_w}x{self.patch_h}"
            )
        if self.n_samples < 1:
            raise ConfigError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.checkpoint_every < 1 or self.log_every < 1:
            raise ConfigError("checkpoint_every and log_every must be >= 1")
        # Raises ConfigError on bad weights.
        self.loss_weights  # noqa: B018

    @property
    def batch_rays(self) -> int:
        return self.patch_w * self.patch_h

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            lambda3=self.lambda3,
            eta=self.eta,
            color_per_pixel=self.color_per_pixel,
        )


@dataclass(frozen=True)
class RunConfig:
    field: FieldConfig = dataclasses.field(default_factory=FieldConfig)
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    data_dir: str | None = None
    runs_dir: str = "runs"
    name: str = "default"
    threads: int | None = None

    def __post_init__(self) -> None:
        if self.field.n_samples != self.train.n_samples:
            raise ConfigError(
                f"field.n_samples ({self.field.n_samples}) and train.n_samples "
                f"({self.train.n_samples}) disagree"
            )
        if self.threads is not None and self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")

    @property
    def run_dir(self) -> Path:
        return Path(self.runs_dir) / self.name


_SECTIONS = {
    "field": FieldConfig,
    "train": TrainConfig,
}
_PATH_KEYS = ("data_dir", "runs_dir")
_RUN_KEYS = ("name", "threads")


def _coerce(owner: str, name: str, annotation: str, value: Any) -> Any:
    optional = annotation.endswith("| None")
    base = annotation.removesuffix("| None").strip()
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{owner}.{name} must not be empty")
    try:
        if base == "bool":
            if isinstance(value, bool):
                return value
            if str(value).lower() in ("true", "false"):
                return str(value).lower() == "true"
            raise ValueError(value)
        if base == "int":
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise ValueError(value)
            return int(float(value))
        if base == "float":
            return float(value)
        return str(value)
    except (TypeError, ValueError) as error:
        raise ConfigError(f"{owner}.{name}: cannot read {value!r} as {base}") from error


def _build(cls: type, owner: str, values: dict[str, Any]) -> Any:
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown keys in section '{owner}': {', '.join(unknown)}")
    kwargs = {
        name: _coerce(owner, name, str(known[name].type), value)
        for name, value in values.items()
    }
    try:
        return cls(**kwargs)
    except DomainError as error:
        raise ConfigError(f"section '{owner}': {error}") from error


def read_config_file(path: str | Path) -> dict[str, dict[str, Any]]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as file:
            content = yaml.safe_load(file) or {}
    except yaml.YAMLError as error:
        raise ConfigError(f"cannot parse {path}: {error}") from error
    if not isinstance(content, dict):
        raise ConfigError(f"{path} must hold a mapping of sections")
    unknown = sorted(set(content) - {*_SECTIONS, "paths", "run"})
    if unknown:
        raise ConfigError(f"unknown sections in {path}: {', '.join(unknown)}")
    for section, values in content.items():
        if values is not None and not isinstance(values, dict):
            raise ConfigError(f"section '{section}' must be a mapping")
    return {section: dict(values or {}) for section, values in content.items()}


def resolve_run_config(
    path: str | Path | None = None,
    overrides: dict[str, dict[str, Any]] | None = None,
) -> RunConfig:
    """Merge defaults, the YAML file at ``path`` and ``overrides`` into a RunConfig.

    ``overrides`` has the same sections as the file; ``None`` values are ignored so
    unset command-line flags fall through to the file. ``train.n_samples`` also
    sets ``field.n_samples`` unless the field section names it explicitly.

    """
    layers = [read_config_file(path)] if path is not None else []
    layers.append(overrides or {})

    merged: dict[str, dict[str, Any]] = {"field": {}, "train": {}, "paths": {}, "run": {}}
    for layer in layers:
        for section, values in layer.items():
            if section not in merged:
                raise ConfigError(f"unknown section '{section}'")
            merged[section].update({k: v for k, v in values.items() if v is not None})

    if "n_samples" in merged["train"] and "n_samples" not in merged["field"]:
        merged["field"]["n_samples"] = merged["train"]["n_samples"]
    elif "n_samples" in merged["field"] and "n_samples" not in merged["train"]:
        merged["train"]["n_samples"] = merged["field"]["n_samples"]

    field_cfg = _build(FieldConfig, "field", merged["field"])
    train_cfg = _build(TrainConfig, "train", merged["train"])

    for owner, keys in (("paths", _PATH_KEYS), ("run", _RUN_KEYS)):
        unknown = sorted(set(merged[owner]) - set(keys))
        if unknown:
            raise ConfigError(f"unknown keys in section '{owner}': {', '.join(unknown)}")
    threads = merged["run"].get("threads")
    return RunConfig(
        field=field_cfg,
        train=train_cfg,
        data_dir=_coerce("paths", "data_dir", "str | None", merged["paths"].get("data_dir")),
        runs_dir=str(merged["paths"].get("runs_dir", "runs")),
        name=str(merged["run"].get("name", "default")),
        threads=_coerce("run", "threads", "int | None", threads),
    )


def run_config_to_dict(cfg: RunConfig) -> dict[str, dict[str, Any]]:
    return {
        "field": dataclasses.asdict(cfg.field),
        "train": dataclasses.asdict(cfg.train),
        "paths": {"data_dir": cfg.data_dir, "runs_dir": cfg.runs_dir},
        "run": {"name": cfg.name, "threads": cfg.threads},
    }


def write_run_config(cfg: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        yaml.safe_dump(run_config_to_dict(cfg), file, default_flow_style=False, sort_keys=False)
    return path
