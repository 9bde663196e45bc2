"""Checkpoint files.

Layout::

    MAGIC (8 bytes, ends with the format version)
    manifest length (8 bytes, little-endian unsigned)
    manifest (UTF-8 YAML: version, configs, iteration, rng state, array names
              and shapes, dtype, payload_bytes)
    payload (all arrays, flat, little-endian, in manifest order)

The payload dtype is 32-bit float, or 64-bit float for runs made in 64-bit mode
so that such runs also resume bit-exactly.

"""

from __future__ import annotations

import dataclasses
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jax
import jax.numpy as jnp
import numpy as np
import yaml

from lowlight_nerf.config import TrainConfig
from lowlight_nerf.diffcore import flat_params, nested_params
from lowlight_nerf.errors import (
    CheckpointError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigError,
    DomainError,
    MissingFileError,
)
from lowlight_nerf.field import FieldConfig, init_params
from lowlight_nerf.optimizer import AdamState

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAGIC = b"LLNERF\x00" + bytes([FORMAT_VERSION])
_LENGTH = struct.Struct("<Q")
_DTYPES = {"float32": "<f4", "float64": "<f8"}
_GROUPS = ("params", "adam_mu", "adam_nu")


@dataclass
class Checkpoint:
    field_config: FieldConfig
    train_config: TrainConfig
    params: dict
    adam: AdamState
    iteration: int
    rng_state: dict[str, Any]
    version: int = FORMAT_VERSION

    def flat_arrays(self) -> dict[str, np.ndarray]:
        """All arrays under qualified names, e.g. ``params__conceal__global_logits``."""
        tree = {"params": self.params, "adam_mu": self.adam.mu, "adam_nu": self.adam.nu}
        return {name: np.asarray(value) for name, value in flat_params(tree).items()}

    @property
    def dtype(self) -> str:
        weight = self.params["density"]["sigma"]["weight"]
        return "float64" if weight.dtype == jnp.float64 else "float32"


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    dtype = _DTYPES[ckpt.dtype]
    arrays = ckpt.flat_arrays()
    payload = b"".join(
        np.ascontiguousarray(value, dtype=dtype).tobytes() for value in arrays.values()
    )
    manifest = {
        "version": ckpt.version,
        "iteration": int(ckpt.iteration),
        "adam_step": int(ckpt.adam.step),
        "dtype": ckpt.dtype,
        "field_config": dataclasses.asdict(ckpt.field_config),
        "train_config": dataclasses.asdict(ckpt.train_config),
        "rng_state": ckpt.rng_state,
        "arrays": [{"name": name, "shape": list(value.shape)} for name, value in arrays.items()],
        "payload_bytes": len(payload),
    }
    text = yaml.safe_dump(manifest, sort_keys=False).encode("utf-8")
    return MAGIC + _LENGTH.pack(len(text)) + text + payload


def split_checkpoint(blob: bytes) -> tuple[dict[str, Any], bytes]:
    """Manifest and raw payload of an encoded checkpoint."""
    start = len(MAGIC) + _LENGTH.size
    if len(blob) < start:
        raise CheckpointTruncatedError(f"file ends inside the header ({len(blob)} bytes)")
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointVersionError(f"not a checkpoint of format version {FORMAT_VERSION}")
    (length,) = _LENGTH.unpack(blob[len(MAGIC) : start])
    if len(blob) < start + length:
        raise CheckpointTruncatedError("file ends inside the manifest")
    try:
        manifest = yaml.safe_load(blob[start : start + length].decode("utf-8"))
    except (UnicodeDecodeError, yaml.YAMLError) as error:
        raise CheckpointError(f"unreadable manifest: {error}") from error
    if not isinstance(manifest, dict):
        raise CheckpointError("manifest is not a mapping")
    return manifest, blob[start + length :]


def _expected_shapes(field_cfg: FieldConfig, dtype: Any) -> dict[str, tuple[int, ...]]:
    shapes = jax.eval_shape(lambda key: init_params(key, field_cfg, dtype), jax.random.PRNGKey(0))
    params = {name: tuple(s.shape) for name, s in flat_params(shapes).items()}
    return {
        f"{group}__{name}": shape for group in _GROUPS for name, shape in params.items()
    }


def decode_checkpoint(blob: bytes) -> Checkpoint:
    manifest, payload = split_checkpoint(blob)
    if manifest.get("version") != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint version {manifest.get('version')}, expected {FORMAT_VERSION}"
        )
    try:
        dtype_name = manifest["dtype"]
        dtype = _DTYPES[dtype_name]
        entries = [(entry["name"], tuple(entry["shape"])) for entry in manifest["arrays"]]
        payload_bytes = int(manifest["payload_bytes"])
        field_cfg = FieldConfig(**manifest["field_config"])
        train_cfg = TrainConfig(**manifest["train_config"])
    except (KeyError, TypeError) as error:
        raise CheckpointError(f"incomplete manifest: {error}") from error
    except (ConfigError, DomainError) as error:
        raise CheckpointError(f"invalid configuration in manifest: {error}") from error

    itemsize = np.dtype(dtype).itemsize
    if sum(math.prod(shape) for _, shape in entries) * itemsize != payload_bytes:
        raise CheckpointShapeError("array shapes do not add up to the payload size")
    if len(payload) < payload_bytes:
        raise CheckpointTruncatedError(
            f"payload has {len(payload)} of {payload_bytes} bytes"
        )
    expected = _expected_shapes(field_cfg, jnp.float32)
    found = dict(entries)
    if found != expected:
        wrong = sorted(
            name for name in set(found) | set(expected) if found.get(name) != expected.get(name)
        )
        raise CheckpointShapeError(f"arrays do not match the field config: {', '.join(wrong)}")

    arrays: dict[str, Any] = {}
    offset = 0
    jax_dtype = jnp.float64 if dtype_name == "float64" else jnp.float32
    for name, shape in entries:
        count = math.prod(shape)
        values = np.frombuffer(payload, dtype=dtype, count=count, offset=offset)
        arrays[name] = jnp.asarray(values.reshape(shape), dtype=jax_dtype)
        offset += count * itemsize
    tree = nested_params(arrays)
    return Checkpoint(
        field_config=field_cfg,
        train_config=train_cfg,
        params=tree["params"],
        adam=AdamState(mu=tree["adam_mu"], nu=tree["adam_nu"], step=int(manifest["adam_step"])),
        iteration=int(manifest["iteration"]),
        rng_state=manifest["rng_state"],
        version=FORMAT_VERSION,
    )


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(ckpt))
    logger.info("wrote checkpoint %s (iteration %d)", path, ckpt.iteration)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())
