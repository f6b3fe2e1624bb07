"""Named parameter arrays of the model and their binary checkpoint format.

Checkpoint layout (little-endian):

    magic b"PRNK" | version u32 | dtype tag u8 | parameter count u32
    per parameter: name length u16 | name utf-8 | rank u8 | dims u32 * rank | payload
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from pathrank.logic.errors import ArtifactFormatError
from pathrank.model.config import ModelConfig


if TYPE_CHECKING:
    from collections.abc import Iterator, Mapping
    from pathlib import Path

    from numpy.typing import DTypeLike, NDArray


MAGIC = b"PRNK"
VERSION = 1
INIT_STD = 0.02
_DTYPE_TAGS: dict[str, int] = {"float32": 4, "float64": 8}
_TAG_DTYPES = {tag: name for name, tag in _DTYPE_TAGS.items()}

type Shape = tuple[int, ...]


def _linear(prefix: str, n_in: int, n_out: int, *, bias: bool = True) -> dict[str, Shape]:
    shapes: dict[str, Shape] = {f"{prefix}.w": (n_in, n_out)}
    if bias:
        shapes[f"{prefix}.b"] = (n_out,)
    return shapes


def _norm(prefix: str, width: int) -> dict[str, Shape]:
    return {f"{prefix}.gamma": (width,), f"{prefix}.beta": (width,)}


def _attention(prefix: str, hidden: int) -> dict[str, Shape]:
    shapes: dict[str, Shape] = {}
    for part in ("q", "k", "v", "o"):
        shapes.update(_linear(f"{prefix}.{part}", hidden, hidden))
    return shapes


def _ffn(prefix: str, hidden: int, inner: int) -> dict[str, Shape]:
    return {**_linear(f"{prefix}.in", hidden, inner), **_linear(f"{prefix}.out", inner, hidden)}


def _layer(prefix: str, config: ModelConfig) -> dict[str, Shape]:
    return {
        **_attention(f"{prefix}.attn", config.hidden),
        **_norm(f"{prefix}.attn_ln", config.hidden),
        **_ffn(f"{prefix}.ffn", config.hidden, config.ffn_dim),
        **_norm(f"{prefix}.ffn_ln", config.hidden),
    }


def parameter_shapes(config: ModelConfig) -> dict[str, Shape]:
    """Every parameter name with its shape, in a fixed order."""
    hidden = config.hidden
    shapes: dict[str, Shape] = {
        "text.word": (config.vocab_size, hidden),
        "text.position": (config.max_text_positions, hidden),
        "text.segment": (2, hidden),
        **_norm("text.ln", hidden),
        **_linear("vis.proj", config.d_v, hidden),
        "vis.img": (1, hidden),
        "vis.pano": (config.n_max, hidden),
        **_linear("vis.spatial", 11, hidden, bias=False),
        **_norm("vis.ln", hidden),
    }
    for i in range(config.n_lang_layers):
        shapes.update(_layer(f"lang.{i}", config))
    for i in range(config.n_vis_layers):
        shapes.update(_layer(f"vis.{i}", config))
    for j in range(config.n_coattn_layers):
        for stream in ("lang", "vis"):
            prefix = f"coattn.{j}.{stream}"
            shapes.update(_attention(f"{prefix}.cross", hidden))
            shapes.update(_norm(f"{prefix}.cross_ln", hidden))
            shapes.update(_ffn(f"{prefix}.ffn", hidden, config.ffn_dim))
            shapes.update(_norm(f"{prefix}.ffn_ln", hidden))
    shapes.update(
        {
            **_linear("mlm.transform", hidden, hidden),
            **_norm("mlm.ln", hidden),
            **_linear("mlm.decoder", hidden, config.vocab_size),
            **_linear("region.transform", hidden, hidden),
            **_norm("region.ln", hidden),
            **_linear("region.decoder", hidden, config.n_classes),
            **_linear("align", hidden, 1),
            **_linear("nsp", hidden, 1),
            **_linear("score", hidden, 1, bias=False),
        },
    )
    return shapes


def truncated_normal(rng: np.random.Generator, shape: Shape, std: float) -> NDArray[np.float64]:
    """Normal draws re-sampled until every value lies within two standard deviations."""
    values = rng.normal(0.0, std, size=shape)
    outside = np.abs(values) > 2.0 * std
    while outside.any():
        values[outside] = rng.normal(0.0, std, size=int(outside.sum()))
        outside = np.abs(values) > 2.0 * std
    return values


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Immutable mapping from parameter name to array."""

    config: ModelConfig
    arrays: dict[str, NDArray[np.floating]]

    @classmethod
    def init(cls, config: ModelConfig, seed: int, dtype: DTypeLike = np.float32) -> ModelParams:
        """Truncated-normal weights (std 0.02), zero biases, unit layer-norm gains."""
        rng = np.random.default_rng(seed)
        arrays: dict[str, NDArray[np.floating]] = {}
        for name, shape in parameter_shapes(config).items():
            if name.endswith(".gamma"):
                value = np.ones(shape)
            elif name.endswith((".b", ".beta")):
                value = np.zeros(shape)
            else:
                value = truncated_normal(rng, shape, INIT_STD)
            arrays[name] = value.astype(dtype)
        return cls(config=config, arrays=arrays)

    def __getitem__(self, name: str) -> NDArray[np.floating]:
        """Array of one parameter."""
        return self.arrays[name]

    def __iter__(self) -> Iterator[str]:
        """Parameter names in checkpoint order."""
        return iter(self.arrays)

    def __len__(self) -> int:
        """Number of parameters."""
        return len(self.arrays)

    @property
    def dtype(self) -> np.dtype[np.floating]:
        """Float dtype shared by all arrays."""
        return next(iter(self.arrays.values())).dtype

    def astype(self, dtype: DTypeLike) -> ModelParams:
        """Copy converted to another float dtype."""
        return ModelParams(
            config=self.config,
            arrays={name: value.astype(dtype) for name, value in self.arrays.items()},
        )

    def replace(self, updates: Mapping[str, NDArray[np.floating]]) -> ModelParams:
        """Copy with some arrays swapped; shapes must match."""
        arrays = dict(self.arrays)
        for name, value in updates.items():
            if name not in arrays:
                raise KeyError(f"unknown parameter '{name}'")
            if value.shape != arrays[name].shape:
                raise ValueError(f"parameter '{name}' expects shape {arrays[name].shape}")
            arrays[name] = np.asarray(value, dtype=arrays[name].dtype)
        return ModelParams(config=self.config, arrays=arrays)

    def n_values(self) -> int:
        """Total number of scalar weights."""
        return sum(int(value.size) for value in self.arrays.values())


def encode_checkpoint(params: ModelParams) -> bytes:
    """Serialize parameters into the binary checkpoint layout."""
    dtype_name = params.dtype.name
    if dtype_name not in _DTYPE_TAGS:
        raise ArtifactFormatError(f"unsupported checkpoint dtype {dtype_name}")
    chunks = [MAGIC, struct.pack("<IBI", VERSION, _DTYPE_TAGS[dtype_name], len(params))]
    little = np.dtype(dtype_name).newbyteorder("<")
    for name, value in params.arrays.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", value.ndim))
        chunks.append(struct.pack(f"<{value.ndim}I", *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype=little).tobytes())
    return b"".join(chunks)


def decode_checkpoint(payload: bytes, config: ModelConfig) -> ModelParams:
    """Parse a binary checkpoint and check it against the expected parameter shapes."""
    if payload[:4] != MAGIC:
        raise ArtifactFormatError("checkpoint does not start with the PRNK magic")
    try:
        version, tag, count = struct.unpack_from("<IBI", payload, 4)
        offset = 4 + struct.calcsize("<IBI")
        if version != VERSION or tag not in _TAG_DTYPES:
            raise ArtifactFormatError(f"unsupported checkpoint version {version} or dtype {tag}")
        dtype = np.dtype(_TAG_DTYPES[tag]).newbyteorder("<")
        arrays: dict[str, NDArray[np.floating]] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", payload, offset)
            offset += 2
            name = payload[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", payload, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", payload, offset)
            offset += 4 * rank
            size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
            if offset + size > len(payload):
                raise ArtifactFormatError(f"checkpoint truncated inside parameter '{name}'")
            block = np.frombuffer(payload, dtype=dtype, count=size // dtype.itemsize, offset=offset)
            arrays[name] = block.reshape(dims).astype(dtype.newbyteorder("="))
            offset += size
    except struct.error as err:
        raise ArtifactFormatError(f"checkpoint is truncated: {err}") from err
    if offset != len(payload):
        raise ArtifactFormatError("checkpoint has trailing bytes")

    expected = parameter_shapes(config)
    if list(arrays) != list(expected):
        raise ArtifactFormatError("checkpoint parameters do not match the model config")
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise ArtifactFormatError(f"parameter '{name}' has shape {arrays[name].shape}")
    return ModelParams(config=config, arrays=arrays)


def save_checkpoint(params: ModelParams, path: Path) -> Path:
    """Write the checkpoint and its model config (as `<name>.json`) side by side."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(params))
    config_path = path.with_suffix(".json")
    config_path.write_text(
        json.dumps(params.config.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return config_path


def load_checkpoint(path: Path) -> ModelParams:
    """Read a checkpoint written by `save_checkpoint`."""
    config_path = path.with_suffix(".json")
    try:
        config = ModelConfig.from_dict(json.loads(config_path.read_text(encoding="utf-8")))
        payload = path.read_bytes()
    except (OSError, ValueError, TypeError) as err:
        raise ArtifactFormatError(f"cannot read checkpoint '{path}': {err}") from err
    return decode_checkpoint(payload, config)
