"""
Versioned binary checkpoint container.

Layout (little-endian):
    b"NITCG1" | u32 version | u32 n | n bytes UTF-8 JSON metadata
    | u32 tensor count | per tensor: u32 name length, name, u32 ndim,
    ndim × u32 dims, product(dims) × f32
"""

import json
import logging
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..autodiff import AdamState, Module
from ..dsp.spectral import FeatureConfig, NormalizationStats, StftConfig
from ..errors import CheckpointFormatError, LabelDimensionError
from .specs import DiscriminatorSpec, GeneratorSpec

logger = logging.getLogger(__name__)

MAGIC = b"NITCG1"
FORMAT_VERSION = 1


class AdamMetadata(BaseModel):
    model_config = ConfigDict(extra="forbid")

    beta1: float
    beta2: float
    eps: float
    step: int = Field(ge=0)


class CheckpointMetadata(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: str
    n_noise: int = Field(ge=0)
    label_map: Dict[str, int]
    stft: StftConfig
    features: FeatureConfig
    normalization: NormalizationStats
    generator: GeneratorSpec
    discriminator: DiscriminatorSpec
    epoch: int = Field(default=0, ge=0)
    global_step: int = Field(default=0, ge=0)
    train: Dict[str, Any] = Field(default_factory=dict)
    optimizers: Dict[str, AdamMetadata] = Field(default_factory=dict)

    @property
    def n_label_rows(self) -> int:
        return self.n_noise + 1 if self.mode == "nit" else 0


@dataclass
class Checkpoint:
    metadata: CheckpointMetadata
    tensors: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)

    @classmethod
    def capture(
        cls,
        metadata: CheckpointMetadata,
        models: Dict[str, Module],
        optimizers: Optional[Dict[str, AdamState]] = None,
    ) -> "Checkpoint":
        """Snapshot model parameters and optimizer buffers"""
        tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for model_name, model in models.items():
            for name, value in model.state_dict().items():
                tensors[f"{model_name}/{name}"] = value
        optimizer_meta = {}
        for model_name, state in (optimizers or {}).items():
            optimizer_meta[model_name] = AdamMetadata(beta1=state.beta1, beta2=state.beta2, eps=state.eps, step=state.step)
            for name in state.m:
                tensors[f"opt/{model_name}/m/{name}"] = state.m[name].copy()
                tensors[f"opt/{model_name}/v/{name}"] = state.v[name].copy()
        metadata = metadata.model_copy(update={"optimizers": optimizer_meta})
        return cls(metadata=metadata, tensors=tensors)

    def restore_model(self, model_name: str, model: Module) -> None:
        prefix = f"{model_name}/"
        state = {k[len(prefix):]: v for k, v in self.tensors.items() if k.startswith(prefix)}
        if not state:
            raise CheckpointFormatError(f"checkpoint holds no parameters for {model_name}")
        model.load_state_dict(state)

    def restore_optimizer(self, model_name: str, state: AdamState) -> None:
        meta = self.metadata.optimizers.get(model_name)
        if meta is None:
            raise CheckpointFormatError(f"checkpoint holds no optimizer state for {model_name}")
        state.beta1, state.beta2, state.eps, state.step = meta.beta1, meta.beta2, meta.eps, meta.step
        for name in state.m:
            try:
                m = self.tensors[f"opt/{model_name}/m/{name}"]
                v = self.tensors[f"opt/{model_name}/v/{name}"]
            except KeyError as exc:
                raise CheckpointFormatError(f"missing optimizer buffer {exc.args[0]}") from exc
            state.m[name] = m.astype(state.m[name].dtype, copy=True)
            state.v[name] = v.astype(state.v[name].dtype, copy=True)


def _write_u32(stream: BinaryIO, value: int) -> None:
    stream.write(struct.pack("<I", value))


def save_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = checkpoint.metadata.model_dump_json().encode("utf-8")
    with open(path, "wb") as stream:
        stream.write(MAGIC)
        _write_u32(stream, FORMAT_VERSION)
        _write_u32(stream, len(meta))
        stream.write(meta)
        _write_u32(stream, len(checkpoint.tensors))
        for name, value in checkpoint.tensors.items():
            encoded = name.encode("utf-8")
            array = np.ascontiguousarray(value, dtype="<f4")
            _write_u32(stream, len(encoded))
            stream.write(encoded)
            _write_u32(stream, array.ndim)
            for dim in array.shape:
                _write_u32(stream, dim)
            stream.write(array.tobytes())
    logger.debug("Saved checkpoint %s (%d tensors)", path, len(checkpoint.tensors))
    return path


class _Reader:
    def __init__(self, payload: bytes, path: Path):
        self.payload = payload
        self.offset = 0
        self.path = path

    def take(self, count: int) -> bytes:
        if self.offset + count > len(self.payload):
            raise CheckpointFormatError(f"{self.path}: truncated checkpoint")
        chunk = self.payload[self.offset : self.offset + count]
        self.offset += count
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path: Union[str, Path], expected_n_noise: Optional[int] = None) -> Checkpoint:
    """Read a checkpoint; `expected_n_noise` guards against label-dimension drift"""
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise CheckpointFormatError(f"{path}: cannot read checkpoint ({exc})") from exc
    reader = _Reader(payload, path)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointFormatError(f"{path}: not a NIT-CycleGAN checkpoint (bad magic)")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version}")
    try:
        metadata = CheckpointMetadata.model_validate(json.loads(reader.take(reader.u32()).decode("utf-8")))
    except (UnicodeDecodeError, json.JSONDecodeError, ValidationError) as exc:
        raise CheckpointFormatError(f"{path}: corrupt metadata block ({exc})") from exc

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(reader.u32()):
        try:
            name = reader.take(reader.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointFormatError(f"{path}: corrupt tensor name") from exc
        shape: List[int] = [reader.u32() for _ in range(reader.u32())]
        count = int(np.prod(shape)) if shape else 1
        tensors[name] = np.frombuffer(reader.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    if reader.offset != len(payload):
        raise CheckpointFormatError(f"{path}: {len(payload) - reader.offset} trailing bytes")

    if expected_n_noise is not None and metadata.n_noise != expected_n_noise:
        raise LabelDimensionError(
            f"{path}: checkpoint was trained with {metadata.n_noise} noise types "
            f"(label dimension {metadata.n_noise + 1}), session expects {expected_n_noise}"
        )
    return Checkpoint(metadata=metadata, tensors=tensors)
