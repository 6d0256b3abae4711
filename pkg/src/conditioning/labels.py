"""
One-hot target-domain labels and the extended features they condition.

Row convention: the N+1 label rows come first (index 0 = clean, 1..N = noise
types in label-map order), followed by the F feature rows.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ..autodiff import DiffTensor, concat
from ..errors import LabelDimensionError, ShapeError

CLEAN_INDEX = 0


@dataclass(frozen=True, eq=False)
class DomainLabel:
    vec: np.ndarray
    n_noise: int

    def __post_init__(self):
        vec = np.asarray(self.vec, dtype=np.float32).reshape(-1)
        if vec.shape[0] != self.n_noise + 1:
            raise LabelDimensionError(f"label has {vec.shape[0]} entries, expected {self.n_noise + 1}")
        object.__setattr__(self, "vec", vec)

    @property
    def dim(self) -> int:
        return self.n_noise + 1

    @property
    def index(self) -> int:
        return int(np.argmax(self.vec))

    @property
    def is_clean(self) -> bool:
        return self.index == CLEAN_INDEX

    def is_one_hot(self) -> bool:
        return bool(np.sum(self.vec == 1.0) == 1 and np.sum(self.vec == 0.0) == self.dim - 1)


@dataclass
class ExtendedFeature:
    """(N+1+F)×T matrix: label rows on top of the feature rows"""

    matrix: np.ndarray
    n_noise: int

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2:
            raise ShapeError(f"extended feature must be 2-D, got shape {self.matrix.shape}")
        if self.matrix.shape[0] <= self.n_label_rows:
            raise ShapeError(f"extended feature has {self.matrix.shape[0]} rows, needs more than {self.n_label_rows}")

    @property
    def n_label_rows(self) -> int:
        return self.n_noise + 1

    @property
    def n_feature_rows(self) -> int:
        return self.matrix.shape[0] - self.n_label_rows

    @property
    def n_frames(self) -> int:
        return self.matrix.shape[1]

    @property
    def label_rows(self) -> np.ndarray:
        return self.matrix[: self.n_label_rows]

    @property
    def features(self) -> np.ndarray:
        return self.matrix[self.n_label_rows :]


def make_label(domain_index: int, n_noise: int) -> DomainLabel:
    if n_noise < 0:
        raise LabelDimensionError(f"number of noise types must be non-negative, got {n_noise}")
    if not 0 <= domain_index <= n_noise:
        raise LabelDimensionError(f"domain index {domain_index} outside 0..{n_noise}")
    vec = np.zeros(n_noise + 1, dtype=np.float32)
    vec[domain_index] = 1.0
    return DomainLabel(vec=vec, n_noise=n_noise)


def append_label(features: np.ndarray, label: DomainLabel) -> ExtendedFeature:
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2 or features.shape[1] < 1:
        raise ShapeError(f"features must be F×T with T ≥ 1, got shape {features.shape}")
    rows = np.repeat(label.vec[:, None], features.shape[1], axis=1)
    return ExtendedFeature(np.concatenate([rows, features], axis=0), label.n_noise)


def replace_label(ext: ExtendedFeature, new_label: DomainLabel) -> ExtendedFeature:
    if new_label.n_noise != ext.n_noise:
        raise LabelDimensionError(f"label dimension {new_label.dim} does not match extended feature ({ext.n_label_rows})")
    matrix = ext.matrix.copy()
    matrix[: ext.n_label_rows] = new_label.vec[:, None]
    return ExtendedFeature(matrix, ext.n_noise)


def split_label(ext: ExtendedFeature) -> Tuple[np.ndarray, np.ndarray]:
    """(features, label_rows); predicted label rows come back as produced"""
    return ext.features.copy(), ext.label_rows.copy()


# --- Batched helpers (B×1×R×T images) ---


def label_block(indices: Sequence[int], n_noise: int, n_frames: int, dtype=np.float32) -> np.ndarray:
    """B×1×(N+1)×T block of broadcast one-hot rows"""
    indices = np.asarray(indices, dtype=np.int64)
    if np.any(indices < 0) or np.any(indices > n_noise):
        raise LabelDimensionError(f"domain indices {indices.tolist()} outside 0..{n_noise}")
    block = np.zeros((indices.shape[0], 1, n_noise + 1, n_frames), dtype=dtype)
    block[np.arange(indices.shape[0]), 0, indices, :] = 1.0
    return block


def append_label_batch(features: np.ndarray, indices: Sequence[int], n_noise: int) -> np.ndarray:
    """B×F×T features → B×1×(N+1+F)×T extended images"""
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 3:
        raise ShapeError(f"batched features must be B×F×T, got shape {features.shape}")
    if len(indices) != features.shape[0]:
        raise ShapeError(f"{len(indices)} labels for a batch of {features.shape[0]}")
    block = label_block(indices, n_noise, features.shape[2])
    return np.concatenate([block, features[:, None]], axis=2)


def replace_label_rows(x: DiffTensor, indices: Sequence[int], n_noise: int) -> DiffTensor:
    """Overwrite the label rows of a B×1×R×T tensor; gradients reach the feature rows only"""
    n_rows = n_noise + 1
    if x.ndim != 4 or x.shape[2] <= n_rows:
        raise LabelDimensionError(f"tensor of shape {x.shape} cannot carry {n_rows} label rows")
    block = DiffTensor(label_block(indices, n_noise, x.shape[3], dtype=x.dtype), dtype=x.dtype)
    return concat([block, x[:, :, n_rows:, :]], axis=2)


def split_label_rows(x, n_noise: int):
    """(features, label_rows) of a B×1×R×T tensor or array"""
    n_rows = n_noise + 1
    return x[:, :, n_rows:, :], x[:, :, :n_rows, :]


def validate_label_batch(batch: np.ndarray, n_noise: int) -> None:
    """Every ground-truth label in a B×1×R×T batch is one-hot and constant over frames"""
    batch = np.asarray(batch)
    n_rows = n_noise + 1
    if batch.ndim != 4 or batch.shape[1] != 1:
        raise ShapeError(f"expected a B×1×R×T batch, got shape {batch.shape}")
    if batch.shape[2] <= n_rows:
        raise LabelDimensionError(f"batch has {batch.shape[2]} rows, cannot carry {n_rows} label rows")
    labels = batch[:, 0, :n_rows, :]
    binary = np.all((labels == 0.0) | (labels == 1.0))
    one_per_frame = np.all(labels.sum(axis=1) == 1.0)
    constant = np.all(labels == labels[:, :, :1])
    if not (binary and one_per_frame and constant):
        raise LabelDimensionError(f"batch label rows are not constant one-hot vectors of dimension {n_rows}")
