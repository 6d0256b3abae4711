"""
Unpaired batch sampling from the clean pool (P_S) and the noisy pool (P_Y).

Every draw is a pure function of (seed, step), so batches can be prepared
ahead of time on another thread without changing results.
"""

import math
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..conditioning import CLEAN_INDEX, append_label_batch
from ..dsp import read_wav, stft
from ..dsp.spectral import magnitude_to_features
from ..errors import ManifestError
from .manifest import CorpusManifest, UtteranceRecord


class FeatureStore:
    """Normalized F×T features per record, computed once and cached"""

    def __init__(self, manifest: CorpusManifest):
        if manifest.header.normalization is None:
            raise ManifestError("manifest carries no normalization statistics (was it rendered?)")
        self.manifest = manifest
        self._cache: Dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def features(self, record: UtteranceRecord) -> np.ndarray:
        with self._lock:
            cached = self._cache.get(record.id)
        if cached is not None:
            return cached
        header = self.manifest.header
        wave = read_wav(self.manifest.resolve(record.path), expected_rate=header.stft.sample_rate)
        values = magnitude_to_features(stft(wave, header.stft).magnitude, header.features, header.normalization)
        with self._lock:
            self._cache.setdefault(record.id, values)
        return values


@dataclass
class UnpairedBatch:
    s_features: np.ndarray  # B×F×C clean crops
    y_features: np.ndarray  # B×F×C noisy crops
    clean_ids: List[str]
    noisy_ids: List[str]
    y_labels: np.ndarray  # ground-truth noise index per noisy crop
    s_targets: np.ndarray  # target noise index tn per clean crop

    @property
    def batch_size(self) -> int:
        return self.s_features.shape[0]

    def baseline_images(self) -> Tuple[np.ndarray, np.ndarray]:
        """(s, y) as B×1×F×C images without label rows"""
        return self.s_features[:, None], self.y_features[:, None]

    def extended_images(self, n_noise: int) -> Dict[str, np.ndarray]:
        """s_tc, s_tn, y_tc and y_tn as B×1×(N+1+F)×C images"""
        clean = [CLEAN_INDEX] * self.batch_size
        return {
            "s_tc": append_label_batch(self.s_features, clean, n_noise),
            "s_tn": append_label_batch(self.s_features, self.s_targets, n_noise),
            "y_tc": append_label_batch(self.y_features, clean, n_noise),
            "y_tn": append_label_batch(self.y_features, self.y_labels, n_noise),
        }


def batch_rng(seed: int, step: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, step, stream])


def draw_unpaired_indices(n_clean: int, n_noisy: int, batch_size: int, seed: int, step: int) -> Tuple[np.ndarray, np.ndarray]:
    """Independent uniform draws from both pools; no pairing by content"""
    if n_clean < 1 or n_noisy < 1:
        raise ManifestError(f"both pools must be non-empty (clean {n_clean}, noisy {n_noisy})")
    rng = batch_rng(seed, step, 0)
    return rng.integers(0, n_clean, size=batch_size), rng.integers(0, n_noisy, size=batch_size)


def plan_epoch(n_clean: int, n_noisy: int, batch_size: int, seed: int, epoch: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Index pairs for one epoch: a fresh permutation of the larger pool split
    into batches, each matched with uniform draws from the smaller pool.
    """
    if n_clean < 1 or n_noisy < 1:
        raise ManifestError(f"both pools must be non-empty (clean {n_clean}, noisy {n_noisy})")
    larger = max(n_clean, n_noisy)
    steps = math.ceil(larger / batch_size)
    rng = np.random.default_rng([seed, epoch, 2])
    order = rng.permutation(larger)
    order = np.concatenate([order, order[: steps * batch_size - larger]])
    plan = []
    for step in range(steps):
        full = order[step * batch_size : (step + 1) * batch_size]
        other = rng.integers(0, min(n_clean, n_noisy), size=batch_size)
        plan.append((full, other) if n_clean >= n_noisy else (other, full))
    return plan


def steps_per_epoch(n_clean: int, n_noisy: int, batch_size: int) -> int:
    return math.ceil(max(n_clean, n_noisy) / batch_size)


def crop_frames(features: np.ndarray, length: int, rng: np.random.Generator) -> np.ndarray:
    """Random fixed-length crop; short utterances are reflect-padded first"""
    frames = features.shape[1]
    if frames < length:
        if frames == 1:
            features = np.repeat(features, length, axis=1)
        else:
            features = np.pad(features, ((0, 0), (0, length - frames)), mode="reflect")
        frames = length
    start = int(rng.integers(0, frames - length + 1))
    return features[:, start : start + length]


def sample_unpaired_batch(
    manifest: CorpusManifest,
    batch_size: int,
    crop_length: int,
    seed: int,
    step: int,
    store: Optional[FeatureStore] = None,
    indices: Optional[Tuple[Sequence[int], Sequence[int]]] = None,
) -> UnpairedBatch:
    """
    Clean and noisy crops drawn independently. `indices` fixes the pool
    members (as planned for an epoch); otherwise both are drawn uniformly.
    Crop positions and clean-path target labels come from rng(seed, step).
    """
    clean_pool, noisy_pool = manifest.clean_pool(), manifest.noisy_pool()
    if indices is None:
        clean_idx, noisy_idx = draw_unpaired_indices(len(clean_pool), len(noisy_pool), batch_size, seed, step)
    else:
        clean_idx, noisy_idx = np.asarray(indices[0]), np.asarray(indices[1])
    store = store or FeatureStore(manifest)
    rng = batch_rng(seed, step, 1)

    clean_records = [clean_pool[i] for i in clean_idx]
    noisy_records = [noisy_pool[i] for i in noisy_idx]
    s = np.stack([crop_frames(store.features(r), crop_length, rng) for r in clean_records])
    y = np.stack([crop_frames(store.features(r), crop_length, rng) for r in noisy_records])
    n_noise = manifest.n_noise
    targets = rng.integers(1, n_noise + 1, size=len(clean_records)) if n_noise > 0 else np.zeros(len(clean_records), int)
    return UnpairedBatch(
        s_features=s.astype(np.float32),
        y_features=y.astype(np.float32),
        clean_ids=[r.id for r in clean_records],
        noisy_ids=[r.id for r in noisy_records],
        y_labels=np.array([manifest.label_index(r) for r in noisy_records]),
        s_targets=targets,
    )
