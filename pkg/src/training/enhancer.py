import logging
from pathlib import Path
from typing import Union

import numpy as np

from ..autodiff import DiffTensor, no_grad
from ..conditioning import CLEAN_INDEX, append_label, make_label
from ..dsp import Waveform, reconstruct_with_noisy_phase, stft
from ..dsp.spectral import features_to_magnitude, magnitude_to_features
from ..errors import SampleRateError
from ..models import Checkpoint, Generator, load_checkpoint

logger = logging.getLogger(__name__)


class Enhancer:
    """Read-only inference with the noisy-to-clean generator of a checkpoint"""

    def __init__(self, checkpoint: Checkpoint):
        self.metadata = checkpoint.metadata
        self.generator = Generator(self.metadata.generator)
        checkpoint.restore_model("G_YS", self.generator)
        self.generator.requires_grad_(False)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "Enhancer":
        return cls(load_checkpoint(path))

    @property
    def sample_rate(self) -> int:
        return self.metadata.stft.sample_rate

    def enhance(self, noisy: Waveform) -> Waveform:
        """
        stft → normalized log-magnitude → append tc (NIT mode) → G_YS →
        drop predicted label rows → de-normalize → noisy-phase inverse
        """
        meta = self.metadata
        if noisy.sample_rate != meta.stft.sample_rate:
            raise SampleRateError(f"input is {noisy.sample_rate} Hz, model expects {meta.stft.sample_rate} Hz")
        spec = stft(noisy, meta.stft)
        feats = magnitude_to_features(spec.magnitude, meta.features, meta.normalization)
        label_rows = meta.n_label_rows
        if label_rows:
            feats = append_label(feats, make_label(CLEAN_INDEX, meta.n_noise)).matrix
        with no_grad():
            out = self.generator(DiffTensor(feats[None, None])).data[0, 0]
        magnitude = features_to_magnitude(out[label_rows:].astype(np.float64), meta.features, meta.normalization)
        enhanced = reconstruct_with_noisy_phase(magnitude, spec)
        return Waveform(enhanced.samples[: len(noisy)], noisy.sample_rate)


def enhance(checkpoint: Checkpoint, noisy_wave: Waveform) -> Waveform:
    return Enhancer(checkpoint).enhance(noisy_wave)
