from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import soundfile as sf

from ..errors import AudioFormatError, SampleRateError

DEFAULT_SAMPLE_RATE = 16000


@dataclass
class Waveform:
    """Time-domain audio; samples are float64 in [-1, 1] for PCM input"""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.shape[0]


def read_wav(path: Union[str, Path], expected_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    """Read a 16-bit PCM mono WAV; any other layout is rejected"""
    path = Path(path)
    try:
        info = sf.info(str(path))
    except (RuntimeError, OSError) as exc:
        raise AudioFormatError(f"{path}: unreadable audio ({exc})") from exc
    if info.format != "WAV" or info.subtype != "PCM_16":
        raise AudioFormatError(f"{path}: expected RIFF/PCM 16-bit WAV, got {info.format}/{info.subtype}")
    if info.channels != 1:
        raise AudioFormatError(f"{path}: expected mono audio, got {info.channels} channels")
    if expected_rate and info.samplerate != expected_rate:
        raise SampleRateError(f"{path}: sample rate {info.samplerate} Hz, expected {expected_rate} Hz")
    samples, rate = sf.read(str(path), dtype="float64", always_2d=False)
    return Waveform(samples, rate)


def write_wav(path: Union[str, Path], wave: Waveform) -> Path:
    """Write 16-bit PCM mono; samples are clipped to [-1, 1]"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), np.clip(wave.samples, -1.0, 1.0), samplerate=wave.sample_rate, subtype="PCM_16", format="WAV")
    return path
