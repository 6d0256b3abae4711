"""Deterministic synthetic corpus for smoke tests and demos"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from scipy.signal import butter, sosfilt

from ..dsp import DEFAULT_SAMPLE_RATE, Waveform, write_wav
from ..errors import ConfigError

# name → (filter type, cutoff Hz)
NOISE_DESIGNS: List[Tuple[str, str, Union[float, Tuple[float, float]]]] = [
    ("rumble", "lowpass", 400.0),
    ("hiss", "highpass", 3000.0),
    ("buzz", "bandpass", (800.0, 1600.0)),
    ("chatter", "bandpass", (300.0, 3000.0)),
    ("whine", "bandpass", (4000.0, 6000.0)),
]


@dataclass
class ToyCorpus:
    root: Path
    clean_files: List[Path] = field(default_factory=list)
    noise_files: List[Path] = field(default_factory=list)
    test_clean_files: List[Path] = field(default_factory=list)


def multitone_utterance(rng: np.random.Generator, n_samples: int, sample_rate: int) -> np.ndarray:
    """Harmonic tone with a syllable-rate envelope"""
    t = np.arange(n_samples) / sample_rate
    f0 = rng.uniform(110.0, 240.0)
    glide = 1.0 + 0.05 * np.sin(2.0 * np.pi * rng.uniform(0.5, 1.5) * t)
    phase = 2.0 * np.pi * np.cumsum(f0 * glide) / sample_rate
    tone = sum(np.sin(k * phase + rng.uniform(0, 2 * np.pi)) / k for k in range(1, 5))
    rate = rng.uniform(3.0, 5.0)
    envelope = 0.05 + 0.95 * 0.5 * (1.0 - np.cos(2.0 * np.pi * rate * t))
    signal = tone * envelope
    return 0.5 * signal / np.max(np.abs(signal))


def filtered_noise(rng: np.random.Generator, n_samples: int, sample_rate: int, kind: str, cutoff) -> np.ndarray:
    sos = butter(4, cutoff, btype=kind, fs=sample_rate, output="sos")
    noise = sosfilt(sos, rng.standard_normal(n_samples))
    return 0.1 * noise / np.sqrt(np.mean(noise ** 2))


def write_toy_corpus(
    directory: Union[str, Path],
    seed: int = 7,
    n_clean: int = 8,
    n_noise: int = 2,
    n_test: int = 0,
    duration_s: float = 1.2,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> ToyCorpus:
    """Write multi-tone "clean" utterances over two speakers and filtered-noise types"""
    if not 1 <= n_noise <= len(NOISE_DESIGNS):
        raise ConfigError(f"toy corpus supports 1..{len(NOISE_DESIGNS)} noise types, got {n_noise}")
    root = Path(directory)
    rng = np.random.default_rng(seed)
    n_samples = int(round(duration_s * sample_rate))
    corpus = ToyCorpus(root=root)

    for index in range(n_clean):
        speaker = f"spk{index % 2 + 1}"
        path = root / "clean" / speaker / f"utt{index:02d}.wav"
        write_wav(path, Waveform(multitone_utterance(rng, n_samples, sample_rate), sample_rate))
        corpus.clean_files.append(path)

    for name, kind, cutoff in NOISE_DESIGNS[:n_noise]:
        path = root / "noise" / f"{name}.wav"
        write_wav(path, Waveform(filtered_noise(rng, 3 * sample_rate, sample_rate, kind, cutoff), sample_rate))
        corpus.noise_files.append(path)

    for index in range(n_test):
        path = root / "clean_test" / "spk9" / f"test{index:02d}.wav"
        write_wav(path, Waveform(multitone_utterance(rng, n_samples, sample_rate), sample_rate))
        corpus.test_clean_files.append(path)
    return corpus
