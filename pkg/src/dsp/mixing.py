from typing import Optional

import numpy as np

from ..errors import ConfigError
from .audio_io import Waveform


def signal_power(samples: np.ndarray) -> float:
    return float(np.mean(np.square(samples, dtype=np.float64)))


def align_noise(noise: np.ndarray, length: int, offset: int = 0) -> np.ndarray:
    """Excerpt of `length` samples starting at `offset`, looping with wrap-around"""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape[0] == 0:
        raise ConfigError("noise signal is empty")
    index = (int(offset) + np.arange(length)) % noise.shape[0]
    return noise[index]


def random_offset(noise_length: int, rng: np.random.Generator) -> int:
    return int(rng.integers(0, noise_length)) if noise_length > 0 else 0


def scaled_noise(clean: Waveform, noise: Waveform, snr_db: float, offset: int = 0) -> np.ndarray:
    """Aligned noise scaled so that P_clean / P_noise equals `snr_db`"""
    if clean.sample_rate != noise.sample_rate:
        raise ConfigError(f"clean is {clean.sample_rate} Hz but noise is {noise.sample_rate} Hz")
    aligned = align_noise(noise.samples, len(clean), offset)
    p_clean = signal_power(clean.samples)
    p_noise = signal_power(aligned)
    if p_clean <= 0.0:
        raise ConfigError("clean signal has zero power")
    if p_noise <= 0.0:
        raise ConfigError("noise excerpt has zero power")
    alpha = np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    return alpha * aligned


def mix_at_snr(
    clean: Waveform,
    noise: Waveform,
    snr_db: float,
    offset: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> Waveform:
    """clean + α·noise at the requested SNR; a seeded `rng` picks a random noise offset"""
    if rng is not None:
        offset = random_offset(len(noise), rng)
    return Waveform(clean.samples + scaled_noise(clean, noise, snr_db, offset), clean.sample_rate)


def measure_snr(clean: np.ndarray, noisy: np.ndarray) -> float:
    """10·log10(P_clean / P_(noisy − clean))"""
    residual = np.asarray(noisy, dtype=np.float64) - np.asarray(clean, dtype=np.float64)
    return 10.0 * np.log10(signal_power(clean) / signal_power(residual))
