"""
STFT analysis/synthesis with the 32 ms / 16 ms setup, noisy-phase
reconstruction and the log-magnitude feature transform handed to the models.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.signal import check_COLA, get_window

from ..errors import ConfigError, ShapeError
from .audio_io import DEFAULT_SAMPLE_RATE, Waveform


class StftConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    sample_rate: int = DEFAULT_SAMPLE_RATE
    frame_ms: float = 32.0
    hop_ms: float = 16.0
    fft_size: int = 512
    window: str = "hann"

    @model_validator(mode="after")
    def _check_lengths(self):
        if self.sample_rate <= 0 or self.frame_ms <= 0 or self.hop_ms <= 0:
            raise ValueError("sample_rate, frame_ms and hop_ms must be positive")
        if self.hop_length > self.frame_length:
            raise ValueError(f"hop ({self.hop_length}) must not exceed frame ({self.frame_length})")
        if self.fft_size < self.frame_length:
            raise ValueError(f"fft_size ({self.fft_size}) must be at least the frame length ({self.frame_length})")
        return self

    @property
    def frame_length(self) -> int:
        return int(round(self.sample_rate * self.frame_ms / 1000.0))

    @property
    def hop_length(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def analysis_window(self) -> np.ndarray:
        # periodic (DFT-even) window
        return get_window(self.window, self.frame_length, fftbins=True)


class FeatureConfig(BaseModel):
    """How magnitudes become model features"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    log_compress: bool = True
    floor: float = Field(default=1e-5, gt=0)
    clip_sigma: float = Field(default=4.0, gt=0)


class NormalizationStats(BaseModel):
    """Per-bin mean/std of the (log-)magnitude features of a corpus"""

    model_config = ConfigDict(extra="forbid")

    mean: List[float]
    std: List[float]

    @model_validator(mode="after")
    def _check(self):
        if len(self.mean) != len(self.std):
            raise ValueError("mean and std must have the same length")
        if any(s <= 0 for s in self.std):
            raise ValueError("std values must be positive")
        return self

    @classmethod
    def identity(cls, n_bins: int) -> "NormalizationStats":
        return cls(mean=[0.0] * n_bins, std=[1.0] * n_bins)


@dataclass
class Spectrogram:
    magnitude: np.ndarray  # F×T, non-negative
    phase: np.ndarray  # F×T, radians in (-π, π]
    config: StftConfig = field(default_factory=StftConfig)
    num_samples: Optional[int] = None  # original length, set by stft
    centered: bool = False  # true only for stft output; istft then trims half a frame

    @property
    def n_frames(self) -> int:
        return self.magnitude.shape[1]


def _wrap_phase(phase: np.ndarray) -> np.ndarray:
    return np.where(phase <= -np.pi, phase + 2.0 * np.pi, phase)


def stft(wave: Waveform, config: Optional[StftConfig] = None) -> Spectrogram:
    """Centre-padded STFT; half a frame is reflected at both ends"""
    config = config or StftConfig(sample_rate=wave.sample_rate)
    if wave.sample_rate != config.sample_rate:
        raise ConfigError(f"waveform is {wave.sample_rate} Hz but STFT config expects {config.sample_rate} Hz")
    frame, hop = config.frame_length, config.hop_length
    samples = wave.samples
    num_samples = samples.shape[0]
    if num_samples < frame:
        samples = np.pad(samples, (0, frame - num_samples))
    half = frame // 2
    padded = np.pad(samples, (half, half), mode="reflect")
    n_frames = 1 + (padded.shape[0] - frame) // hop
    frames = np.lib.stride_tricks.sliding_window_view(padded, frame)[::hop][:n_frames]
    spectrum = np.fft.rfft(frames * config.analysis_window(), n=config.fft_size, axis=1).T
    return Spectrogram(
        magnitude=np.abs(spectrum),
        phase=_wrap_phase(np.angle(spectrum)),
        config=config,
        num_samples=num_samples,
        centered=True,
    )


def _check_overlap_add(config: StftConfig) -> None:
    window = config.analysis_window()
    if not check_COLA(window, config.frame_length, config.frame_length - config.hop_length):
        raise ConfigError(
            f"{config.window} window with frame {config.frame_length} and hop {config.hop_length} "
            "does not satisfy the constant-overlap-add condition"
        )


def istft(spec: Spectrogram) -> Waveform:
    """Weighted overlap-add inverse; centre padding is trimmed when present"""
    config = spec.config
    _check_overlap_add(config)
    frame, hop = config.frame_length, config.hop_length
    window = config.analysis_window()
    n_frames = spec.n_frames
    complex_spec = spec.magnitude * np.exp(1j * spec.phase)
    frames = np.fft.irfft(complex_spec.T, n=config.fft_size, axis=1)[:, :frame] * window

    length = frame + (n_frames - 1) * hop
    signal = np.zeros(length)
    norm = np.zeros(length)
    squared = window ** 2
    for t in range(n_frames):
        start = t * hop
        signal[start : start + frame] += frames[t]
        norm[start : start + frame] += squared
    signal = np.divide(signal, norm, out=np.zeros_like(signal), where=norm > 1e-10)

    if spec.centered:
        half = frame // 2
        signal = signal[half:]
        if spec.num_samples is not None:
            signal = signal[: spec.num_samples]
            if signal.shape[0] < spec.num_samples:
                signal = np.pad(signal, (0, spec.num_samples - signal.shape[0]))
    return Waveform(signal, config.sample_rate)


def reconstruct_with_noisy_phase(enhanced_mag: np.ndarray, noisy: Spectrogram) -> Waveform:
    """Invert an enhanced magnitude using the phase of the noisy input"""
    enhanced_mag = np.asarray(enhanced_mag, dtype=np.float64)
    if enhanced_mag.shape != noisy.magnitude.shape:
        raise ShapeError(f"enhanced magnitude {enhanced_mag.shape} does not match noisy spectrogram {noisy.magnitude.shape}")
    return istft(
        Spectrogram(
            magnitude=enhanced_mag,
            phase=noisy.phase,
            config=noisy.config,
            num_samples=noisy.num_samples,
            centered=noisy.centered,
        )
    )


def magnitude_to_features(magnitude: np.ndarray, features: FeatureConfig, stats: NormalizationStats) -> np.ndarray:
    """F×T magnitude → standardized (log-)magnitude features, float32"""
    mean, std = _stats_columns(stats, magnitude.shape[0])
    values = raw_feature_values(magnitude, features)
    return ((values - mean) / std).astype(np.float32)


def features_to_magnitude(feats: np.ndarray, features: FeatureConfig, stats: NormalizationStats) -> np.ndarray:
    """Inverse of magnitude_to_features with ±clip_sigma clipping"""
    mean, std = _stats_columns(stats, feats.shape[0])
    clipped = np.clip(np.asarray(feats, dtype=np.float64), -features.clip_sigma, features.clip_sigma)
    values = clipped * std + mean
    magnitude = np.exp(values) - features.floor if features.log_compress else values
    return np.maximum(magnitude, 0.0)


def raw_feature_values(magnitude: np.ndarray, features: FeatureConfig) -> np.ndarray:
    """Un-normalized feature values, used to accumulate corpus statistics"""
    return np.log(magnitude + features.floor) if features.log_compress else magnitude


def _stats_columns(stats: NormalizationStats, n_bins: int):
    if len(stats.mean) != n_bins:
        raise ShapeError(f"normalization stats cover {len(stats.mean)} bins, features have {n_bins}")
    return np.asarray(stats.mean)[:, None], np.asarray(stats.std)[:, None]
