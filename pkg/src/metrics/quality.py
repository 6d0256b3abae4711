"""
Frame-based objective quality measures: segmental SNR, log-likelihood ratio,
weighted spectral slope, and the CSIG/CBAK/COVL composite regressions.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import LinAlgError, solve_toeplitz, toeplitz
from scipy.signal import get_window

from ..dsp import Waveform
from ..errors import ShapeError

logger = logging.getLogger(__name__)


class CompositeCoefficients(BaseModel):
    """Linear regressions; keys are intercept, llr, wss, pesq, seg_snr"""

    model_config = ConfigDict(extra="forbid")

    csig: Dict[str, float] = Field(default_factory=lambda: {"intercept": 3.093, "llr": -1.029, "pesq": 0.603, "wss": -0.009})
    cbak: Dict[str, float] = Field(default_factory=lambda: {"intercept": 1.634, "pesq": 0.478, "wss": -0.007, "seg_snr": 0.063})
    covl: Dict[str, float] = Field(default_factory=lambda: {"intercept": 1.594, "pesq": 0.805, "llr": -0.512, "wss": -0.007})


class MetricsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    frame_ms: float = 32.0
    hop_ms: float = 16.0
    seg_snr_min: float = -10.0
    seg_snr_max: float = 35.0
    energy_gate_db: float = -40.0
    lpc_order: int = Field(default=16, ge=1)
    llr_max: float = 2.0
    trim_fraction: float = Field(default=0.95, gt=0, le=1)
    wss_bands: int = Field(default=25, ge=2)
    wss_kmax: float = 20.0
    wss_klocmax: float = 1.0
    fft_size: int = 512
    coefficients: CompositeCoefficients = Field(default_factory=CompositeCoefficients)
    pesq_range: Tuple[float, float] = (-0.5, 4.5)
    composite_range: Tuple[float, float] = (1.0, 5.0)


DEFAULT_METRICS = MetricsConfig()


@dataclass
class FrameScores:
    """Per-frame values plus the number of frames skipped as degenerate"""

    values: np.ndarray
    skipped: int = 0

    def trimmed_mean(self, fraction: float) -> float:
        if self.values.size == 0:
            return float("nan")
        keep = max(1, int(round(fraction * self.values.size)))
        return float(np.mean(np.sort(self.values)[:keep]))


@dataclass
class CompositeScores:
    csig: float
    cbak: float
    covl: float


def _aligned(clean: Waveform, processed: Waveform) -> Tuple[np.ndarray, np.ndarray, int]:
    if clean.sample_rate != processed.sample_rate:
        raise ShapeError(f"sample rates differ: {clean.sample_rate} vs {processed.sample_rate}")
    length = min(len(clean), len(processed))
    if length == 0:
        raise ShapeError("clean and processed signals have no overlapping samples")
    return clean.samples[:length], processed.samples[:length], clean.sample_rate


def _frames(samples: np.ndarray, frame: int, hop: int) -> np.ndarray:
    if samples.shape[0] < frame:
        samples = np.pad(samples, (0, frame - samples.shape[0]))
    return sliding_window_view(samples, frame)[::hop]


def _frame_setup(config: MetricsConfig, sample_rate: int) -> Tuple[int, int, np.ndarray]:
    frame = int(round(config.frame_ms * sample_rate / 1000.0))
    hop = int(round(config.hop_ms * sample_rate / 1000.0))
    return frame, hop, get_window("hann", frame, fftbins=False)


# --- Segmental SNR ---


def seg_snr_frames(clean: Waveform, processed: Waveform, config: MetricsConfig = DEFAULT_METRICS) -> np.ndarray:
    """Clamped per-frame SNR of the frames that pass the energy gate"""
    s, p, rate = _aligned(clean, processed)
    frame, hop, window = _frame_setup(config, rate)
    clean_frames = _frames(s, frame, hop) * window
    error_frames = _frames(s - p, frame, hop) * window
    signal_energy = np.sum(clean_frames ** 2, axis=1)
    error_energy = np.sum(error_frames ** 2, axis=1)

    peak = np.max(signal_energy)
    gate = peak * 10.0 ** (config.energy_gate_db / 10.0)
    voiced = (signal_energy > gate) & (signal_energy > 0)
    with np.errstate(divide="ignore"):
        ratio = np.where(error_energy > 0, signal_energy / np.where(error_energy > 0, error_energy, 1.0), np.inf)
        values = 10.0 * np.log10(ratio[voiced])
    return np.clip(values, config.seg_snr_min, config.seg_snr_max)


def seg_snr(clean: Waveform, processed: Waveform, config: MetricsConfig = DEFAULT_METRICS) -> float:
    """Mean of 10·log10(Σs²/Σ(s−ŝ)²) over voiced frames, each clamped to [−10, 35] dB"""
    values = seg_snr_frames(clean, processed, config)
    if values.size == 0:
        raise ShapeError("no frame of the clean signal passes the energy gate")
    return float(np.mean(values))


# --- Log-likelihood ratio ---


def autocorrelation(frame: np.ndarray, order: int) -> np.ndarray:
    full = np.correlate(frame, frame, mode="full")
    centre = frame.shape[0] - 1
    return full[centre : centre + order + 1]


def lpc_from_autocorrelation(r: np.ndarray) -> np.ndarray:
    """[1, −a_1, …, −a_p] solving the Yule-Walker equations"""
    coefficients = solve_toeplitz(r[:-1], r[1:])
    return np.concatenate([[1.0], -coefficients])


def llr_frames(clean: Waveform, processed: Waveform, config: MetricsConfig = DEFAULT_METRICS) -> FrameScores:
    s, p, rate = _aligned(clean, processed)
    frame, hop, window = _frame_setup(config, rate)
    order = config.lpc_order
    values, skipped = [], 0
    for clean_frame, processed_frame in zip(_frames(s, frame, hop) * window, _frames(p, frame, hop) * window):
        r_c = autocorrelation(clean_frame, order)
        r_p = autocorrelation(processed_frame, order)
        if r_c[0] <= 1e-12 or r_p[0] <= 1e-12:
            skipped += 1
            continue
        try:
            a_c = lpc_from_autocorrelation(r_c)
            a_p = lpc_from_autocorrelation(r_p)
        except (LinAlgError, ValueError):
            skipped += 1
            continue
        R_c = toeplitz(r_c)
        numerator = a_p @ R_c @ a_p
        denominator = a_c @ R_c @ a_c
        if not (denominator > 0 and numerator > 0):
            skipped += 1
            continue
        values.append(np.clip(np.log(numerator / denominator), 0.0, config.llr_max))
    if skipped:
        logger.debug("LLR skipped %d degenerate frame(s)", skipped)
    return FrameScores(np.asarray(values, dtype=np.float64), skipped)


def llr(clean: Waveform, processed: Waveform, config: MetricsConfig = DEFAULT_METRICS) -> float:
    """Mean of the smallest 95 % of per-frame LLR values"""
    return llr_frames(clean, processed, config).trimmed_mean(config.trim_fraction)


# --- Weighted spectral slope ---


def bark(frequency_hz: np.ndarray) -> np.ndarray:
    f = np.asarray(frequency_hz, dtype=np.float64)
    return 13.0 * np.arctan(0.00076 * f) + 3.5 * np.arctan((f / 7500.0) ** 2)


def critical_bandwidth(frequency_hz: np.ndarray) -> np.ndarray:
    f = np.asarray(frequency_hz, dtype=np.float64)
    return 25.0 + 75.0 * (1.0 + 1.4 * (f / 1000.0) ** 2) ** 0.69


def band_filters(n_bands: int, fft_size: int, sample_rate: int) -> np.ndarray:
    """Gaussian band shapes, centres equally spaced on the Bark scale up to Nyquist"""
    nyquist = sample_rate / 2.0
    grid = np.linspace(0.0, nyquist, 4096)
    z_grid = bark(grid)
    z_centres = (np.arange(n_bands) + 0.5) * z_grid[-1] / n_bands
    centres = np.interp(z_centres, z_grid, grid)
    widths = critical_bandwidth(centres)
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    return np.exp(-11.0 * ((freqs[None, :] - centres[:, None]) / widths[:, None]) ** 2)


def _nearest_peaks(energy: np.ndarray, slope: np.ndarray) -> np.ndarray:
    n_slopes = slope.shape[0]
    peaks = np.empty(n_slopes)
    for i in range(n_slopes):
        n = i
        if slope[i] > 0:
            while n < n_slopes and slope[n] > 0:
                n += 1
            peaks[i] = energy[n]
        else:
            while n >= 0 and slope[n] <= 0:
                n -= 1
            peaks[i] = energy[n + 1]
    return peaks


def wss_from_band_energies(
    clean_db: np.ndarray, processed_db: np.ndarray, kmax: float = 20.0, klocmax: float = 1.0
) -> float:
    """Distance for one frame given band energies in dB"""
    clean_db = np.asarray(clean_db, dtype=np.float64)
    processed_db = np.asarray(processed_db, dtype=np.float64)
    if clean_db.shape != processed_db.shape or clean_db.ndim != 1 or clean_db.shape[0] < 2:
        raise ShapeError("band energies must be two equal-length vectors of at least two bands")
    clean_slope = np.diff(clean_db)
    processed_slope = np.diff(processed_db)

    def weights(energy: np.ndarray, slope: np.ndarray) -> np.ndarray:
        body = energy[:-1]
        w_max = kmax / (kmax + np.max(energy) - body)
        w_loc = klocmax / (klocmax + _nearest_peaks(energy, slope) - body)
        return w_max * w_loc

    w = 0.5 * (weights(clean_db, clean_slope) + weights(processed_db, processed_slope))
    return float(np.sum(w * (clean_slope - processed_slope) ** 2) / np.sum(w))


def wss_frames(clean: Waveform, processed: Waveform, config: MetricsConfig = DEFAULT_METRICS) -> FrameScores:
    s, p, rate = _aligned(clean, processed)
    frame, hop, window = _frame_setup(config, rate)
    filters = band_filters(config.wss_bands, config.fft_size, rate)
    clean_frames = _frames(s, frame, hop) * window
    processed_frames = _frames(p, frame, hop) * window
    clean_power = np.abs(np.fft.rfft(clean_frames, n=config.fft_size, axis=1)) ** 2
    processed_power = np.abs(np.fft.rfft(processed_frames, n=config.fft_size, axis=1)) ** 2
    clean_db = 10.0 * np.log10(np.maximum(clean_power @ filters.T, 1e-10))
    processed_db = 10.0 * np.log10(np.maximum(processed_power @ filters.T, 1e-10))

    values, skipped = [], 0
    for index in range(clean_frames.shape[0]):
        if not np.any(clean_frames[index]):
            skipped += 1
            continue
        values.append(wss_from_band_energies(clean_db[index], processed_db[index], config.wss_kmax, config.wss_klocmax))
    return FrameScores(np.asarray(values, dtype=np.float64), skipped)


def wss(clean: Waveform, processed: Waveform, config: MetricsConfig = DEFAULT_METRICS) -> float:
    return wss_frames(clean, processed, config).trimmed_mean(config.trim_fraction)


# --- Composites ---


def _regress(coefficients: Dict[str, float], inputs: Dict[str, float]) -> float:
    value = coefficients.get("intercept", 0.0)
    for name, weight in coefficients.items():
        if name != "intercept":
            value += weight * inputs[name]
    return value


def composite_scores(
    llr_value: float,
    wss_value: float,
    seg_snr_value: float,
    pesq: Optional[float],
    config: MetricsConfig = DEFAULT_METRICS,
) -> Optional[CompositeScores]:
    """CSIG/CBAK/COVL clamped to [1, 5]; None when no PESQ score is available"""
    if pesq is None:
        return None
    inputs = {"llr": llr_value, "wss": wss_value, "seg_snr": seg_snr_value, "pesq": pesq}
    low, high = config.composite_range
    coefficients = config.coefficients
    return CompositeScores(
        csig=float(np.clip(_regress(coefficients.csig, inputs), low, high)),
        cbak=float(np.clip(_regress(coefficients.cbak, inputs), low, high)),
        covl=float(np.clip(_regress(coefficients.covl, inputs), low, high)),
    )
