# DSP Module
from .audio_io import DEFAULT_SAMPLE_RATE, Waveform, read_wav, write_wav
from .mixing import align_noise, measure_snr, mix_at_snr, scaled_noise, signal_power
from .spectral import (
    FeatureConfig,
    NormalizationStats,
    Spectrogram,
    StftConfig,
    features_to_magnitude,
    istft,
    magnitude_to_features,
    raw_feature_values,
    reconstruct_with_noisy_phase,
    stft,
)
