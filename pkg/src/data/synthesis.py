"""
Noisy-corpus synthesis: every clean source is mixed with every noise type at
every SNR. Output files are independent, so rendering fans out over a thread
pool; the manifest is assembled afterwards in job order.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from config.settings import settings

from ..dsp import Waveform, mix_at_snr, read_wav, stft, write_wav
from ..dsp.spectral import FeatureConfig, NormalizationStats, StftConfig, raw_feature_values
from ..errors import AudioFormatError, ManifestError
from .manifest import CLEAN_DOMAIN, CorpusManifest, ManifestHeader, SplitMode, UtteranceRecord, write_manifest

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
MANIFEST_NAME = "manifest.jsonl"


class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    snrs: List[float] = Field(default_factory=lambda: [-5.0, 0.0, 5.0], min_length=1)
    split_mode: SplitMode = "paired"
    seed: int = 0
    random_offset: bool = True
    peak_limit: float = Field(default=0.999, gt=0, le=1)


@dataclass
class _MixJob:
    index: int
    clean: UtteranceRecord
    noise_name: str
    noise_path: Path
    snr_db: float
    split: str
    condition: str


def snr_tag(snr_db: float) -> str:
    value = f"{abs(snr_db):g}".replace(".", "p")
    return f"m{value}dB" if snr_db < 0 else f"{value}dB"


def _unique_stems(files: Sequence[Path], kind: str) -> Dict[str, Path]:
    stems: Dict[str, Path] = {}
    for path in files:
        if path.stem in stems:
            raise ManifestError(f"duplicate {kind} name {path.stem!r}: {stems[path.stem]} and {path}")
        stems[path.stem] = path
    return dict(sorted(stems.items()))


def _relative(path: Path, root: Path) -> str:
    return Path(os.path.relpath(path.resolve(), root.resolve())).as_posix()


def _load_all(paths: Sequence[Path], sample_rate: int) -> Tuple[Dict[Path, Waveform], List[str]]:
    waves, failures = {}, []
    for path in paths:
        try:
            waves[path] = read_wav(path, expected_rate=sample_rate)
        except AudioFormatError as exc:
            failures.append(str(exc))
    return waves, failures


def feature_moments(wave: Waveform, stft_config: StftConfig, features: FeatureConfig) -> Tuple[np.ndarray, np.ndarray, int]:
    """Per-bin sum and sum of squares of the un-normalized features"""
    values = raw_feature_values(stft(wave, stft_config).magnitude, features)
    return values.sum(axis=1), np.square(values).sum(axis=1), values.shape[1]


def _reduce_moments(moments: List[Tuple[np.ndarray, np.ndarray, int]]) -> NormalizationStats:
    total = sum(m[0] for m in moments)
    total_sq = sum(m[1] for m in moments)
    frames = sum(m[2] for m in moments)
    mean = total / frames
    std = np.sqrt(np.maximum(total_sq / frames - mean ** 2, 0.0))
    return NormalizationStats(mean=mean.tolist(), std=np.maximum(std, 1e-6).tolist())


def synthesize_corpus(
    clean_files: Sequence[PathLike],
    noise_files: Sequence[PathLike],
    out_dir: PathLike,
    snrs: Sequence[float] = (-5.0, 0.0, 5.0),
    split_mode: SplitMode = "paired",
    seed: int = 0,
    test_clean_files: Sequence[PathLike] = (),
    unseen_noise_files: Sequence[PathLike] = (),
    render: bool = True,
    random_offset: bool = True,
    peak_limit: float = 0.999,
    stft_config: Optional[StftConfig] = None,
    feature_config: Optional[FeatureConfig] = None,
    threads: Optional[int] = None,
    show_progress: bool = False,
) -> CorpusManifest:
    """
    Mix clean sources with noise types at the given SNRs and write a manifest.

    Paired mode uses every training clean utterance both as a noisy source and
    as a clean-pool member. Disjoint mode sorts the clean ids and sends the
    first half to the noisy side and the second half to the clean pool.
    With render=False only the manifest is produced (no audio is read or written).
    """
    out_dir = Path(out_dir)
    stft_config = stft_config or StftConfig()
    feature_config = feature_config or FeatureConfig()
    snrs = [float(s) for s in snrs]
    if not clean_files:
        raise ManifestError("no clean files given")
    if not noise_files:
        raise ManifestError("no noise files given")
    if not snrs:
        raise ManifestError("no SNRs given")

    clean = _unique_stems([Path(p) for p in clean_files], "clean")
    test_clean = _unique_stems([Path(p) for p in test_clean_files], "test clean")
    noises = _unique_stems([Path(p) for p in noise_files], "noise")
    unseen = _unique_stems([Path(p) for p in unseen_noise_files], "unseen noise")
    if CLEAN_DOMAIN in noises or CLEAN_DOMAIN in unseen:
        raise ManifestError(f"{CLEAN_DOMAIN!r} is reserved and cannot name a noise type")
    if set(noises) & set(unseen):
        raise ManifestError(f"noise types both seen and unseen: {sorted(set(noises) & set(unseen))}")
    if set(clean) & set(test_clean):
        raise ManifestError(f"utterances in both train and test: {sorted(set(clean) & set(test_clean))}")

    ids = sorted(clean)
    if split_mode == "disjoint":
        if len(ids) < 2:
            raise ManifestError("disjoint split needs at least two clean utterances")
        sources, pool = ids[: len(ids) // 2], set(ids[len(ids) // 2 :])
    else:
        sources, pool = ids, set(ids)

    waves: Dict[Path, Waveform] = {}
    if render:
        all_paths = list(clean.values()) + list(test_clean.values()) + list(noises.values()) + list(unseen.values())
        waves, failures = _load_all(all_paths, stft_config.sample_rate)
        if failures:
            raise ManifestError(f"{len(failures)} input file(s) could not be read", failures=failures)

    out_dir.mkdir(parents=True, exist_ok=True)
    clean_records: Dict[str, UtteranceRecord] = {}
    for utt_id, path in clean.items():
        clean_records[utt_id] = UtteranceRecord(
            id=utt_id,
            path=_relative(path, out_dir),
            domain=CLEAN_DOMAIN,
            speaker_id=path.parent.name,
            split="train",
            in_clean_pool=utt_id in pool,
        )
    for utt_id, path in test_clean.items():
        clean_records[utt_id] = UtteranceRecord(
            id=utt_id, path=_relative(path, out_dir), domain=CLEAN_DOMAIN, speaker_id=path.parent.name, split="test", condition="matched"
        )

    jobs: List[_MixJob] = []
    for utt_id in sources:
        for name, noise_path in noises.items():
            for snr in snrs:
                jobs.append(_MixJob(len(jobs), clean_records[utt_id], name, noise_path, snr, "train", "train"))
    test_noises = [(name, path, "matched") for name, path in noises.items()]
    test_noises += [(name, path, "mismatched") for name, path in unseen.items()]
    for utt_id in test_clean:
        for name, noise_path, condition in test_noises:
            for snr in snrs:
                jobs.append(_MixJob(len(jobs), clean_records[utt_id], name, noise_path, snr, "test", condition))

    def run(job: _MixJob):
        relative = f"noisy/{job.split}/{job.noise_name}/{snr_tag(job.snr_db)}/{job.clean.id}.wav"
        record = UtteranceRecord(
            id=f"{job.clean.id}__{job.noise_name}__{snr_tag(job.snr_db)}",
            path=relative,
            domain=job.noise_name,
            source_id=job.clean.id,
            snr_db=job.snr_db,
            speaker_id=job.clean.speaker_id,
            split=job.split,
            condition=job.condition,
            noise_path=_relative(job.noise_path, out_dir),
        )
        if not render:
            return record, None
        clean_wave = waves[clean[job.clean.id] if job.split == "train" else test_clean[job.clean.id]]
        noise_wave = waves[job.noise_path]
        rng = np.random.default_rng([seed, job.index])
        offset = int(rng.integers(0, len(noise_wave))) if random_offset else 0
        mixture = mix_at_snr(clean_wave, noise_wave, job.snr_db, offset=offset)
        peak = float(np.max(np.abs(mixture.samples)))
        gain = peak_limit / peak if peak > peak_limit else 1.0
        rendered = Waveform(mixture.samples * gain, mixture.sample_rate)
        write_wav(out_dir / relative, rendered)
        record = record.model_copy(update={"offset_samples": offset, "gain": gain})
        moments = feature_moments(rendered, stft_config, feature_config) if job.split == "train" else None
        return record, moments

    workers = max(1, threads or settings.threads)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = list(tqdm(executor.map(run, jobs), total=len(jobs), desc="Mixing", disable=not show_progress))

    normalization = None
    if render:
        moments = [feature_moments(waves[clean[utt_id]], stft_config, feature_config) for utt_id in sorted(pool)]
        moments += [m for _, m in results if m is not None]
        normalization = _reduce_moments(moments)

    header = ManifestHeader(
        label_map={CLEAN_DOMAIN: 0, **{name: index for index, name in enumerate(noises, start=1)}},
        stft=stft_config,
        features=feature_config,
        normalization=normalization,
        snrs=snrs,
        split_mode=split_mode,
        unseen_noises=list(unseen),
        rendered=render,
        seed=seed,
    )
    records = [clean_records[k] for k in sorted(clean_records)] + [record for record, _ in results]
    manifest = CorpusManifest(header=header, records=records, root=out_dir.resolve())
    write_manifest(manifest, out_dir / MANIFEST_NAME)
    logger.info(
        "Synthesized %d noisy utterances from %d sources, %d noise types, %d SNRs",
        len(jobs),
        len(sources) + len(test_clean),
        len(noises) + len(unseen),
        len(snrs),
    )
    return manifest


def count_table(manifest: CorpusManifest) -> Dict[Tuple[str, str, float], int]:
    """(split, noise, snr) → number of noisy records"""
    counts: Dict[Tuple[str, str, float], int] = {}
    for record in manifest.noisy_records():
        key = (record.split, record.domain, record.snr_db)
        counts[key] = counts.get(key, 0) + 1
    return dict(sorted(counts.items()))
