"""
Corpus manifest: a JSON header line followed by one JSON record per line.

The header carries the label map (clean = 0, noise names = 1..N), the STFT
and feature settings, per-bin normalization statistics and the SNR set.
Record paths are relative to the manifest file.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Set, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..dsp.spectral import FeatureConfig, NormalizationStats, StftConfig
from ..errors import ManifestError

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = "nitcg-manifest"
MANIFEST_VERSION = 1
CLEAN_DOMAIN = "clean"

SplitMode = Literal["paired", "disjoint"]


class UtteranceRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    path: str
    domain: str
    source_id: Optional[str] = None
    snr_db: Optional[float] = None
    speaker_id: str = ""
    split: Literal["train", "test"] = "train"
    in_clean_pool: bool = False
    condition: Literal["train", "matched", "mismatched"] = "train"
    noise_path: Optional[str] = None
    offset_samples: Optional[int] = None
    gain: float = 1.0

    @property
    def is_noisy(self) -> bool:
        return self.domain != CLEAN_DOMAIN


class ManifestHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format: str = MANIFEST_FORMAT
    version: int = MANIFEST_VERSION
    label_map: Dict[str, int]
    stft: StftConfig = Field(default_factory=StftConfig)
    features: FeatureConfig = Field(default_factory=FeatureConfig)
    normalization: Optional[NormalizationStats] = None
    snrs: List[float]
    split_mode: SplitMode = "paired"
    unseen_noises: List[str] = Field(default_factory=list)
    rendered: bool = True
    seed: int = 0


@dataclass
class CorpusManifest:
    header: ManifestHeader
    records: List[UtteranceRecord]
    root: Path = field(default_factory=Path.cwd)

    @property
    def n_noise(self) -> int:
        return len(self.header.label_map) - 1

    @property
    def noise_names(self) -> List[str]:
        ranked = sorted(self.header.label_map.items(), key=lambda item: item[1])
        return [name for name, index in ranked if index > 0]

    def label_index(self, record: UtteranceRecord) -> int:
        return self.header.label_map[record.domain]

    def resolve(self, relative: str) -> Path:
        return self.root / relative

    def by_id(self) -> Dict[str, UtteranceRecord]:
        return {r.id: r for r in self.records}

    def clean_pool(self) -> List[UtteranceRecord]:
        """Training utterances of P_S"""
        return [r for r in self.records if not r.is_noisy and r.split == "train" and r.in_clean_pool]

    def noisy_pool(self) -> List[UtteranceRecord]:
        """Training utterances of P_Y"""
        return [r for r in self.records if r.is_noisy and r.split == "train"]

    def noisy_records(self, split: Optional[str] = None) -> List[UtteranceRecord]:
        return [r for r in self.records if r.is_noisy and (split is None or r.split == split)]


def write_manifest(manifest: CorpusManifest, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [manifest.header.model_dump_json()]
    lines.extend(record.model_dump_json() for record in manifest.records)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_manifest(path: Union[str, Path]) -> CorpusManifest:
    path = Path(path)
    try:
        lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    except OSError as exc:
        raise ManifestError(f"{path}: cannot read manifest ({exc})") from exc
    if not lines:
        raise ManifestError(f"{path}: empty manifest")
    try:
        header = ManifestHeader.model_validate(json.loads(lines[0]))
    except (json.JSONDecodeError, ValidationError) as exc:
        raise ManifestError(f"{path}: invalid manifest header ({exc})") from exc
    if header.format != MANIFEST_FORMAT or header.version != MANIFEST_VERSION:
        raise ManifestError(f"{path}: unsupported manifest {header.format} v{header.version}")

    records = []
    failures = []
    for number, line in enumerate(lines[1:], start=2):
        try:
            records.append(UtteranceRecord.model_validate(json.loads(line)))
        except (json.JSONDecodeError, ValidationError) as exc:
            failures.append(f"line {number}: {exc}")
    if failures:
        raise ManifestError(f"{path}: {len(failures)} invalid records", failures=failures)
    return CorpusManifest(header=header, records=records, root=path.parent.resolve())


class ValidationIssue(BaseModel):
    record_id: Optional[str] = None
    check: str
    message: str


class ValidationReport(BaseModel):
    passed: bool
    issues: List[ValidationIssue] = Field(default_factory=list)

    def checks_failed(self) -> Set[str]:
        return {issue.check for issue in self.issues}


def validate_manifest(manifest: CorpusManifest, check_files: bool = True) -> ValidationReport:
    """Check the manifest invariants; failures are reported, never raised"""
    issues: List[ValidationIssue] = []
    header = manifest.header
    label_map = header.label_map

    if label_map.get(CLEAN_DOMAIN) != 0:
        issues.append(ValidationIssue(check="label_map", message="clean must map to index 0"))
    noise_indices = sorted(index for name, index in label_map.items() if name != CLEAN_DOMAIN)
    if noise_indices != list(range(1, len(label_map))):
        issues.append(ValidationIssue(check="label_map", message=f"noise indices must be 1..N, got {noise_indices}"))
    overlap = set(header.unseen_noises) & set(label_map)
    if overlap:
        issues.append(ValidationIssue(check="label_map", message=f"unseen noises inside the label map: {sorted(overlap)}"))

    seen: Set[str] = set()
    clean_ids = {r.id for r in manifest.records if not r.is_noisy}
    snrs = set(header.snrs)
    for record in manifest.records:
        if record.id in seen:
            issues.append(ValidationIssue(record_id=record.id, check="unique_id", message="duplicate record id"))
        seen.add(record.id)
        if record.is_noisy:
            known = label_map if record.condition != "mismatched" else set(header.unseen_noises)
            if record.domain not in known or record.domain == CLEAN_DOMAIN:
                issues.append(
                    ValidationIssue(record_id=record.id, check="noise_name", message=f"unknown noise type {record.domain!r}")
                )
            if record.snr_db not in snrs:
                issues.append(
                    ValidationIssue(record_id=record.id, check="snr", message=f"SNR {record.snr_db} not in {sorted(snrs)}")
                )
            if record.source_id not in clean_ids:
                issues.append(
                    ValidationIssue(record_id=record.id, check="source", message=f"unknown source {record.source_id!r}")
                )
        if check_files and header.rendered and not manifest.resolve(record.path).is_file():
            issues.append(ValidationIssue(record_id=record.id, check="file_exists", message=f"missing file {record.path}"))

    if header.split_mode == "disjoint":
        pool = {r.id for r in manifest.clean_pool()}
        sources = {r.source_id for r in manifest.noisy_pool()}
        for shared in sorted(pool & sources):
            issues.append(
                ValidationIssue(record_id=shared, check="disjointness", message="clean-pool utterance is also a noisy source")
            )

    report = ValidationReport(passed=not issues, issues=issues)
    if issues:
        logger.warning("Manifest validation found %d issue(s)", len(issues))
    return report


def speaker_held_out(manifest: CorpusManifest) -> Set[str]:
    """Speakers that appear only in the test split"""
    train = {r.speaker_id for r in manifest.records if r.split == "train"}
    test = {r.speaker_id for r in manifest.records if r.split == "test"}
    return test - train
