"""
Evaluation of enhanced outputs against their clean references.

Every noisy record of a manifest yields one triple (clean, noisy, enhanced).
The unprocessed noisy file is always scored as the "Noisy" system. Each
(system, utterance) pair is independent and runs on a thread pool; tables are
reduced afterwards in sorted order so the output does not depend on timing.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from config.settings import settings

from ..data.manifest import CorpusManifest
from ..dsp import Waveform, read_wav
from ..errors import ConfigError, NitCycleGANError
from .pesq_provider import NullPesqProvider, PesqProvider
from .quality import DEFAULT_METRICS, MetricsConfig, composite_scores, llr_frames, seg_snr, wss_frames

logger = logging.getLogger(__name__)

NOISY_SYSTEM = "Noisy"
METRIC_COLUMNS = ["csig", "cbak", "covl", "pesq", "seg_snr", "llr", "wss"]
DISPLAY_NAMES = {
    "csig": "CSIG",
    "cbak": "CBAK",
    "covl": "COVL",
    "pesq": "PESQ",
    "seg_snr": "SegSNR",
    "llr": "LLR",
    "wss": "WSS",
}
ROW_COLUMNS = ["system", "id", "noise", "snr_db", "condition", *METRIC_COLUMNS, "llr_skipped", "wss_skipped", "note"]


@dataclass
class EvalItem:
    """One clean/noisy pair; enhanced versions are looked up per system"""

    id: str
    clean_path: Path
    noisy_path: Path
    noise: str
    snr_db: float
    condition: str
    gain: float = 1.0
    relative_path: str = ""


@dataclass
class EvaluationResult:
    rows: pd.DataFrame
    summary: pd.DataFrame
    by_condition: pd.DataFrame
    by_noise_snr: pd.DataFrame
    systems: List[str]
    pesq_available: bool
    notes: List[str] = field(default_factory=list)


def items_from_manifest(manifest: CorpusManifest, split: Optional[str] = None) -> List[EvalItem]:
    """Noisy records of a split (test when present, train otherwise) as evaluation items"""
    if split is None:
        split = "test" if manifest.noisy_records("test") else "train"
    clean = manifest.by_id()
    items = []
    for record in manifest.noisy_records(split):
        source = clean.get(record.source_id or "")
        if source is None:
            logger.warning("Skipping %s: clean source %s not in manifest", record.id, record.source_id)
            continue
        items.append(
            EvalItem(
                id=record.id,
                clean_path=manifest.resolve(source.path),
                noisy_path=manifest.resolve(record.path),
                noise=record.domain,
                snr_db=float(record.snr_db if record.snr_db is not None else math.nan),
                condition=record.condition,
                gain=record.gain,
                relative_path=record.path,
            )
        )
    return sorted(items, key=lambda item: item.id)


def system_output_path(system_dir: Path, item: EvalItem) -> Path:
    """`<dir>/<id>.wav`, falling back to the record's relative path under `<dir>`"""
    candidate = Path(system_dir) / f"{item.id}.wav"
    if candidate.exists() or not item.relative_path:
        return candidate
    mirrored = Path(system_dir) / item.relative_path
    return mirrored if mirrored.exists() else candidate


def _empty_row(system: str, item: EvalItem) -> Dict[str, object]:
    row: Dict[str, object] = {
        "system": system,
        "id": item.id,
        "noise": item.noise,
        "snr_db": item.snr_db,
        "condition": item.condition,
        "llr_skipped": 0,
        "wss_skipped": 0,
        "note": "",
    }
    row.update({name: math.nan for name in METRIC_COLUMNS})
    return row


def score_item(
    system: str,
    item: EvalItem,
    degraded_path: Path,
    provider: PesqProvider,
    config: MetricsConfig = DEFAULT_METRICS,
    sample_rate: int = 16000,
) -> Dict[str, object]:
    """Metrics for one (system, utterance) pair; failures become a note, not an exception"""
    row = _empty_row(system, item)
    try:
        clean = read_wav(item.clean_path, sample_rate)
        processed = read_wav(degraded_path, sample_rate)
    except (NitCycleGANError, OSError) as exc:
        row["note"] = str(exc)
        return row

    reference = Waveform(clean.samples * item.gain, clean.sample_rate)
    if len(reference) != len(processed):
        row["note"] = f"length mismatch: clean {len(reference)}, processed {len(processed)}; trimmed"
    try:
        llr_scores = llr_frames(reference, processed, config)
        wss_scores = wss_frames(reference, processed, config)
        row["seg_snr"] = seg_snr(reference, processed, config)
        row["llr"] = llr_scores.trimmed_mean(config.trim_fraction)
        row["wss"] = wss_scores.trimmed_mean(config.trim_fraction)
        row["llr_skipped"] = llr_scores.skipped
        row["wss_skipped"] = wss_scores.skipped
        pesq = provider.score(item.clean_path, degraded_path, item.id, system)
    except NitCycleGANError as exc:
        row["note"] = str(exc)
        return row

    if pesq is not None:
        row["pesq"] = pesq
        inputs = [row["llr"], row["wss"], row["seg_snr"]]
        if all(np.isfinite(v) for v in inputs):
            composites = composite_scores(row["llr"], row["wss"], row["seg_snr"], pesq, config)
            row.update(csig=composites.csig, cbak=composites.cbak, covl=composites.covl)
    return row


def _means(rows: pd.DataFrame, keys: List[str], columns: List[str]) -> pd.DataFrame:
    grouped = rows.groupby(keys, sort=False)[columns].mean()
    return grouped.reset_index()


def _display(frame: pd.DataFrame, columns: List[str]) -> pd.DataFrame:
    return frame.rename(columns={c: DISPLAY_NAMES[c] for c in columns})


def summarize(rows: pd.DataFrame, systems: Sequence[str]) -> Dict[str, pd.DataFrame]:
    """System × metric tables: overall, per condition (plus "all") and per noise × SNR"""
    columns = [c for c in METRIC_COLUMNS if rows[c].notna().any()]
    order = {name: index for index, name in enumerate(systems)}
    rows = rows.assign(_order=rows["system"].map(order)).sort_values(["_order", "id"], kind="mergesort")

    summary = _means(rows, ["system"], columns)
    by_condition = _means(rows, ["system", "condition"], columns)
    overall = summary.assign(condition="all")[["system", "condition", *columns]]
    by_condition = pd.concat([by_condition, overall], ignore_index=True)
    by_condition = by_condition.assign(_order=by_condition["system"].map(order)).sort_values(
        ["_order", "condition"], kind="mergesort"
    )
    by_noise_snr = _means(rows, ["system", "noise", "snr_db"], columns)
    by_noise_snr = by_noise_snr.assign(_order=by_noise_snr["system"].map(order)).sort_values(
        ["_order", "noise", "snr_db"], kind="mergesort"
    )
    return {
        "summary": _display(summary, columns).reset_index(drop=True),
        "by_condition": _display(by_condition.drop(columns="_order"), columns).reset_index(drop=True),
        "by_noise_snr": _display(by_noise_snr.drop(columns="_order"), columns).reset_index(drop=True),
    }


def evaluate_pairs(
    items: Sequence[EvalItem],
    systems: Optional[Dict[str, Union[str, Path]]] = None,
    provider: Optional[PesqProvider] = None,
    config: MetricsConfig = DEFAULT_METRICS,
    sample_rate: int = 16000,
    threads: Optional[int] = None,
    show_progress: bool = False,
) -> EvaluationResult:
    """
    Score every item for the implicit "Noisy" system and each named system
    directory. Aggregates are plain means of the per-utterance rows.
    """
    provider = provider or NullPesqProvider()
    systems = dict(systems or {})
    if NOISY_SYSTEM in systems:
        raise ConfigError(f"{NOISY_SYSTEM!r} is reserved for the unprocessed input")
    names = [NOISY_SYSTEM, *systems]
    items = sorted(items, key=lambda item: item.id)

    jobs = [(NOISY_SYSTEM, item, item.noisy_path) for item in items]
    for name, directory in systems.items():
        jobs.extend((name, item, system_output_path(Path(directory), item)) for item in items)

    def run(job):
        system, item, path = job
        return score_item(system, item, path, provider, config, sample_rate)

    workers = max(1, threads or settings.threads)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        rows = list(tqdm(executor.map(run, jobs), total=len(jobs), desc="Scoring", disable=not show_progress))

    frame = pd.DataFrame(rows, columns=ROW_COLUMNS)
    notes = [f"{r['system']}/{r['id']}: {r['note']}" for r in rows if r["note"]]
    for note in notes:
        logger.warning(note)
    if not provider.available:
        logger.info("No PESQ provider: PESQ and composite scores omitted")

    tables = summarize(frame, names)
    return EvaluationResult(
        rows=frame,
        summary=tables["summary"],
        by_condition=tables["by_condition"],
        by_noise_snr=tables["by_noise_snr"],
        systems=names,
        pesq_available=provider.available,
        notes=notes,
    )


def write_evaluation(
    result: EvaluationResult,
    out_dir: Union[str, Path],
    config: MetricsConfig = DEFAULT_METRICS,
    pesq_source: Optional[str] = None,
) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "per_utterance": out_dir / "per_utterance.csv",
        "summary": out_dir / "summary.csv",
        "by_condition": out_dir / "by_condition.csv",
        "by_noise_snr": out_dir / "by_noise_snr.csv",
        "header": out_dir / "report_header.json",
    }
    result.rows.to_csv(paths["per_utterance"], index=False)
    result.summary.to_csv(paths["summary"], index=False)
    result.by_condition.to_csv(paths["by_condition"], index=False)
    result.by_noise_snr.to_csv(paths["by_noise_snr"], index=False)
    header = {
        "systems": result.systems,
        "pesq_source": pesq_source,
        "composites": result.pesq_available,
        "metrics": config.model_dump(mode="json"),
    }
    paths["header"].write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths
