"""
PESQ is not computed by the toolkit itself. A provider turns a
(clean, degraded) pair into a score or None.

    cmd:<command line>   runs `<command> <clean.wav> <degraded.wav>`, reads a decimal from stdout
    csv:<path>           looks up a precomputed table with columns id, pesq and optionally system
    pesq:<wb|nb>         scores in-process with the `pesq` package (ITU-T P.862 / P.862.2)
    stub:<value>         returns a constant (tests and dry runs)
"""

import logging
import re
import shlex
import subprocess
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, Optional, Tuple

import pandas as pd

from ..dsp import read_wav
from ..errors import AudioFormatError, ConfigError, PesqProviderError

logger = logging.getLogger(__name__)

PESQ_RANGE: Tuple[float, float] = (-0.5, 4.5)
# P.862.2 wide-band MOS-LQO tops out slightly higher
WIDEBAND_PESQ_MAX = 4.64

_NUMBER = re.compile(r"[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")


def check_pesq_range(value: float, source: str, high: Optional[float] = None) -> float:
    low, high = PESQ_RANGE[0], high or PESQ_RANGE[1]
    if not (low <= value <= high):
        raise PesqProviderError(f"{source}: PESQ {value} outside [{low}, {high}]")
    return float(value)


class PesqProvider(ABC):
    name = "none"

    @abstractmethod
    def score(self, clean_path: Path, degraded_path: Path, utterance_id: str, system: str) -> Optional[float]:
        ...

    @property
    def available(self) -> bool:
        return True


class NullPesqProvider(PesqProvider):
    """No PESQ source: composites are omitted"""

    def score(self, clean_path, degraded_path, utterance_id, system):
        return None

    @property
    def available(self) -> bool:
        return False


class StubPesqProvider(PesqProvider):
    name = "stub"

    def __init__(self, value: float):
        self.value = check_pesq_range(value, "stub")

    def score(self, clean_path, degraded_path, utterance_id, system):
        return self.value


class CommandPesqProvider(PesqProvider):
    name = "cmd"

    def __init__(self, command: str, timeout: float = 120.0):
        self.argv = shlex.split(command)
        if not self.argv:
            raise ConfigError("empty PESQ command")
        self.timeout = timeout

    def score(self, clean_path, degraded_path, utterance_id, system):
        try:
            result = subprocess.run(
                [*self.argv, str(clean_path), str(degraded_path)],
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise PesqProviderError(f"{self.argv[0]}: {exc}") from exc
        if result.returncode != 0:
            raise PesqProviderError(f"{self.argv[0]} exited {result.returncode}: {result.stderr.strip()}")
        lines = [line for line in result.stdout.splitlines() if line.strip()]
        numbers = _NUMBER.findall(lines[-1]) if lines else []
        if not numbers:
            raise PesqProviderError(f"{self.argv[0]}: no score in output for {utterance_id}")
        return check_pesq_range(float(numbers[-1]), self.argv[0])


class PackagePesqProvider(PesqProvider):
    """In-process P.862 through the `pesq` package; wide-band needs 16 kHz, narrow-band 8 or 16 kHz"""

    name = "pesq"
    MODES = ("wb", "nb")

    def __init__(self, mode: str = "wb"):
        if mode not in self.MODES:
            raise ConfigError(f"pesq mode must be one of {', '.join(self.MODES)}, got {mode!r}")
        try:
            from pesq import pesq
        except ImportError as exc:
            raise ConfigError("the pesq package is not installed; use cmd:, csv: or stub: instead") from exc
        self.mode = mode
        self._pesq = pesq

    def score(self, clean_path, degraded_path, utterance_id, system):
        try:
            clean = read_wav(clean_path, expected_rate=0)
            degraded = read_wav(degraded_path, expected_rate=clean.sample_rate)
        except AudioFormatError as exc:
            raise PesqProviderError(f"pesq: {exc}") from exc
        if clean.sample_rate not in ((16000,) if self.mode == "wb" else (8000, 16000)):
            raise PesqProviderError(f"pesq {self.mode}: unsupported sample rate {clean.sample_rate} Hz")
        length = min(len(clean), len(degraded))
        try:
            value = self._pesq(clean.sample_rate, clean.samples[:length], degraded.samples[:length], self.mode)
        except Exception as exc:  # the package raises its own error types per failure
            raise PesqProviderError(f"pesq failed on {utterance_id}: {exc}") from exc
        return check_pesq_range(float(value), "pesq", WIDEBAND_PESQ_MAX if self.mode == "wb" else None)


class CsvPesqProvider(PesqProvider):
    name = "csv"

    def __init__(self, path: Path):
        self.path = Path(path)
        try:
            frame = pd.read_csv(self.path, dtype={"id": str})
        except (OSError, ValueError) as exc:
            raise PesqProviderError(f"{self.path}: cannot read PESQ table ({exc})") from exc
        if not {"id", "pesq"} <= set(frame.columns):
            raise PesqProviderError(f"{self.path}: PESQ table needs columns id and pesq")
        has_system = "system" in frame.columns
        self.scores: Dict[Tuple[str, str], float] = {}
        for row in frame.itertuples(index=False):
            key = (str(row.system) if has_system else "", str(row.id))
            self.scores[key] = check_pesq_range(float(row.pesq), str(self.path))

    def score(self, clean_path, degraded_path, utterance_id, system):
        value = self.scores.get((system, utterance_id))
        if value is None:
            value = self.scores.get(("", utterance_id))
        return value


def make_pesq_provider(source: Optional[str]) -> PesqProvider:
    if not source:
        return NullPesqProvider()
    kind, _, argument = source.partition(":")
    if kind == "cmd":
        return CommandPesqProvider(argument)
    if kind == "csv":
        return CsvPesqProvider(Path(argument))
    if kind == "pesq":
        return PackagePesqProvider(argument or "wb")
    if kind == "stub":
        try:
            return StubPesqProvider(float(argument))
        except ValueError as exc:
            raise ConfigError(f"stub PESQ value must be a number, got {argument!r}") from exc
    raise ConfigError(f"unknown PESQ source {source!r}; use cmd:, csv:, pesq: or stub:")
