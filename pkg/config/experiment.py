"""
Experiment configuration: one JSON document with a section per module,
patched by dotted `key=value` overrides from the command line.

    {"train": {"epochs": 1, "mode": "nit"}, "synth": {"snrs": [0, 5]}}
    --set train.epochs=3 --set losses.weights.lambda_idm=0
"""

import json
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.data.synthesis import SynthConfig
from src.dsp.spectral import FeatureConfig, StftConfig
from src.errors import ConfigError
from src.losses import LossOptions
from src.metrics.quality import MetricsConfig
from src.models import DiscriminatorSpec, GeneratorSpec
from src.training.trainer import TrainConfig

EFFECTIVE_CONFIG_NAME = "effective_config.json"


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    stft: StftConfig = Field(default_factory=StftConfig)
    features: FeatureConfig = Field(default_factory=FeatureConfig)
    generator: GeneratorSpec = Field(default_factory=GeneratorSpec)
    discriminator: DiscriminatorSpec = Field(default_factory=DiscriminatorSpec)
    losses: LossOptions = Field(default_factory=LossOptions)
    train: TrainConfig = Field(default_factory=TrainConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)


def parse_value(text: str) -> Any:
    """JSON literal when it parses, plain string otherwise"""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(document: Dict[str, Any], override: str) -> None:
    key, sep, value = override.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override must look like section.key=value, got {override!r}")
    parts = key.strip().split(".")
    node = document
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"override {key!r}: {part!r} is not a section")
        node = child
    node[parts[-1]] = parse_value(value.strip())


def load_experiment_config(
    path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()
) -> ExperimentConfig:
    document: Dict[str, Any] = {}
    if path is not None:
        try:
            document = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc})") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(document, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    for override in overrides:
        apply_override(document, override)
    try:
        return ExperimentConfig.model_validate(document)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def dump_experiment_config(config: ExperimentConfig) -> str:
    return json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def write_effective_config(config: ExperimentConfig, out_dir: Union[str, Path]) -> Path:
    path = Path(out_dir) / EFFECTIVE_CONFIG_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_experiment_config(config), encoding="utf-8")
    return path
