"""
Adversarial training schedule for baseline CycleGAN and NIT-CycleGAN.

Each step updates both discriminators first (adv1 + adv2, generator outputs
detached), then both generators on adv1 + λ_cyc·cyc + λ_idm·idm with the
discriminators frozen.
"""

import json
import logging
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from config.settings import settings

from ..autodiff import Adam, DiffTensor, no_grad
from ..conditioning import CLEAN_INDEX, replace_label_rows, validate_label_batch
from ..data import CorpusManifest, FeatureStore, UnpairedBatch, plan_epoch, sample_unpaired_batch, steps_per_epoch
from ..dsp.spectral import FeatureConfig, NormalizationStats, StftConfig
from ..errors import ConfigError, LabelDimensionError, ManifestError, NonFiniteLossError
from ..losses import (
    LossOptions,
    LossReport,
    LossWeights,
    adv1_discriminator_loss,
    adv1_generator_loss,
    adv2_discriminator_loss,
    compose_objectives,
    cycle_from_fakes,
    generator_objective,
    identity_loss,
)
from ..models import (
    Checkpoint,
    CheckpointMetadata,
    DiscriminatorSpec,
    GeneratorSpec,
    ModelSet,
    load_checkpoint,
    save_checkpoint,
)

logger = logging.getLogger(__name__)

Mode = Literal["baseline", "nit"]
LOSS_CSV = "losses.csv"
CHECKPOINT_DIR = "checkpoints"


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=600, ge=1)
    lr_g: float = Field(default=0.0002, ge=0)
    lr_d: float = Field(default=0.0001, ge=0)
    beta1: float = Field(default=0.5, gt=0, lt=1)
    beta2: float = Field(default=0.999, gt=0, lt=1)
    batch_size: int = Field(default=1, ge=1)
    crop_frames: int = Field(default=64, ge=1)
    seed: int = Field(default=0, ge=0)
    mode: Mode = "nit"
    checkpoint_every: int = Field(default=10, ge=1)  # epochs
    max_steps: Optional[int] = Field(default=None, ge=1)
    prefetch: bool = False
    validate_labels: bool = True


def model_rows(mode: str, n_bins: int, n_noise: int) -> int:
    return n_bins + n_noise + 1 if mode == "nit" else n_bins


@dataclass
class ExperimentState:
    """Everything needed to continue a run bit-exactly"""

    config: TrainConfig
    losses: LossOptions
    models: ModelSet
    optimizers: Dict[str, Adam]
    n_noise: int
    label_map: Dict[str, int]
    stft: StftConfig
    features: FeatureConfig
    normalization: NormalizationStats
    epoch: int = 0
    global_step: int = 0
    history: List[Dict[str, float]] = field(default_factory=list)

    @classmethod
    def create(
        cls,
        config: TrainConfig,
        losses: LossOptions,
        generator: GeneratorSpec,
        discriminator: DiscriminatorSpec,
        label_map: Dict[str, int],
        stft: StftConfig,
        features: FeatureConfig,
        normalization: NormalizationStats,
    ) -> "ExperimentState":
        n_noise = len(label_map) - 1
        rows = model_rows(config.mode, stft.n_bins, n_noise)
        models = ModelSet.build(generator.resolve(rows), discriminator.resolve(rows), seed=config.seed)
        return cls(
            config=config,
            losses=losses,
            models=models,
            optimizers=_optimizers(models, config),
            n_noise=n_noise,
            label_map=dict(label_map),
            stft=stft,
            features=features,
            normalization=normalization,
        )

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint, config: TrainConfig, losses: LossOptions) -> "ExperimentState":
        meta = checkpoint.metadata
        if meta.mode != config.mode:
            raise ConfigError(f"checkpoint was trained in {meta.mode} mode, run asks for {config.mode}")
        models = ModelSet.build(meta.generator, meta.discriminator, seed=config.seed)
        optimizers = _optimizers(models, config)
        for name, model in models.named_models().items():
            checkpoint.restore_model(name, model)
            checkpoint.restore_optimizer(name, optimizers[name].state)
        return cls(
            config=config,
            losses=losses,
            models=models,
            optimizers=optimizers,
            n_noise=meta.n_noise,
            label_map=dict(meta.label_map),
            stft=meta.stft,
            features=meta.features,
            normalization=meta.normalization,
            epoch=meta.epoch,
            global_step=meta.global_step,
        )

    @property
    def label_noise(self) -> Optional[int]:
        """Number of noise types carried in label rows; None in baseline mode"""
        return self.n_noise if self.config.mode == "nit" else None

    def effective_weights(self) -> LossWeights:
        decay = self.losses.identity_decay_epoch
        if decay is not None and self.epoch >= decay:
            return self.losses.weights.model_copy(update={"lambda_idm": 0.0})
        return self.losses.weights

    def to_checkpoint(self) -> Checkpoint:
        metadata = CheckpointMetadata(
            mode=self.config.mode,
            n_noise=self.n_noise,
            label_map=self.label_map,
            stft=self.stft,
            features=self.features,
            normalization=self.normalization,
            generator=self.models.G_YS.spec,
            discriminator=self.models.D_S.spec,
            epoch=self.epoch,
            global_step=self.global_step,
            train=self.config.model_dump(),
        )
        optimizers = {name: opt.state for name, opt in self.optimizers.items()}
        return Checkpoint.capture(metadata, self.models.named_models(), optimizers)


def _optimizers(models: ModelSet, config: TrainConfig) -> Dict[str, Adam]:
    optimizers = {}
    for name, model in models.named_models().items():
        lr = config.lr_g if name.startswith("G") else config.lr_d
        optimizers[name] = Adam(model.named_parameters(), lr=lr, beta1=config.beta1, beta2=config.beta2)
    return optimizers


def _as_tensor(array: np.ndarray) -> DiffTensor:
    return DiffTensor(array)


def _batch_tensors(state: ExperimentState, batch: UnpairedBatch) -> Dict[str, DiffTensor]:
    if state.config.mode == "baseline":
        s, y = batch.baseline_images()
        s, y = _as_tensor(s), _as_tensor(y)
        return {"s_tc": s, "s_tn": s, "y_tc": y, "y_tn": y}
    images = batch.extended_images(state.n_noise)
    if state.config.validate_labels:
        for image in images.values():
            validate_label_batch(image, state.n_noise)
    return {name: _as_tensor(image) for name, image in images.items()}


def _abort(phase: str, state: ExperimentState, terms: Dict[str, float], weights: LossWeights) -> None:
    filled = {k: terms.get(k, float("nan")) for k in ("cyc", "idm", "adv1_S", "adv1_Y", "adv2_S", "adv2_Y", "gen_adv_S", "gen_adv_Y")}
    report = compose_objectives(weights, filled)
    raise NonFiniteLossError(
        f"non-finite {phase} loss at step {state.global_step + 1} (epoch {state.epoch}): "
        f"{', '.join(k for k, v in terms.items() if not np.isfinite(v))}",
        report=report,
    )


def _snapshot(state: ExperimentState, names: Sequence[str]) -> Dict[str, tuple]:
    """Parameters and Adam buffers of the named models"""
    saved = {}
    for name in names:
        adam = state.optimizers[name].state
        saved[name] = (
            state.models.named_models()[name].state_dict(),
            adam.step,
            {k: v.copy() for k, v in adam.m.items()},
            {k: v.copy() for k, v in adam.v.items()},
        )
    return saved


def _restore(state: ExperimentState, saved: Dict[str, tuple]) -> None:
    for name, (params, step, m, v) in saved.items():
        state.models.named_models()[name].load_state_dict(params)
        adam = state.optimizers[name].state
        adam.step, adam.m, adam.v = step, m, v


def train_step(state: ExperimentState, batch: UnpairedBatch) -> LossReport:
    """
    One discriminator update followed by one generator update. If the
    generator phase is non-finite the discriminator update is rolled back,
    so an aborted step leaves the state as it was before the step.
    """
    models, losses = state.models, state.losses
    GYS, GSY, D_S, D_Y = models.G_YS, models.G_SY, models.D_S, models.D_Y
    n = state.label_noise
    weights = state.effective_weights()
    x = _batch_tensors(state, batch)
    s_tc, s_tn, y_tc, y_tn = x["s_tc"], x["s_tn"], x["y_tc"], x["y_tn"]
    ls = losses.least_squares

    # (1) discriminators
    with no_grad():
        fake_s = GYS(y_tc)
        fake_y = GSY(s_tn)
        if n is None:
            cycled_s, cycled_y = GYS(fake_y), GSY(fake_s)
        else:
            cycled_s = GYS(replace_label_rows(fake_y, [CLEAN_INDEX] * batch.batch_size, n))
            cycled_y = GSY(replace_label_rows(fake_s, batch.y_labels, n))

    for D in (D_S, D_Y):
        D.zero_grad()
    adv1_S = adv1_discriminator_loss(D_S, s_tc, fake_s, ls)
    adv2_S = adv2_discriminator_loss(D_S, s_tc, cycled_s, ls)
    adv1_Y = adv1_discriminator_loss(D_Y, y_tn, fake_y, ls)
    adv2_Y = adv2_discriminator_loss(D_Y, y_tn, cycled_y, ls)
    terms = {"adv1_S": adv1_S.item(), "adv2_S": adv2_S.item(), "adv1_Y": adv1_Y.item(), "adv2_Y": adv2_Y.item()}
    if not all(np.isfinite(v) for v in terms.values()):
        _abort("discriminator", state, terms, weights)
    (adv1_S + adv2_S + adv1_Y + adv2_Y).backward()
    before_d = _snapshot(state, ("D_S", "D_Y"))
    state.optimizers["D_S"].step()
    state.optimizers["D_Y"].step()

    # (2) generators, discriminators frozen
    D_S.requires_grad_(False)
    D_Y.requires_grad_(False)
    try:
        for G in (GYS, GSY):
            G.zero_grad()
        fake_s = GYS(y_tc)
        fake_y = GSY(s_tn)
        gen_adv_S = adv1_generator_loss(D_S, fake_s, losses.minimax_generator, ls)
        gen_adv_Y = adv1_generator_loss(D_Y, fake_y, losses.minimax_generator, ls)
        cyc = cycle_from_fakes(GYS, GSY, fake_y, fake_s, s_tc, y_tn, n, losses.mask_label_rows)
        if weights.lambda_idm:
            skip = n + 1 if (n is not None and losses.mask_label_rows) else 0
            idm = identity_loss(GYS, GSY, s_tc, y_tn, skip)
        else:
            idm = DiffTensor(0.0)
        terms.update(gen_adv_S=gen_adv_S.item(), gen_adv_Y=gen_adv_Y.item(), cyc=cyc.item(), idm=idm.item())
        if not all(np.isfinite(v) for v in terms.values()):
            _restore(state, before_d)
            _abort("generator", state, terms, weights)
        generator_objective(weights, gen_adv_S, gen_adv_Y, cyc, idm).backward()
        state.optimizers["G_YS"].step()
        state.optimizers["G_SY"].step()
    finally:
        D_S.requires_grad_(True)
        D_Y.requires_grad_(True)

    state.global_step += 1
    report = compose_objectives(weights, terms)
    state.history.append(report.as_row(state.global_step, state.epoch))
    return report


# --- Loss CSV ---


def write_loss_csv(history: List[Dict[str, float]], path: Union[str, Path]) -> Path:
    path = Path(path)
    columns = ["step", "epoch"] + LossReport.columns()
    pd.DataFrame(history, columns=columns).to_csv(path, index=False)
    return path


def read_loss_csv(path: Union[str, Path]) -> List[Dict[str, float]]:
    frame = pd.read_csv(path, float_precision="round_trip")
    return frame.to_dict(orient="records")


# --- Training loop ---


@dataclass
class TrainResult:
    checkpoint: Path
    loss_csv: Path
    steps: int
    final_report: Optional[LossReport] = None


class _BatchSource:
    """Assembles the batch for a global step, optionally one step ahead on a worker thread"""

    def __init__(self, manifest: CorpusManifest, config: TrainConfig):
        self.manifest = manifest
        self.config = config
        self.store = FeatureStore(manifest)
        self.n_clean = len(manifest.clean_pool())
        self.n_noisy = len(manifest.noisy_pool())
        self._executor = ThreadPoolExecutor(max_workers=1) if config.prefetch else None
        self._pending: Dict[int, Future] = {}

    def _build(self, step: int, indices) -> UnpairedBatch:
        return sample_unpaired_batch(
            self.manifest, self.config.batch_size, self.config.crop_frames, self.config.seed, step, self.store, indices
        )

    def get(self, step: int, indices, upcoming: Optional[tuple] = None) -> UnpairedBatch:
        future = self._pending.pop(step, None)
        batch = future.result() if future is not None else self._build(step, indices)
        if self._executor is not None and upcoming is not None:
            next_step, next_indices = upcoming
            self._pending[next_step] = self._executor.submit(self._build, next_step, next_indices)
        return batch

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)


def _check_manifest(manifest: CorpusManifest) -> None:
    if manifest.header.normalization is None:
        raise ManifestError("manifest has no normalization statistics; synthesize it with audio")
    if manifest.n_noise < 1:
        raise ManifestError("manifest defines no noise types")
    if not manifest.clean_pool() or not manifest.noisy_pool():
        raise ManifestError("manifest has an empty clean or noisy training pool")


def train(
    config: TrainConfig,
    losses: LossOptions,
    generator: GeneratorSpec,
    discriminator: DiscriminatorSpec,
    manifest: CorpusManifest,
    out_dir: Union[str, Path],
    resume: Optional[Union[str, Path]] = None,
    show_progress: Optional[bool] = None,
    on_step: Optional[Callable[[ExperimentState, LossReport], None]] = None,
) -> TrainResult:
    """
    Run (or continue) training and write checkpoints plus the loss CSV.

    An epoch is one pass over the larger domain pool; checkpoints are written
    every `checkpoint_every` epochs and at the end of the run.
    """
    _check_manifest(manifest)
    out_dir = Path(out_dir)
    checkpoint_dir = out_dir / CHECKPOINT_DIR
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    loss_path = out_dir / LOSS_CSV
    header = manifest.header

    if resume is not None:
        checkpoint = load_checkpoint(resume, expected_n_noise=manifest.n_noise)
        if checkpoint.metadata.label_map != header.label_map:
            raise LabelDimensionError("checkpoint label map differs from the manifest label map")
        state = ExperimentState.from_checkpoint(checkpoint, config, losses)
        if loss_path.exists():
            state.history = [row for row in read_loss_csv(loss_path) if row["step"] <= state.global_step]
        logger.info("Resuming from %s at epoch %d, step %d", resume, state.epoch, state.global_step)
    else:
        state = ExperimentState.create(
            config, losses, generator, discriminator, header.label_map, header.stft, header.features, header.normalization
        )

    source = _BatchSource(manifest, config)
    per_epoch = steps_per_epoch(source.n_clean, source.n_noisy, config.batch_size)
    total = config.epochs * per_epoch
    if config.max_steps is not None:
        total = min(total, config.max_steps)
    (out_dir / "run_metadata.json").write_text(
        json.dumps(
            {
                "mode": config.mode,
                "n_noise": manifest.n_noise,
                "label_map": header.label_map,
                "clean_pool": source.n_clean,
                "noisy_pool": source.n_noisy,
                "steps_per_epoch": per_epoch,
                "total_steps": total,
            },
            indent=2,
        ),
        encoding="utf-8",
    )

    show = settings.progress if show_progress is None else show_progress
    bar = tqdm(total=total, initial=state.global_step, desc=f"Training ({config.mode})", disable=not show)
    report: Optional[LossReport] = None
    try:
        while state.global_step < total:
            plan = plan_epoch(source.n_clean, source.n_noisy, config.batch_size, config.seed, state.epoch)
            start = state.global_step - state.epoch * per_epoch
            for position in range(start, per_epoch):
                if state.global_step >= total:
                    break
                step = state.global_step
                upcoming = None
                if position + 1 < per_epoch and step + 1 < total:
                    upcoming = (step + 1, plan[position + 1])
                batch = source.get(step, plan[position], upcoming)
                report = train_step(state, batch)
                bar.update(1)
                if on_step is not None:
                    on_step(state, report)
            else:
                state.epoch += 1
                logger.info(
                    "Epoch %d done: cyc=%.4f G_YS=%.4f D_S=%.4f",
                    state.epoch,
                    report.cyc if report else float("nan"),
                    report.total_G_YS if report else float("nan"),
                    report.total_D_S if report else float("nan"),
                )
                if state.epoch % config.checkpoint_every == 0:
                    save_checkpoint(state.to_checkpoint(), checkpoint_dir / f"epoch_{state.epoch:04d}.ckpt")
                    write_loss_csv(state.history, loss_path)
    finally:
        bar.close()
        source.close()

    final = save_checkpoint(state.to_checkpoint(), checkpoint_dir / "final.ckpt")
    write_loss_csv(state.history, loss_path)
    logger.info("Training finished after %d steps; final checkpoint %s", state.global_step, final)
    return TrainResult(checkpoint=final, loss_csv=loss_path, steps=state.global_step, final_report=report)
