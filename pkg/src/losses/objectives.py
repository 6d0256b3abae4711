"""
CycleGAN objectives in baseline and noise-informed (NIT) form.

Tensors are B×1×R×T extended images. In NIT mode the first N+1 rows carry the
domain label; `n_noise=None` means there are no label rows (baseline mode).
Expectations are plain means over batch and score-grid elements, and the two
directions of the cycle and identity terms are summed.
"""

import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..autodiff import DiffTensor
from ..conditioning import CLEAN_INDEX, replace_label_rows
from ..errors import ShapeError

Network = Callable[[DiffTensor], DiffTensor]


class LossWeights(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lambda_cyc: float = Field(default=10.0, ge=0)
    lambda_idm: float = Field(default=5.0, ge=0)

    @field_validator("lambda_cyc", "lambda_idm")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("loss weights must be finite")
        return value


class LossOptions(BaseModel):
    """Variants of the adversarial and reconstruction terms"""

    model_config = ConfigDict(extra="forbid")

    weights: LossWeights = Field(default_factory=LossWeights)
    least_squares: bool = False
    minimax_generator: bool = False
    mask_label_rows: bool = False
    identity_decay_epoch: Optional[int] = Field(default=None, ge=0)


@dataclass
class LossReport:
    cyc: float
    idm: float
    adv1_S: float
    adv1_Y: float
    adv2_S: float
    adv2_Y: float
    gen_adv_S: float
    gen_adv_Y: float
    total_G_YS: float
    total_G_SY: float
    total_D_S: float
    total_D_Y: float

    @classmethod
    def columns(cls) -> List[str]:
        return list(cls.__dataclass_fields__)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in asdict(self).values())

    def non_finite_terms(self) -> List[str]:
        return [k for k, v in asdict(self).items() if not math.isfinite(v)]

    def as_row(self, step: int, epoch: int) -> Dict[str, float]:
        return {"step": step, "epoch": epoch, **asdict(self)}


def _check_batch(*tensors: DiffTensor) -> None:
    for t in tensors:
        if t.size == 0 or t.shape[0] == 0:
            raise ShapeError(f"loss received an empty batch of shape {t.shape}")


def l1(a: DiffTensor, b: DiffTensor, skip_rows: int = 0) -> DiffTensor:
    """Mean absolute difference, optionally ignoring the first `skip_rows` rows"""
    if a.shape != b.shape:
        raise ShapeError(f"L1 operands differ in shape: {a.shape} vs {b.shape}")
    diff = a - b
    if skip_rows:
        diff = diff[:, :, skip_rows:, :]
    return diff.abs().mean()


def label_indices(x: DiffTensor, n_noise: int) -> np.ndarray:
    """Ground-truth domain index per batch element"""
    return np.argmax(x.data[:, 0, : n_noise + 1, 0], axis=1)


# --- Reconstruction terms ---


def cycle_loss(GYS: Network, GSY: Network, s_batch: DiffTensor, y_batch: DiffTensor) -> DiffTensor:
    _check_batch(s_batch, y_batch)
    return l1(GYS(GSY(s_batch)), s_batch) + l1(GSY(GYS(y_batch)), y_batch)


def nit_cycle_loss(
    GYS: Network,
    GSY: Network,
    s_tc: DiffTensor,
    s_tn: DiffTensor,
    y_tc: DiffTensor,
    y_tn: DiffTensor,
    n_noise: Optional[int],
    mask_label_rows: bool = False,
) -> DiffTensor:
    """
    Cycle term with the label swap between the two generator calls:
    the predicted tn′ of G_SY(s_tn) is replaced by tc before G_YS, and the
    predicted tc′ of G_YS(y_tc) is replaced by the utterance's tn before G_SY.
    Targets carry ground-truth labels, so label-row errors count unless masked.
    """
    _check_batch(s_tc, s_tn, y_tc, y_tn)
    return cycle_from_fakes(GYS, GSY, GSY(s_tn), GYS(y_tc), s_tc, y_tn, n_noise, mask_label_rows)


def cycle_from_fakes(
    GYS: Network,
    GSY: Network,
    fake_y: DiffTensor,
    fake_s: DiffTensor,
    s_tc: DiffTensor,
    y_tn: DiffTensor,
    n_noise: Optional[int],
    mask_label_rows: bool = False,
) -> DiffTensor:
    """Second half of the cycle term, given G_SY(s_tn) and G_YS(y_tc)"""
    if n_noise is None:
        return l1(GYS(fake_y), s_tc) + l1(GSY(fake_s), y_tn)
    skip = n_noise + 1 if mask_label_rows else 0
    swapped_y = replace_label_rows(fake_y, [CLEAN_INDEX] * fake_y.shape[0], n_noise)
    swapped_s = replace_label_rows(fake_s, label_indices(y_tn, n_noise), n_noise)
    return l1(GYS(swapped_y), s_tc, skip) + l1(GSY(swapped_s), y_tn, skip)


def identity_loss(
    GYS: Network,
    GSY: Network,
    s_batch: DiffTensor,
    y_batch: DiffTensor,
    skip_rows: int = 0,
) -> DiffTensor:
    """L1 between each generator's output and its own same-domain input"""
    _check_batch(s_batch, y_batch)
    return l1(GYS(s_batch), s_batch, skip_rows) + l1(GSY(y_batch), y_batch, skip_rows)


def nit_identity_loss(
    GYS: Network,
    GSY: Network,
    s_tc: DiffTensor,
    y_tn: DiffTensor,
    n_noise: int,
    mask_label_rows: bool = False,
) -> DiffTensor:
    return identity_loss(GYS, GSY, s_tc, y_tn, n_noise + 1 if mask_label_rows else 0)


# --- Adversarial terms ---


def discriminator_loss_from_scores(real: DiffTensor, fake: DiffTensor, least_squares: bool = False) -> DiffTensor:
    """−(E log D(real) + E log(1 − D(fake))), or the least-squares form"""
    _check_batch(real, fake)
    if least_squares:
        return ((real - 1.0) ** 2).mean() + (fake ** 2).mean()
    return -(real.log().mean() + (1.0 - fake).log().mean())


def generator_loss_from_scores(fake: DiffTensor, minimax: bool = False, least_squares: bool = False) -> DiffTensor:
    """−E log D(fake) (non-saturating), E log(1 − D(fake)) (minimax) or least squares"""
    _check_batch(fake)
    if least_squares:
        return ((fake - 1.0) ** 2).mean()
    if minimax:
        return (1.0 - fake).log().mean()
    return -fake.log().mean()


def adv1_discriminator_loss(D: Network, real_batch: DiffTensor, fake_batch: DiffTensor, least_squares: bool = False) -> DiffTensor:
    """Fakes are detached so only the discriminator receives gradients"""
    return discriminator_loss_from_scores(D(real_batch), D(fake_batch.detach()), least_squares)


def adv1_generator_loss(D: Network, fake_batch: DiffTensor, minimax: bool = False, least_squares: bool = False) -> DiffTensor:
    return generator_loss_from_scores(D(fake_batch), minimax, least_squares)


def adv2_discriminator_loss(
    D: Network, real_batch: DiffTensor, cycled_fake_batch: DiffTensor, least_squares: bool = False
) -> DiffTensor:
    """Second adversarial term on two-generator outputs; updates discriminators only"""
    return discriminator_loss_from_scores(D(real_batch), D(cycled_fake_batch.detach()), least_squares)


# --- Composition ---


def compose_objectives(weights: LossWeights, terms: Dict[str, float]) -> LossReport:
    """Weighted totals from the per-term scalars"""
    cyc, idm = float(terms["cyc"]), float(terms["idm"])
    reconstruction = weights.lambda_cyc * cyc + weights.lambda_idm * idm
    adv1_S, adv1_Y = float(terms["adv1_S"]), float(terms["adv1_Y"])
    adv2_S, adv2_Y = float(terms["adv2_S"]), float(terms["adv2_Y"])
    gen_adv_S, gen_adv_Y = float(terms["gen_adv_S"]), float(terms["gen_adv_Y"])
    return LossReport(
        cyc=cyc,
        idm=idm,
        adv1_S=adv1_S,
        adv1_Y=adv1_Y,
        adv2_S=adv2_S,
        adv2_Y=adv2_Y,
        gen_adv_S=gen_adv_S,
        gen_adv_Y=gen_adv_Y,
        total_G_YS=gen_adv_S + reconstruction,
        total_G_SY=gen_adv_Y + reconstruction,
        total_D_S=adv1_S + adv2_S,
        total_D_Y=adv1_Y + adv2_Y,
    )


def generator_objective(
    weights: LossWeights, gen_adv_S: DiffTensor, gen_adv_Y: DiffTensor, cyc: DiffTensor, idm: DiffTensor
) -> DiffTensor:
    """Joint objective minimized by both generators in one update"""
    objective = gen_adv_S + gen_adv_Y + weights.lambda_cyc * cyc
    if weights.lambda_idm:
        objective = objective + weights.lambda_idm * idm
    return objective
