#!/usr/bin/env python3
"""
Loss identities for baseline and noise-informed CycleGAN objectives
"""

import math

import numpy as np
import pytest

from src.autodiff import DiffTensor, concat
from src.conditioning import append_label_batch
from src.errors import ShapeError
from src.losses import (
    LossReport,
    LossWeights,
    adv1_discriminator_loss,
    adv1_generator_loss,
    adv2_discriminator_loss,
    compose_objectives,
    cycle_loss,
    discriminator_loss_from_scores,
    generator_loss_from_scores,
    generator_objective,
    identity_loss,
    label_indices,
    nit_cycle_loss,
    nit_identity_loss,
)
from src.models import Discriminator, DiscriminatorSpec, Generator, GeneratorSpec

N_NOISE = 3
ROWS = 10


def identity(x):
    return x


def row_affine(scale, shift, skip=0):
    """Elementwise map of the feature rows; the first `skip` rows pass through"""

    def network(x):
        if not skip:
            return x * scale + shift
        return concat([x[:, :, :skip, :], x[:, :, skip:, :] * scale + shift], axis=2)

    return network


def constant_scores(value):
    return lambda x: DiffTensor(np.full((x.shape[0], 1, 2, 2), value), dtype=np.float64)


def features(seed, batch=2, frames=5):
    return np.random.default_rng(seed).standard_normal((batch, ROWS, frames))


def extended(feats, indices, dtype=np.float32):
    return DiffTensor(append_label_batch(feats, indices, N_NOISE), dtype=dtype)


def test_identity_generators_give_zero_reconstruction_terms():
    s = DiffTensor(features(0)[:, None])
    y = DiffTensor(features(1)[:, None])
    assert cycle_loss(identity, identity, s, y).item() == 0.0
    assert identity_loss(identity, identity, s, y).item() == 0.0


def test_identity_generators_give_zero_nit_terms():
    s, y = features(0), features(1)
    noise = [1, 3]
    s_tc, s_tn = extended(s, [0, 0]), extended(s, noise)
    y_tc, y_tn = extended(y, [0, 0]), extended(y, noise)
    assert nit_cycle_loss(identity, identity, s_tc, s_tn, y_tc, y_tn, N_NOISE).item() == 0.0
    assert nit_identity_loss(identity, identity, s_tc, y_tn, N_NOISE).item() == 0.0


def test_cycle_loss_hand_value():
    s = DiffTensor(features(2)[:, None], dtype=np.float64)
    y = DiffTensor(features(3)[:, None], dtype=np.float64)
    value = cycle_loss(row_affine(2.0, 0.0), identity, s, y).item()
    expected = np.mean(np.abs(s.data)) + np.mean(np.abs(y.data))
    assert value == pytest.approx(expected, rel=1e-12)


def test_masked_nit_cycle_matches_plain_cycle_on_features():
    s, y = features(4).astype(np.float32), features(5).astype(np.float32)
    noise = [2, 1]
    g_ys, g_sy = row_affine(0.7, 0.3, N_NOISE + 1), row_affine(1.2, -0.1, N_NOISE + 1)
    wide = np.float64
    nit = nit_cycle_loss(
        g_ys,
        g_sy,
        extended(s, [0, 0], wide),
        extended(s, noise, wide),
        extended(y, [0, 0], wide),
        extended(y, noise, wide),
        N_NOISE,
        mask_label_rows=True,
    )
    plain = cycle_loss(
        row_affine(0.7, 0.3),
        row_affine(1.2, -0.1),
        DiffTensor(s[:, None], dtype=wide),
        DiffTensor(y[:, None], dtype=wide),
    )
    assert abs(nit.item() - plain.item()) < 1e-6


def test_baseline_path_of_nit_cycle_is_plain_cycle():
    s = DiffTensor(features(6)[:, None])
    y = DiffTensor(features(7)[:, None])
    g_ys, g_sy = row_affine(0.5, 0.1), row_affine(1.5, 0.0)
    baseline = nit_cycle_loss(g_ys, g_sy, s, s, y, y, None)
    assert baseline.item() == pytest.approx(cycle_loss(g_ys, g_sy, s, y).item(), rel=1e-6)


def test_label_swap_feeds_clean_and_noise_targets():
    seen = []

    def recording(x):
        seen.append(x.data[:, 0, : N_NOISE + 1, 0].argmax(axis=1).tolist())
        return x

    s, y = features(8), features(9)
    noise = [3, 2]
    nit_cycle_loss(recording, recording, extended(s, [0, 0]), extended(s, noise), extended(y, [0, 0]), extended(y, noise), N_NOISE)
    # first calls see s_tn and y_tc, then the swapped inputs: clean for G_YS, tn for G_SY
    assert seen == [noise, [0, 0], [0, 0], noise]
    assert label_indices(extended(y, noise), N_NOISE).tolist() == noise


def test_adversarial_losses_at_one_half():
    real = DiffTensor(np.zeros((2, 1, ROWS, 4)))
    fake = DiffTensor(np.ones((2, 1, ROWS, 4)))
    d = constant_scores(0.5)
    assert adv1_discriminator_loss(d, real, fake).item() == pytest.approx(2 * math.log(2), abs=1e-4)
    assert adv2_discriminator_loss(d, real, fake).item() == pytest.approx(1.3863, abs=1e-4)
    assert adv1_generator_loss(d, fake).item() == pytest.approx(math.log(2), abs=1e-9)
    assert adv1_generator_loss(d, fake, minimax=True).item() == pytest.approx(-math.log(2), abs=1e-9)


def test_least_squares_variants():
    half = DiffTensor(np.full((1, 1, 2, 2), 0.5), dtype=np.float64)
    assert discriminator_loss_from_scores(half, half, least_squares=True).item() == pytest.approx(0.5)
    assert generator_loss_from_scores(half, least_squares=True).item() == pytest.approx(0.25)


def score_tensor(value):
    return DiffTensor(np.full((2, 1, 2, 2), value), dtype=np.float64)


@pytest.mark.parametrize("least_squares", [False, True])
def test_adversarial_losses_are_monotone_in_scores(least_squares):
    grid = np.linspace(0.1, 0.9, 9)
    fixed = score_tensor(0.5)
    by_real = [discriminator_loss_from_scores(score_tensor(v), fixed, least_squares).item() for v in grid]
    by_fake = [discriminator_loss_from_scores(fixed, score_tensor(v), least_squares).item() for v in grid]
    generator = [generator_loss_from_scores(score_tensor(v), least_squares=least_squares).item() for v in grid]
    assert np.all(np.diff(by_real) < 0)
    assert np.all(np.diff(by_fake) > 0)
    assert np.all(np.diff(generator) < 0)
    if not least_squares:
        minimax = [generator_loss_from_scores(score_tensor(v), minimax=True).item() for v in grid]
        assert np.all(np.diff(minimax) < 0)


def test_losses_ignore_batch_order():
    rows = ROWS + N_NOISE + 1
    g_ys = Generator(GeneratorSpec(in_rows=rows, base_channels=2, n_residual_blocks=1), rng=np.random.default_rng(1))
    g_sy = Generator(GeneratorSpec(in_rows=rows, base_channels=2, n_residual_blocks=1), rng=np.random.default_rng(2))
    d_y = Discriminator(DiscriminatorSpec(in_rows=rows, base_channels=2, n_layers=2), rng=np.random.default_rng(3))
    for model in (g_ys, g_sy, d_y):
        model.astype(np.float64)
    s, y = features(20, batch=3, frames=8), features(21, batch=3, frames=8)
    s_noise, y_noise = np.array([1, 2, 3]), np.array([3, 1, 2])

    def terms(order):
        clean = [0] * len(order)
        s_tc, s_tn = extended(s[order], clean, np.float64), extended(s[order], s_noise[order], np.float64)
        y_tc, y_tn = extended(y[order], clean, np.float64), extended(y[order], y_noise[order], np.float64)
        return [
            nit_cycle_loss(g_ys, g_sy, s_tc, s_tn, y_tc, y_tn, N_NOISE).item(),
            nit_identity_loss(g_ys, g_sy, s_tc, y_tn, N_NOISE).item(),
            adv1_discriminator_loss(d_y, y_tn, g_sy(s_tn)).item(),
            adv1_generator_loss(d_y, g_sy(s_tn)).item(),
        ]

    np.testing.assert_allclose(terms(np.array([2, 0, 1])), terms(np.arange(3)), rtol=1e-5)


def test_second_adversarial_term_leaves_generators_untouched():
    rows = 12
    generator = Generator(GeneratorSpec(in_rows=rows, base_channels=2, n_residual_blocks=1))
    discriminator = Discriminator(DiscriminatorSpec(in_rows=rows, base_channels=2, n_layers=2))
    rng = np.random.default_rng(10)
    real = DiffTensor(rng.standard_normal((1, 1, rows, 8)))
    cycled = generator(generator(DiffTensor(rng.standard_normal((1, 1, rows, 8)))))
    adv2_discriminator_loss(discriminator, real, cycled).backward()
    for p in generator.parameters():
        assert p.grad is None or not np.any(p.grad)
    assert any(p.grad is not None and np.any(p.grad) for p in discriminator.parameters())


def test_generator_adversarial_term_reaches_generator():
    rows = 12
    generator = Generator(GeneratorSpec(in_rows=rows, base_channels=2, n_residual_blocks=1))
    discriminator = Discriminator(DiscriminatorSpec(in_rows=rows, base_channels=2, n_layers=2))
    fake = generator(DiffTensor(np.random.default_rng(11).standard_normal((1, 1, rows, 8))))
    adv1_generator_loss(discriminator, fake).backward()
    assert any(p.grad is not None and np.any(p.grad) for p in generator.parameters())


def test_empty_batch_is_rejected():
    empty = DiffTensor(np.zeros((0, 1, ROWS, 4)))
    with pytest.raises(ShapeError):
        cycle_loss(identity, identity, empty, empty)
    with pytest.raises(ShapeError):
        discriminator_loss_from_scores(empty, empty)


def test_compose_objectives_arithmetic():
    weights = LossWeights(lambda_cyc=10.0, lambda_idm=5.0)
    terms = dict(cyc=0.2, idm=0.1, adv1_S=1.0, adv1_Y=1.1, adv2_S=0.9, adv2_Y=0.8, gen_adv_S=0.7, gen_adv_Y=0.6)
    report = compose_objectives(weights, terms)
    assert report.total_G_YS == pytest.approx(0.7 + 2.0 + 0.5)
    assert report.total_G_SY == pytest.approx(0.6 + 2.0 + 0.5)
    assert report.total_D_S == pytest.approx(1.9)
    assert report.total_D_Y == pytest.approx(1.9)
    assert report.is_finite()
    assert list(report.as_row(3, 1))[:2] == ["step", "epoch"]
    assert LossReport.columns()[0] == "cyc"


def test_generator_objective_with_identity_weight_zero():
    one = DiffTensor(1.0, dtype=np.float64)
    weights = LossWeights(lambda_cyc=10.0, lambda_idm=0.0)
    value = generator_objective(weights, one, one, one, DiffTensor(float("nan"), dtype=np.float64))
    assert value.item() == pytest.approx(12.0)


def test_non_finite_terms_are_named():
    report = compose_objectives(
        LossWeights(), dict(cyc=float("nan"), idm=0.0, adv1_S=0, adv1_Y=0, adv2_S=0, adv2_Y=0, gen_adv_S=0, gen_adv_Y=0)
    )
    assert not report.is_finite()
    assert "cyc" in report.non_finite_terms()


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(lambda_cyc=-1.0)
    with pytest.raises(ValueError):
        LossWeights(lambda_idm=float("inf"))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
