#!/usr/bin/env python3
"""
Generator/discriminator shapes and the binary checkpoint container
"""

import numpy as np
import pytest

from src.autodiff import DiffTensor, no_grad
from src.conditioning import append_label_batch
from src.dsp import FeatureConfig, NormalizationStats, StftConfig
from src.errors import CheckpointFormatError, ConfigError, LabelDimensionError, ShapeError
from src.models import (
    Checkpoint,
    CheckpointMetadata,
    Discriminator,
    DiscriminatorSpec,
    Generator,
    GeneratorSpec,
    ModelSet,
    load_checkpoint,
    save_checkpoint,
    score_grid_shape,
)
from src.models.checkpoint import MAGIC
from src.training import ExperimentState, TrainConfig
from src.losses import LossOptions

TINY_GENERATOR = GeneratorSpec(base_channels=4, n_residual_blocks=1)
TINY_DISCRIMINATOR = DiscriminatorSpec(base_channels=4)


@pytest.mark.parametrize("frames", [1, 5, 37, 64])
def test_generator_preserves_shape(frames):
    generator = Generator(TINY_GENERATOR.resolve(263))
    with no_grad():
        out = generator(DiffTensor(np.random.default_rng(frames).standard_normal((2, 1, 263, frames))))
    assert out.shape == (2, 1, 263, frames)
    assert np.all(np.isfinite(out.data))


def test_generator_accepts_single_image():
    generator = Generator(TINY_GENERATOR.resolve(20))
    with no_grad():
        out = generator(DiffTensor(np.zeros((1, 20, 8))))
    assert out.shape == (1, 20, 8)


def test_generator_rejects_wrong_row_count():
    generator = Generator(TINY_GENERATOR.resolve(263))
    with pytest.raises(ShapeError):
        generator(DiffTensor(np.zeros((1, 1, 262, 16))))
    with pytest.raises(ShapeError):
        generator(DiffTensor(np.zeros((1, 2, 263, 16))))


def test_unresolved_spec_has_no_rows():
    with pytest.raises(ConfigError):
        Generator(GeneratorSpec())
    with pytest.raises(ValueError):
        GeneratorSpec(unknown=1)


def test_discriminator_score_grid():
    spec = TINY_DISCRIMINATOR.resolve(263)
    assert score_grid_shape(spec, 263, 64) == (17, 4)
    with no_grad():
        scores = Discriminator(spec)(DiffTensor(np.random.default_rng(0).standard_normal((3, 1, 263, 64))))
    assert scores.shape == (3, 1, 17, 4)
    assert np.all(scores.data > 0) and np.all(scores.data < 1)


def test_zero_head_scores_one_half():
    discriminator = Discriminator(TINY_DISCRIMINATOR.resolve(30))
    discriminator.head.weight.data[...] = 0.0
    discriminator.head.bias.data[...] = 0.0
    with no_grad():
        scores = discriminator(DiffTensor(np.random.default_rng(1).standard_normal((1, 1, 30, 16))))
    np.testing.assert_allclose(scores.data, 0.5)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("bias", [-50.0, 50.0])
def test_saturated_scores_stay_strictly_inside_bounds(dtype, bias):
    discriminator = Discriminator(TINY_DISCRIMINATOR.resolve(30)).astype(dtype)
    discriminator.head.weight.data[...] = 0.0
    discriminator.head.bias.data[...] = bias
    with no_grad():
        scores = discriminator(DiffTensor(np.random.default_rng(2).standard_normal((1, 1, 30, 16)), dtype=dtype))
    assert np.all(scores.data > 1e-7)
    assert np.all(scores.data < 1.0 - 1e-7)


def test_generator_output_depends_on_label():
    n_noise, n_bins = 2, 20
    generator = Generator(TINY_GENERATOR.resolve(n_noise + 1 + n_bins), rng=np.random.default_rng(5))
    feats = np.random.default_rng(6).standard_normal((1, n_bins, 12)).astype(np.float32)
    with no_grad():
        first = generator(DiffTensor(append_label_batch(feats, [1], n_noise))).data
        second = generator(DiffTensor(append_label_batch(feats, [2], n_noise))).data
    assert not np.allclose(first[:, :, n_noise + 1 :], second[:, :, n_noise + 1 :])


def model_gradient_check(model, image, seed, per_parameter=3):
    """backward() against central differences of sum(model(x) * w) at a few entries per parameter"""
    step = 1e-6
    rng = np.random.default_rng(seed)
    model.astype(np.float64)
    x = DiffTensor(image, dtype=np.float64)
    out = model(x)
    weight = rng.standard_normal(out.shape)
    model.zero_grad()
    (out * DiffTensor(weight, dtype=np.float64)).sum().backward()

    def scalar():
        with no_grad():
            return float(np.sum(model(x).data * weight))

    analytic, numeric = [], []
    for _, p in model.named_parameters():
        for _ in range(per_parameter):
            position = tuple(int(rng.integers(n)) for n in p.shape)
            original = p.data[position]
            p.data[position] = original + step
            plus = scalar()
            p.data[position] = original - step
            minus = scalar()
            p.data[position] = original
            analytic.append(p.grad[position])
            numeric.append((plus - minus) / (2 * step))
    analytic, numeric = np.array(analytic), np.array(numeric)
    error = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    assert error < 1e-4, f"relative error {error:.2e}"


def test_generator_gradients_match_finite_differences():
    generator = Generator(GeneratorSpec(base_channels=2, n_residual_blocks=1).resolve(8), rng=np.random.default_rng(7))
    model_gradient_check(generator, np.random.default_rng(8).standard_normal((2, 1, 8, 8)), seed=9)


def test_discriminator_gradients_match_finite_differences():
    discriminator = Discriminator(DiscriminatorSpec(base_channels=2, n_layers=2).resolve(8), rng=np.random.default_rng(7))
    model_gradient_check(discriminator, np.random.default_rng(8).standard_normal((2, 1, 8, 8)), seed=10)
    print("✅ model gradients agree with finite differences")


def test_model_set_is_seeded():
    first = ModelSet.build(TINY_GENERATOR.resolve(20), TINY_DISCRIMINATOR.resolve(20), seed=3)
    second = ModelSet.build(TINY_GENERATOR.resolve(20), TINY_DISCRIMINATOR.resolve(20), seed=3)
    other = ModelSet.build(TINY_GENERATOR.resolve(20), TINY_DISCRIMINATOR.resolve(20), seed=4)
    for name, model in first.named_models().items():
        for key, value in model.state_dict().items():
            np.testing.assert_array_equal(value, second.named_models()[name].state_dict()[key])
    assert not np.array_equal(first.G_YS.stem.weight.data, other.G_YS.stem.weight.data)
    assert not np.array_equal(first.G_YS.stem.weight.data, first.G_SY.stem.weight.data)


def small_state(n_noise=2, mode="nit", seed=0):
    stft = StftConfig(fft_size=512)
    label_map = {"clean": 0, **{f"noise{i}": i for i in range(1, n_noise + 1)}}
    return ExperimentState.create(
        TrainConfig(mode=mode, seed=seed),
        LossOptions(),
        TINY_GENERATOR,
        TINY_DISCRIMINATOR,
        label_map,
        stft,
        FeatureConfig(),
        NormalizationStats.identity(stft.n_bins),
    )


def test_checkpoint_round_trip(tmp_path):
    state = small_state()
    state.epoch, state.global_step = 3, 42
    for optimizer in state.optimizers.values():
        optimizer.state.step = 42
        for name in optimizer.state.m:
            optimizer.state.m[name] += 0.25
    path = save_checkpoint(state.to_checkpoint(), tmp_path / "run.ckpt")
    assert path.read_bytes().startswith(MAGIC)

    loaded = load_checkpoint(path, expected_n_noise=2)
    assert loaded.metadata.n_noise == 2
    assert loaded.metadata.n_label_rows == 3
    assert loaded.metadata.global_step == 42
    assert loaded.metadata.generator.in_rows == 257 + 3

    restored = ExperimentState.from_checkpoint(loaded, state.config, state.losses)
    assert restored.epoch == 3 and restored.global_step == 42
    for name, model in state.models.named_models().items():
        for key, value in model.state_dict().items():
            np.testing.assert_array_equal(restored.models.named_models()[name].state_dict()[key], value)
        original = state.optimizers[name].state
        copy = restored.optimizers[name].state
        assert copy.step == 42
        for key in original.m:
            np.testing.assert_array_equal(copy.m[key], original.m[key])
            np.testing.assert_array_equal(copy.v[key], original.v[key])
    print("✅ checkpoint round trip restores parameters and Adam moments")


def test_checkpoint_rejects_label_dimension_mismatch(tmp_path):
    path = save_checkpoint(small_state(n_noise=2).to_checkpoint(), tmp_path / "a.ckpt")
    with pytest.raises(LabelDimensionError):
        load_checkpoint(path, expected_n_noise=5)


def test_checkpoint_rejects_mode_mismatch(tmp_path):
    path = save_checkpoint(small_state().to_checkpoint(), tmp_path / "a.ckpt")
    with pytest.raises(ConfigError):
        ExperimentState.from_checkpoint(load_checkpoint(path), TrainConfig(mode="baseline"), LossOptions())


def test_baseline_checkpoint_has_no_label_rows(tmp_path):
    path = save_checkpoint(small_state(mode="baseline").to_checkpoint(), tmp_path / "b.ckpt")
    meta = load_checkpoint(path).metadata
    assert meta.n_label_rows == 0
    assert meta.generator.in_rows == 257


@pytest.mark.parametrize(
    "tamper",
    [
        lambda data: b"XXXXXX" + data[6:],
        lambda data: data[:6] + (99).to_bytes(4, "little") + data[10:],
        lambda data: data[: len(data) - 10],
        lambda data: data + b"\x00\x00",
        lambda data: data[:14] + b"{" * 20 + data[34:],
    ],
    ids=["magic", "version", "truncated", "trailing", "metadata"],
)
def test_checkpoint_tampering_is_detected(tmp_path, tamper):
    path = save_checkpoint(small_state().to_checkpoint(), tmp_path / "c.ckpt")
    path.write_bytes(tamper(path.read_bytes()))
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)


def test_missing_checkpoint_file(tmp_path):
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_restore_requires_matching_shapes():
    checkpoint = small_state().to_checkpoint()
    other = Generator(GeneratorSpec(base_channels=8, n_residual_blocks=1).resolve(260))
    with pytest.raises(ShapeError):
        checkpoint.restore_model("G_YS", other)
    with pytest.raises(CheckpointFormatError):
        Checkpoint(checkpoint.metadata).restore_model("G_YS", other)


def test_metadata_rejects_unknown_fields():
    meta = small_state().to_checkpoint().metadata.model_dump()
    meta["surprise"] = True
    with pytest.raises(ValueError):
        CheckpointMetadata.model_validate(meta)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
