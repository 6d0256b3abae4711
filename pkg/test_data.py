#!/usr/bin/env python3
"""
Corpus synthesis, manifest validation and unpaired sampling
"""

import json
from collections import Counter

import numpy as np
import pytest

from src.data import (
    CLEAN_DOMAIN,
    MANIFEST_NAME,
    count_table,
    draw_unpaired_indices,
    plan_epoch,
    read_manifest,
    sample_unpaired_batch,
    speaker_held_out,
    steps_per_epoch,
    synthesize_corpus,
    validate_manifest,
    write_manifest,
    write_toy_corpus,
)
from src.dsp import measure_snr, read_wav
from src.errors import ConfigError, ManifestError

NOISES = ["babble", "cafeteria", "car", "street", "white"]


def dummy_files(directory, stem, count, speakers=1):
    """Paths that are never opened: manifest-only synthesis reads no audio"""
    return [directory / f"spk{i % speakers}" / f"{stem}{i:04d}.wav" for i in range(count)]


def manifest_only(tmp_path, n_clean, split_mode="paired", n_test=0, unseen=()):
    return synthesize_corpus(
        dummy_files(tmp_path / "clean", "utt", n_clean, speakers=3),
        [tmp_path / "noise" / f"{name}.wav" for name in NOISES],
        tmp_path / "out",
        snrs=[-5, 0, 5],
        split_mode=split_mode,
        test_clean_files=dummy_files(tmp_path / "test", "tst", n_test),
        unseen_noise_files=[tmp_path / "unseen" / f"{name}.wav" for name in unseen],
        render=False,
    )


def test_paired_count_law(tmp_path):
    manifest = manifest_only(tmp_path, 1194)
    noisy = manifest.noisy_pool()
    assert len(noisy) == 17910
    assert len(manifest.clean_pool()) == 1194
    counts = count_table(manifest)
    assert set(counts.values()) == {1194}
    assert len(counts) == 15
    assert manifest.n_noise == 5
    assert manifest.header.label_map[CLEAN_DOMAIN] == 0
    assert validate_manifest(manifest).passed
    print("✅ 1194 clean × 5 noises × 3 SNRs = 17,910 noisy utterances")


def test_disjoint_count_law(tmp_path):
    manifest = manifest_only(tmp_path, 1194, split_mode="disjoint")
    assert len(manifest.noisy_pool()) == 8955
    pool = {r.id for r in manifest.clean_pool()}
    sources = {r.source_id for r in manifest.noisy_pool()}
    assert len(pool) == 597 and len(sources) == 597
    assert not pool & sources
    assert validate_manifest(manifest).passed


def test_test_split_count_law(tmp_path):
    manifest = manifest_only(tmp_path, 4, n_test=6, unseen=["siren", "wind"])
    test = manifest.noisy_records("test")
    assert len(test) == 6 * (5 + 2) * 3
    conditions = Counter(r.condition for r in test)
    assert conditions == {"matched": 6 * 5 * 3, "mismatched": 6 * 2 * 3}
    assert "siren" not in manifest.header.label_map
    assert manifest.header.unseen_noises == ["siren", "wind"]
    assert validate_manifest(manifest).passed


def test_speaker_held_out(tmp_path):
    manifest = manifest_only(tmp_path, 6, n_test=2)
    assert speaker_held_out(manifest) == set()
    for record in manifest.records:
        if record.split == "test":
            record.speaker_id = "spk_new"
    assert speaker_held_out(manifest) == {"spk_new"}


def test_synthesis_rejects_bad_inputs(tmp_path):
    clean = dummy_files(tmp_path, "utt", 2)
    noise = [tmp_path / "white.wav"]
    with pytest.raises(ManifestError):
        synthesize_corpus([], noise, tmp_path / "out", render=False)
    with pytest.raises(ManifestError):
        synthesize_corpus(clean, [], tmp_path / "out", render=False)
    with pytest.raises(ManifestError):
        synthesize_corpus(clean, [tmp_path / "clean.wav"], tmp_path / "out", render=False)
    with pytest.raises(ManifestError):
        synthesize_corpus(clean, noise, tmp_path / "out", snrs=[], render=False)
    with pytest.raises(ManifestError):
        synthesize_corpus(clean[:1], noise, tmp_path / "out", split_mode="disjoint", render=False)
    with pytest.raises(ManifestError):
        synthesize_corpus(clean, noise, tmp_path / "out", unseen_noise_files=noise, render=False)


def test_missing_audio_is_reported(tmp_path):
    with pytest.raises(ManifestError) as info:
        synthesize_corpus(dummy_files(tmp_path, "utt", 2), [tmp_path / "white.wav"], tmp_path / "out")
    assert len(info.value.failures) == 3


@pytest.fixture(scope="module")
def toy_manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    corpus = write_toy_corpus(root / "raw", n_clean=4, n_noise=2, n_test=1, duration_s=0.5)
    manifest = synthesize_corpus(
        corpus.clean_files,
        corpus.noise_files,
        root / "corpus",
        snrs=[-5, 0, 5],
        seed=3,
        test_clean_files=corpus.test_clean_files,
    )
    return manifest


def test_rendered_corpus_hits_requested_snr(toy_manifest):
    by_id = toy_manifest.by_id()
    records = toy_manifest.noisy_records()
    assert len(records) == 4 * 2 * 3 + 1 * 2 * 3
    for record in records:
        clean = read_wav(toy_manifest.resolve(by_id[record.source_id].path))
        noisy = read_wav(toy_manifest.resolve(record.path))
        assert len(noisy) == len(clean)
        assert 0 < record.gain <= 1.0
        assert abs(measure_snr(clean.samples * record.gain, noisy.samples) - record.snr_db) < 1e-3
        assert np.max(np.abs(noisy.samples)) <= 1.0
    assert validate_manifest(toy_manifest).passed


def test_rendered_manifest_round_trips(toy_manifest):
    path = toy_manifest.root / MANIFEST_NAME
    loaded = read_manifest(path)
    assert loaded.header == toy_manifest.header
    assert [r.id for r in loaded.records] == [r.id for r in toy_manifest.records]
    assert len(loaded.header.normalization.mean) == loaded.header.stft.n_bins
    assert all(std > 0 for std in loaded.header.normalization.std)


def test_synthesis_is_reproducible(tmp_path):
    corpus = write_toy_corpus(tmp_path / "raw", n_clean=2, n_noise=1, duration_s=0.3)
    first = synthesize_corpus(corpus.clean_files, corpus.noise_files, tmp_path / "a", snrs=[0], seed=5)
    second = synthesize_corpus(corpus.clean_files, corpus.noise_files, tmp_path / "b", snrs=[0], seed=5)
    for a, b in zip(first.noisy_records(), second.noisy_records()):
        assert a.offset_samples == b.offset_samples
        assert (first.root / a.path).read_bytes() == (second.root / b.path).read_bytes()


def test_read_manifest_errors(tmp_path):
    with pytest.raises(ManifestError):
        read_manifest(tmp_path / "absent.jsonl")
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    with pytest.raises(ManifestError):
        read_manifest(empty)
    manifest = manifest_only(tmp_path, 2)
    path = write_manifest(manifest, tmp_path / "bad.jsonl")
    lines = path.read_text().splitlines()
    lines[1] = json.dumps({"id": "x"})
    path.write_text("\n".join(lines))
    with pytest.raises(ManifestError) as info:
        read_manifest(path)
    assert len(info.value.failures) == 1


@pytest.mark.parametrize(
    "mutate,check",
    [
        (lambda m: m.records.append(m.records[-1].model_copy()), "unique_id"),
        (lambda m: setattr(m.records[-1], "snr_db", 20.0), "snr"),
        (lambda m: setattr(m.records[-1], "domain", "jackhammer"), "noise_name"),
        (lambda m: setattr(m.records[-1], "source_id", "nobody"), "source"),
        (lambda m: m.header.label_map.update({CLEAN_DOMAIN: 3}), "label_map"),
        (lambda m: setattr(m.header, "rendered", True), "file_exists"),
    ],
    ids=["duplicate", "snr", "noise", "source", "label-map", "missing-file"],
)
def test_validator_reports_each_violation(tmp_path, mutate, check):
    manifest = manifest_only(tmp_path, 3)
    mutate(manifest)
    report = validate_manifest(manifest)
    assert not report.passed
    assert check in report.checks_failed()


def test_validator_detects_shared_utterance_in_disjoint_split(tmp_path):
    manifest = manifest_only(tmp_path, 4, split_mode="disjoint")
    source = manifest.noisy_pool()[0].source_id
    manifest.by_id()[source].in_clean_pool = True
    report = validate_manifest(manifest)
    assert report.checks_failed() == {"disjointness"}


def test_unpaired_draws_are_uniform_and_deterministic():
    counts = Counter()
    for step in range(2000):
        clean, noisy = draw_unpaired_indices(5, 30, 4, seed=1, step=step)
        counts.update(clean.tolist())
        assert noisy.min() >= 0 and noisy.max() < 30
    expected = 2000 * 4 / 5
    assert all(abs(counts[i] - expected) < 0.1 * expected for i in range(5))
    a = draw_unpaired_indices(5, 30, 4, seed=1, step=17)
    b = draw_unpaired_indices(5, 30, 4, seed=1, step=17)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    with pytest.raises(ManifestError):
        draw_unpaired_indices(0, 3, 1, seed=0, step=0)


def test_epoch_plan_covers_the_larger_pool():
    plan = plan_epoch(10, 25, 4, seed=2, epoch=0)
    assert len(plan) == steps_per_epoch(10, 25, 4) == 7
    noisy = np.concatenate([n for _, n in plan])
    assert set(noisy.tolist()) == set(range(25))
    assert all(c.max() < 10 for c, _ in plan)
    again = plan_epoch(10, 25, 4, seed=2, epoch=0)
    assert all(np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1]) for x, y in zip(plan, again))
    other = plan_epoch(10, 25, 4, seed=2, epoch=1)
    assert not all(np.array_equal(x[1], y[1]) for x, y in zip(plan, other))


def test_sampled_batch_shapes_and_labels(toy_manifest):
    batch = sample_unpaired_batch(toy_manifest, batch_size=3, crop_length=16, seed=0, step=4)
    assert batch.s_features.shape == (3, 257, 16)
    assert batch.y_features.shape == (3, 257, 16)
    assert batch.s_features.dtype == np.float32
    assert set(batch.y_labels.tolist()) <= {1, 2}
    assert set(batch.s_targets.tolist()) <= {1, 2}
    pool = {r.id for r in toy_manifest.clean_pool()}
    assert set(batch.clean_ids) <= pool
    images = batch.extended_images(toy_manifest.n_noise)
    assert images["s_tc"].shape == (3, 1, 260, 16)
    np.testing.assert_array_equal(images["y_tn"][:, 0, :3, 0].argmax(axis=1), batch.y_labels)
    repeat = sample_unpaired_batch(toy_manifest, batch_size=3, crop_length=16, seed=0, step=4)
    np.testing.assert_array_equal(repeat.s_features, batch.s_features)
    np.testing.assert_array_equal(repeat.s_targets, batch.s_targets)


def test_toy_corpus_limits(tmp_path):
    with pytest.raises(ConfigError):
        write_toy_corpus(tmp_path, n_noise=9)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
