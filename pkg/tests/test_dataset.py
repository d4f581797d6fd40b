"""Corpus generation, normalization, ingestion, and cache tests."""

import numpy as np
import pytest
from PIL import Image as PILImage

from pixelevade.dataset import (CorpusConfig, ImageSet, NormalizationSpec,
                                denormalize, generate_corpus, ingest_directory,
                                load_corpus, normalize, save_corpus)


class TestCorpusConfig:
    def test_rejects_too_many_classes(self):
        with pytest.raises(ValueError, match="glyph/color"):
            CorpusConfig(class_count=65, samples_per_class=1)

    def test_rejects_mismatched_noise_levels(self):
        with pytest.raises(ValueError, match="noise_levels"):
            CorpusConfig(class_count=4, samples_per_class=1,
                         noise_levels=[0.1, 0.2])

    def test_rejects_bad_train_fraction(self):
        with pytest.raises(ValueError, match="train_fraction"):
            CorpusConfig(class_count=2, samples_per_class=1, train_fraction=1.0)


class TestGenerateCorpus:
    def test_split_counts_exact(self):
        cfg = CorpusConfig(class_count=8, samples_per_class=50,
                           train_fraction=0.8, seed=1)
        train, test = generate_corpus(cfg)
        assert len(train) == 8 * 40 and len(test) == 8 * 10
        for c in range(8):
            assert len(train.class_indices(c)) == 40
            assert len(test.class_indices(c)) == 10

    def test_same_seed_bit_identical(self):
        cfg = CorpusConfig(class_count=3, samples_per_class=10, seed=77)
        a_train, a_test = generate_corpus(cfg)
        b_train, b_test = generate_corpus(cfg)
        assert np.array_equal(a_train.images, b_train.images)
        assert np.array_equal(a_test.images, b_test.images)
        assert np.array_equal(a_train.labels, b_train.labels)

    def test_values_in_unit_interval(self):
        cfg = CorpusConfig(class_count=6, samples_per_class=20,
                           noise_levels=[0.0, 0.2, 0.4, 0.6, 0.8, 1.0], seed=3)
        train, test = generate_corpus(cfg)
        for part in (train, test):
            assert part.images.min() >= 0.0
            assert part.images.max() <= 1.0

    def test_noise_level_raises_pixel_variance(self):
        """Monte-Carlo oracle: same class and seed, noise 0.5 vs 0.0."""
        clean_cfg = CorpusConfig(class_count=2, samples_per_class=100,
                                 noise_levels=[0.0, 0.0], seed=5)
        noisy_cfg = CorpusConfig(class_count=2, samples_per_class=100,
                                 noise_levels=[0.0, 0.5], seed=5)
        clean_train, _ = generate_corpus(clean_cfg)
        noisy_train, _ = generate_corpus(noisy_cfg)

        def mean_pixel_variance(part, label):
            idx = part.class_indices(label)
            return float(np.mean([part.images[i].var() for i in idx]))

        assert mean_pixel_variance(noisy_train, 1) > mean_pixel_variance(clean_train, 1)
        # and within the noisy corpus the noisy class exceeds the clean one
        assert mean_pixel_variance(noisy_train, 1) > mean_pixel_variance(noisy_train, 0)

    @pytest.mark.parametrize("samples,fraction", [(7, 0.6), (11, 0.5), (9, 0.33)])
    def test_stratified_split_within_one_of_exact(self, samples, fraction):
        cfg = CorpusConfig(class_count=3, samples_per_class=samples,
                           train_fraction=fraction, seed=9)
        train, test = generate_corpus(cfg)
        for c in range(3):
            n_train = len(train.class_indices(c))
            assert abs(n_train - samples * fraction) <= 1.0
            assert n_train + len(test.class_indices(c)) == samples


class TestNormalize:
    def test_mean_value_maps_to_zero(self):
        img = np.full((3, 32, 32), 0.485, dtype=np.float32)
        out = normalize(img, NormalizationSpec())
        assert out[0, 0, 0] == 0.0

    def test_max_red_value(self):
        img = np.ones((3, 32, 32), dtype=np.float32)
        out = normalize(img, NormalizationSpec())
        np.testing.assert_allclose(out[0, 0, 0], (1.0 - 0.485) / 0.229,
                                   rtol=1e-5)
        np.testing.assert_allclose(out[0, 0, 0], 2.2489, atol=1e-4)

    def test_round_trip(self, rng):
        img = rng.random((3, 32, 32)).astype(np.float32)
        spec = NormalizationSpec()
        back = denormalize(normalize(img, spec), spec)
        np.testing.assert_allclose(back, img, atol=1e-6)

    def test_std_must_be_positive(self):
        with pytest.raises(ValueError, match="std"):
            NormalizationSpec(std=(0.2, 0.0, 0.2))


def _write_png(path, value, size=64):
    arr = np.full((size, size, 3), int(round(value * 255)), dtype=np.uint8)
    PILImage.fromarray(arr).save(path)


class TestIngestDirectory:
    def test_two_classes_three_images_each(self, tmp_path):
        for cls in ("a_class", "b_class"):
            (tmp_path / cls).mkdir()
            for i in range(3):
                _write_png(tmp_path / cls / f"{i}.png", 0.3 + 0.1 * i)
        images, skipped = ingest_directory(tmp_path)
        assert len(images) == 6
        assert skipped == 0
        assert sorted(set(images.labels.tolist())) == [0, 1]
        assert images.images.shape == (6, 3, 32, 32)

    def test_solid_color_resize_preserves_value(self, tmp_path):
        (tmp_path / "only").mkdir()
        _write_png(tmp_path / "only" / "x.png", 0.6, size=64)
        images, _ = ingest_directory(tmp_path)
        assert images.images.shape[2:] == (32, 32)
        np.testing.assert_allclose(images.images[0],
                                   round(0.6 * 255) / 255.0, atol=1 / 255)

    def test_unreadable_file_skipped_with_warning(self, tmp_path):
        (tmp_path / "c0").mkdir()
        _write_png(tmp_path / "c0" / "ok.png", 0.5)
        (tmp_path / "c0" / "broken.png").write_bytes(b"not a png at all")
        with pytest.warns(UserWarning, match="broken.png"):
            images, skipped = ingest_directory(tmp_path)
        assert len(images) == 1
        assert skipped == 1

    def test_empty_class_rejected(self, tmp_path):
        (tmp_path / "c0").mkdir()
        _write_png(tmp_path / "c0" / "ok.png", 0.5)
        (tmp_path / "c1").mkdir()
        with pytest.raises(ValueError, match="no readable images"):
            ingest_directory(tmp_path)


def test_corpus_cache_round_trip(tmp_path):
    cfg = CorpusConfig(class_count=2, samples_per_class=6, seed=11)
    train, test = generate_corpus(cfg)
    path = tmp_path / "corpus.evds"
    save_corpus(path, train, test)
    train2, test2 = load_corpus(path)
    assert np.array_equal(train.images, train2.images)
    assert np.array_equal(train.labels, train2.labels)
    assert np.array_equal(test.images, test2.images)
    assert np.array_equal(test.labels, test2.labels)


def test_imageset_rejects_bad_shapes():
    with pytest.raises(ValueError, match="images"):
        ImageSet(np.zeros((2, 3, 16, 16), dtype=np.float32), np.zeros(2))
