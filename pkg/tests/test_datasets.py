"""Synthetic dataset generators."""

import numpy as np
import pytest

from peikit.datasets import DatasetSpec, generate_dataset, generate_sample, generate_split

SHAPE = (32, 32, 3)


def spec(generator="Shapes", classes=10, train=200, test=50, seed=12345):
    return DatasetSpec(generator, classes, train, test, SHAPE, seed)


def test_exact_balance_when_divisible():
    samples = generate_dataset(spec())
    assert len(samples) == 200
    counts = np.bincount([y for _, y in samples], minlength=10)
    assert set(counts) == {20}


def test_balance_within_one_otherwise():
    images, labels = generate_split(spec(train=103), "train")
    counts = np.bincount(labels, minlength=10)
    assert counts.max() - counts.min() <= 1


def test_bit_identical_regeneration():
    a, _ = generate_split(spec(), "train")
    b, _ = generate_split(spec(), "train")
    assert a.tobytes() == b.tobytes()


def test_values_in_unit_range():
    for generator in ("Shapes", "Textures"):
        images, _ = generate_split(spec(generator, train=40), "train")
        assert images.min() >= 0.0 and images.max() <= 1.0
        assert images.dtype == np.float32


def test_split_disjointness():
    # test split uses global indices shifted past the train split
    s = spec(train=30, test=10)
    train, _ = generate_split(s, "train")
    test, _ = generate_split(s, "test")
    train_keys = {img.tobytes() for img in train}
    for img in test:
        assert img.tobytes() not in train_keys


def test_class_mean_intensity_margin():
    # frozen regression: classes 0 and 1 differ in mean intensity
    s = spec()
    m0 = np.mean([generate_sample(s, 10 * i)[0].mean() for i in range(100)])
    m1 = np.mean([generate_sample(s, 10 * i + 1)[0].mean() for i in range(100)])
    margin = abs(m0 - m1)
    assert margin == pytest.approx(0.045599, abs=2e-4)
    assert margin > 0.03


def test_texture_classes_have_distinct_bands():
    s = spec("Textures", train=40)
    images, labels = generate_split(s, "train")
    # high-class textures carry more high-frequency energy than low-class ones
    def hf_energy(img):
        spectrum = np.abs(np.fft.fft2(img[:, :, 0]))
        spectrum[:8, :8] = 0
        return spectrum.sum()
    low = np.mean([hf_energy(img) for img, y in zip(images, labels) if y == 0])
    high = np.mean([hf_energy(img) for img, y in zip(images, labels) if y == 9])
    assert high > low


def test_unknown_generator_rejected():
    with pytest.raises(ValueError):
        DatasetSpec("Fractals", 10, 10, 10, SHAPE, 0)


def test_too_few_classes_rejected():
    with pytest.raises(ValueError):
        DatasetSpec("Shapes", 1, 10, 10, SHAPE, 0)


def test_unknown_split_rejected():
    with pytest.raises(ValueError):
        generate_split(spec(), "validation")
