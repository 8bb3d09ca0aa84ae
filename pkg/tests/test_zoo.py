"""Toy encoder family: determinism, geometry, analytic gradient oracle."""

import numpy as np
import pytest

from peikit.core import squared_embedding_loss
from peikit.zoo import (ARCHITECTURES, LinearProject, ToyEncoderSpec,
                        analytic_gradient, build_encoder)

SHAPE = (8, 8, 3)
DIM = 16


def enc(arch, seed=1, shape=SHAPE, dim=DIM, name=None):
    return build_encoder(ToyEncoderSpec(name or f"{arch}-{seed}", arch, seed,
                                        shape, dim))


@pytest.fixture
def probe():
    rng = np.random.default_rng(33)
    return rng.random(SHAPE).astype(np.float32)


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_build_twice_identical(arch, probe):
    a, b = enc(arch, 5), enc(arch, 5)
    np.testing.assert_array_equal(a.encode(probe), b.encode(probe))


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_distinct_seeds_distinct_embeddings(arch, probe):
    a, b = enc(arch, 5), enc(arch, 6)
    delta = np.linalg.norm(a.encode(probe) - b.encode(probe))
    assert delta > 1e-3


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_architectures_differ(arch, probe):
    base = enc("LinearProject", 5).encode(probe)
    if arch == "LinearProject":
        return
    other = enc(arch, 5).encode(probe)
    assert np.linalg.norm(base - other) > 1e-3


def test_unknown_architecture_rejected():
    with pytest.raises(ValueError, match="unknown architecture"):
        build_encoder(ToyEncoderSpec("x", "Transformer", 1, SHAPE, DIM))


def test_fourier_zero_image_closed_form():
    e = enc("FourierFeature", 9)
    out = e.encode(np.zeros(SHAPE, np.float32))
    scale = np.sqrt(2.0 / DIM)
    expected = np.zeros(DIM, np.float32)
    expected[0::2] = scale  # cos(0)
    expected[1::2] = 0.0    # sin(0)
    np.testing.assert_allclose(out, expected, atol=1e-7)


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_probes_outside_unit_range_accepted(arch):
    e = enc(arch, 3)
    rng = np.random.default_rng(0)
    wild = (rng.standard_normal(SHAPE) * 5.0).astype(np.float32)
    out = e.encode(wild)
    assert np.all(np.isfinite(out))


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_encode_is_pure_under_shuffling(arch):
    e = enc(arch, 4)
    rng = np.random.default_rng(8)
    batch = rng.random((10, *SHAPE)).astype(np.float32)
    full = e.encode_batch(batch)
    order = rng.permutation(10)
    shuffled = e.encode_batch(batch[order])
    np.testing.assert_array_equal(shuffled, full[order])
    # singles agree with the batch path (BLAS may pick a different kernel)
    np.testing.assert_allclose(e.encode(batch[3]), full[3], atol=1e-6)


def test_batch_shape_mismatch_rejected():
    e = enc("LinearProject", 1)
    with pytest.raises(ValueError, match="shape"):
        e.encode_batch(np.zeros((2, 4, 4, 3), np.float32))


# ---------------------------------------------------------------------------
# analytic gradient oracle


def test_analytic_gradient_zero_at_optimum(probe):
    e = enc("LinearProject", 11)
    target = e.encode(probe)
    grad = analytic_gradient(e, probe, target)
    np.testing.assert_allclose(grad, np.zeros(SHAPE), atol=1e-5)


def test_analytic_gradient_scalar_case():
    # one pixel, one output, weight fixed to 2: loss (2x)^2, slope 8x
    e = LinearProject(ToyEncoderSpec("w2", "LinearProject", 0, (1, 1, 1), 1))
    e.weight = np.array([[2.0]], dtype=np.float32)
    grad = e.analytic_loss_gradient(np.array([[[3.0]]], np.float32),
                                    np.zeros(1, np.float32))
    assert grad.reshape(()) == pytest.approx(24.0)


def test_analytic_gradient_matches_finite_differences(probe):
    e = enc("LinearProject", 21)
    rng = np.random.default_rng(5)
    target = rng.standard_normal(DIM).astype(np.float32)
    grad = analytic_gradient(e, probe, target)

    h = 1e-3
    flat = probe.reshape(-1).astype(np.float64)
    for idx in rng.choice(flat.size, size=12, replace=False):
        bump = np.zeros_like(flat)
        bump[idx] = h
        plus = squared_embedding_loss(
            e.encode((flat + bump).reshape(SHAPE).astype(np.float32)), target)
        minus = squared_embedding_loss(
            e.encode((flat - bump).reshape(SHAPE).astype(np.float32)), target)
        fd = (plus - minus) / (2 * h)
        assert fd == pytest.approx(grad.reshape(-1)[idx], rel=1e-4, abs=2e-3)


def test_analytic_gradient_unsupported_architecture(probe):
    e = enc("RandomConv", 2)
    with pytest.raises(NotImplementedError):
        analytic_gradient(e, probe, np.zeros(DIM, np.float32))
