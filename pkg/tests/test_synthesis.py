"""Zeroth-order gradient estimation and the synthesis loops."""

import statistics
from decimal import Decimal

import numpy as np
import pytest

from peikit.datasets import DatasetSpec, generate_sample
from peikit.errors import EstimationFailure, SynthesisAborted
from peikit.seeds import derive_seed, rng_from_seed
from peikit.synthesis import (PAPER_DEFAULTS, TOY_DEFAULTS, AttackConfig,
                              BudgetLedger, estimate_cost, estimate_gradient,
                              synthesize_all, synthesize_sample)
from peikit.zoo import ToyEncoderSpec, analytic_gradient, build_encoder

DIM16 = (4, 4, 1)


def linear_encoder(seed=7, shape=(32, 32, 3), dim=64, name="lin"):
    return build_encoder(ToyEncoderSpec(name, "LinearProject", seed, shape, dim))


def toy_objective(shape=(32, 32, 3), index=0):
    return generate_sample(DatasetSpec("Shapes", 10, 10, 1, shape, 5), index)[0]


# ---------------------------------------------------------------------------
# estimator


def test_constant_loss_gives_zero_gradient():
    x = np.zeros(DIM16, np.float32)
    grad = estimate_gradient(lambda p: 3.25, x, directions=8, radius=0.5, seed=1)
    np.testing.assert_array_equal(grad, np.zeros(DIM16))


def test_estimator_unbiased_on_linear_loss():
    # E[dim * (g . u) u] = g for unit-sphere directions
    rng = np.random.default_rng(2024)
    g = rng.standard_normal(16)
    x = np.zeros(DIM16, np.float32)

    def loss(p):
        return float(g @ np.asarray(p, np.float64).reshape(-1))

    total = np.zeros(16)
    n = 4000
    for s in range(n):
        total += estimate_gradient(loss, x, 1, 0.5, seed=s).reshape(-1)
    mean = total / n
    rel = np.linalg.norm(mean - g) / np.linalg.norm(g)
    assert rel < 0.15


def test_estimator_aligns_with_analytic_gradient():
    enc = linear_encoder(shape=DIM16, dim=8)
    target = enc.encode(toy_objective(DIM16, 3))
    x = rng_state = np.random.default_rng(77).random(DIM16).astype(np.float32)

    def batch_loss(probes):
        emb = enc.encode_batch(probes).astype(np.float64)
        d = emb - target.astype(np.float64)
        return np.einsum("ij,ij->i", d, d)

    est = estimate_gradient(None, x, directions=2000, radius=1e-3, seed=11,
                            batch_loss_fn=batch_loss)
    exact = analytic_gradient(enc, x, target)
    cos = float(np.dot(est.reshape(-1), exact.reshape(-1))
                / (np.linalg.norm(est) * np.linalg.norm(exact)))
    assert cos > 0.95


def test_exactly_two_s_evaluations():
    calls = []

    def loss(p):
        calls.append(1)
        return float(np.sum(p))

    estimate_gradient(loss, np.zeros(DIM16, np.float32), 13, 0.1, seed=3)
    assert len(calls) == 26


def test_probes_are_not_clamped():
    seen = []

    def loss(p):
        seen.append(np.asarray(p))
        return 0.0

    x = np.zeros(DIM16, np.float32)  # probes land at +/- radius * u
    estimate_gradient(loss, x, 4, radius=5.0, seed=9)
    assert min(p.min() for p in seen) < -0.5
    assert max(p.max() for p in seen) > 0.5


def test_nan_loss_raises_estimation_failure_with_probe():
    def loss(p):
        return float("nan") if p.max() > 0 else 0.0

    with pytest.raises(EstimationFailure) as exc_info:
        estimate_gradient(loss, np.zeros(DIM16, np.float32), 4, 0.5, seed=1)
    assert exc_info.value.probe is not None
    assert exc_info.value.probe.shape == DIM16


def test_estimator_deterministic():
    def loss(p):
        return float(np.sum(p ** 2))

    a = estimate_gradient(loss, np.ones(DIM16, np.float32), 16, 0.3, seed=5)
    b = estimate_gradient(loss, np.ones(DIM16, np.float32), 16, 0.3, seed=5)
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------------------
# single-sample synthesis


def test_zero_iterations_returns_uniform_init():
    enc = linear_encoder()
    cfg = AttackConfig(1, 1, 0, 4, 0.5, 0.05, (32, 32, 3))
    out = synthesize_sample(enc, toy_objective(), cfg, seed=31)
    expected = rng_from_seed(derive_seed(31, ("init",))).random((32, 32, 3),
                                                                dtype=np.float32)
    np.testing.assert_array_equal(out.image, expected)
    assert out.queries == 1
    assert out.loss_trace == []


def test_descent_on_linear_encoder():
    # frozen regression: the toy recipe collapses the loss by ~3 orders
    enc = build_encoder(ToyEncoderSpec("lin", "LinearProject", 77, (32, 32, 3), 64))
    cfg = AttackConfig(1, 1, 60, 64, 0.5, 0.05, (32, 32, 3))
    out = synthesize_sample(enc, toy_objective(), cfg, seed=4242)
    assert out.queries == 60 * 128 + 1
    assert out.loss_trace[-1] < out.loss_trace[0]
    ratio = out.loss_trace[-1] / out.loss_trace[0]
    assert ratio == pytest.approx(0.001328, rel=0.05)
    # median of the last ten probe losses sits below the first ten
    assert (statistics.median(out.loss_trace[-10:])
            < statistics.median(out.loss_trace[:10]))


def test_sample_stays_clamped():
    enc = linear_encoder()
    cfg = AttackConfig(1, 1, 8, 8, 0.5, 0.4, (32, 32, 3))
    out = synthesize_sample(enc, toy_objective(), cfg, seed=13)
    assert out.image.min() >= 0.0 and out.image.max() <= 1.0


def test_zero_gradient_skips_update():
    class ConstantEncoder:
        name = "const"
        input_shape = (4, 4, 1)
        embedding_dim = 4

        def encode(self, x):
            return np.zeros(4, np.float32)

        def encode_batch(self, batch):
            return np.zeros((len(batch), 4), np.float32)

    cfg = AttackConfig(1, 1, 5, 4, 0.5, 0.05, DIM16)
    out = synthesize_sample(ConstantEncoder(), np.zeros(DIM16, np.float32),
                            cfg, seed=8)
    expected = rng_from_seed(derive_seed(8, ("init",))).random(DIM16,
                                                               dtype=np.float32)
    np.testing.assert_array_equal(out.image, expected)
    assert out.skipped_updates == 5


def test_unclamped_objective_rejected():
    enc = linear_encoder()
    cfg = AttackConfig(1, 1, 1, 2, 0.5, 0.05, (32, 32, 3))
    bad = np.full((32, 32, 3), 1.5, np.float32)
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        synthesize_sample(enc, bad, cfg, seed=1)


# ---------------------------------------------------------------------------
# outer loops and budget


def small_setup(n_candidates=2):
    shape = (8, 8, 1)
    encs = [linear_encoder(seed=i + 1, shape=shape, dim=8, name=f"e{i}")
            for i in range(n_candidates)]
    rng = np.random.default_rng(3)
    cfg = AttackConfig(2, 2, 3, 4, 0.5, 0.1, shape)
    objectives = rng.random((2, *shape)).astype(np.float32)
    return encs, objectives, cfg


def test_minimal_sample_set():
    encs, objectives, _ = small_setup(1)
    cfg = AttackConfig(1, 1, 2, 2, 0.5, 0.1, (8, 8, 1))
    sset = synthesize_all(encs[:1], objectives[:1], cfg, master_seed=5)
    assert len(sset.samples) == 1
    assert (0, 0, 0) in sset.samples


def test_ledger_matches_closed_form():
    encs, objectives, cfg = small_setup()
    ledger = BudgetLedger()
    synthesize_all(encs, objectives, cfg, master_seed=9, ledger=ledger)
    expected = cfg.total_queries_per_candidate()
    assert expected == 2 * 2 * (3 * 2 * 4 + 1)
    for enc in encs:
        assert ledger.queries(enc.name) == expected
    assert ledger.queries() == 2 * expected


def test_results_identical_across_job_counts():
    encs, objectives, cfg = small_setup()
    serial = synthesize_all(encs, objectives, cfg, master_seed=4, jobs=1)
    parallel = synthesize_all(encs, objectives, cfg, master_seed=4, jobs=4)
    assert serial.samples.keys() == parallel.samples.keys()
    for key in serial.samples:
        assert serial.samples[key].tobytes() == parallel.samples[key].tobytes()
        assert serial.loss_traces[key] == parallel.loss_traces[key]


def test_failure_aborts_with_partial_results():
    class FlakyEncoder:
        name = "flaky"
        input_shape = (8, 8, 1)
        embedding_dim = 8

        def __init__(self):
            self.calls = 0

        def encode(self, x):
            return self.encode_batch(x[np.newaxis])[0]

        def encode_batch(self, batch):
            self.calls += 1
            if self.calls > 10:
                raise RuntimeError("endpoint fell over")
            return np.zeros((len(batch), 8), np.float32)

    encs, objectives, cfg = small_setup(1)
    with pytest.raises(SynthesisAborted) as exc_info:
        synthesize_all([FlakyEncoder()], objectives, cfg, master_seed=2)
    assert exc_info.value.partial is not None


def test_duplicate_candidate_names_rejected():
    encs, objectives, cfg = small_setup(2)
    twins = [linear_encoder(seed=1, shape=(8, 8, 1), dim=8, name="same"),
             linear_encoder(seed=2, shape=(8, 8, 1), dim=8, name="same")]
    with pytest.raises(ValueError, match="unique"):
        synthesize_all(twins, objectives, cfg, master_seed=1)


def test_config_validation():
    with pytest.raises(ValueError):
        AttackConfig(0, 1, 1, 1, 0.5, 0.1, DIM16)
    with pytest.raises(ValueError):
        AttackConfig(1, 1, 1, 1, -0.5, 0.1, DIM16)
    with pytest.raises(ValueError):
        AttackConfig(1, 1, 1, 1, 0.5, 0.0, DIM16)


# ---------------------------------------------------------------------------
# budget arithmetic


def test_full_scale_budget_projection():
    assert PAPER_DEFAULTS.probe_queries_per_candidate() == 1_000_000
    # per-sample count: T * 2S + 1 probe+objective queries
    assert PAPER_DEFAULTS.iterations * 2 * PAPER_DEFAULTS.directions == 20_000


def test_toy_budget_projection():
    assert TOY_DEFAULTS.probe_queries_per_candidate() == 92_160


def test_cost_is_exact_decimal():
    assert estimate_cost(1_000_000, "0.0001") == Decimal("100")
    assert estimate_cost(0, "0.0001") == Decimal("0")
    assert estimate_cost(92_160, "0.0001") == Decimal("9.216")


def test_cost_from_ledger():
    ledger = BudgetLedger("0.0001")
    ledger.record("enc", 250_000)
    ledger.record("enc", 750_000)
    assert estimate_cost(ledger, "0.0001") == Decimal("100")
    assert ledger.queries("enc") == 1_000_000


def test_negative_price_rejected():
    with pytest.raises(ValueError):
        estimate_cost(10, "-1")


def test_ledger_append_only():
    ledger = BudgetLedger()
    ledger.record("a", 3)
    ledger.record("a", 4)
    assert ledger.entries() == [("a", 3), ("a", 4)]
    with pytest.raises(ValueError):
        ledger.record("a", -1)
