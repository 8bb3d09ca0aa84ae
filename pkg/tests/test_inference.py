"""Score aggregation, studentization, and the decision rule."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peikit.core import HardLabel, SoftLogits
from peikit.inference import (NO_CANDIDATE, decide, indicator_similarity,
                              null_fpr_monte_carlo, pei_score, run_inference,
                              symmetrize_similarity, z_scores)
from peikit.synthesis import AttackConfig, AttackSampleSet

# ---------------------------------------------------------------------------
# similarity functions


def test_indicator_basic():
    assert indicator_similarity(HardLabel(3), HardLabel(3)) == 1.0
    assert indicator_similarity(HardLabel(3), HardLabel(5)) == 0.0


def test_indicator_reduces_soft_outputs():
    assert indicator_similarity(SoftLogits(np.array([0.1, 0.9])), HardLabel(1)) == 1.0
    assert indicator_similarity(SoftLogits(np.array([0.9, 0.1])), HardLabel(1)) == 0.0


def test_symmetrize_averages_both_orders():
    def base(a, b):
        return 0.2 if a.label < b.label else 0.8

    sym = symmetrize_similarity(base)
    assert sym(HardLabel(0), HardLabel(1)) == pytest.approx(0.5)
    assert sym(HardLabel(1), HardLabel(0)) == pytest.approx(0.5)
    assert sym.symmetric


def test_symmetrize_is_noop_on_symmetric_evaluators():
    assert symmetrize_similarity(indicator_similarity) is indicator_similarity


def test_symmetrize_constant_one():
    def base(a, b):
        return 1.0

    sym = symmetrize_similarity(base)
    assert sym(HardLabel(5), HardLabel(7)) == 1.0


# ---------------------------------------------------------------------------
# pei_score with a scripted service


class ScriptedService:
    """Returns a fixed label per queried image (keyed by its first pixel)."""

    def __init__(self, mapping):
        self.mapping = mapping
        self.name = "scripted"
        self.query_count = 0

    def predict(self, batch, mode=None):
        batch = np.asarray(batch)
        self.query_count += len(batch)
        return [HardLabel(self.mapping[round(float(img.flat[0]) * 100)])
                for img in batch]


def tagged_image(tag: int) -> np.ndarray:
    img = np.full((2, 2, 1), tag / 100.0, dtype=np.float32)
    return img


def test_pei_score_hand_average():
    # M1=2 objectives, M2=2 replicas, match pattern (1, 1, 1, 0) -> 0.75
    objectives = np.stack([tagged_image(1), tagged_image(2)])
    samples = np.stack([tagged_image(11), tagged_image(12),   # objective 0
                        tagged_image(21), tagged_image(22)])  # objective 1
    mapping = {1: 7, 2: 8,            # objective labels
               11: 7, 12: 7,          # both replicas match objective 0
               21: 8, 22: 3}          # one of two matches objective 1
    svc = ScriptedService(mapping)
    score = pei_score(svc, objectives, samples, indicator_similarity)
    assert score == pytest.approx(0.75)


def test_pei_score_upper_bound():
    objectives = np.stack([tagged_image(1)])
    samples = np.stack([tagged_image(11), tagged_image(12)])
    svc = ScriptedService({1: 4, 11: 4, 12: 4})
    assert pei_score(svc, objectives, samples, indicator_similarity) == 1.0


def test_pei_score_reuses_objective_responses():
    objectives = np.stack([tagged_image(1)])
    samples = np.stack([tagged_image(11)])
    svc = ScriptedService({1: 0, 11: 0})
    responses = svc.predict(objectives)
    before = svc.query_count
    pei_score(svc, objectives, samples, indicator_similarity, responses)
    assert svc.query_count == before + 1  # only the sample batch


def test_pei_score_uneven_samples_rejected():
    objectives = np.stack([tagged_image(1), tagged_image(2)])
    samples = np.stack([tagged_image(11)])
    with pytest.raises(ValueError, match="evenly"):
        pei_score(ScriptedService({}), objectives, samples, indicator_similarity)


# ---------------------------------------------------------------------------
# z-scores: values pinned from the reference experiments


def test_zscores_reference_row_identified():
    z = z_scores([0.52, 0.02, 0.0, 0.0, 0.0, 0.0])
    expected = [2.04, -0.33, -0.43, -0.43, -0.43, -0.43]
    np.testing.assert_allclose(z, expected, atol=0.01)
    assert decide(z).identified == 0


def test_zscores_reference_row_no_candidate():
    z = z_scores([0.24, 0.12, 0.16, 0.30, 0.20, 0.12])
    assert max(z) <= 1.54 + 0.01
    assert decide(z) == NO_CANDIDATE


def test_zscores_degenerate_on_constant_scores():
    assert z_scores([0.3, 0.3, 0.3]) is None
    assert decide(None) == NO_CANDIDATE


def test_zscores_rejects_short_input():
    with pytest.raises(ValueError):
        z_scores([0.5])


# indicator-driven scores are hit counts over M1*M2 pairs; draw from that grid
score_grid = st.integers(0, 144).map(lambda k: k / 144.0)


@given(st.lists(score_grid, min_size=2, max_size=12))
@settings(max_examples=300, deadline=None)
def test_zscore_statistics_and_bound(scores):
    z = z_scores(scores)
    if z is None:
        return
    n = len(scores)
    assert abs(z.mean()) < 1e-9
    assert abs(z.std(ddof=1) - 1.0) < 1e-9
    assert z.max() <= (n - 1) / np.sqrt(n) + 1e-9


@given(st.lists(score_grid, min_size=2, max_size=8),
       st.floats(0.01, 100), st.floats(-10, 10))
@settings(max_examples=200, deadline=None)
def test_zscore_affine_invariance(scores, a, b):
    base = z_scores(scores)
    scaled = z_scores([a * s + b for s in scores])
    if base is None or scaled is None:
        # positive-affine maps preserve degeneracy
        assert base is None and scaled is None
        return
    np.testing.assert_allclose(scaled, base, atol=1e-9)


def test_zscore_degenerate_when_mean_rounds_off_center():
    # mean([x, x, x]) can differ from x in floats; still degenerate
    x = 0.3333333333333333 * 0.25 + 0.3333333333333333
    assert z_scores([x, x, x]) is None


def test_permutation_equivariance():
    scores = [0.52, 0.02, 0.0, 0.1, 0.0, 0.05]
    perm = [3, 0, 5, 1, 4, 2]
    z = z_scores(scores)
    zp = z_scores([scores[i] for i in perm])
    np.testing.assert_allclose(zp, [z[i] for i in perm], atol=1e-12)
    v, vp = decide(z), decide(zp)
    assert perm[vp.identified] == v.identified


def test_decide_rules():
    assert decide(np.array([2.0, 0.0, -1.0])).identified == 0
    assert decide(np.array([2.0, 1.9, -1.0])) == NO_CANDIDATE  # two above
    assert decide(np.array([1.5, 0.0, -1.0])) == NO_CANDIDATE  # none above
    assert decide(np.array([1.7, 0.0, -1.0])) == NO_CANDIDATE  # strict >
    assert decide(np.array([1.8, 0.0]), threshold=2.5) == NO_CANDIDATE


# ---------------------------------------------------------------------------
# the full stage over a scripted sample set


def scripted_sample_set(n_candidates=3, m1=2, m2=2):
    cfg = AttackConfig(m1, m2, 1, 1, 0.5, 0.1, (2, 2, 1))
    objectives = np.stack([tagged_image(j + 1) for j in range(m1)])
    samples, traces = {}, {}
    for i in range(n_candidates):
        for j in range(m1):
            for k in range(m2):
                samples[(i, j, k)] = tagged_image(10 * (i + 1) + 2 * j + k + 30)
                traces[(i, j, k)] = [1.0]
    return AttackSampleSet(cfg, [f"cand{i}" for i in range(n_candidates)],
                           objectives, samples, traces, master_seed=0)


def test_run_inference_query_accounting():
    sset = scripted_sample_set()
    # every image maps to label 0: scores all equal -> degenerate
    mapping = {round(float(img.flat[0]) * 100): 0
               for img in [*sset.objectives, *sset.samples.values()]}
    svc = ScriptedService(mapping)
    report = run_inference(svc, sset)
    n, m1, m2 = 3, 2, 2
    assert svc.query_count == n * m1 * m2 + m1
    assert report.zscores is None
    assert not report.verdict.is_identified


def test_run_inference_identifies_planted_candidate():
    # six candidates: the studentized ceiling (N-1)/sqrt(N) = 2.04 > 1.7
    sset = scripted_sample_set(n_candidates=6)
    mapping = {}
    for j, obj in enumerate(sset.objectives):
        mapping[round(float(obj.flat[0]) * 100)] = j + 1
    for (i, j, k), img in sset.samples.items():
        # candidate 1's samples reproduce the objective labels; others miss
        mapping[round(float(img.flat[0]) * 100)] = j + 1 if i == 1 else 9
    svc = ScriptedService(mapping)
    report = run_inference(svc, sset)
    assert report.verdict.identified == 1
    assert report.identified_name == "cand1"
    assert max(report.zscores) == report.zscores[1]
    assert report.zscores[1] == pytest.approx(5 / np.sqrt(6), abs=1e-9)


def test_run_inference_exclude_supports_leave_one_out():
    sset = scripted_sample_set()
    mapping = {round(float(img.flat[0]) * 100): 0
               for img in [*sset.objectives, *sset.samples.values()]}
    svc = ScriptedService(mapping)
    report = run_inference(svc, sset, exclude={"cand1"})
    assert report.candidate_names == ["cand0", "cand2"]


def test_run_inference_needs_two_candidates():
    sset = scripted_sample_set(n_candidates=2)
    svc = ScriptedService({})
    with pytest.raises(ValueError, match="two candidates"):
        run_inference(svc, sset, exclude={"cand0"})


def test_report_serialization_round_trip():
    sset = scripted_sample_set()
    mapping = {round(float(img.flat[0]) * 100): 0
               for img in [*sset.objectives, *sset.samples.values()]}
    report = run_inference(ScriptedService(mapping), sset)
    doc = report.to_json()
    assert doc["degenerate"] is True
    assert doc["verdict"] is None
    assert len(doc["candidates"]) == 3
    assert "service" in report.render_table() or report.render_table()


# ---------------------------------------------------------------------------
# the null Monte-Carlo


def test_null_mc_two_candidates_never_exceeds():
    out = null_fpr_monte_carlo(2, trials=500, seed=1)
    # with N=2 every z is +/- 1/sqrt(2), far below 1.7
    assert out["per_candidate_exceedance_rate"] == 0.0
    assert out["identified_rate"] == 0.0


def test_null_mc_threshold_above_bound_is_zero():
    # (N-1)/sqrt(N) = 2.0412 at N=6; threshold 2.05 is unreachable
    out = null_fpr_monte_carlo(6, trials=2000, seed=2, threshold=2.05)
    assert out["per_candidate_exceedance_rate"] == 0.0


def test_null_mc_rate_below_finite_n_ceiling():
    out = null_fpr_monte_carlo(6, trials=5000, seed=3)
    assert out["per_candidate_exceedance_rate"] < 0.0545


def test_null_mc_validates_arguments():
    with pytest.raises(ValueError):
        null_fpr_monte_carlo(1, 10, seed=0)
    with pytest.raises(ValueError):
        null_fpr_monte_carlo(4, 0, seed=0)
