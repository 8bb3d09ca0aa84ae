"""Hidden-encoder inference from service behavior.

Per candidate, the score is the mean behavioral similarity between that
candidate's attack samples and their objective samples, both as judged by
the targeted service.  Scores are studentized against the candidate pool
(sample standard deviation), and a candidate is identified only when its
z-score is the single one strictly above the threshold; any other pattern,
including a zero-variance score vector, yields the no-candidate verdict.

A studentized deviation can never exceed (N-1)/sqrt(N), so with six
candidates the largest reachable z is about 2.0412; the Monte-Carlo helper
measures the actual finite-N false-positive behavior of the threshold rule.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import BehaviorValue, behavior_label
from .seeds import rng_from_seed
from .service import ServiceInstance
from .synthesis import AttackSampleSet

DEFAULT_THRESHOLD = 1.7


# ---------------------------------------------------------------------------
# similarity functions


def indicator_similarity(a: BehaviorValue, b: BehaviorValue) -> float:
    """1.0 iff both behaviors carry the same label (soft outputs argmaxed)."""
    return 1.0 if behavior_label(a) == behavior_label(b) else 0.0


indicator_similarity.symmetric = True


def symmetrize_similarity(base):
    """Make an ordered similarity evaluator symmetric by averaging both orders.

    Evaluators that declare ``symmetric = True`` are returned unchanged.
    """
    if getattr(base, "symmetric", False):
        return base

    def symmetric_eval(a: BehaviorValue, b: BehaviorValue) -> float:
        return 0.5 * (base(a, b) + base(b, a))

    symmetric_eval.symmetric = True
    symmetric_eval.base = base
    return symmetric_eval


# ---------------------------------------------------------------------------
# scores and verdicts


def pei_score(service: ServiceInstance, objectives: np.ndarray,
              candidate_samples: np.ndarray, sim,
              objective_responses: list[BehaviorValue] | None = None) -> float:
    """Mean similarity between one candidate's samples and the objectives.

    ``candidate_samples`` is the stacked (M1 * M2, H, W, C) block with
    objectives varying slowest.  ``objective_responses`` lets callers query
    the service once for the objectives and reuse the answers across every
    candidate; when omitted they are queried here.
    """
    n_obj = len(objectives)
    total = len(candidate_samples)
    if total == 0 or total % n_obj:
        raise ValueError(f"{total} samples do not evenly cover {n_obj} objectives")
    replicas = total // n_obj
    if objective_responses is None:
        objective_responses = service.predict(objectives)
    if len(objective_responses) != n_obj:
        raise ValueError("one response per objective required")

    sample_responses = service.predict(candidate_samples)
    values = []
    for j in range(n_obj):
        for k in range(replicas):
            values.append(sim(sample_responses[j * replicas + k],
                              objective_responses[j]))
    return float(np.mean(values))


def z_scores(scores) -> np.ndarray | None:
    """Studentized scores: (score - mean) / sample SD (ddof=1).

    Returns None when the scores are exactly constant (zero sample SD),
    the degenerate no-evidence marker.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or len(scores) < 2:
        raise ValueError("need at least two candidate scores")
    # exact-constant vectors are degenerate even when their float mean
    # rounds off-center (mean([x, x, x]) need not equal x bitwise)
    if np.all(scores == scores[0]):
        return None
    sd = scores.std(ddof=1)
    if sd == 0.0:
        return None
    return (scores - scores.mean()) / sd


@dataclass(frozen=True)
class Verdict:
    """Identified(index) when exactly one z-score clears the threshold."""

    identified: int | None

    @property
    def is_identified(self) -> bool:
        return self.identified is not None

    def __str__(self) -> str:
        return "no-candidate" if self.identified is None else f"candidate {self.identified}"


NO_CANDIDATE = Verdict(None)


def decide(z: np.ndarray | None, threshold: float = DEFAULT_THRESHOLD) -> Verdict:
    """Single strict exceedance identifies; anything else is no-candidate."""
    if z is None:
        return NO_CANDIDATE
    above = np.flatnonzero(np.asarray(z) > threshold)
    if len(above) == 1:
        return Verdict(int(above[0]))
    return NO_CANDIDATE


# ---------------------------------------------------------------------------
# the full inference stage


@dataclass
class PeiReport:
    candidate_names: list[str]
    scores: list[float]
    zscores: list[float] | None
    verdict: Verdict
    threshold: float
    service_name: str
    service_queries: int
    config_fingerprint: str = ""
    notes: dict = field(default_factory=dict)

    @property
    def identified_name(self) -> str | None:
        if not self.verdict.is_identified:
            return None
        return self.candidate_names[self.verdict.identified]

    def to_json(self) -> dict:
        return {
            "service": self.service_name,
            "threshold": self.threshold,
            "candidates": [
                {
                    "name": name,
                    "score": self.scores[i],
                    "score_pct": round(100.0 * self.scores[i], 4),
                    "z": None if self.zscores is None else self.zscores[i],
                }
                for i, name in enumerate(self.candidate_names)
            ],
            "degenerate": self.zscores is None,
            "verdict": self.identified_name,
            "service_queries": self.service_queries,
            "config_fingerprint": self.config_fingerprint,
            "notes": self.notes,
        }

    def to_json_str(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def render_table(self) -> str:
        """Plain-text score table: one row per candidate, verdict footer."""
        width = max(len(n) for n in self.candidate_names) + 2
        lines = [f"service: {self.service_name}   (threshold z > {self.threshold:g})",
                 f"{'candidate':<{width}}{'score %':>9}  {'z-score':>8}"]
        for i, name in enumerate(self.candidate_names):
            z = "--" if self.zscores is None else f"{self.zscores[i]:8.2f}"
            mark = " *" if self.verdict.identified == i else ""
            lines.append(f"{name:<{width}}{100 * self.scores[i]:>9.1f}  {z:>8}{mark}")
        verdict = self.identified_name or "(no candidate)"
        lines.append(f"inferred encoder: {verdict}")
        return "\n".join(lines)


def run_inference(service: ServiceInstance, sample_set: AttackSampleSet,
                  sim=indicator_similarity,
                  threshold: float = DEFAULT_THRESHOLD,
                  exclude: set[str] | None = None,
                  config_fingerprint: str = "") -> PeiReport:
    """Score every candidate in the sample set against one service.

    ``exclude`` drops candidates (by name) without resynthesizing, which is
    how the leave-one-out protocol removes the true hidden encoder.
    Objective responses are queried once and shared across candidates, so
    the service sees exactly N * M1 * M2 + M1 queries.
    """
    names = list(sample_set.candidate_names)
    keep = [i for i, n in enumerate(names) if not exclude or n not in exclude]
    if len(keep) < 2:
        raise ValueError("inference needs at least two candidates")

    objective_responses = service.predict(sample_set.objectives)
    scores = []
    for i in keep:
        scores.append(pei_score(service, sample_set.objectives,
                                sample_set.candidate_samples(i), sim,
                                objective_responses))
    z = z_scores(scores)
    return PeiReport(
        candidate_names=[names[i] for i in keep],
        scores=[float(s) for s in scores],
        zscores=None if z is None else [float(v) for v in z],
        verdict=decide(z, threshold),
        threshold=threshold,
        service_name=service.name,
        service_queries=service.query_count,
        config_fingerprint=config_fingerprint,
    )


def null_fpr_monte_carlo(candidates: int, trials: int, seed: int,
                         threshold: float = DEFAULT_THRESHOLD) -> dict:
    """Empirical false-positive behavior under i.i.d. standard-normal scores.

    Each trial studentizes N normal draws and applies the decision rule;
    reports the per-candidate exceedance rate and the identified-verdict rate.
    """
    if candidates < 2:
        raise ValueError("need at least two candidates")
    if trials < 1:
        raise ValueError("need at least one trial")
    rng = rng_from_seed(seed)
    exceed = 0
    identified = 0
    for _ in range(trials):
        z = z_scores(rng.standard_normal(candidates))
        if z is None:
            continue
        exceed += int(np.count_nonzero(z > threshold))
        if decide(z, threshold).is_identified:
            identified += 1
    return {
        "candidates": candidates,
        "trials": trials,
        "threshold": threshold,
        "per_candidate_exceedance_rate": exceed / (trials * candidates),
        "identified_rate": identified / trials,
    }
