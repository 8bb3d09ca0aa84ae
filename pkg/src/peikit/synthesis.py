"""Black-box attack-sample synthesis.

For a candidate encoder f and an objective image o, a sample x is driven to
minimize ||f(x) - f(o)||^2 using only encoder queries.  Gradients come from
symmetric two-point probing over random unit-sphere directions:

    grad ~= (dim / S) * sum_s  (L(x + eps*u_s) - L(x - eps*u_s)) / (2*eps) * u_s

followed by an l_inf-normalized step and a clip of the iterate to [0, 1].
Probe points are intentionally NOT clipped; only the iterate is.

Budget accounting is exact: one synthesis consumes 2*S encoder queries per
iteration plus one query to encode the objective, and the ledger asserts
the closed form after every run.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal

import numpy as np

from .core import linf_normalize, require_unit_range
from .errors import EstimationFailure, SynthesisAborted
from .seeds import derive_seed
from .zoo import ToyEncoder

# hyperparameters from the source experiments, for budget projections;
# synthesis at this scale is not run by default
PAPER_DEFAULTS: "AttackConfig"
# desk-scale defaults: the probe radius shrinks with the image because the
# toy encoders saturate under the full-scale radius
TOY_DEFAULTS: "AttackConfig"


@dataclass(frozen=True)
class AttackConfig:
    """Knobs of the synthesis loops.

    objectives_count M1, replicas M2 per (candidate, objective) pair,
    iterations T, directions S per gradient estimate, probe radius eps,
    l_inf step size eta.
    """

    objectives_count: int
    replicas: int
    iterations: int
    directions: int
    radius: float
    step_size: float
    image_shape: tuple[int, int, int]

    def __post_init__(self):
        if min(self.objectives_count, self.replicas, self.directions) < 1:
            raise ValueError("objective/replica/direction counts must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.radius <= 0 or self.step_size <= 0:
            raise ValueError("radius and step size must be positive")

    @property
    def dim(self) -> int:
        return int(np.prod(self.image_shape))

    def probe_queries_per_candidate(self) -> int:
        """Probe budget M1 * M2 * T * 2S (objective encodings excluded)."""
        return (self.objectives_count * self.replicas
                * self.iterations * 2 * self.directions)

    def total_queries_per_candidate(self) -> int:
        """Ledger budget M1 * M2 * (T * 2S + 1); each sample re-encodes its
        objective once (cached for the rest of its run)."""
        return (self.objectives_count * self.replicas
                * (self.iterations * 2 * self.directions + 1))

    def to_json(self) -> dict:
        return {
            "objectives_count": self.objectives_count,
            "replicas": self.replicas,
            "iterations": self.iterations,
            "directions": self.directions,
            "radius": self.radius,
            "step_size": self.step_size,
            "image_shape": list(self.image_shape),
        }

    @staticmethod
    def from_json(obj: dict) -> "AttackConfig":
        return AttackConfig(
            objectives_count=int(obj["objectives_count"]),
            replicas=int(obj["replicas"]),
            iterations=int(obj["iterations"]),
            directions=int(obj["directions"]),
            radius=float(obj["radius"]),
            step_size=float(obj["step_size"]),
            image_shape=tuple(obj["image_shape"]),
        )


PAPER_DEFAULTS = AttackConfig(objectives_count=10, replicas=5, iterations=100,
                              directions=100, radius=5.0, step_size=0.1,
                              image_shape=(64, 64, 3))
TOY_DEFAULTS = AttackConfig(objectives_count=4, replicas=3, iterations=60,
                            directions=64, radius=0.5, step_size=0.05,
                            image_shape=(32, 32, 3))


class BudgetLedger:
    """Append-only query log with per-endpoint totals; thread safe."""

    def __init__(self, price_per_query: Decimal | float | str = 0):
        self.price_per_query = Decimal(str(price_per_query))
        self._entries: list[tuple[str, int]] = []
        self._totals: dict[str, int] = {}
        self._lock = threading.Lock()

    def record(self, endpoint: str, n: int) -> None:
        if n < 0:
            raise ValueError("cannot record a negative query count")
        with self._lock:
            self._entries.append((endpoint, n))
            self._totals[endpoint] = self._totals.get(endpoint, 0) + n

    def queries(self, endpoint: str | None = None) -> int:
        with self._lock:
            if endpoint is None:
                return sum(self._totals.values())
            return self._totals.get(endpoint, 0)

    def entries(self) -> list[tuple[str, int]]:
        with self._lock:
            return list(self._entries)

    def totals(self) -> dict[str, int]:
        with self._lock:
            return dict(self._totals)

    def to_json(self) -> dict:
        return {"totals": self.totals(),
                "price_per_query": str(self.price_per_query)}


def estimate_cost(ledger: "BudgetLedger | int", price_per_query) -> Decimal:
    """Exact cost of the logged queries: count times unit price."""
    price = Decimal(str(price_per_query))
    if price < 0:
        raise ValueError("price must be >= 0")
    count = ledger.queries() if isinstance(ledger, BudgetLedger) else int(ledger)
    return count * price


# ---------------------------------------------------------------------------
# gradient estimation


def _sphere_directions(dim: int, count: int, seed: int) -> np.ndarray:
    from .core import sample_unit_sphere

    out = np.empty((count, dim), dtype=np.float32)
    for s in range(count):
        out[s] = sample_unit_sphere(dim, derive_seed(seed, ("dir", s)))
    return out


def estimate_gradient(loss_fn, x: np.ndarray, directions: int, radius: float,
                      seed: int, batch_loss_fn=None) -> np.ndarray:
    """Two-point zeroth-order gradient estimate at x, in the shape of x.

    ``loss_fn`` maps an image to a real; ``batch_loss_fn``, when given, maps
    a stacked probe array to a vector of losses in one call (same values,
    fewer round trips).  Exactly 2 * directions loss evaluations happen.
    """
    grad, _ = estimate_gradient_with_losses(loss_fn, x, directions, radius,
                                            seed, batch_loss_fn)
    return grad


def estimate_gradient_with_losses(loss_fn, x, directions, radius, seed,
                                  batch_loss_fn=None):
    """As estimate_gradient, also returning the 2S probe losses (for traces)."""
    if directions < 1:
        raise ValueError("need at least one direction")
    if radius <= 0:
        raise ValueError("radius must be positive")
    x = np.asarray(x, dtype=np.float32)
    dim = x.size
    dirs = _sphere_directions(dim, directions, seed)
    offsets = (radius * dirs).reshape(directions, *x.shape)
    probes = np.concatenate([x[np.newaxis] + offsets, x[np.newaxis] - offsets])

    if batch_loss_fn is not None:
        losses = np.asarray(batch_loss_fn(probes), dtype=np.float64)
    else:
        losses = np.array([loss_fn(p) for p in probes], dtype=np.float64)
    if losses.shape != (2 * directions,):
        raise ValueError(f"expected {2 * directions} losses, got {losses.shape}")
    bad = np.isnan(losses)
    if bad.any():
        idx = int(np.argmax(bad))
        raise EstimationFailure("loss evaluator returned NaN",
                                probe=probes[idx])

    diffs = (losses[:directions] - losses[directions:]) / (2.0 * radius)
    grad = (dim / directions) * (diffs @ dirs.astype(np.float64))
    return grad.reshape(x.shape), losses


@dataclass
class SampleResult:
    image: np.ndarray
    loss_trace: list[float]
    queries: int
    skipped_updates: int = 0


def synthesize_sample(encoder: ToyEncoder, objective: np.ndarray,
                      config: AttackConfig, seed: int) -> SampleResult:
    """Run the full zeroth-order loop for one attack sample.

    The trace records, per iteration, the mean loss over that iteration's
    2S probes (a radius-smoothed estimate of the iterate's loss; exact
    evaluation would cost extra queries).  Zero estimated gradients skip
    the update for that iteration instead of dividing by zero.
    """
    objective = require_unit_range(np.asarray(objective, dtype=np.float32),
                                   "objective sample")
    if objective.shape != tuple(config.image_shape):
        raise ValueError(f"objective shape {objective.shape} does not match "
                         f"config {config.image_shape}")

    queries = 1  # the cached objective encoding
    target = encoder.encode(objective)

    def batch_loss(probes: np.ndarray) -> np.ndarray:
        emb = encoder.encode_batch(probes).astype(np.float64)
        delta = emb - target.astype(np.float64)
        return np.einsum("ij,ij->i", delta, delta)

    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, ("init",))))
    x = rng.random(config.image_shape, dtype=np.float32)

    trace: list[float] = []
    skipped = 0
    for t in range(config.iterations):
        grad, losses = estimate_gradient_with_losses(
            None, x, config.directions, config.radius,
            derive_seed(seed, ("iter", t)), batch_loss_fn=batch_loss)
        queries += 2 * config.directions
        trace.append(float(losses.mean()))
        step = linf_normalize(grad)
        if not step.any():
            skipped += 1
            continue
        x = np.clip(x - np.float32(config.step_size) * step.astype(np.float32),
                    0.0, 1.0)
    return SampleResult(image=x, loss_trace=trace, queries=queries,
                        skipped_updates=skipped)


# ---------------------------------------------------------------------------
# the outer loops


@dataclass
class AttackSampleSet:
    """Synthesized samples indexed (candidate, objective, replica)."""

    config: AttackConfig
    candidate_names: list[str]
    objectives: np.ndarray  # (M1, H, W, C)
    samples: dict[tuple[int, int, int], np.ndarray] = field(repr=False)
    loss_traces: dict[tuple[int, int, int], list[float]] = field(repr=False)
    master_seed: int = 0
    bypass: dict | None = None

    def sample(self, candidate: int, objective: int, replica: int) -> np.ndarray:
        return self.samples[(candidate, objective, replica)]

    def candidate_samples(self, candidate: int) -> np.ndarray:
        """Stacked (M1 * M2, H, W, C) block, objectives varying slowest."""
        cfg = self.config
        block = [self.samples[(candidate, j, k)]
                 for j in range(cfg.objectives_count)
                 for k in range(cfg.replicas)]
        return np.stack(block)

    def validate(self) -> None:
        cfg = self.config
        for i in range(len(self.candidate_names)):
            for j in range(cfg.objectives_count):
                for k in range(cfg.replicas):
                    key = (i, j, k)
                    if key not in self.samples:
                        raise ValueError(f"missing sample slot {key}")
                    img = self.samples[key]
                    if img.min() < 0.0 or img.max() > 1.0:
                        raise ValueError(f"sample {key} escapes [0, 1]")
                    trace = self.loss_traces.get(key, [])
                    if cfg.iterations > 0 and (not trace or trace[-1] < 0):
                        raise ValueError(f"sample {key} has no valid final loss")


def synthesize_all(candidates: list[ToyEncoder], objectives: np.ndarray,
                   config: AttackConfig, master_seed: int,
                   ledger: BudgetLedger | None = None,
                   jobs: int = 1) -> AttackSampleSet:
    """Synthesize every (candidate, objective, replica) sample.

    Each sample owns an independent seed stream derived from its index
    path, so the result is bit-identical for any ``jobs`` level.  A failed
    sample aborts the run with the partial results attached.
    """
    if len(candidates) < 1:
        raise ValueError("need at least one candidate encoder")
    names = [c.name for c in candidates]
    if len(set(names)) != len(names):
        raise ValueError("candidate encoder names must be unique")
    objectives = np.asarray(objectives, dtype=np.float32)
    if objectives.shape[0] != config.objectives_count:
        raise ValueError(f"{objectives.shape[0]} objectives given, config "
                         f"says {config.objectives_count}")
    ledger = ledger if ledger is not None else BudgetLedger()

    result = AttackSampleSet(config=config,
                             candidate_names=[c.name for c in candidates],
                             objectives=objectives, samples={},
                             loss_traces={}, master_seed=master_seed)

    work = [(i, j, k)
            for i in range(len(candidates))
            for j in range(config.objectives_count)
            for k in range(config.replicas)]

    def run_one(key):
        i, j, k = key
        seed = derive_seed(master_seed, ("cand", i, "obj", j, "rep", k))
        out = synthesize_sample(candidates[i], objectives[j], config, seed)
        ledger.record(candidates[i].name, out.queries)
        return key, out

    try:
        if jobs <= 1:
            outcomes = map(run_one, work)
            for key, out in outcomes:
                result.samples[key] = out.image
                result.loss_traces[key] = out.loss_trace
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                for key, out in pool.map(run_one, work):
                    result.samples[key] = out.image
                    result.loss_traces[key] = out.loss_trace
    except Exception as exc:  # noqa: BLE001 - partial results must survive
        raise SynthesisAborted(
            f"synthesis aborted after {len(result.samples)}/{len(work)} samples: {exc}",
            partial=result, cause=exc) from exc

    expected = config.total_queries_per_candidate()
    for cand in candidates:
        got = ledger.queries(cand.name)
        if got != expected:
            raise AssertionError(f"ledger mismatch for {cand.name}: "
                                 f"{got} != {expected}")
    result.validate()
    return result
