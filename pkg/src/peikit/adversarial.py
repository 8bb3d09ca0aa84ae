"""Sign-gradient adversarial synthesis against an encoder in hand.

Once the hidden encoder is identified (and a local copy is available),
embedding-matching samples can be produced far more cheaply than in the
black-box stage: iterate x <- clip(x - step * sign(grad)) against the
squared embedding loss toward the target image's embedding.  Several
independently initialized candidates are optimized and the one with the
lowest final loss wins.

The gradient is exact where the encoder supports it (LinearProject);
otherwise a high-sample zeroth-order estimate stands in, which
approximates the white-box behavior at extra query cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import squared_embedding_loss
from .seeds import derive_seed, rng_from_seed
from .synthesis import estimate_gradient
from .zoo import ToyEncoder


@dataclass(frozen=True)
class AdvConfig:
    iterations: int = 2000
    step_size: float = 0.01
    candidates: int = 16
    fallback_directions: int = 256  # zeroth-order sampling when no exact grad
    fallback_radius: float = 0.01

    def __post_init__(self):
        if min(self.iterations, self.candidates, self.fallback_directions) < 1:
            raise ValueError("iterations, candidates, directions must be >= 1")
        if self.step_size <= 0 or self.fallback_radius <= 0:
            raise ValueError("step size and radius must be positive")


@dataclass
class AdvResult:
    image: np.ndarray
    final_loss: float
    candidate_losses: list[float]
    used_exact_gradient: bool


def _optimize_one(encoder: ToyEncoder, target_emb: np.ndarray, x0: np.ndarray,
                  config: AdvConfig, seed: int, exact: bool) -> np.ndarray:
    x = x0.copy()

    def batch_loss(probes):
        emb = encoder.encode_batch(probes).astype(np.float64)
        delta = emb - target_emb.astype(np.float64)
        return np.einsum("ij,ij->i", delta, delta)

    for t in range(config.iterations):
        if exact:
            grad = encoder.analytic_loss_gradient(x, target_emb)
        else:
            grad = estimate_gradient(None, x, config.fallback_directions,
                                     config.fallback_radius,
                                     derive_seed(seed, ("iter", t)),
                                     batch_loss_fn=batch_loss)
        step = np.sign(grad).astype(np.float32)
        if not step.any():
            continue
        x = np.clip(x - np.float32(config.step_size) * step, 0.0, 1.0)
    return x


def whitebox_adversarial_synthesis(encoder: ToyEncoder, target: np.ndarray,
                                   config: AdvConfig, seed: int,
                                   init: np.ndarray | None = None) -> AdvResult:
    """Best-of-N sign-gradient synthesis toward the target's embedding.

    ``init`` warm-starts the first candidate; the rest initialize
    uniformly at random from their own seed streams.  Ties on the final
    loss resolve to the lowest candidate index.
    """
    target = np.asarray(target, dtype=np.float32)
    if target.min() < 0.0 or target.max() > 1.0:
        raise ValueError("target image must lie in [0, 1]")
    target_emb = encoder.encode(target)
    exact = hasattr(encoder, "analytic_loss_gradient")

    best_img, best_loss = None, np.inf
    losses = []
    for c in range(config.candidates):
        if c == 0 and init is not None:
            x0 = np.asarray(init, dtype=np.float32).copy()
        else:
            rng = rng_from_seed(derive_seed(seed, ("adv", c)))
            x0 = rng.random(target.shape, dtype=np.float32)
        x = _optimize_one(encoder, target_emb, x0, config,
                          derive_seed(seed, ("adv", c)), exact)
        loss = squared_embedding_loss(encoder.encode(x), target_emb)
        losses.append(loss)
        if loss < best_loss:
            best_img, best_loss = x, loss
    return AdvResult(image=best_img, final_loss=best_loss,
                     candidate_losses=losses, used_exact_gradient=exact)
