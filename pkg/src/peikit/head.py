"""Downstream classification head: an MLP trained on frozen embeddings.

The head is a stack of fully-connected layers with ReLU between them,
trained by minibatch gradient descent with momentum on softmax
cross-entropy.  Embeddings are precomputed once; the encoder is never
touched during the optimization itself.  Targets may be integer labels or
full probability rows (soft targets, used by the stealing case study).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingFailure
from .seeds import rng_from_seed


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 800
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9


@dataclass
class DownstreamHead:
    """Weights of the MLP; ``widths`` is (input, *hidden, classes)."""

    widths: tuple[int, ...]
    weights: list[np.ndarray] = field(repr=False)
    biases: list[np.ndarray] = field(repr=False)

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def classes(self) -> int:
        return self.widths[-1]

    def logits(self, emb: np.ndarray) -> np.ndarray:
        a = np.asarray(emb, dtype=np.float32)
        if a.ndim == 1:
            a = a[np.newaxis]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w + b
            if i < len(self.weights) - 1:
                a = np.maximum(a, 0.0)
        return a

    def predict(self, emb: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(emb), axis=1)

    def copy(self) -> "DownstreamHead":
        return DownstreamHead(self.widths, [w.copy() for w in self.weights],
                              [b.copy() for b in self.biases])


def init_head(widths: tuple[int, ...] | list[int], seed: int) -> DownstreamHead:
    """He-initialized MLP; widths must include input and output sizes."""
    widths = tuple(int(v) for v in widths)
    if len(widths) < 2:
        raise ValueError("head needs at least (input, classes) widths")
    rng = rng_from_seed(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        scale = np.sqrt(2.0 / fan_in)
        weights.append((rng.standard_normal((fan_in, fan_out)) * scale)
                       .astype(np.float32))
        biases.append(np.zeros(fan_out, dtype=np.float32))
    return DownstreamHead(widths, weights, biases)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean CE; targets are labels (1-D int) or probability rows (2-D)."""
    z = logits - logits.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    if targets.ndim == 1:
        picked = log_p[np.arange(len(targets)), targets]
        return float(-picked.mean())
    return float(-(targets * log_p).sum(axis=1).mean())


def _target_rows(targets: np.ndarray, classes: int) -> np.ndarray:
    if targets.ndim == 1:
        rows = np.zeros((len(targets), classes), dtype=np.float64)
        rows[np.arange(len(targets)), targets] = 1.0
        return rows
    return np.asarray(targets, dtype=np.float64)


def head_gradients(head: DownstreamHead, emb: np.ndarray,
                   targets: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Backprop gradients of mean softmax CE w.r.t. every weight and bias."""
    acts = [np.asarray(emb, dtype=np.float64)]
    pre = []
    a = acts[0]
    for i, (w, b) in enumerate(zip(head.weights, head.biases)):
        z = a @ w.astype(np.float64) + b.astype(np.float64)
        pre.append(z)
        a = np.maximum(z, 0.0) if i < len(head.weights) - 1 else z
        acts.append(a)

    batch = emb.shape[0]
    probs = softmax(pre[-1])
    delta = (probs - _target_rows(targets, head.classes)) / batch
    grads_w: list[np.ndarray] = [None] * len(head.weights)
    grads_b: list[np.ndarray] = [None] * len(head.weights)
    for i in reversed(range(len(head.weights))):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ head.weights[i].astype(np.float64).T) * (pre[i - 1] > 0)
    return grads_w, grads_b


def train_head(embeddings: np.ndarray, targets: np.ndarray,
               widths: tuple[int, ...] | list[int], config: TrainConfig,
               seed: int) -> DownstreamHead:
    """Train an MLP head on precomputed embeddings.

    Raises TrainingFailure when the loss turns NaN (divergence).
    """
    embeddings = np.asarray(embeddings, dtype=np.float32)
    if embeddings.ndim != 2 or embeddings.shape[0] == 0:
        raise ValueError("embeddings must be a nonempty (N, d) array")
    if embeddings.shape[1] != widths[0]:
        raise ValueError(f"embedding dim {embeddings.shape[1]} does not match "
                         f"head input width {widths[0]}")

    head = init_head(widths, seed)
    rng = rng_from_seed(seed ^ 0x5EED)
    velocity_w = [np.zeros_like(w, dtype=np.float64) for w in head.weights]
    velocity_b = [np.zeros_like(b, dtype=np.float64) for b in head.biases]
    n = embeddings.shape[0]

    for it in range(config.iterations):
        idx = rng.integers(0, n, size=min(config.batch_size, n))
        batch, batch_t = embeddings[idx], targets[idx]
        grads_w, grads_b = head_gradients(head, batch, batch_t)
        loss = cross_entropy(head.logits(batch), batch_t)
        if not np.isfinite(loss):
            raise TrainingFailure(
                f"training diverged at iteration {it} (loss={loss})",
                iteration=it, loss=loss)
        for i in range(len(head.weights)):
            velocity_w[i] = config.momentum * velocity_w[i] - config.learning_rate * grads_w[i]
            velocity_b[i] = config.momentum * velocity_b[i] - config.learning_rate * grads_b[i]
            head.weights[i] = (head.weights[i].astype(np.float64) + velocity_w[i]).astype(np.float32)
            head.biases[i] = (head.biases[i].astype(np.float64) + velocity_b[i]).astype(np.float32)
    return head


def accuracy(head: DownstreamHead, embeddings: np.ndarray,
             labels: np.ndarray) -> float:
    return float(np.mean(head.predict(embeddings) == labels))
