"""Model stealing against a downstream service, with and without the
hidden-encoder knowledge recovered by the inference stage.

The thief labels a surrogate dataset through the target's API (soft logits
or hard labels, as the target allows) and trains a substitute:

* ``correct``  an MLP head over the identified hidden encoder's embeddings
* ``wrong``    the same head over a different candidate's embeddings
* ``scratch``  a softmax-linear model on raw pixels, no encoder at all

The target is queried exactly once per surrogate image; fidelity and
accuracy are measured on a held-out test split whose target predictions
the caller supplies (so evaluation never touches the target's meter).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import HardLabel, SoftLogits, behavior_label
from .datasets import DatasetSpec, generate_split
from .head import DownstreamHead, TrainConfig, softmax, train_head
from .service import ServiceInstance
from .zoo import ToyEncoder

STOLEN_KINDS = ("correct", "wrong", "scratch")


@dataclass(frozen=True)
class StealConfig:
    label_mode: str            # "soft" | "hard"
    stolen_kind: str           # see STOLEN_KINDS
    surrogate: DatasetSpec
    train: TrainConfig
    hidden_widths: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if self.label_mode not in ("soft", "hard"):
            raise ValueError(f"label_mode must be 'soft' or 'hard', got {self.label_mode!r}")
        if self.stolen_kind not in STOLEN_KINDS:
            raise ValueError(f"stolen_kind must be one of {STOLEN_KINDS}")


@dataclass
class StealReport:
    stolen_kind: str
    label_mode: str
    accuracy: float
    fidelity: float
    query_count: int
    encoder_name: str | None = None

    def to_json(self) -> dict:
        return {
            "stolen_kind": self.stolen_kind,
            "label_mode": self.label_mode,
            "accuracy": self.accuracy,
            "fidelity": self.fidelity,
            "query_count": self.query_count,
            "encoder": self.encoder_name,
        }


def compute_fidelity(stolen_predictions, target_predictions) -> float:
    """Fraction of inputs where both models pick the same top-1 class."""
    a = np.asarray(stolen_predictions)
    b = np.asarray(target_predictions)
    if a.shape != b.shape:
        raise ValueError(f"prediction lists differ in length: {a.shape} vs {b.shape}")
    return float(np.mean(a == b))


def _steal_targets(responses, mode: str, classes: int) -> np.ndarray:
    if mode == "hard":
        return np.array([behavior_label(r) for r in responses], dtype=np.int64)
    rows = np.stack([r.logits for r in responses]).astype(np.float64)
    return softmax(rows)


@dataclass
class StolenModel:
    kind: str
    head: DownstreamHead
    encoder: ToyEncoder | None  # None for the scratch model

    def predict(self, images: np.ndarray) -> np.ndarray:
        if self.encoder is None:
            feats = np.asarray(images, np.float32).reshape(len(images), -1)
        else:
            feats = self.encoder.encode_batch(images)
        return self.head.predict(feats)


def run_model_stealing(target: ServiceInstance, config: StealConfig, *,
                       encoder: ToyEncoder | None,
                       test_images: np.ndarray, test_labels: np.ndarray,
                       target_test_predictions: np.ndarray,
                       seed: int) -> tuple[StealReport, StolenModel]:
    """Steal the target once and score the substitute.

    ``encoder`` is the candidate the thief trains on (required unless the
    stolen kind is ``scratch``).  Raises PermissionError when the config
    asks for soft labels from a hard-only target.
    """
    if config.stolen_kind != "scratch" and encoder is None:
        raise ValueError(f"stolen kind {config.stolen_kind!r} needs an encoder")
    if not target.allows(config.label_mode):
        raise PermissionError(f"target does not expose {config.label_mode!r} labels")

    surrogate_images, _ = generate_split(config.surrogate, "train")
    responses = target.predict(surrogate_images, config.label_mode)
    targets = _steal_targets(responses, config.label_mode, target.classes)

    if config.stolen_kind == "scratch":
        feats = surrogate_images.reshape(len(surrogate_images), -1)
        widths = (feats.shape[1], target.classes)
    else:
        feats = encoder.encode_batch(surrogate_images)
        widths = (encoder.embedding_dim, *config.hidden_widths, target.classes)

    head = train_head(feats, targets, widths, config.train, seed)
    model = StolenModel(config.stolen_kind, head,
                        None if config.stolen_kind == "scratch" else encoder)

    stolen_pred = model.predict(test_images)
    report = StealReport(
        stolen_kind=config.stolen_kind,
        label_mode=config.label_mode,
        accuracy=float(np.mean(stolen_pred == np.asarray(test_labels))),
        fidelity=compute_fidelity(stolen_pred, target_test_predictions),
        query_count=len(surrogate_images),
        encoder_name=None if encoder is None else encoder.name,
    )
    return report, model


def hard_predictions(service: ServiceInstance, images: np.ndarray) -> np.ndarray:
    """Top-1 labels of a service on a batch (helper for fidelity baselines)."""
    return np.array([behavior_label(r) for r in service.predict(images, "hard")],
                    dtype=np.int64)
