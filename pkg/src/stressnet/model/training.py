"""Mini-batch Adam training with per-epoch history and deterministic seeding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import ClassWeights, WordInstance, compute_class_weights
from ..errors import (
    DivergedAtEpoch,
    InvalidConfig,
    NumericalInstability,
    ShapeError,
)
from ..lexicon import StressLevel
from .config import ModelConfig, TrainConfig
from .network import (
    Params,
    forward,
    init_params,
    loss_and_grads,
    loss_from_logits,
    position_weights,
    zeros_like_params,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class Batch:
    features: np.ndarray  # (N, 17, K)
    types: np.ndarray     # (N, 17)
    mask: np.ndarray      # (N, 17)
    labels: np.ndarray    # (N, 17)
    weights: np.ndarray   # (N, 17)

    def __len__(self) -> int:
        return self.features.shape[0]

    def take(self, idx: np.ndarray) -> "Batch":
        return Batch(self.features[idx], self.types[idx], self.mask[idx],
                     self.labels[idx], self.weights[idx])


def make_batch(instances: list[WordInstance], config: ModelConfig,
               weight_table: np.ndarray | None = None) -> Batch:
    """Stack instances into arrays, slicing features to the config's K."""
    if not instances:
        raise InvalidConfig("no instances")
    K = config.feature_dim
    features = np.stack([inst.features[:, :K] for inst in instances])
    types = np.stack([inst.type_indices for inst in instances])
    mask = np.stack([inst.mask for inst in instances])
    labels = np.stack([inst.labels for inst in instances])
    weights = position_weights(weight_table, types, labels, mask)
    return Batch(features, types, mask, labels, weights)


class Adam:
    def __init__(self, params: Params, lr: float):
        self.lr = lr
        self.m = zeros_like_params(params)
        self.v = zeros_like_params(params)
        self.t = 0

    def step(self, params: Params, grads: Params) -> None:
        self.t += 1
        b1c = 1.0 - ADAM_BETA1 ** self.t
        b2c = 1.0 - ADAM_BETA2 ** self.t
        for key, g in grads.items():
            m = self.m[key]
            v = self.v[key]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            params[key] -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + ADAM_EPS)


def evaluate_batch(params: Params, batch: Batch, config: ModelConfig,
                   ) -> tuple[float, float]:
    """(mean loss, accuracy) over valid slots, dropout off."""
    logits, _, _, _ = forward(params, batch.features, batch.types,
                              batch.mask, config)
    loss, _ = loss_from_logits(logits, batch.labels, batch.mask, batch.weights)
    pred = logits.argmax(axis=-1)
    correct = (pred == batch.labels) & batch.mask
    return loss, float(correct.sum() / batch.mask.sum())


def train(train_set: list[WordInstance], val_set: list[WordInstance],
          model_config: ModelConfig, train_config: TrainConfig,
          class_weights: ClassWeights | None = None,
          ) -> tuple[Params, ClassWeights | None, list[dict]]:
    """Mini-batch Adam on the weighted cross-entropy.

    Returns the parameters with the best validation accuracy (the final
    ones if no epoch improves on the start), the class-weight table in
    effect (None when weighting is off), and the per-epoch history.
    Fully deterministic for a given seed.
    """
    if not train_set or not val_set:
        raise InvalidConfig("train and validation sets must be non-empty")
    use_weights = train_config.resolve_use_weights(model_config)
    if use_weights and class_weights is None:
        class_weights = compute_class_weights(train_set)
    if not use_weights:
        class_weights = None
    table = class_weights.table if class_weights is not None else None

    train_batch = make_batch(train_set, model_config, table)
    val_batch = make_batch(val_set, model_config, table)

    seed_seq = np.random.SeedSequence(train_config.seed)
    init_rng, shuffle_rng, drop_rng = (
        np.random.default_rng(s) for s in seed_seq.spawn(3))
    params = init_params(model_config, init_rng)
    opt = Adam(params, train_config.learning_rate)

    history: list[dict] = []
    best_acc = -1.0
    best_params = {k: v.copy() for k, v in params.items()}
    n = len(train_batch)
    bs = train_config.batch_size
    for epoch in range(train_config.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        epoch_correct = 0
        epoch_valid = 0
        for start in range(0, n, bs):
            mb = train_batch.take(order[start:start + bs])
            try:
                loss, grads, probs = loss_and_grads(
                    params, mb.features, mb.types, mb.mask, mb.labels,
                    mb.weights, model_config, train=True, rng=drop_rng)
            except NumericalInstability as exc:
                raise DivergedAtEpoch(epoch, f"epoch {epoch}: {exc}")
            if not np.isfinite(loss):
                raise DivergedAtEpoch(epoch)
            opt.step(params, grads)
            pred = probs.argmax(axis=-1)
            epoch_correct += int(((pred == mb.labels) & mb.mask).sum())
            epoch_valid += int(mb.mask.sum())
            epoch_loss += loss * int(mb.mask.sum())
        val_loss, val_acc = evaluate_batch(params, val_batch, model_config)
        if not np.isfinite(val_loss):
            raise DivergedAtEpoch(epoch)
        history.append({
            "epoch": epoch,
            "train_loss": epoch_loss / max(epoch_valid, 1),
            "train_acc": epoch_correct / max(epoch_valid, 1),
            "val_loss": val_loss,
            "val_acc": val_acc,
        })
        if val_acc > best_acc:
            best_acc = val_acc
            best_params = {k: v.copy() for k, v in params.items()}
    return best_params, class_weights, history


def predict_instance(params: Params, config: ModelConfig,
                     instance: WordInstance,
                     ) -> list[tuple[StressLevel, np.ndarray]]:
    """Per valid syllable: (argmax stress level, 3 class probabilities).

    Ties break toward the lowest class index; padded slots yield nothing.
    """
    K = config.feature_dim
    if instance.features.shape[1] < K:
        raise ShapeError(
            f"instance has {instance.features.shape[1]} feature slots, "
            f"mode needs {K}")
    _, probs, _, _ = forward(
        params,
        instance.features[None, :, :K],
        instance.type_indices[None, :],
        instance.mask[None, :],
        config)
    out = []
    for i in range(instance.valid_count):
        p = probs[0, i]
        out.append((StressLevel(int(p.argmax())), p))
    return out
