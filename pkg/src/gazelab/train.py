"""Adam training loop with per-epoch exponential learning-rate decay."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from . import losses
from .data import GazeSample, split_indices
from .errors import ConfigError, NumericError, ShapeError
from .losses import LossKind
from .metrics import evaluate_map
from .model import Network, backward, forward
from .parallel import pmap
from .tensor import KernelSet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    loss: LossKind = LossKind("ead")
    lr0: float = 5e-5
    lr_decay: float = 0.1
    epochs: int = 1
    batch_size: int = 8
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.loss, str):
            object.__setattr__(self, "loss", LossKind(self.loss))
        if not self.lr0 >= 0:
            raise ConfigError("lr0 must be non-negative")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must lie in (0, 1]")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be at least 1")
        b1, b2 = self.betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1 and self.eps > 0):
            raise ConfigError("Adam needs 0 <= beta < 1 and eps > 0")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 0-based ``epoch``."""
        return self.lr0 * self.lr_decay**epoch


@dataclass
class AdamState:
    m: dict[str, KernelSet] = field(default_factory=dict)
    v: dict[str, KernelSet] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, KernelSet]) -> "AdamState":
        zeros = {k: KernelSet(np.zeros_like(p.weights), np.zeros_like(p.bias)) for k, p in params.items()}
        return cls(zeros, {k: z.copy() for k, z in zeros.items()}, 0)


def adam_step(params: dict[str, KernelSet], grads: dict[str, KernelSet], state: AdamState,
              lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
    """One bias-corrected Adam update, applied to ``params`` in place.

    Gradients are checked before anything is touched, so a non-finite
    gradient leaves both the parameters and the optimizer state unchanged.
    """
    b1, b2 = betas
    for name, p in params.items():
        g = grads[name]
        if g.weights.shape != p.weights.shape or g.bias.shape != p.bias.shape:
            raise ShapeError(f"{name}: gradient extents do not match the parameter")
        if not (np.all(np.isfinite(g.weights)) and np.all(np.isfinite(g.bias))):
            raise NumericError(f"{name}: non-finite gradient, step aborted")
    if not state.m:
        fresh = AdamState.for_params(params)
        state.m, state.v = fresh.m, fresh.v
    state.t += 1
    c1 = 1 - b1**state.t
    c2 = 1 - b2**state.t
    for name, p in params.items():
        g, m, v = grads[name], state.m[name], state.v[name]
        for attr in ("weights", "bias"):
            gi = getattr(g, attr)
            mi = getattr(m, attr)
            vi = getattr(v, attr)
            mi *= b1
            mi += (1 - b1) * gi
            vi *= b2
            vi += (1 - b2) * gi * gi
            getattr(p, attr)[...] -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)
    return params, state


@dataclass
class EpochLog:
    epoch: int
    lr: float
    mean_loss: float
    val_nss: float
    val_cc: float
    val_auc: float
    val_sim: float

    def as_dict(self) -> dict:
        return asdict(self)


class TrainingDiverged(NumericError):
    def __init__(self, msg: str, history: list[EpochLog]):
        super().__init__(msg)
        self.history = history


def predict_map(net: Network, image, loss: LossKind | str = "ead") -> np.ndarray:
    """Saliency in output units; BCE-trained networks emit logits, so squash those."""
    out, _ = forward(net, image, record=False)
    kind = loss if isinstance(loss, LossKind) else LossKind(loss)
    if kind.name == "bce":
        out = losses.sigmoid(out)
    return out


def evaluate(net: Network, samples, loss: LossKind | str = "ead") -> list[dict[str, float]]:
    def score(s: GazeSample):
        return evaluate_map(predict_map(net, s.image, loss), s.density, s.fixations)
    return pmap(score, samples)


def mean_metrics(rows: list[dict[str, float]]) -> dict[str, float]:
    if not rows:
        return {k: float("nan") for k in ("nss", "cc", "auc", "sim")}
    return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}


def _sample_grad(net: Network, s: GazeSample, loss: LossKind):
    pred, cache = forward(net, s.image)
    per_pixel = float(losses.pixel_losses(loss, pred, s.density).mean())
    grads = backward(net, cache, losses.loss_grad(loss, pred, s.density))
    return per_pixel, grads


def train(net: Network, data, cfg: TrainConfig, on_epoch=None):
    """Train ``net`` in place and return it with the per-epoch history.

    ``data`` is split 80/20 into training and validation samples.  Epoch e
    (0-based) runs at ``lr0 * lr_decay**e``.  Gradients are averaged over
    each batch.  ``mean_loss`` is the average per-pixel training loss over
    the epoch, whatever the configured reduction.  ``on_epoch(log, net,
    state)`` runs after each epoch (e.g. to write a checkpoint).
    """
    data = list(data)
    if not data:
        raise ConfigError("training data is empty")
    h, w = net.config.input_h, net.config.input_w
    for s in data:
        if s.image.shape[:2] != (h, w) or s.density.shape != (h, w):
            raise ShapeError(f"sample {s.image_id!r} does not match the {h}x{w} network input")
    train_idx, val_idx = split_indices(len(data), cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.for_params(net.params)
    history: list[EpochLog] = []

    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(train_idx)
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [data[i] for i in order[start:start + cfg.batch_size]]
            try:
                results = pmap(lambda s: _sample_grad(net, s, cfg.loss), batch)
            except NumericError as exc:
                raise TrainingDiverged(f"epoch {epoch + 1}: {exc}", history) from exc
            batch_loss = [r[0] for r in results]
            if not np.all(np.isfinite(batch_loss)):
                raise TrainingDiverged(f"non-finite loss in epoch {epoch + 1}", history)
            epoch_losses.extend(batch_loss)
            total = {k: KernelSet(np.zeros_like(p.weights), np.zeros_like(p.bias))
                     for k, p in net.params.items()}
            for _, g in results:
                for k, gk in g.items():
                    total[k].weights += gk.weights
                    total[k].bias += gk.bias
            for gk in total.values():
                gk.weights /= len(batch)
                gk.bias /= len(batch)
            try:
                adam_step(net.params, total, state, lr, cfg.betas, cfg.eps)
            except NumericError as exc:
                raise TrainingDiverged(str(exc), history) from exc
            net.touch()

        val = mean_metrics(evaluate(net, [data[i] for i in val_idx], cfg.loss))
        entry = EpochLog(epoch + 1, lr, float(np.mean(epoch_losses)),
                         val["nss"], val["cc"], val["auc"], val["sim"])
        history.append(entry)
        log.info("epoch %d lr=%.3g loss=%.5f val_nss=%.3f", entry.epoch, lr, entry.mean_loss, entry.val_nss)
        if on_epoch is not None:
            on_epoch(entry, net, state)
    return net, history
