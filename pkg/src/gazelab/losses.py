"""Pixel-wise training losses and their gradients w.r.t. the prediction.

``ead`` is the exponential absolute distance, sum(exp|p - g| - 1).  The L1,
L2 and BCE losses are the usual baselines; BCE reads predictions as logits.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError, ShapeError

KINDS = ("ead", "l1", "l2", "bce")
REDUCTIONS = ("sum", "mean")

# exp overflows float64 just above 709
_EXP_LIMIT = 700.0


@dataclass(frozen=True)
class LossKind:
    name: str = "ead"
    reduction: str = "sum"

    def __post_init__(self):
        name = self.name.lower()
        if name not in KINDS:
            raise DomainError(f"unknown loss {self.name!r}; choose from {KINDS}")
        if self.reduction not in REDUCTIONS:
            raise DomainError(f"unknown reduction {self.reduction!r}; choose from {REDUCTIONS}")
        object.__setattr__(self, "name", name)


def _as_kind(kind) -> LossKind:
    if isinstance(kind, LossKind):
        return kind
    return LossKind(str(kind))


def _check(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and target {gt.shape} differ")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(gt))):
        raise NumericError("non-finite prediction or target")
    if gt.size and (gt.min() < 0.0 or gt.max() > 1.0):
        raise DomainError("target values must lie in [0, 1]")
    return pred, gt


def _ead_distance(pred, gt) -> np.ndarray:
    d = np.abs(pred - gt)
    if d.size and d.max() > _EXP_LIMIT:
        raise NumericError(f"|pred - gt| = {d.max():.3g} overflows the exponential loss")
    return d


def pixel_losses(kind, pred, gt) -> np.ndarray:
    """Unreduced per-pixel loss values."""
    kind = _as_kind(kind)
    pred, gt = _check(pred, gt)
    if kind.name == "ead":
        return np.expm1(_ead_distance(pred, gt))
    if kind.name == "l1":
        return np.abs(pred - gt)
    if kind.name == "l2":
        return (pred - gt) ** 2
    # -[g log s(p) + (1-g) log(1-s(p))] rewritten as softplus(p) - g p
    return np.logaddexp(0.0, pred) - gt * pred


def loss_value(kind, pred, gt) -> float:
    kind = _as_kind(kind)
    per_pixel = pixel_losses(kind, pred, gt)
    total = float(per_pixel.sum())
    if kind.reduction == "mean":
        total /= max(per_pixel.size, 1)
    return total


def loss_grad(kind, pred, gt) -> np.ndarray:
    """Derivative of :func:`loss_value` w.r.t. every prediction entry.

    The EAD and L1 kinks at pred == gt get a zero subgradient.
    """
    kind = _as_kind(kind)
    pred, gt = _check(pred, gt)
    diff = pred - gt
    if kind.name == "ead":
        grad = np.sign(diff) * np.exp(_ead_distance(pred, gt))
    elif kind.name == "l1":
        grad = np.sign(diff)
    elif kind.name == "l2":
        grad = 2.0 * diff
    else:
        grad = sigmoid(pred) - gt
    if kind.reduction == "mean":
        grad = grad / max(grad.size, 1)
    return grad


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -x))
