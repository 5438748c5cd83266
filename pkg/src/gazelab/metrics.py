"""Saliency evaluation metrics: NSS, CC, AUC-Judd and Sim.

Fixations are sequences of integer (row, col) pixel coordinates.  Maps are
2-D arrays; ``cc`` also accepts any pair of equally shaped arrays, which is
how the detector/performance correlation reuses it.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError, NumericError, ShapeError


def _as_map(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise NumericError("saliency map contains NaN or Inf")
    return m


def _fixation_index(fixations, shape) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(fixations, dtype=np.int64).reshape(-1, 2)
    if len(pts) == 0:
        raise DomainError("fixation set is empty")
    rows, cols = pts[:, 0], pts[:, 1]
    if rows.min() < 0 or cols.min() < 0 or rows.max() >= shape[0] or cols.max() >= shape[1]:
        raise DomainError(f"fixation outside a {shape[0]}x{shape[1]} map")
    return rows, cols


def nss(saliency, fixations) -> float:
    """Mean of the standardized map (population std) at the fixation points.

    A constant map has no spread to standardize and scores 0.
    """
    s = _as_map(saliency)
    rows, cols = _fixation_index(fixations, s.shape)
    sd = s.std()
    if sd == 0.0:
        return 0.0
    z = (s - s.mean()) / sd
    return float(z[rows, cols].mean())


def cc(a, b) -> float:
    """Pearson correlation of two equally shaped arrays."""
    a = _as_map(a).ravel()
    b = _as_map(b).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"cannot correlate {a.size} values with {b.size}")
    a = a - a.mean()
    b = b - b.mean()
    na = np.sqrt(a @ a)
    nb = np.sqrt(b @ b)
    if na == 0.0 or nb == 0.0:
        raise DomainError("correlation is undefined for a constant input")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def auc_judd(saliency, fixations) -> float:
    """Area under the ROC curve separating fixated from non-fixated pixels.

    Positives are the map values at the (distinct) fixated pixels, negatives
    every other pixel.  The curve has a vertex at every distinct map value and
    is integrated with the trapezoid rule, so tied positive/negative pairs
    earn half credit.  A constant map therefore scores exactly 0.5.
    """
    s = _as_map(saliency)
    rows, cols = _fixation_index(fixations, s.shape)
    is_fix = np.zeros(s.shape, dtype=bool)
    is_fix[rows, cols] = True
    n_pos = int(is_fix.sum())
    n_neg = s.size - n_pos
    if n_neg == 0:
        raise DomainError("every pixel is fixated; no negatives to rank against")

    values = s.ravel()
    labels = is_fix.ravel()
    levels, inverse = np.unique(values, return_inverse=True)
    pos_at = np.bincount(inverse, weights=labels, minlength=len(levels))
    neg_at = np.bincount(inverse, weights=~labels, minlength=len(levels))
    # sweep thresholds from the top value down
    tp = np.concatenate(([0.0], np.cumsum(pos_at[::-1]))) / n_pos
    fp = np.concatenate(([0.0], np.cumsum(neg_at[::-1]))) / n_neg
    return float(np.sum(np.diff(fp) * (tp[1:] + tp[:-1]) / 2.0))


def sim(a, b) -> float:
    """Histogram intersection of the two maps after unit-sum normalization."""
    a = _as_map(a)
    b = _as_map(b)
    if a.shape != b.shape:
        raise ShapeError(f"map shapes differ: {a.shape} vs {b.shape}")
    if a.min() < 0 or b.min() < 0:
        raise DomainError("similarity needs non-negative maps")
    sa, sb = a.sum(), b.sum()
    if sa <= 0 or sb <= 0:
        raise DomainError("similarity needs maps with positive mass")
    return float(np.minimum(a / sa, b / sb).sum())


def center_gaussian(h: int, w: int, sigma_frac: float = 0.25) -> np.ndarray:
    """Isotropic Gaussian centred on the image, a classic central-bias baseline."""
    rr, cc_ = np.mgrid[0:h, 0:w]
    sigma = sigma_frac * min(h, w)
    return np.exp(-(((rr - (h - 1) / 2) ** 2 + (cc_ - (w - 1) / 2) ** 2) / (2 * sigma**2)))


def evaluate_map(pred, density, fixations) -> dict[str, float]:
    """All four metrics for one prediction, tolerant of degenerate maps.

    CC and Sim compare against the ground-truth density.  For Sim the
    prediction is min-max rescaled to [0, 1] first (raw network outputs may
    be negative); a constant prediction counts as uniform.  CC of a constant
    prediction is reported as 0.
    """
    pred = _as_map(pred)
    try:
        corr = cc(pred, density)
    except DomainError:
        corr = 0.0
    span = pred.max() - pred.min()
    unit = (pred - pred.min()) / span if span > 0 else np.ones_like(pred)
    return {
        "nss": nss(pred, fixations),
        "cc": corr,
        "auc": auc_judd(pred, fixations),
        "sim": sim(unit, density),
    }
