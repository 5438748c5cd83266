"""Per-unit NSS scoring, positive fixation detectors and network dissection.

Every encoder channel ("unit") is scored by how well its activation map,
upsampled to image size, predicts human fixations (NSS).  Units whose
min-max normalized top-5 mean NSS reaches a threshold are the positive
fixation detectors.  Dissection then binarizes each unit's maps at its
0.5% upper-tail threshold and matches them against labeled class masks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError
from .metrics import cc, nss
from .model import Network, encoder_features
from .parallel import pmap
from .tensor import bilinear_resize

TOP_K = 5
DEFAULT_T = 0.9
DETECTION_FLOOR = 0.04
TAIL = 0.005

Extractor = Callable[[Network, np.ndarray], np.ndarray]


@dataclass
class UnitScore:
    unit_index: int
    per_image_nss: list[tuple[str, float]]
    top5_mean: float
    normalized_score: float = 0.0


def _features(net, samples, extractor: Extractor | None) -> list[np.ndarray]:
    extractor = extractor or encoder_features
    return pmap(lambda s: extractor(net, s.image), samples)


def top_k_mean(values: Sequence[float], k: int = TOP_K) -> float:
    """Mean of the ``k`` largest values (all of them when there are fewer)."""
    v = np.sort(np.asarray(values, dtype=np.float64))[::-1]
    return float(v[:k].mean())


def minmax_normalize(values: Sequence[float]) -> np.ndarray:
    """Rescale to [0, 1]; if every value is equal the result is all zeros."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def unit_nss_scores(net: Network, data, extractor: Extractor | None = None) -> list[UnitScore]:
    """Score every encoder channel by NSS against each image's fixations."""
    data = list(data)
    if not data:
        raise DomainError("need at least one image to score units")
    feats = _features(net, data, extractor)
    k = feats[0].shape[2]
    per_unit: list[list[tuple[str, float]]] = [[] for _ in range(k)]
    for s, f in zip(data, feats):
        h, w = s.image.shape[:2]
        up = bilinear_resize(f, h, w)
        for u in range(k):
            per_unit[u].append((s.image_id, nss(up[..., u], s.fixations)))
    means = [top_k_mean([v for _, v in rows]) for rows in per_unit]
    norm = minmax_normalize(means)
    return [UnitScore(u, per_unit[u], means[u], float(norm[u])) for u in range(k)]


def select_positive_detectors(scores: Sequence[UnitScore], threshold: float = DEFAULT_T) -> list[int]:
    return sorted(s.unit_index for s in scores if s.normalized_score >= threshold)


def unit_threshold(values, tail: float = TAIL) -> float:
    """Nearest-rank upper-tail threshold.

    Returns the smallest observed value v such that at most ``tail`` of the
    values are strictly greater than v.  For the default tail the number
    allowed above is ``floor(n / 200)``, computed in integers to avoid
    rounding at exact multiples.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    n = v.size
    if n == 0:
        raise DomainError("cannot threshold an empty value set")
    if tail == TAIL:
        allowed = n // 200
    else:
        allowed = int(np.floor(tail * n))
    idx = n - 1 - allowed
    return float(np.partition(v, idx)[idx])


def iou(binary, mask) -> float:
    """Intersection over union of two boolean maps (0 when both are empty)."""
    a = np.asarray(binary, dtype=bool)
    b = np.asarray(mask, dtype=bool)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


@dataclass
class UnitDissection:
    unit: int
    threshold: float
    best_class: str | None
    best_iou: float
    ious: dict[str, float] = field(default_factory=dict)


@dataclass
class ClassFrequency:
    name: str
    detected: int  # f_d
    total: int  # f_t

    @property
    def normalized(self) -> float:  # f_n
        return self.detected / self.total


@dataclass
class DissectionReport:
    units: list[UnitDissection]
    classes: list[ClassFrequency]


def detection_frequency(detected: int, total: int) -> float:
    if total <= 0:
        raise DomainError("class never occurs; its detection frequency is undefined")
    return detected / total


def dissect_units(net: Network, data, units: Sequence[int], floor: float = DETECTION_FLOOR,
                  extractor: Extractor | None = None) -> DissectionReport:
    """Assign each selected unit the class whose masks its binarized maps overlap best.

    IOU is accumulated over the whole dataset (sum of intersections over sum
    of unions).  f_d(c) counts (unit, image) pairs where the unit's best class
    is c and its binarized map touches that image's c-mask; f_t(c) counts the
    images that contain c at all.  Classes absent from the data are dropped.
    """
    data = list(data)
    if not data:
        raise DomainError("dissection needs at least one labeled image")
    classes = sorted({c for s in data for c, m in s.masks.items() if np.any(m)})
    present = {c: sum(1 for s in data if c in s.masks and np.any(s.masks[c])) for c in classes}
    feats = _features(net, data, extractor) if units else []

    unit_rows: list[UnitDissection] = []
    detected = dict.fromkeys(classes, 0)
    for u in units:
        tk = unit_threshold(np.concatenate([f[..., u].ravel() for f in feats]))
        inter = dict.fromkeys(classes, 0)
        union = dict.fromkeys(classes, 0)
        hits: list[set[str]] = []
        for s, f in zip(data, feats):
            h, w = s.image.shape[:2]
            binary = bilinear_resize(f[..., u], h, w) > tk
            touched = set()
            for c in classes:
                m = s.masks.get(c)
                if m is None:
                    m = np.zeros((h, w), dtype=bool)
                both = np.count_nonzero(binary & m)
                inter[c] += both
                union[c] += np.count_nonzero(binary | m)
                if both:
                    touched.add(c)
            hits.append(touched)
        ious = {c: (inter[c] / union[c] if union[c] else 0.0) for c in classes}
        best = max(classes, key=lambda c: ious[c]) if classes else None
        if best is not None and ious[best] < floor:
            best = None
        if best is not None:
            detected[best] += sum(1 for t in hits if best in t)
        unit_rows.append(UnitDissection(int(u), tk, best, ious[best] if best else 0.0, ious))
    freq = [ClassFrequency(c, detected[c], present[c]) for c in classes]
    return DissectionReport(unit_rows, freq)


def detector_performance_correlation(per_model) -> float:
    """Pearson r between detector ratios and model NSS over several models."""
    pts = np.asarray(per_model, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 3:
        raise DomainError("need at least three (ratio, nss) points")
    return cc(pts[:, 0], pts[:, 1])


def pattern_crop(image, activation, threshold: float | None = None) -> np.ndarray:
    """Grey-level product of an image with its (resized) unit activation.

    The result is cropped to the bounding box of the active region, i.e.
    where the activation exceeds ``threshold`` (default: half its maximum).
    """
    image = np.asarray(image, dtype=np.float64)
    grey = image.mean(axis=2) if image.ndim == 3 else image
    act = bilinear_resize(activation, *grey.shape)
    span = act.max() - act.min()
    weight = (act - act.min()) / span if span > 0 else np.zeros_like(act)
    product = grey * weight
    if threshold is None:
        active = weight >= 0.5
    else:
        active = act > threshold
    if not active.any():
        return product
    rows = np.flatnonzero(active.any(axis=1))
    cols = np.flatnonzero(active.any(axis=0))
    return product[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
