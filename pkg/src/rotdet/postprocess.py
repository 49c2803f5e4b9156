"""Inference-side filtering: confidence threshold and rotated greedy NMS."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import RotatedBox, canonicalize, corners_batch
from . import _kernels


@dataclass(frozen=True)
class Detection:
    """A rotated box plus its confidence score in [0, 1].

    The box is stored as produced (not forcibly canonicalized) so that
    aspect-ratio statistics of raw predictions stay meaningful; IoU-based
    operations canonicalize internally.
    """

    box: RotatedBox
    conf: float

    def __post_init__(self):
        object.__setattr__(self, "conf", float(self.conf))
        if not math.isfinite(self.conf) or not (0.0 <= self.conf <= 1.0):
            raise ValueError(f"confidence must be in [0, 1], got {self.conf}")


@dataclass(frozen=True)
class NmsConfig:
    conf_threshold: float = 0.3
    iou_threshold: float = 0.45

    def __post_init__(self):
        if not (0.0 <= self.conf_threshold <= 1.0 and 0.0 <= self.iou_threshold <= 1.0):
            raise ValueError("thresholds must be in [0, 1]")


def confidence_filter(dets, threshold: float) -> list[Detection]:
    """Keep detections with ``conf >= threshold``, preserving order."""
    return [d for d in dets if d.conf >= threshold]


def _det_order_key(d: Detection):
    # Confidence descending, then a stable lexicographic tie break so NMS and
    # matching output are deterministic.
    b = d.box
    return (-d.conf, b.cy, b.cx, b.w, b.h, b.theta)


def sort_detections(dets) -> list[Detection]:
    return sorted(dets, key=_det_order_key)


def nms(dets, cfg: NmsConfig = NmsConfig()) -> list[Detection]:
    """Greedy rotated non-maximum suppression.

    Detections below the confidence threshold are dropped, the rest sorted by
    descending confidence; each kept detection suppresses remaining ones with
    rotated IoU strictly above ``cfg.iou_threshold``.
    """
    live = sort_detections(confidence_filter(dets, cfg.conf_threshold))
    if not live:
        return []
    quads = corners_batch([canonicalize(d.box) for d in live])
    kept: list[Detection] = []
    indices = list(range(len(live)))
    while indices:
        top = indices.pop(0)
        kept.append(live[top])
        if not indices:
            break
        rest = np.array(indices)
        ious = _kernels.pairwise_iou(quads[top : top + 1], quads[rest])[0]
        indices = [int(idx) for idx, v in zip(rest, ious) if v <= cfg.iou_threshold]
    return kept
