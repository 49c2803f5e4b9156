"""Shared helpers for the test suite."""

from __future__ import annotations

import math

import numpy as np

from rotdet import RotatedBox, canonicalize, corners
from rotdet.codec import AnchorSet, GridSpec, RawPredictions
from rotdet.geometry import HALF_PI, PI


def random_box(rng, span=60.0, size_lo=4.0, size_hi=14.0) -> RotatedBox:
    cx, cy = rng.uniform(10.0, 10.0 + span, size=2)
    w = rng.uniform(size_lo, size_hi)
    h = rng.uniform(size_lo, size_hi)
    return RotatedBox(cx, cy, w, h, rng.uniform(-2.0 * PI, 2.0 * PI))


def random_canonical_box(rng, image=256.0) -> RotatedBox:
    cx, cy = rng.uniform(0.15 * image, 0.85 * image, size=2)
    h = rng.uniform(0.08 * image, 0.3 * image)
    w = h / rng.uniform(1.5, 4.0)
    return canonicalize(RotatedBox(cx, cy, w, h, rng.uniform(-HALF_PI, HALF_PI)))


def corner_set(box: RotatedBox) -> np.ndarray:
    pts = corners(box).points
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    return pts[order]


def same_point_set(a: RotatedBox, b: RotatedBox, tol: float = 1e-9) -> bool:
    return bool(np.allclose(corner_set(a), corner_set(b), atol=tol, rtol=0.0))


def overlapping_pair(rng):
    """Box pair likely to overlap; used by IoU oracle comparisons."""
    a = random_box(rng, span=6.0, size_lo=5.0, size_hi=12.0)
    b = RotatedBox(
        a.cx + rng.uniform(-4.0, 4.0),
        a.cy + rng.uniform(-4.0, 4.0),
        rng.uniform(5.0, 12.0),
        rng.uniform(5.0, 12.0),
        rng.uniform(-2.0 * PI, 2.0 * PI),
    )
    return a, b


def small_instance(seed: int, avoid_kinks: bool = True):
    """One-level toy instance for gradient checks: grid, anchors, gts, raw."""
    rng = np.random.default_rng(seed)
    grid = GridSpec(level=1, stride=32, image_h=64, image_w=64)
    anchors = AnchorSet(
        {1: ((10.0, 24.0), (16.0, 40.0), (24.0, 56.0))}
    )
    n_gts = int(rng.integers(1, 3))
    gts = []
    taken = set()
    while len(gts) < n_gts:
        box = random_canonical_box(rng, image=64.0)
        cell = (int(box.cy // 32), int(box.cx // 32))
        if cell in taken:
            continue
        taken.add(cell)
        gts.append(box)
    raw = RawPredictions.zeros([grid])
    for arr in raw.levels.values():
        arr[:] = rng.normal(0.0, 1.2, size=arr.shape)
    if avoid_kinks:
        _push_angles_off_kinks(raw, gts, grid, anchors)
    return grid, anchors, gts, raw


def _push_angles_off_kinks(raw, gts, grid, anchors, margin: float = 5e-3):
    """Nudge raw angle channels so no positive sits near a fold kink."""
    from rotdet import assign
    from rotdet.codec import CodecParams, sigmoid

    params = CodecParams()
    assignment = assign(gts, [grid], anchors)
    arr = raw.levels[grid.level]
    for slot in assignment.positives:
        gt = gts[slot.gt_index]
        for _ in range(100):
            t = arr[slot.anchor, slot.i, slot.j, 4]
            btheta = params.alpha * sigmoid(t) - params.beta
            folded = abs(_fold(btheta - gt.theta))
            if folded > margin and (HALF_PI - folded) > margin:
                break
            arr[slot.anchor, slot.i, slot.j, 4] = t + 3.0 * margin
    return raw


def _fold(delta: float) -> float:
    m = (delta - HALF_PI) % PI
    return HALF_PI if m == 0.0 else m - HALF_PI
