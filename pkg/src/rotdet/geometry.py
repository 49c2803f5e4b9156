"""Rotated-box geometry: canonical form, corners, exact IoU, transforms.

Conventions used across the package:

* Image coordinates: x grows right, y grows down (pixels).
* ``theta`` is the clockwise rotation of the box in radians, realised by the
  matrix ``[[cos t, -sin t], [sin t, cos t]]`` applied to offsets from the
  box center in this coordinate frame.
* Canonical form: ``w < h`` and ``theta`` in ``[-pi/2, pi/2)``.  Boxes related
  by ``(w, h, t) <-> (h, w, t - pi/2)`` or by ``t <-> t + pi`` cover the same
  point set; the canonical representative is unique.
* Quad corners are emitted clockwise on screen (y-down), starting from the
  corner at offset ``(-w/2, -h/2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

PI = math.pi
HALF_PI = math.pi / 2.0
TWO_PI = 2.0 * math.pi

# Exact squares get their width reduced by this before canonicalization so
# every box has a unique representative (deterministic stand-in for breaking
# the tie by shrinking a random side).
SQUARE_TIE_EPS = 1e-4


class InvalidBoxError(ValueError):
    """Raised for boxes with non-finite or non-positive dimensions."""


@dataclass(frozen=True)
class RotatedBox:
    """Rectangle with center ``(cx, cy)``, sides ``(w, h)`` and clockwise
    rotation ``theta`` in radians.
    """

    cx: float
    cy: float
    w: float
    h: float
    theta: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h", "theta"):
            value = getattr(self, name)
            object.__setattr__(self, name, float(value))
            if not math.isfinite(getattr(self, name)):
                raise InvalidBoxError(f"{name} must be finite, got {value!r}")
        if self.w <= 0.0 or self.h <= 0.0:
            raise InvalidBoxError(f"sides must be positive, got w={self.w}, h={self.h}")

    def is_canonical(self) -> bool:
        return self.w < self.h and -HALF_PI <= self.theta < HALF_PI

    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h, self.theta)


@dataclass(frozen=True)
class ConvexQuad:
    """Four vertices shaped (4, 2), convex, in consistent winding order."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (4, 2):
            raise ValueError(f"expected shape (4, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("quad vertices must be finite")
        object.__setattr__(self, "points", pts)

    def area(self) -> float:
        return float(_kernels.polygon_area(self.points))


def wrap_canonical_angle(theta: float) -> float:
    """Wrap an angle into the canonical range ``[-pi/2, pi/2)`` mod pi.

    In-range values pass through untouched, which keeps canonicalization
    exactly idempotent.
    """
    if -HALF_PI <= theta < HALF_PI:
        return theta
    t = (theta + HALF_PI) % PI - HALF_PI
    if t >= HALF_PI:  # float fmod can land exactly on the open bound
        t -= PI
    return t


def canonicalize(box: RotatedBox) -> RotatedBox:
    """Unique representative of ``box``: ``w < h``, ``theta`` in [-pi/2, pi/2).

    Square boxes have their width reduced by ``SQUARE_TIE_EPS`` first so the
    w/h ordering is strict.  Idempotent; the result covers the same point set
    as the input (up to the square tie break).
    """
    w, h, theta = box.w, box.h, box.theta
    if w == h:
        w -= SQUARE_TIE_EPS
    if w > h:
        w, h = h, w
        # Either half-turn shift describes the same box; prefer the one that
        # already lands in range so no further rounding is applied.
        shifted = theta + HALF_PI
        theta = shifted if -HALF_PI <= shifted < HALF_PI else theta - HALF_PI
    return RotatedBox(box.cx, box.cy, w, h, wrap_canonical_angle(theta))


def _corner_array(cx, cy, w, h, theta) -> np.ndarray:
    c = math.cos(theta)
    s = math.sin(theta)
    hw = 0.5 * w
    hh = 0.5 * h
    out = np.empty((4, 2))
    k = 0
    for ox, oy in ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)):
        out[k, 0] = cx + c * ox - s * oy
        out[k, 1] = cy + s * ox + c * oy
        k += 1
    return out


def corners(box: RotatedBox) -> ConvexQuad:
    """Corners of the box rotated clockwise by ``theta`` about its center."""
    return ConvexQuad(_corner_array(box.cx, box.cy, box.w, box.h, box.theta))


def corners_batch(boxes) -> np.ndarray:
    """Corner arrays shaped (n, 4, 2) for a sequence of boxes."""
    arr = np.asarray([b.as_tuple() for b in boxes], dtype=np.float64)
    if arr.size == 0:
        return np.empty((0, 4, 2))
    cx, cy, w, h, theta = arr.T
    c = np.cos(theta)
    s = np.sin(theta)
    hw = 0.5 * w
    hh = 0.5 * h
    out = np.empty((len(boxes), 4, 2))
    for k, (fx, fy) in enumerate(((-1, -1), (1, -1), (1, 1), (-1, 1))):
        ox = fx * hw
        oy = fy * hh
        out[:, k, 0] = cx + c * ox - s * oy
        out[:, k, 1] = cy + s * ox + c * oy
    return out


def intersect_area(a: ConvexQuad, b: ConvexQuad) -> float:
    """Area of the convex intersection polygon of two quads (>= 0)."""
    return float(_kernels.quad_intersection_area(a.points, b.points))


def iou(a: RotatedBox, b: RotatedBox) -> float:
    """Exact rotated IoU via polygon clipping.

    Both boxes are canonicalized first, which makes the result invariant
    under either argument's parameterization and exactly 1.0 for
    symmetry-equivalent inputs.
    """
    qa = _corner_array(*canonicalize(a).as_tuple())
    qb = _corner_array(*canonicalize(b).as_tuple())
    inter = float(_kernels.quad_intersection_area(qa, qb))
    union = float(_kernels.polygon_area(qa)) + float(_kernels.polygon_area(qb)) - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise rotated IoU between two sequences of boxes, shaped (n, m)."""
    if len(boxes_a) == 0 or len(boxes_b) == 0:
        return np.zeros((len(boxes_a), len(boxes_b)))
    ca = corners_batch([canonicalize(b) for b in boxes_a])
    cb = corners_batch([canonicalize(b) for b in boxes_b])
    return _kernels.pairwise_iou(ca, cb)


def _oriented(quad: np.ndarray) -> np.ndarray:
    x = quad[:, 0]
    y = quad[:, 1]
    signed = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    return quad if signed >= 0 else quad[::-1]


def _points_in_quad(quad: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    q = _oriented(quad)
    inside = np.ones(px.shape, dtype=bool)
    for i in range(4):
        x1, y1 = q[i]
        x2, y2 = q[(i + 1) % 4]
        inside &= (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1) >= 0.0
    return inside


def iou_monte_carlo(a: RotatedBox, b: RotatedBox, samples: int = 1_000_000, seed: int = 0) -> float:
    """Monte-Carlo IoU estimate, independent of the clipping code path.

    Uniform stratified (jittered-grid) samples are drawn over the axis-aligned
    bounding region of the two boxes' corners; the IoU is the fraction of
    union hits that also hit both boxes.  Stratification keeps the error of a
    10^6-sample estimate well below 1e-3 for desk-scale boxes.

    ``samples`` is rounded down to a square grid count.
    """
    qa = _corner_array(*a.as_tuple())
    qb = _corner_array(*b.as_tuple())
    lo = np.minimum(qa.min(axis=0), qb.min(axis=0))
    hi = np.maximum(qa.max(axis=0), qb.max(axis=0))
    m = int(math.sqrt(samples))
    if m < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    gx, gy = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    px = lo[0] + (gx.ravel() + rng.random(m * m)) * (hi[0] - lo[0]) / m
    py = lo[1] + (gy.ravel() + rng.random(m * m)) * (hi[1] - lo[1]) / m
    in_a = _points_in_quad(qa, px, py)
    in_b = _points_in_quad(qb, px, py)
    n_union = int(np.count_nonzero(in_a | in_b))
    if n_union == 0:
        return 0.0
    return int(np.count_nonzero(in_a & in_b)) / n_union


def rotate_box(box: RotatedBox, phi: float, center: tuple[float, float]) -> RotatedBox:
    """Rotate the box clockwise by ``phi`` about ``center``; canonicalized."""
    c = math.cos(phi)
    s = math.sin(phi)
    dx = box.cx - center[0]
    dy = box.cy - center[1]
    moved = RotatedBox(
        center[0] + c * dx - s * dy,
        center[1] + s * dx + c * dy,
        box.w,
        box.h,
        box.theta + phi,
    )
    return canonicalize(moved)


def hflip_box(box: RotatedBox, image_width: float) -> RotatedBox:
    """Mirror the box across the vertical image axis; canonicalized."""
    return canonicalize(RotatedBox(image_width - box.cx, box.cy, box.w, box.h, -box.theta))


def radius_aligned_angle(cx: float, cy: float, image_center: tuple[float, float]) -> float:
    """Canonical angle aligning the box height axis with the ray from the
    image center through ``(cx, cy)``.

    Used by the rotation-invariant baseline and the synthetic generator; a
    point exactly at the image center returns 0 by convention.
    """
    dx = cx - image_center[0]
    dy = cy - image_center[1]
    if dx == 0.0 and dy == 0.0:
        return 0.0
    return wrap_canonical_angle(math.atan2(-dx, dy))
