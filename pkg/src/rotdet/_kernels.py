"""Hot geometry kernels: convex quad clipping and pairwise rotated IoU.

The kernels are written as plain loops over float64 arrays so the exact same
code runs in two modes:

* compiled with numba's ``@njit`` (the default when numba is importable), or
* as ordinary NumPy/Python, selected by setting ``ROTDET_DISABLE_NUMBA=1``
  in the environment before import (also the automatic fallback when numba
  is missing).

``benchmarks/bench_iou.py`` compares the two paths.  Numerical results are
identical in both modes.
"""

from __future__ import annotations

import os

import numpy as np

ENV_FLAG = "ROTDET_DISABLE_NUMBA"

# Points within this distance of a clip edge count as inside; keeps collinear
# and touching configurations from producing NaNs or sliver polygons.
EDGE_TOL = 1e-9


def _numba_requested() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() not in {"1", "true", "yes", "on"}


NUMBA_ENABLED = False
if _numba_requested():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False


def _quad_intersection_area_impl(qa, qb):
    """Area of the intersection of two convex quads, each shaped (4, 2).

    Sutherland-Hodgman clipping of ``qa`` against ``qb`` followed by the
    shoelace formula.  Winding of either input may be arbitrary; degenerate
    intersections (shared edges, touching corners) come out as 0.
    """
    # Orient the clip polygon so its interior lies on the non-negative side
    # of every directed edge.
    area2 = 0.0
    for i in range(4):
        j = (i + 1) % 4
        area2 += qb[i, 0] * qb[j, 1] - qb[j, 0] * qb[i, 1]
    qbx = np.empty(4)
    qby = np.empty(4)
    if area2 >= 0.0:
        for i in range(4):
            qbx[i] = qb[i, 0]
            qby[i] = qb[i, 1]
    else:
        for i in range(4):
            qbx[i] = qb[3 - i, 0]
            qby[i] = qb[3 - i, 1]

    # Intersection of two convex quads has at most 8 vertices; 16 is safe.
    cur_x = np.empty(16)
    cur_y = np.empty(16)
    new_x = np.empty(16)
    new_y = np.empty(16)
    for i in range(4):
        cur_x[i] = qa[i, 0]
        cur_y[i] = qa[i, 1]
    n = 4

    for e in range(4):
        c1x = qbx[e]
        c1y = qby[e]
        c2x = qbx[(e + 1) % 4]
        c2y = qby[(e + 1) % 4]
        ex = c2x - c1x
        ey = c2y - c1y

        m = 0
        for i in range(n):
            k = n - 1 if i == 0 else i - 1
            sx = cur_x[k]
            sy = cur_y[k]
            px = cur_x[i]
            py = cur_y[i]
            s_in = ex * (sy - c1y) - ey * (sx - c1x) >= -EDGE_TOL
            p_in = ex * (py - c1y) - ey * (px - c1x) >= -EDGE_TOL
            if p_in != s_in:
                # Segment crosses the clip line; insert the crossing point.
                dcx = c1x - c2x
                dcy = c1y - c2y
                dpx = sx - px
                dpy = sy - py
                den = dcx * dpy - dcy * dpx
                if abs(den) > 1e-30:
                    n1 = c1x * c2y - c1y * c2x
                    n2 = sx * py - sy * px
                    new_x[m] = (n1 * dpx - n2 * dcx) / den
                    new_y[m] = (n1 * dpy - n2 * dcy) / den
                    m += 1
            if p_in:
                new_x[m] = px
                new_y[m] = py
                m += 1
        n = m
        if n == 0:
            return 0.0
        for i in range(n):
            cur_x[i] = new_x[i]
            cur_y[i] = new_y[i]

    acc = 0.0
    for i in range(n):
        j = (i + 1) % n
        acc += cur_x[i] * cur_y[j] - cur_x[j] * cur_y[i]
    return abs(acc) * 0.5


def _polygon_area_impl(pts):
    """Absolute shoelace area of a closed polygon shaped (n, 2)."""
    n = pts.shape[0]
    acc = 0.0
    for i in range(n):
        j = (i + 1) % n
        acc += pts[i, 0] * pts[j, 1] - pts[j, 0] * pts[i, 1]
    return abs(acc) * 0.5


if NUMBA_ENABLED:
    quad_intersection_area = njit(cache=True)(_quad_intersection_area_impl)
    polygon_area = njit(cache=True)(_polygon_area_impl)
else:
    quad_intersection_area = _quad_intersection_area_impl
    polygon_area = _polygon_area_impl


def _pairwise_iou_impl(ca, aa, bba, cb, ab, bbb, out):
    """IoU of every quad in ``ca`` (N,4,2) against every quad in ``cb`` (M,4,2).

    ``aa``/``ab`` are precomputed shoelace areas, ``bba``/``bbb`` axis-aligned
    bounds (xmin, ymin, xmax, ymax) used to skip clearly disjoint pairs.
    """
    n = ca.shape[0]
    m = cb.shape[0]
    for i in range(n):
        for j in range(m):
            if (
                bba[i, 2] <= bbb[j, 0]
                or bbb[j, 2] <= bba[i, 0]
                or bba[i, 3] <= bbb[j, 1]
                or bbb[j, 3] <= bba[i, 1]
            ):
                out[i, j] = 0.0
            else:
                inter = quad_intersection_area(ca[i], cb[j])
                union = aa[i] + ab[j] - inter
                out[i, j] = inter / union if union > 0.0 else 0.0


if NUMBA_ENABLED:
    _pairwise_iou = njit(cache=True)(_pairwise_iou_impl)
else:
    _pairwise_iou = _pairwise_iou_impl


def pairwise_iou(corners_a, corners_b):
    """IoU matrix between two batches of convex quads given by corners."""
    ca = np.ascontiguousarray(corners_a, dtype=np.float64)
    cb = np.ascontiguousarray(corners_b, dtype=np.float64)
    aa = _batch_areas(ca)
    ab = _batch_areas(cb)
    bba = _batch_bounds(ca)
    bbb = _batch_bounds(cb)
    out = np.empty((ca.shape[0], cb.shape[0]))
    _pairwise_iou(ca, aa, bba, cb, ab, bbb, out)
    return out


def _batch_areas(corners):
    x = corners[..., 0]
    y = corners[..., 1]
    xr = np.roll(x, -1, axis=-1)
    yr = np.roll(y, -1, axis=-1)
    return np.abs(np.sum(x * yr - xr * y, axis=-1)) * 0.5


def _batch_bounds(corners):
    lo = corners.min(axis=1)
    hi = corners.max(axis=1)
    return np.concatenate([lo, hi], axis=1)


def active_backend() -> str:
    """Name of the kernel execution mode currently in use."""
    return "numba" if NUMBA_ENABLED else "numpy"
