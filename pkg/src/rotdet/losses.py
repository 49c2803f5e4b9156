"""Angle losses, target assignment, and the full multi-term detection loss.

The periodic angle loss wraps the angle difference into ``[-pi/2, pi/2)``
before applying a symmetric regressor ``f`` (L1 or L2)::

    loss(th_hat, th) = f(mod(th_hat - th - pi/2, pi) - pi/2)

which is pi-periodic in ``th_hat`` and zero exactly when the two angles
describe the same box orientation.  Its derivative is ``f'`` of the same
folded difference; the fold is non-differentiable where
``th_hat - th = k*pi + pi/2`` and there the left-limit value is used
(gradient checks exclude these points).

The total loss over one prediction instance is

    sum over positives of  BCE(Sig(tx), tx*) + BCE(Sig(ty), ty*)
                         + (Sig(tw) - tw*)^2 + (Sig(th) - th*)^2
                         + angle_loss(decode(ttheta), theta*)
                         + BCE(Sig(tconf), 1)
    + sum over negatives of BCE(Sig(tconf), 0)

with no class term (single category).  The printed squared-error form
compares a sigmoid against the unbounded log-ratio target ``tw*``; since that
cannot reach targets outside (0, 1), ``wh_mode="plain"`` switches to
``(tw - tw*)^2`` whose optimum decodes back to the ground-truth size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .geometry import HALF_PI, PI, RotatedBox, iou_matrix
from .codec import AnchorSet, CodecParams, GridSpec, RawPredictions, encode_targets, sigmoid

BCE_EPS = 1e-12


class AngleLossKind(Enum):
    L1 = "l1"
    L2 = "l2"
    PERIODIC_L1 = "periodic-l1"
    PERIODIC_L2 = "periodic-l2"

    @property
    def periodic(self) -> bool:
        return self in (AngleLossKind.PERIODIC_L1, AngleLossKind.PERIODIC_L2)

    @property
    def squared(self) -> bool:
        return self in (AngleLossKind.L2, AngleLossKind.PERIODIC_L2)

    @classmethod
    def from_name(cls, name: str) -> "AngleLossKind":
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValueError(f"unknown angle loss {name!r}; expected one of "
                         f"{[k.value for k in cls]}")


def fold_angle_diff(delta):
    """Wrap an angle difference into [-pi/2, pi/2) modulo pi.

    At exact wrap points (delta = k*pi + pi/2) the fold returns +pi/2, the
    left-limit branch.
    """
    m = np.mod(np.asarray(delta, dtype=np.float64) - HALF_PI, PI)
    out = np.where(m == 0.0, HALF_PI, m - HALF_PI)
    if out.ndim == 0:
        return float(out)
    return out


def angle_loss(theta_hat, theta, kind: AngleLossKind):
    d = np.asarray(theta_hat, dtype=np.float64) - np.asarray(theta, dtype=np.float64)
    if kind.periodic:
        d = fold_angle_diff(d)
    out = d * d if kind.squared else np.abs(d)
    if np.ndim(out) == 0:
        return float(out)
    return out


def angle_loss_grad(theta_hat, theta, kind: AngleLossKind):
    """d loss / d theta_hat; subgradient 0 at the L1 minimum."""
    d = np.asarray(theta_hat, dtype=np.float64) - np.asarray(theta, dtype=np.float64)
    if kind.periodic:
        d = fold_angle_diff(d)
    out = 2.0 * d if kind.squared else np.sign(d)
    if np.ndim(out) == 0:
        return float(out)
    return out


class PositiveSlot(NamedTuple):
    level: int
    anchor: int
    i: int
    j: int
    gt_index: int


@dataclass
class Assignment:
    """Disjoint partition of prediction slots for one instance.

    ``positives`` lists the slot chosen for each ground truth; ``ignored``
    masks slots whose neutral-decode box overlaps some ground truth too much
    to be treated as background.  Everything else is negative.
    """

    positives: tuple[PositiveSlot, ...]
    ignored: dict[int, np.ndarray]

    def positive_mask(self, level: int, shape) -> np.ndarray:
        mask = np.zeros(shape, dtype=bool)
        for p in self.positives:
            if p.level == level:
                mask[p.anchor, p.i, p.j] = True
        return mask

    def negative_mask(self, level: int) -> np.ndarray:
        ign = self.ignored[level]
        return ~(ign | self.positive_mask(level, ign.shape))


def anchor_shape_iou(size_a: tuple[float, float], size_b: tuple[float, float]) -> float:
    """Axis-aligned IoU of two (w, h) shapes placed at a common center."""
    inter = min(size_a[0], size_b[0]) * min(size_a[1], size_b[1])
    union = size_a[0] * size_a[1] + size_b[0] * size_b[1] - inter
    return inter / union if union > 0 else 0.0


def assign(
    gts,
    grids,
    anchors: AnchorSet,
    ignore_iou: float = 0.7,
) -> Assignment:
    """YOLO-style assignment: one positive slot per ground truth.

    Each gt goes to the (level, anchor) whose shape best matches it by
    axis-aligned IoU, at the cell containing the gt center; if that slot is
    already taken the next-best shape match is used.  Slots whose
    neutral-decode box (anchor size at the cell center, angle 0) overlaps any
    gt with rotated IoU above ``ignore_iou`` are excluded from the negatives.
    """
    grids = list(grids)
    ignored = {g.level: np.zeros((3, g.rows, g.cols), dtype=bool) for g in grids}
    positives: list[PositiveSlot] = []
    taken: set[tuple[int, int, int, int]] = set()

    grid_by_level = {g.level: g for g in grids}
    for gt_index, gt in enumerate(gts):
        if not gt.is_canonical():
            raise ValueError(f"gt {gt_index} must be canonical")
        ranked = []
        for g in grids:
            for n, anchor in enumerate(anchors.get(g.level)):
                ranked.append((anchor_shape_iou((gt.w, gt.h), anchor), g.level, n))
        ranked.sort(key=lambda t: (-t[0], t[1], t[2]))
        placed = False
        for _, level, n in ranked:
            g = grid_by_level[level]
            enc = encode_targets(gt, g, anchors.get(level)[n])
            slot = (level, n, enc.i, enc.j)
            if slot not in taken:
                taken.add(slot)
                positives.append(PositiveSlot(level, n, enc.i, enc.j, gt_index))
                placed = True
                break
        if not placed:
            raise ValueError(f"no free slot for gt {gt_index}")

    if gts and ignore_iou < 1.0:
        gt_list = list(gts)
        for g in grids:
            level_anchors = anchors.get(g.level)
            s = float(g.stride)
            for n, (aw, ah) in enumerate(level_anchors):
                cells = [
                    RotatedBox(s * (j + 0.5), s * (i + 0.5), aw, ah, 0.0)
                    for i in range(g.rows)
                    for j in range(g.cols)
                ]
                best = iou_matrix(cells, gt_list).max(axis=1)
                ignored[g.level][n] = (best > ignore_iou).reshape(g.rows, g.cols)

    for p in positives:
        ignored[p.level][p.anchor, p.i, p.j] = False

    return Assignment(tuple(positives), ignored)


@dataclass(frozen=True)
class LossBreakdown:
    xy: float
    wh: float
    angle: float
    conf_pos: float
    conf_neg: float
    total: float

    @classmethod
    def build(cls, xy, wh, angle, conf_pos, conf_neg) -> "LossBreakdown":
        return cls(xy, wh, angle, conf_pos, conf_neg, xy + wh + angle + conf_pos + conf_neg)

    def finite(self) -> bool:
        return all(
            math.isfinite(v)
            for v in (self.xy, self.wh, self.angle, self.conf_pos, self.conf_neg)
        )


def _bce(p, target):
    p = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return -(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))


def total_loss(
    raw: RawPredictions,
    gts,
    assignment: Assignment,
    grids,
    anchors: AnchorSet,
    kind: AngleLossKind = AngleLossKind.PERIODIC_L1,
    params: CodecParams | None = CodecParams(),
    wh_mode: str = "sigmoid",
) -> tuple[LossBreakdown, dict[int, np.ndarray]]:
    """Loss breakdown plus gradient w.r.t. every raw component.

    ``params=None`` selects the unbounded angle decode (``btheta = ttheta``),
    used by the ablation's unbounded-range rows.  ``wh_mode`` is "sigmoid"
    for the printed squared-sigmoid form or "plain" for ``(tw - tw*)^2``.
    """
    if wh_mode not in ("sigmoid", "plain"):
        raise ValueError(f"wh_mode must be 'sigmoid' or 'plain', got {wh_mode!r}")
    grids = list(grids)
    grid_by_level = {g.level: g for g in grids}
    gt_list = list(gts)
    grads = {level: np.zeros_like(arr) for level, arr in raw.levels.items()}

    xy = wh = ang = conf_pos = conf_neg = 0.0

    for p in assignment.positives:
        if p.level not in raw.levels:
            raise ValueError(f"assignment references unknown level {p.level}")
        arr = raw.levels[p.level]
        if not (0 <= p.anchor < arr.shape[0] and 0 <= p.i < arr.shape[1] and 0 <= p.j < arr.shape[2]):
            raise ValueError(f"assignment slot {p} outside raw prediction shape")
        if not (0 <= p.gt_index < len(gt_list)):
            raise ValueError(f"assignment references unknown gt {p.gt_index}")
        g = grid_by_level[p.level]
        anchor = anchors.get(p.level)[p.anchor]
        gt = gt_list[p.gt_index]
        enc = encode_targets(gt, g, anchor)
        if (enc.i, enc.j) != (p.i, p.j):
            raise ValueError(f"slot {p} does not contain gt {p.gt_index} center")
        t = arr[p.anchor, p.i, p.j]
        gslot = grads[p.level][p.anchor, p.i, p.j]

        px, py = sigmoid(t[0]), sigmoid(t[1])
        xy += float(_bce(px, enc.tx) + _bce(py, enc.ty))
        gslot[0] += px - enc.tx
        gslot[1] += py - enc.ty

        if wh_mode == "sigmoid":
            pw, ph = sigmoid(t[2]), sigmoid(t[3])
            wh += (pw - enc.tw) ** 2 + (ph - enc.th) ** 2
            gslot[2] += 2.0 * (pw - enc.tw) * pw * (1.0 - pw)
            gslot[3] += 2.0 * (ph - enc.th) * ph * (1.0 - ph)
        else:
            wh += (t[2] - enc.tw) ** 2 + (t[3] - enc.th) ** 2
            gslot[2] += 2.0 * (t[2] - enc.tw)
            gslot[3] += 2.0 * (t[3] - enc.th)

        if params is None:
            btheta = t[4]
            chain = 1.0
        else:
            st = sigmoid(t[4])
            btheta = params.alpha * st - params.beta
            chain = params.alpha * st * (1.0 - st)
        ang += float(angle_loss(btheta, gt.theta, kind))
        gslot[4] += angle_loss_grad(btheta, gt.theta, kind) * chain

        pc = sigmoid(t[5])
        conf_pos += float(_bce(pc, 1.0))
        gslot[5] += pc - 1.0

    for g in grids:
        arr = raw.levels[g.level]
        neg = assignment.negative_mask(g.level)
        pc = sigmoid(arr[..., 5])
        conf_neg += float(_bce(pc[neg], 0.0).sum())
        grads[g.level][..., 5][neg] += pc[neg]

    return LossBreakdown.build(xy, wh, ang, conf_pos, conf_neg), grads
