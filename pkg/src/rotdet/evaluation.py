"""Detection evaluation: greedy matching, AP at IoU 0.5, fixed-threshold
precision/recall/F-measure, and aspect-ratio statistics.

AP integration uses all-point interpolation with the precision envelope
(every distinct confidence becomes a PR sample; precision is replaced by the
maximum precision at equal-or-higher recall before integrating).  Dataset
metrics average per-video metrics by default, so the dataset F-measure is not
the harmonic mean of the dataset P and R; a pooled mode treats all frames as
one video.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import RotatedBox, iou_matrix
from .postprocess import Detection, confidence_filter, sort_detections


@dataclass
class FrameEval:
    """Greedy matching result for one frame.

    ``matches`` holds (pred index, gt index, iou) triples; indices refer to
    the caller's original ordering.
    """

    matches: list[tuple[int, int, float]]
    unmatched_preds: list[int]
    unmatched_gts: list[int]


def match_frame(preds, gts, iou_thresh: float = 0.5) -> FrameEval:
    """Match predictions to ground truths greedily in confidence order.

    Each prediction (highest confidence first) takes the unmatched gt with
    the highest IoU, provided that IoU reaches ``iou_thresh``.
    """
    preds = list(preds)
    gts = list(gts)
    order = sorted(range(len(preds)), key=lambda k: _pred_key(preds[k]))
    matches: list[tuple[int, int, float]] = []
    unmatched_preds: list[int] = []
    gt_free = [True] * len(gts)
    ious = iou_matrix([p.box for p in preds], gts) if preds and gts else None
    for k in order:
        best_gt = -1
        best_iou = 0.0
        if ious is not None:
            for g in range(len(gts)):
                if gt_free[g] and ious[k, g] >= iou_thresh and ious[k, g] > best_iou:
                    best_gt = g
                    best_iou = ious[k, g]
        if best_gt >= 0:
            gt_free[best_gt] = False
            matches.append((k, best_gt, float(best_iou)))
        else:
            unmatched_preds.append(k)
    return FrameEval(matches, unmatched_preds, [g for g, free in enumerate(gt_free) if free])


def _pred_key(d: Detection):
    b = d.box
    return (-d.conf, b.cy, b.cx, b.w, b.h, b.theta)


def _score_frames(frames, iou_thresh):
    """Confidence-sorted (conf, is_tp) records plus the gt count."""
    records: list[tuple[float, bool]] = []
    n_gt = 0
    for preds, gts in frames:
        preds = list(preds)
        n_gt += len(gts)
        ev = match_frame(preds, gts, iou_thresh)
        tp_preds = {k for k, _, _ in ev.matches}
        for k, p in enumerate(preds):
            records.append((p.conf, k in tp_preds))
    records.sort(key=lambda r: -r[0])
    return records, n_gt


def pr_curve(frames, iou_thresh: float = 0.5) -> list[tuple[float, float]]:
    """(recall, precision) points, one per prediction in confidence order."""
    records, n_gt = _score_frames(frames, iou_thresh)
    if n_gt == 0:
        raise ValueError("PR curve undefined without ground-truth objects")
    points = []
    tp = fp = 0
    for _, is_tp in records:
        if is_tp:
            tp += 1
        else:
            fp += 1
        points.append((tp / n_gt, tp / (tp + fp)))
    return points


def average_precision(frames, iou_thresh: float = 0.5) -> float:
    """Area under the envelope-interpolated PR curve.

    ``frames`` is a sequence of (predictions, ground truths) pairs.
    """
    records, n_gt = _score_frames(frames, iou_thresh)
    if n_gt == 0:
        raise ValueError("average precision undefined without ground-truth objects")
    if not records:
        return 0.0
    is_tp = np.array([r[1] for r in records])
    tp = np.cumsum(is_tp)
    fp = np.cumsum(~is_tp)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * envelope))


def fixed_threshold_metrics(
    frames, conf: float = 0.3, iou_thresh: float = 0.5
) -> tuple[float, float, float]:
    """Precision, recall and F-measure using predictions with conf >= ``conf``.

    With no surviving predictions, precision is 1 by convention, so recall
    and F are 0.
    """
    tp = fp = n_gt = 0
    for preds, gts in frames:
        kept = confidence_filter(preds, conf)
        ev = match_frame(kept, gts, iou_thresh)
        tp += len(ev.matches)
        fp += len(ev.unmatched_preds)
        n_gt += len(gts)
    precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
    recall = tp / n_gt if n_gt > 0 else 0.0
    f = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    return precision, recall, f


@dataclass
class EvalReport:
    ap50: float
    precision: float
    recall: float
    f_measure: float
    pr_curve: list[tuple[float, float]] = field(default_factory=list)
    per_video: dict[str, dict[str, float]] | None = None

    def to_json(self) -> str:
        payload = {
            "ap50": self.ap50,
            "precision": self.precision,
            "recall": self.recall,
            "f_measure": self.f_measure,
            "pr_curve": [[r, p] for r, p in self.pr_curve],
            "per_video": self.per_video,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        payload = json.loads(text)
        return cls(
            ap50=payload["ap50"],
            precision=payload["precision"],
            recall=payload["recall"],
            f_measure=payload["f_measure"],
            pr_curve=[(r, p) for r, p in payload.get("pr_curve", [])],
            per_video=payload.get("per_video"),
        )

    def to_text(self) -> str:
        lines = [
            f"AP50       {self.ap50:.4f}",
            f"precision  {self.precision:.4f}",
            f"recall     {self.recall:.4f}",
            f"f_measure  {self.f_measure:.4f}",
        ]
        if self.per_video:
            lines.append("")
            lines.append(f"{'video':<24} {'AP50':>8} {'P':>8} {'R':>8} {'F':>8}")
            for name, row in self.per_video.items():
                lines.append(
                    f"{name:<24} {row['ap50']:>8.4f} {row['precision']:>8.4f}"
                    f" {row['recall']:>8.4f} {row['f_measure']:>8.4f}"
                )
        return "\n".join(lines)


def _frames_of_video(gt_video, pred_video):
    frames = []
    pred_frames = pred_video or {}
    for frame_key, people in gt_video.frames.items():
        preds = list(pred_frames.get(frame_key, ()))
        frames.append((preds, [box for _, box in people]))
    return frames


def evaluate(
    annotations,
    predictions,
    iou_thresh: float = 0.5,
    conf: float = 0.3,
    per_video: bool = True,
) -> EvalReport:
    """Dataset-level report for a prediction set against annotations.

    ``per_video=True`` (default) averages per-video metrics; ``False`` pools
    every frame into a single PR sweep.
    """
    all_frames = []
    rows: dict[str, dict[str, float]] = {}
    for name, video in annotations.videos.items():
        frames = _frames_of_video(video, predictions.videos.get(name))
        all_frames.extend(frames)
        if per_video:
            ap = average_precision(frames, iou_thresh)
            p, r, f = fixed_threshold_metrics(frames, conf, iou_thresh)
            rows[name] = {"ap50": ap, "precision": p, "recall": r, "f_measure": f}

    curve = pr_curve(all_frames, iou_thresh)
    if per_video:
        n = len(rows)
        report = EvalReport(
            ap50=sum(v["ap50"] for v in rows.values()) / n,
            precision=sum(v["precision"] for v in rows.values()) / n,
            recall=sum(v["recall"] for v in rows.values()) / n,
            f_measure=sum(v["f_measure"] for v in rows.values()) / n,
            pr_curve=curve,
            per_video=rows,
        )
    else:
        ap = average_precision(all_frames, iou_thresh)
        p, r, f = fixed_threshold_metrics(all_frames, conf, iou_thresh)
        report = EvalReport(ap, p, r, f, pr_curve=curve)
    return report


def export_pr_csv(points, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("recall,precision\n")
        for r, p in points:
            fh.write(f"{r!r},{p!r}\n")


@dataclass
class AspectHistogram:
    """Histogram of height/width ratios plus the fraction with ratio >= 1."""

    counts: np.ndarray
    edges: np.ndarray
    fraction_tall: float | None
    n: int


def aspect_ratio_histogram(dets, bins: int = 20) -> AspectHistogram:
    ratios = np.array([d.box.h / d.box.w for d in dets])
    if ratios.size == 0:
        return AspectHistogram(np.zeros(bins, dtype=int), np.linspace(0.0, 1.0, bins + 1), None, 0)
    counts, edges = np.histogram(ratios, bins=bins)
    tall = float(np.count_nonzero(ratios >= 1.0) / ratios.size)
    return AspectHistogram(counts, edges, tall, int(ratios.size))
