"""Detection scoring: IoU, greedy one-to-one matching, 101-point
interpolated average precision, and the ten-threshold mean AP report.

Conventions, fixed so results are reproducible to the last bit:
  * IoU thresholds are (50 + 5k)/100 for k = 0..9.
  * Detections are ordered by (-score, input index); equal IoUs match the
    lowest-index ground truth.
  * AP interpolates precision on the recall grid {0.00, 0.01, ..., 1.00}.
  * A category with no ground truth has AP 0 and is excluded from the
    per-threshold macro mean; its detections still count as false positives.
  * Detections whose category id is absent from the category table are
    ignored entirely.
  * No cap on detections per image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

THRESHOLDS = tuple((50 + 5 * k) / 100.0 for k in range(10))

# Recall grid built by integer division so grid[k] == k/100.0 exactly.
_RECALL_GRID = np.arange(101) / 100.0


def iou(a, b) -> float:
    """Intersection over union of two xywh boxes (top-left origin)."""
    ix = min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0])
    iy = min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a[2] * a[3] + b[2] * b[3] - inter)


def iou_matrix(det_boxes: np.ndarray, gt_boxes: np.ndarray) -> np.ndarray:
    """Pairwise IoU, (N,4) x (M,4) xywh -> (N,M)."""
    det_boxes = np.asarray(det_boxes, dtype=np.float64).reshape(-1, 4)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    ix = (
        np.minimum(det_boxes[:, None, 0] + det_boxes[:, None, 2],
                   gt_boxes[None, :, 0] + gt_boxes[None, :, 2])
        - np.maximum(det_boxes[:, None, 0], gt_boxes[None, :, 0])
    )
    iy = (
        np.minimum(det_boxes[:, None, 1] + det_boxes[:, None, 3],
                   gt_boxes[None, :, 1] + gt_boxes[None, :, 3])
        - np.maximum(det_boxes[:, None, 1], gt_boxes[None, :, 1])
    )
    inter = np.where((ix > 0) & (iy > 0), ix * iy, 0.0)
    areas = det_boxes[:, 2] * det_boxes[:, 3]
    gareas = gt_boxes[:, 2] * gt_boxes[:, 3]
    return inter / (areas[:, None] + gareas[None, :] - inter)


def match_greedy(det_boxes, gt_boxes, iou_threshold: float) -> np.ndarray:
    """TP/FP labels for detections already sorted by descending score.

    Each detection claims the unmatched ground truth with the highest IoU,
    provided that IoU reaches the threshold; ties go to the lowest ground
    truth index. Returns a bool array aligned with the input order.
    """
    det_boxes = np.asarray(det_boxes, dtype=np.float64).reshape(-1, 4)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    labels = np.zeros(len(det_boxes), dtype=bool)
    if len(det_boxes) == 0 or len(gt_boxes) == 0:
        return labels
    ious = iou_matrix(det_boxes, gt_boxes)
    taken = np.zeros(len(gt_boxes), dtype=bool)
    for i in range(len(det_boxes)):
        row = np.where(taken, -1.0, ious[i])
        g = int(np.argmax(row))  # argmax returns the first (lowest) index on ties
        if row[g] >= iou_threshold:
            taken[g] = True
            labels[i] = True
    return labels


def average_precision(labels, n_gt: int) -> float:
    """101-point interpolated AP from TP/FP labels in score order.

    AP is 0 when there is no ground truth, whether or not detections exist.
    """
    if n_gt == 0:
        return 0.0
    labels = np.asarray(labels, dtype=bool)
    if len(labels) == 0:
        return 0.0
    tp = np.cumsum(labels)
    fp = np.cumsum(~labels)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    # Max precision over all points at recall >= r: recall is nondecreasing,
    # so a suffix maximum indexed by searchsorted gives the exact loop result.
    suffix_max = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, _RECALL_GRID, side="left")
    hit = idx < len(recall)
    vals = np.where(hit, suffix_max[np.minimum(idx, len(recall) - 1)], 0.0)
    return float(np.sum(vals)) / 101


@dataclass(frozen=True)
class EvalReport:
    """Scores over the ten IoU thresholds plus match counts."""

    per_threshold: dict[float, float]
    map: float
    ap75: float
    n_images: int
    n_gt: int
    n_det: int
    tp: dict[float, int]
    fp: dict[float, int]
    scored_categories: tuple[int, ...]

    def to_text(self) -> str:
        lines = [
            f"n_images: {self.n_images}",
            f"n_gt: {self.n_gt}",
            f"n_det: {self.n_det}",
        ]
        for thr in THRESHOLDS:
            lines.append(f"ap@{thr:.2f}: {self.per_threshold[thr]:.6f}")
        lines.append(f"map: {self.map:.6f}")
        lines.append(f"ap@0.75: {self.ap75:.6f}")
        for thr in THRESHOLDS:
            lines.append(f"tp@{thr:.2f}: {self.tp[thr]}")
            lines.append(f"fp@{thr:.2f}: {self.fp[thr]}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = ["metric,value"]
        rows.append(f"n_images,{self.n_images}")
        rows.append(f"n_gt,{self.n_gt}")
        rows.append(f"n_det,{self.n_det}")
        for thr in THRESHOLDS:
            rows.append(f"ap@{thr:.2f},{self.per_threshold[thr]!r}")
        rows.append(f"map,{self.map!r}")
        rows.append(f"ap@0.75,{self.ap75!r}")
        for thr in THRESHOLDS:
            rows.append(f"tp@{thr:.2f},{self.tp[thr]}")
            rows.append(f"fp@{thr:.2f},{self.fp[thr]}")
        return "\n".join(rows) + "\n"


def evaluate(ground_truth, detections) -> EvalReport:
    """Score a detection set against a ground-truth set.

    ground_truth: anything with .images (each with .id), .annotations (each
    with .image_id, .category_id, .bbox) and .categories (each with .id),
    e.g. dataset_io.GroundTruthSet. detections: sequence with .image_id,
    .category_id, .bbox, .score; list position is the tie-break index.

    Per category the matching runs image by image, the labels are pooled
    over images in (-score, input index) order, and AP is averaged over
    categories that have at least one ground-truth box.

    Raises ValueError for a detection referencing an unknown image id.
    """
    image_ids = [img.id for img in ground_truth.images]
    known = set(image_ids)
    for det in detections:
        if det.image_id not in known:
            raise ValueError(f"detection references unknown image id {det.image_id}")

    category_ids = [c.id for c in ground_truth.categories]
    gt_by_img_cat: dict[tuple[int, int], list] = {}
    gt_count: dict[int, int] = {c: 0 for c in category_ids}
    for ann in ground_truth.annotations:
        gt_by_img_cat.setdefault((ann.image_id, ann.category_id), []).append(ann.bbox)
        if ann.category_id in gt_count:
            gt_count[ann.category_id] += 1

    det_by_img_cat: dict[tuple[int, int], list] = {}
    for idx, det in enumerate(detections):
        key = (det.image_id, det.category_id)
        det_by_img_cat.setdefault(key, []).append((det.score, idx, det.bbox))

    scored = tuple(c for c in category_ids if gt_count[c] > 0)
    per_threshold: dict[float, float] = {}
    tp_counts: dict[float, int] = {}
    fp_counts: dict[float, int] = {}
    for thr in THRESHOLDS:
        cat_aps = []
        tp_total = 0
        fp_total = 0
        for cat in category_ids:
            pooled: list[tuple[float, int, bool]] = []
            for img in image_ids:
                dets = sorted(det_by_img_cat.get((img, cat), ()),
                              key=lambda e: (-e[0], e[1]))
                gts = gt_by_img_cat.get((img, cat), [])
                labels = match_greedy([e[2] for e in dets], gts, thr)
                pooled.extend((e[0], e[1], bool(l)) for e, l in zip(dets, labels))
            pooled.sort(key=lambda e: (-e[0], e[1]))
            flags = [e[2] for e in pooled]
            tp_total += sum(1 for f in flags if f)
            fp_total += sum(1 for f in flags if not f)
            if gt_count[cat] > 0:
                cat_aps.append(average_precision(flags, gt_count[cat]))
        per_threshold[thr] = sum(cat_aps) / len(cat_aps) if cat_aps else 0.0
        tp_counts[thr] = tp_total
        fp_counts[thr] = fp_total

    mean_ap = sum(per_threshold[t] for t in THRESHOLDS) / len(THRESHOLDS)
    return EvalReport(
        per_threshold=per_threshold,
        map=mean_ap,
        ap75=per_threshold[0.75],
        n_images=len(image_ids),
        n_gt=len(ground_truth.annotations),
        n_det=len(detections),
        tp=tp_counts,
        fp=fp_counts,
        scored_categories=scored,
    )
