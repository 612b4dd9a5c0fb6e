"""Slot-level precision/recall evaluation and feature-similarity diagnostics.

A detected slot matches a ground-truth slot when the 4-dimensional norm of
the concatenated endpoint differences, expressed at the 600-pixel reference
scale, is strictly below the threshold (default 10 px). Matching is greedy
in descending confidence and each ground-truth slot is consumed at most
once. Matching is ordered by default: first endpoint to first endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discriminator import SlotPrediction
from .params import ModelParams
from .pipeline import infer_image, node_features_before_after
from .scenes import SceneRecord

REFERENCE_IMAGE_PX = 600.0
DEFAULT_THRESHOLD_PX = 10.0


@dataclass
class EvalReport:
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    threshold_px: float
    image_size_px: int
    matches: list[list[tuple[int, int]]] = field(default_factory=list)

    @property
    def f1(self) -> float:
        if self.precision + self.recall == 0.0:
            return 0.0
        return 2.0 * self.precision * self.recall / (self.precision + self.recall)

    def to_dict(self) -> dict:
        return {
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "threshold_px": self.threshold_px,
            "image_size_px": self.image_size_px,
            "matches": [[list(m) for m in scene] for scene in self.matches],
        }


def _ratio(num: int, den: int) -> float:
    return num / den if den else 1.0


def slot_distance(pred: SlotPrediction, g1: np.ndarray, g2: np.ndarray,
                  ordered: bool = True) -> float:
    """Norm of the concatenated endpoint differences in normalized
    coordinates; with ordered=False the better endpoint assignment counts."""
    p1 = np.array([pred.x1, pred.y1])
    p2 = np.array([pred.x2, pred.y2])
    d = float(np.sqrt(((p1 - g1) ** 2).sum() + ((p2 - g2) ** 2).sum()))
    if ordered:
        return d
    swapped = float(np.sqrt(((p1 - g2) ** 2).sum() + ((p2 - g1) ** 2).sum()))
    return min(d, swapped)


def match_scene(preds: list[SlotPrediction], record: SceneRecord,
                threshold_px: float = DEFAULT_THRESHOLD_PX,
                ordered: bool = True) -> tuple[list[tuple[int, int]], int, int]:
    """Greedy matching for one scene: returns (matches as (pred index,
    gt index) pairs, false positives, false negatives)."""
    threshold = threshold_px / REFERENCE_IMAGE_PX
    gt = [(record.points[i], record.points[j]) for i, j in record.entrance_pairs]
    order = sorted(range(len(preds)), key=lambda k: -preds[k].t)
    taken = [False] * len(gt)
    matches = []
    for k in order:
        best = None
        best_dist = threshold
        for g, (g1, g2) in enumerate(gt):
            if taken[g]:
                continue
            d = slot_distance(preds[k], g1, g2, ordered)
            if d < best_dist:
                best_dist = d
                best = g
        if best is not None:
            taken[best] = True
            matches.append((k, best))
    return matches, len(preds) - len(matches), len(gt) - len(matches)


def evaluate_records(params: ModelParams, records: list[SceneRecord],
                     threshold_px: float = DEFAULT_THRESHOLD_PX,
                     ordered: bool = True) -> EvalReport:
    tp = fp = fn = 0
    matches = []
    for record in records:
        preds = infer_image(record.image, params)[2]
        scene_matches, scene_fp, scene_fn = match_scene(
            preds, record, threshold_px, ordered)
        tp += len(scene_matches)
        fp += scene_fp
        fn += scene_fn
        matches.append(scene_matches)
    return EvalReport(tp, fp, fn, _ratio(tp, tp + fp), _ratio(tp, tp + fn),
                      threshold_px, params.config.image_size, matches)


@dataclass
class SimilarityReport:
    """Mean cosine similarity of node-feature pairs, split by whether the
    pair is a ground-truth entrance pair, before and after the relational
    stage."""

    paired_before: float
    unpaired_before: float
    paired_after: float
    unpaired_after: float
    pair_count: int
    non_pair_count: int

    def gap_before(self) -> float:
        return self.paired_before - self.unpaired_before

    def gap_after(self) -> float:
        return self.paired_after - self.unpaired_after

    def to_dict(self) -> dict:
        return {
            "paired_before": self.paired_before,
            "unpaired_before": self.unpaired_before,
            "paired_after": self.paired_after,
            "unpaired_after": self.unpaired_after,
            "gap_before": self.gap_before(),
            "gap_after": self.gap_after(),
            "pair_count": self.pair_count,
            "non_pair_count": self.non_pair_count,
        }


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / denom) if denom > 0.0 else 0.0


def similarity_report(params: ModelParams, records: list[SceneRecord]) -> SimilarityReport:
    """Teacher-forced diagnostics over all unordered point pairs; scenes
    with fewer than two points are skipped."""
    sums = np.zeros(4)  # paired/unpaired x before/after
    counts = np.zeros(2, dtype=int)
    for record in records:
        n = record.points.shape[0]
        if n < 2:
            continue
        before, after = node_features_before_after(record.image, record.points, params)
        linked = {(min(i, j), max(i, j)) for i, j in record.entrance_pairs}
        for i in range(n):
            for j in range(i + 1, n):
                slot = 0 if (i, j) in linked else 1
                counts[slot] += 1
                sums[slot] += _cosine(before[i], before[j])
                sums[slot + 2] += _cosine(after[i], after[j])
    paired = max(counts[0], 1)
    unpaired = max(counts[1], 1)
    return SimilarityReport(float(sums[0] / paired), float(sums[1] / unpaired),
                            float(sums[2] / paired), float(sums[3] / unpaired),
                            int(counts[0]), int(counts[1]))
