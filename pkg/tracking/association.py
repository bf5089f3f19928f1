"""Tracklet-detection association: overall similarity, Hungarian matching and the IoU commit tiers."""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import Provenance, average_boxes, iou

COMMIT_IOU = 0.5
AVERAGE_IOU = 0.3
# pairs with no overlap need at least this much visual similarity to be considered
MIN_VISUAL_WITHOUT_OVERLAP = 0.1


def overall_similarity(v, iou_val, lam):
    return v + lam * iou_val


@dataclass
class SimilarityMatrix:
    row_ids: list
    values: np.ndarray
    valid: np.ndarray
    ious: np.ndarray = None
    visual: np.ndarray = None

    @property
    def shape(self):
        return self.values.shape


def hungarian(scores, valid=None):
    """Maximum-total one-to-one matching among valid entries.

    Rows and columns may stay unmatched: the matrix is padded with zero-score
    "unmatched" slots, and forbidden entries cost more than any achievable gain.
    Returns (row, col) pairs sorted by row.
    """
    if isinstance(scores, SimilarityMatrix):
        scores, valid = scores.values, scores.valid
    scores = np.asarray(scores, dtype=float)
    n, m = scores.shape
    if n == 0 or m == 0:
        return []
    valid = np.ones((n, m), dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    if not valid.any():
        return []

    forbidden = 1.0 + np.abs(scores[valid]).sum() * 2.0
    size = n + m
    cost = np.full((size, size), forbidden)
    cost[:n, :m] = np.where(valid, -scores, forbidden)
    cost[np.arange(n), m + np.arange(n)] = 0.0
    cost[n + np.arange(m), np.arange(m)] = 0.0
    cost[n:, m:] = 0.0

    rows, cols = linear_sum_assignment(cost)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if r < n and c < m and valid[r, c]]


def build_similarity_matrix(predictions, detections, similarity_provider, frame, lam):
    """predictions: list of (tracklet_id, predicted_box)."""
    n, m = len(predictions), len(detections)
    ious = np.zeros((n, m))
    visual = np.zeros((n, m))
    for i, (_, predicted) in enumerate(predictions):
        for j, detection in enumerate(detections):
            ious[i, j] = iou(predicted, detection.box)
            visual[i, j] = similarity_provider.similarity(predicted, detection.box, frame)
    valid = ~((ious == 0.0) & (visual < MIN_VISUAL_WITHOUT_OVERLAP))
    values = overall_similarity(visual, ious, lam)
    return SimilarityMatrix([tid for tid, _ in predictions], values, valid, ious, visual)


@dataclass(frozen=True)
class Match:
    tracklet_id: int
    detection_index: int
    iou: float
    box: object
    provenance: Provenance


@dataclass
class FrameAssociation:
    matches: list = field(default_factory=list)
    unmatched_tracklets: set = field(default_factory=set)
    unmatched_detections: set = field(default_factory=set)


def associate_frame(predictions, detections, similarity_provider, frame, lam=1.0,
                    commit_iou=COMMIT_IOU, average_iou=AVERAGE_IOU):
    """Single Hungarian round, then the per-pair IoU tiers.

    IoU >= commit_iou commits the detection, average_iou <= IoU < commit_iou commits the
    componentwise mean of detection and prediction, anything lower leaves the tracklet
    unmatched and returns the detection to the pool.
    """
    matrix = build_similarity_matrix(predictions, detections, similarity_provider, frame, lam)
    result = FrameAssociation(
        unmatched_tracklets={tid for tid, _ in predictions},
        unmatched_detections=set(range(len(detections))),
    )
    for i, j in hungarian(matrix):
        tracklet_id, predicted = predictions[i]
        overlap = float(matrix.ious[i, j])
        detection_box = detections[j].box
        if overlap >= commit_iou:
            box, provenance = detection_box, Provenance.DETECTION
        elif overlap >= average_iou:
            box, provenance = average_boxes(detection_box, predicted), Provenance.AVERAGED
        else:
            continue
        result.matches.append(Match(tracklet_id, j, overlap, box, provenance))
        result.unmatched_tracklets.discard(tracklet_id)
        result.unmatched_detections.discard(j)
    return result
