from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tracking.association import (SimilarityMatrix, associate_frame, build_similarity_matrix, hungarian,
                                  overall_similarity)
from tracking.estimators import IdentityOverlapProvider, TruthProvider
from tracking.geometry import BoundingBox, Detection, Provenance


class FixedSimilarity:
    def __init__(self, value):
        self.value = value

    def similarity(self, box_a, box_b, frame):
        return self.value


def brute_force_best(scores, valid):
    """Best total over all partial one-to-one matchings of valid entries."""
    n, m = scores.shape
    size = max(n, m)
    padded = np.zeros((size, size))
    padded[:n, :m] = np.where(valid, scores, 0.0)
    mask = np.zeros((size, size), dtype=bool)
    mask[:n, :m] = valid
    best = 0.0
    for perm in permutations(range(size)):
        total = sum(padded[i, perm[i]] for i in range(size) if mask[i, perm[i]] and padded[i, perm[i]] > 0)
        best = max(best, total)
    return best


@pytest.mark.parametrize("v,overlap,lam,expected", [
    (0.0, 0.0, 3.0, 0.0),
    (1.0, 1.0, 1.0, 2.0),
    (0.6, 0.4, 0.5, 0.8),
])
def test_overall_similarity(v, overlap, lam, expected):
    assert overall_similarity(v, overlap, lam) == pytest.approx(expected)


def test_hungarian_small_cases():
    assert hungarian([[0.7]]) == [(0, 0)]
    assert hungarian([[2.0, 1.0], [1.0, 2.0]]) == [(0, 0), (1, 1)]
    assert hungarian(np.zeros((0, 3))) == []


def test_hungarian_leaves_masked_rows_unmatched():
    scores = np.array([[5.0, 1.0], [4.0, 0.5]])
    valid = np.array([[True, False], [False, False]])
    assert hungarian(scores, valid) == [(0, 0)]
    assert hungarian(SimilarityMatrix([1, 2], scores, np.zeros((2, 2), dtype=bool))) == []


def test_hungarian_prefers_weight_over_cardinality():
    # taking (0,0) alone beats the two-pair matching (0,1) + (1,0)
    scores = np.array([[10.0, 1.0], [1.0, 0.0]])
    valid = np.array([[True, True], [True, False]])
    assert hungarian(scores, valid) == [(0, 0)]


def test_hungarian_matches_permutation_oracle(rng):
    for _ in range(500):
        n, m = int(rng.integers(1, 8)), int(rng.integers(1, 8))
        if max(n, m) > 7:
            continue
        scores = rng.uniform(0.0, 2.0, (n, m))
        valid = rng.random((n, m)) > 0.25
        pairs = hungarian(scores, valid)
        rows, cols = [p[0] for p in pairs], [p[1] for p in pairs]
        assert len(set(rows)) == len(rows) and len(set(cols)) == len(cols)
        assert all(valid[r, c] for r, c in pairs)
        total = sum(scores[r, c] for r, c in pairs)
        assert total == pytest.approx(brute_force_best(scores, valid), abs=1e-9)


def test_similarity_matrix_masks_far_pairs():
    predictions = [(1, BoundingBox(0, 0, 10, 10))]
    detections = [Detection(1, BoundingBox(5, 0, 10, 10)), Detection(1, BoundingBox(500, 0, 10, 10))]
    matrix = build_similarity_matrix(predictions, detections, FixedSimilarity(0.05), 1, 1.0)
    assert matrix.valid.tolist() == [[True, False]]
    assert matrix.values[0, 0] == pytest.approx(0.05 + 1 / 3)
    visual = build_similarity_matrix(predictions, detections, FixedSimilarity(0.5), 1, 1.0)
    assert visual.valid.tolist() == [[True, True]]


def test_exact_prediction_commits_detection():
    box = BoundingBox(10, 10, 20, 40)
    result = associate_frame([(7, box)], [Detection(1, box)], IdentityOverlapProvider(), 1)
    assert len(result.matches) == 1
    match = result.matches[0]
    assert (match.tracklet_id, match.detection_index, match.iou) == (7, 0, 1.0)
    assert match.box == box and match.provenance is Provenance.DETECTION
    assert not result.unmatched_tracklets and not result.unmatched_detections


def test_mid_overlap_commits_average():
    predicted = BoundingBox(0, 0, 10, 10)
    detection = Detection(1, BoundingBox(5, 0, 10, 10))
    result = associate_frame([(1, predicted)], [detection], IdentityOverlapProvider(), 1)
    match = result.matches[0]
    assert match.iou == pytest.approx(1 / 3)
    assert match.provenance is Provenance.AVERAGED
    assert match.box == BoundingBox(2.5, 0, 10, 10)


def test_low_overlap_returns_detection_to_pool():
    predicted = BoundingBox(0, 0, 10, 10)
    detection = Detection(1, BoundingBox(7, 0, 10, 10))  # IoU 30/170
    result = associate_frame([(1, predicted)], [detection], FixedSimilarity(1.0), 1)
    assert result.matches == []
    assert result.unmatched_tracklets == {1}
    assert result.unmatched_detections == {0}


def test_truth_similarity_resolves_crossing():
    a, b = BoundingBox(100, 100, 40, 100), BoundingBox(110, 100, 40, 100)
    truth = {2: [(1, a), (2, b)]}
    predictions = [(1, b), (2, a)]
    detections = [Detection(2, a), Detection(2, b)]
    result = associate_frame(predictions, detections, TruthProvider(truth), 2)
    assignments = {m.tracklet_id: m.detection_index for m in result.matches}
    assert assignments == {1: 1, 2: 0}


box_strategy = st.builds(
    BoundingBox,
    st.floats(0, 100), st.floats(0, 100), st.floats(5, 40), st.floats(5, 40),
)


@settings(max_examples=200, deadline=None)
@given(st.lists(box_strategy, min_size=1, max_size=5), st.lists(box_strategy, min_size=1, max_size=5),
       st.floats(0.3, 0.9), st.floats(0.0, 0.1))
def test_raising_commit_gate_never_commits_more(predicted, detected, low, bump):
    predictions = list(enumerate(predicted, 1))
    detections = [Detection(1, b) for b in detected]
    provider = IdentityOverlapProvider()
    loose = associate_frame(predictions, detections, provider, 1, commit_iou=low, average_iou=0.3)
    strict = associate_frame(predictions, detections, provider, 1, commit_iou=min(low + bump, 1.0), average_iou=0.3)
    committed = lambda r: sum(m.provenance is Provenance.DETECTION for m in r.matches)
    assert committed(strict) <= committed(loose)
    assert len(strict.matches) == len(loose.matches)


@settings(max_examples=200, deadline=None)
@given(st.lists(box_strategy, min_size=1, max_size=5), st.lists(box_strategy, min_size=1, max_size=5),
       st.floats(0.0, 0.5), st.floats(0.0, 0.5))
def test_one_to_one(predicted, detected, average, extra):
    predictions = list(enumerate(predicted, 1))
    detections = [Detection(1, b) for b in detected]
    result = associate_frame(predictions, detections, IdentityOverlapProvider(), 1,
                             commit_iou=min(average + extra, 1.0), average_iou=average)
    used = [m.detection_index for m in result.matches]
    assert len(used) == len(set(used))
    assert len({m.tracklet_id for m in result.matches}) == len(result.matches)
    assert result.unmatched_detections.isdisjoint(used)
