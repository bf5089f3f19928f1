import numpy as np
import pytest

from tracking.crf import CrfNode
from tracking.geometry import BoundingBox, Detection, Displacement, Provenance, Tracklet
from tracking.motio import SequenceBundle


def make_node(tracklet_id, unary=(0.0, 0.0), w1=0.5, speed=(0.0, 0.0), area=100.0,
              max_confidence=0.5, center=(0.0, 0.0)):
    return CrfNode(
        tracklet_id=tracklet_id,
        unary_mean=Displacement(*unary),
        max_confidence=max_confidence,
        w1=w1,
        speed=Displacement(*speed),
        area=area,
        center=center,
    )


def random_nodes(rng, n, w1_range=(0.05, 0.95), unary_scale=5.0, speed_scale=5.0):
    return [
        make_node(
            i,
            unary=tuple(rng.uniform(-unary_scale, unary_scale, 2)),
            w1=float(rng.uniform(*w1_range)),
            speed=tuple(rng.uniform(-speed_scale, speed_scale, 2)),
            area=float(rng.uniform(200.0, 40000.0)),
            max_confidence=float(rng.uniform(0.05, 1.0)),
            center=tuple(rng.uniform(0.0, 1000.0, 2)),
        )
        for i in range(n)
    ]


def tracklet_with(boxes, tracklet_id=1, start_frame=1):
    tracklet = Tracklet(tracklet_id)
    for k, box in enumerate(boxes):
        tracklet.append(start_frame + k, box, Provenance.DETECTION)
    return tracklet


def bundle_from_truth(ground_truth, frame_count, name="seq"):
    """Detections identical to the ground truth boxes."""
    detections = {f: [Detection(f, box) for _, box in ground_truth.get(f, [])] for f in range(1, frame_count + 1)}
    truth = {f: list(ground_truth.get(f, [])) for f in range(1, frame_count + 1)}
    return SequenceBundle(name=name, frame_count=frame_count, detections=detections, ground_truth=truth)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def box():
    return BoundingBox(0.0, 0.0, 10.0, 10.0)
