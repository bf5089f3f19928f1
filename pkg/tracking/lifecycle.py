"""Online tracking loop: evidence, CRF inference, association, then candidate and occlusion bookkeeping."""
from dataclasses import dataclass, field

import colorama
import numpy as np

from .association import associate_frame, hungarian, overall_similarity
from .config import TrackerConfig
from .crf import CrfNode, infer
from .errors import FrameOrderError, TrackingError
from .geometry import Provenance, Status, Tracklet, enlarge_box, iou
from .utils import log_message


@dataclass
class TrackerState:
    frame: int = 0
    active: list = field(default_factory=list)
    candidates: list = field(default_factory=list)
    finished: list = field(default_factory=list)
    next_id: int = 1
    next_candidate_id: int = -1

    def allocate_id(self):
        tracklet_id = self.next_id
        self.next_id += 1
        return tracklet_id

    def allocate_candidate_id(self):
        candidate_id = self.next_candidate_id
        self.next_candidate_id -= 1
        return candidate_id

    def promoted(self):
        """Every tracklet that ever received a positive id, ordered by id."""
        return sorted(self.active + self.finished, key=lambda t: t.id)


@dataclass(frozen=True)
class InferenceRecord:
    frame: int
    tracklet_id: int
    anchor: object
    evidence: object
    displacement: object


@dataclass
class TrackingRun:
    name: str
    frames: int
    rows: list
    created: int
    terminated: int
    overlays: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    inference_log: list = field(default_factory=list)

    @property
    def mean_iterations(self):
        return float(np.mean(self.iterations)) if self.iterations else 0.0


def context_window(tracklet, config: TrackerConfig):
    return enlarge_box(tracklet.last_box, config.context_width_factor, config.context_height_factor)


def handle_occlusion(tracklet, predicted_box, frame):
    tracklet.append(frame, predicted_box, Provenance.VIRTUAL)
    tracklet.status = Status.OCCLUDED
    return tracklet


def terminate_stale(state: TrackerState, m_term):
    """Retire tracklets missed more than m_term times in a row.

    The virtual box of the terminating frame is dropped, so a retired
    tracklet keeps at most m_term trailing virtual boxes.
    """
    stale = [t for t in state.active if t.missed_count > m_term]
    for tracklet in stale:
        tracklet.history.pop()
        tracklet.status = Status.TERMINATED
        state.active.remove(tracklet)
        state.finished.append(tracklet)
    return stale


def extend_candidates(state: TrackerState, frame, detections, displacement_provider,
                      similarity_provider, config: TrackerConfig):
    """detections: list of (index, Detection) left over by tracklet association.

    Returns the candidates promoted at this frame.
    """
    candidates = state.candidates
    predictions = []
    for candidate in candidates:
        evidence = displacement_provider.estimate(candidate, frame, context_window(candidate, config))
        predictions.append(candidate.last_box.shifted(evidence.mean_displacement))
        candidate.last_evidence_mean = evidence.mean_displacement

    n, m = len(candidates), len(detections)
    scores = np.zeros((n, m))
    valid = np.zeros((n, m), dtype=bool)
    for i, predicted in enumerate(predictions):
        for j, (_, detection) in enumerate(detections):
            overlap = iou(predicted, detection.box)
            visual = similarity_provider.similarity(predicted, detection.box, frame)
            scores[i, j] = overall_similarity(visual, overlap, config.lam)
            valid[i, j] = overlap > config.init_iou_gate and visual > config.init_visual_gate

    survivors, used = [], set()
    for i, j in hungarian(scores, valid):
        candidates[i].append(frame, detections[j][1].box, Provenance.DETECTION)
        survivors.append(candidates[i])
        used.add(j)
    for j, (_, detection) in enumerate(detections):
        if j not in used:
            seed = Tracklet(state.allocate_candidate_id())
            seed.append(frame, detection.box, Provenance.DETECTION)
            survivors.append(seed)

    promoted = [c for c in survivors if c.candidate_count >= config.k_init]
    state.candidates = [c for c in survivors if c.candidate_count < config.k_init]
    for candidate in promoted:
        candidate.id = state.allocate_id()
        candidate.status = Status.ACTIVE
        candidate.first_output_frame = candidate.history[0].frame if config.backfill_candidates else frame
        state.active.append(candidate)
    return promoted


def emitted_boxes(state: TrackerState, frame):
    return [(t.id, t.last_box) for t in sorted(state.active, key=lambda t: t.id) if t.last_frame == frame]


def output_entries(tracklets, emit_virtual=True):
    """(id, HistoryEntry) pairs that make it into the output, sorted by frame then id.

    Backfill is governed by each tracklet's first_output_frame; with emit_virtual
    off the trailing virtual boxes of a tracklet are left out.
    """
    entries = []
    for tracklet in tracklets:
        history = tracklet.history
        end = len(history)
        if not emit_virtual:
            end -= tracklet.missed_count
        for entry in history[:end]:
            if entry.frame >= tracklet.first_output_frame:
                entries.append((tracklet.id, entry))
    return sorted(entries, key=lambda e: (e[1].frame, e[0]))


def output_rows(tracklets, emit_virtual=True):
    return [(entry.frame, track_id, entry.box) for track_id, entry in output_entries(tracklets, emit_virtual)]


class Tracker:
    def __init__(self, config: TrackerConfig, displacement_provider, similarity_provider,
                 name="tracker", verbose=False):
        self.config = config
        self.displacement_provider = displacement_provider
        self.similarity_provider = similarity_provider
        self.name = name
        self.verbose = verbose
        self.state = TrackerState()
        self.iterations = []
        self.inference_log = []
        self.terminated = 0

    def _log(self, message, details=None, color=colorama.Fore.CYAN):
        if self.verbose:
            log_message(self.name, message, color=color, details=details)

    def _predict(self, frame):
        tracked = self.state.active
        if not tracked:
            return []
        nodes = []
        for tracklet in tracked:
            speed = tracklet.mean_speed(self.config.speed_window)
            evidence = self.displacement_provider.estimate(tracklet, frame, context_window(tracklet, self.config))
            tracklet.last_evidence_mean = evidence.mean_displacement
            try:
                nodes.append(CrfNode.from_evidence(tracklet.id, evidence, speed, tracklet.last_box, self.config.crf))
            except ValueError as e:
                raise TrackingError(f"frame {frame}: {e}")
        result = infer(nodes, self.config.crf)
        self.iterations.append(result.iterations)
        predictions = []
        for tracklet, node, displacement in zip(tracked, nodes, result.displacements):
            self.inference_log.append(
                InferenceRecord(frame, tracklet.id, tracklet.last_box, node.unary_mean, displacement))
            predictions.append((tracklet.id, tracklet.last_box.shifted(displacement)))
        return predictions

    def step_frame(self, frame, detections):
        state = self.state
        if frame != state.frame + 1:
            raise FrameOrderError(f"expected frame {state.frame + 1}, got {frame}")
        for detection in detections:
            if detection.frame != frame:
                raise FrameOrderError(f"detection for frame {detection.frame} passed at frame {frame}")
        cfg = self.config

        predictions = self._predict(frame)
        association = associate_frame(predictions, detections, self.similarity_provider, frame,
                                      lam=cfg.lam, commit_iou=cfg.commit_iou, average_iou=cfg.average_iou)
        by_id = {t.id: t for t in state.active}
        for match in association.matches:
            tracklet = by_id[match.tracklet_id]
            tracklet.append(frame, match.box, match.provenance)
            tracklet.status = Status.ACTIVE

        predicted_by_id = dict(predictions)
        for tracklet_id in sorted(association.unmatched_tracklets):
            handle_occlusion(by_id[tracklet_id], predicted_by_id[tracklet_id], frame)

        leftovers = [(j, detections[j]) for j in sorted(association.unmatched_detections)]
        for tracklet in extend_candidates(state, frame, leftovers, self.displacement_provider,
                                          self.similarity_provider, cfg):
            self._log("promoted tracklet", details=f"id={tracklet.id} frame={frame}", color=colorama.Fore.GREEN)

        for tracklet in terminate_stale(state, cfg.m_term):
            self.terminated += 1
            self._log("terminated tracklet", details=f"id={tracklet.id} frame={frame}", color=colorama.Fore.YELLOW)

        state.frame = frame
        return emitted_boxes(state, frame)

    def rows(self):
        return output_rows(self.state.promoted(), self.config.emit_virtual)

    def overlays(self):
        return [(entry.frame, track_id, entry.box, entry.provenance.value)
                for track_id, entry in output_entries(self.state.promoted(), self.config.emit_virtual)]

    def run(self, bundle):
        for frame in bundle.frames():
            self.step_frame(frame, bundle.detections_at(frame))
        return TrackingRun(
            name=bundle.name,
            frames=bundle.frame_count,
            rows=self.rows(),
            overlays=self.overlays(),
            created=self.state.next_id - 1,
            terminated=self.terminated,
            iterations=list(self.iterations),
            inference_log=list(self.inference_log),
        )
