"""CLEAR MOT evaluation and the displacement-error diagnostic.

Frames are fed to a motmetrics accumulator with 1 - IoU as the distance and
pairs below match_iou left unmatchable. motmetrics keeps a ground-truth object
on its previous hypothesis while that pair stays matchable, matches the rest by
Hungarian, and counts switches, fragmentations and MT/ML (ML below 0.2 of the
lifespan) the CLEAR MOT way. MetricsReport keeps the summed counters so seeds
and sequences can be combined.
"""
from dataclasses import dataclass

import motmetrics as mm
import numpy as np
import pandas as pd

from .errors import FrameRangeError, InputError, TrackingError
from .estimators import truth_box, truth_identity
from .geometry import center_displacement, iou

SUMMARY_METRICS = ["num_detections", "num_false_positives", "num_misses", "num_switches", "num_fragmentations",
                   "num_unique_objects", "mostly_tracked", "mostly_lost", "mota", "motp"]


@dataclass
class MetricsReport:
    name: str
    frames: int = 0
    gt_boxes: int = 0
    hyp_boxes: int = 0
    matches: int = 0
    overlap_sum: float = 0.0
    fp: int = 0
    fn: int = 0
    idsw: int = 0
    frag: int = 0
    gt_ids: int = 0
    mostly_tracked: int = 0
    mostly_lost: int = 0
    displacement_error: float = None

    @property
    def mota(self):
        if self.gt_boxes == 0:
            return float("nan")
        return 100.0 * (1.0 - (self.fn + self.fp + self.idsw) / self.gt_boxes)

    @property
    def motp(self):
        return 100.0 * self.overlap_sum / self.matches if self.matches else 0.0

    @property
    def mt(self):
        return self.mostly_tracked / self.gt_ids if self.gt_ids else 0.0

    @property
    def ml(self):
        return self.mostly_lost / self.gt_ids if self.gt_ids else 0.0

    @property
    def partially_tracked(self):
        return self.gt_ids - self.mostly_tracked - self.mostly_lost


def hypotheses_by_frame(rows):
    """Group (frame, id, box) rows into {frame: [(id, box)]}."""
    grouped = {}
    for frame, track_id, box in rows:
        grouped.setdefault(frame, []).append((track_id, box))
    return grouped


def _check_hypotheses(hypotheses, frame_count):
    for frame, entries in hypotheses.items():
        if not 1 <= frame <= frame_count and entries:
            raise FrameRangeError(f"hypothesis frame {frame} outside ground-truth range 1..{frame_count}")
        ids = [track_id for track_id, _ in entries]
        if len(ids) != len(set(ids)):
            raise InputError(f"frame {frame}: hypothesis id repeated within a frame")


def _distances(gts, hyps, match_iou):
    distances = np.full((len(gts), len(hyps)), np.nan)
    for i, (_, g) in enumerate(gts):
        for j, (_, h) in enumerate(hyps):
            overlap = iou(g, h)
            if overlap >= match_iou:
                distances[i, j] = 1.0 - overlap
    return distances


def accumulate(gt, hypotheses, match_iou=0.5):
    """motmetrics accumulator over every frame of the ground truth."""
    acc = mm.MOTAccumulator(auto_id=False)
    for frame in gt.frames():
        gts = gt.ground_truth.get(frame, [])
        hyps = hypotheses.get(frame, [])
        acc.update([gt_id for gt_id, _ in gts], [hyp_id for hyp_id, _ in hyps],
                   _distances(gts, hyps, match_iou), frameid=frame)
    return acc


def evaluate(gt, hypotheses, match_iou=0.5, name=None):
    """gt: SequenceBundle with ground truth; hypotheses: {frame: [(id, box)]} or (frame, id, box) rows."""
    if gt.ground_truth is None:
        raise InputError(f"{gt.name}: no ground truth loaded")
    if not isinstance(hypotheses, dict):
        hypotheses = hypotheses_by_frame(hypotheses)
    _check_hypotheses(hypotheses, gt.frame_count)

    report = MetricsReport(name=name or gt.name, frames=gt.frame_count)
    report.gt_boxes = sum(len(gt.ground_truth.get(f, [])) for f in gt.frames())
    report.hyp_boxes = sum(len(hypotheses.get(f, [])) for f in gt.frames())
    if report.gt_boxes == 0 and report.hyp_boxes == 0:
        return report

    summary = mm.metrics.create().compute(accumulate(gt, hypotheses, match_iou), metrics=SUMMARY_METRICS,
                                          name=report.name)
    values = summary.iloc[0]
    report.matches = int(values["num_detections"])
    report.fp = int(values["num_false_positives"])
    report.fn = int(values["num_misses"])
    report.idsw = int(values["num_switches"])
    report.frag = int(values["num_fragmentations"])
    report.gt_ids = int(values["num_unique_objects"])
    report.mostly_tracked = int(values["mostly_tracked"])
    report.mostly_lost = int(values["mostly_lost"])
    # motmetrics' motp is the mean matched distance, 1 - IoU
    if report.matches:
        report.overlap_sum = report.matches * (1.0 - float(values["motp"]))
    return report


def combine_reports(reports, name="OVERALL"):
    total = MetricsReport(name=name)
    for r in reports:
        for attr in ("frames", "gt_boxes", "hyp_boxes", "matches", "overlap_sum", "fp", "fn", "idsw", "frag",
                     "gt_ids", "mostly_tracked", "mostly_lost"):
            setattr(total, attr, getattr(total, attr) + getattr(r, attr))
    errors = [r.displacement_error for r in reports if r.displacement_error is not None]
    if errors:
        total.displacement_error = float(np.mean(errors))
    return total


def displacement_error(predicted, truth):
    """Mean L1 distance between aligned displacement lists."""
    if len(predicted) != len(truth):
        raise TrackingError(f"displacement error: {len(predicted)} predicted vs {len(truth)} truth displacements")
    if not predicted:
        return float("nan")
    return float(np.mean([abs(p.dx - t.dx) + abs(p.dy - t.dy) for p, t in zip(predicted, truth)]))


def displacement_diagnostic(inference_log, ground_truth):
    """(inferred error, raw evidence error) over records whose anchor matches a ground-truth object."""
    inferred, raw, truth = [], [], []
    for record in inference_log:
        gt_id = truth_identity(ground_truth, record.frame - 1, record.anchor)
        if gt_id is None:
            continue
        now = truth_box(ground_truth, record.frame, gt_id)
        if now is None:
            continue
        truth.append(center_displacement(truth_box(ground_truth, record.frame - 1, gt_id), now))
        inferred.append(record.displacement)
        raw.append(record.evidence)
    return displacement_error(inferred, truth), displacement_error(raw, truth)


COLUMNS = ("Sequence", "MOTA", "MOTP", "MT", "ML", "FP", "FN", "IDSW", "Frag", "GT")


def report_row(report: MetricsReport):
    return [
        report.name,
        f"{report.mota:.1f}",
        f"{report.motp:.1f}",
        f"{report.mt:.3f}",
        f"{report.ml:.3f}",
        str(report.fp),
        str(report.fn),
        str(report.idsw),
        str(report.frag),
        str(report.gt_boxes),
    ]


def format_table(header, rows):
    frame = pd.DataFrame(rows, columns=list(header)).set_index(header[0])
    frame.index.name = None
    return mm.io.render_summary(frame)


def format_csv(header, rows):
    return pd.DataFrame(rows, columns=list(header)).to_csv(index=False, lineterminator="\n")


def metrics_table(reports, csv_format=False):
    """One row per sequence plus an OVERALL row when there is more than one."""
    reports = list(reports)
    if len(reports) > 1:
        reports.append(combine_reports(reports))
    rows = [report_row(r) for r in reports]
    return format_csv(COLUMNS, rows) if csv_format else format_table(COLUMNS, rows)
