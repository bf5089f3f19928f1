"""Displacement and similarity providers.

The visual-displacement estimator produces a confidence per bin of a
discretized displacement grid; the visual-similarity estimator scores whether
two boxes in the same frame show the same object. Both are interfaces here,
with analytic, file-backed and ground-truth backed implementations.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import GridError, InputError, MissingOracleKeyError
from .geometry import BoundingBox, Displacement, center_displacement, iou
from .utils import read_csv_cells

RENORMALIZE_TOLERANCE = 1e-6
SUM_TOLERANCE = 1e-9


def bin_centers(bins, extent):
    """Bin displacements along one axis covering [-extent, extent]."""
    step = 2.0 * extent / bins
    return (np.arange(bins) - bins // 2) * step


@dataclass(frozen=True, eq=False)
class DisplacementGrid:
    """Per-bin displacements and confidences; confidences has shape (bins_y, bins_x).

    Flat bin index k = row * bins_x + col, row running along y.
    """
    bin_x: np.ndarray
    bin_y: np.ndarray
    confidences: np.ndarray

    def __post_init__(self):
        c = self.confidences
        if c.shape != (len(self.bin_y), len(self.bin_x)):
            raise GridError(f"confidence shape {c.shape} does not match bins {(len(self.bin_y), len(self.bin_x))}")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise GridError("confidences must be finite and non-negative")

    @property
    def bins_x(self):
        return len(self.bin_x)

    @property
    def bins_y(self):
        return len(self.bin_y)

    @property
    def size(self):
        return self.bins_x * self.bins_y

    @property
    def step(self):
        sx = self.bin_x[1] - self.bin_x[0] if self.bins_x > 1 else 0.0
        sy = self.bin_y[1] - self.bin_y[0] if self.bins_y > 1 else 0.0
        return (float(sx), float(sy))

    @classmethod
    def regular(cls, confidences, range_x, range_y):
        confidences = np.asarray(confidences, dtype=float)
        bins_y, bins_x = confidences.shape
        return cls(bin_centers(bins_x, range_x), bin_centers(bins_y, range_y), confidences)

    @classmethod
    def normalized(cls, bin_x, bin_y, raw):
        """Renormalize provider output whose mass is off by rounding only."""
        raw = np.asarray(raw, dtype=float)
        total = raw.sum()
        if abs(total - 1.0) > RENORMALIZE_TOLERANCE:
            raise GridError(f"confidences sum to {total:.9f}, outside renormalization tolerance")
        return cls(np.asarray(bin_x, dtype=float), np.asarray(bin_y, dtype=float), raw / total)

    def max_confidence(self):
        return float(self.confidences.max())


def weighted_mean_displacement(grid: DisplacementGrid):
    total = grid.confidences.sum()
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise GridError(f"confidences sum to {total:.12f}, expected 1")
    mx = float((grid.confidences.sum(axis=0) * grid.bin_x).sum())
    my = float((grid.confidences.sum(axis=1) * grid.bin_y).sum())
    return Displacement(mx, my)


@dataclass(frozen=True)
class DisplacementEvidence:
    grid: DisplacementGrid
    mean_displacement: Displacement
    max_confidence: float

    @classmethod
    def from_grid(cls, grid):
        return cls(grid, weighted_mean_displacement(grid), grid.max_confidence())


def unary_confidence_weight(max_confidence, a1, b1):
    return float(expit(a1 * max_confidence + b1))


def gaussian_confidences(bin_x, bin_y, center, sigma_x, sigma_y):
    """Separable Gaussian bump; zero bandwidth collapses to the nearest bin."""
    return np.outer(_axis_bump(bin_y, center[1], sigma_y), _axis_bump(bin_x, center[0], sigma_x))


def _axis_bump(centers, mu, sigma):
    if sigma <= 0:
        bump = np.zeros(len(centers))
        bump[int(np.argmin(np.abs(centers - mu)))] = 1.0
        return bump
    bump = np.exp(-0.5 * ((centers - mu) / sigma) ** 2)
    if bump.sum() == 0.0:
        # mean far outside the window: saturate at the closest edge
        return _axis_bump(centers, mu, 0.0)
    return bump / bump.sum()


@dataclass(frozen=True)
class GridSettings:
    bins_x: int = 20
    bins_y: int = 20
    range_scale: float = 0.5

    def __post_init__(self):
        if self.bins_x < 2 or self.bins_y < 2:
            raise ValueError("displacement grids need at least 2 bins per axis")
        if self.range_scale <= 0:
            raise ValueError("range_scale must be positive")

    def axes(self, context: BoundingBox):
        return (bin_centers(self.bins_x, context.w * self.range_scale),
                bin_centers(self.bins_y, context.h * self.range_scale))


class DisplacementProvider(ABC):
    """Stand-in for the visual-displacement network."""

    def __init__(self, grid_settings=None):
        self.grid_settings = grid_settings or GridSettings()

    @abstractmethod
    def grid_for(self, tracklet, frame, context) -> DisplacementGrid:
        ...

    def estimate(self, tracklet, frame, context):
        return DisplacementEvidence.from_grid(self.grid_for(tracklet, frame, context))


def estimate_displacement(provider: DisplacementProvider, tracklet, frame, context):
    return provider.estimate(tracklet, frame, context)


class ConstantVelocityProvider(DisplacementProvider):
    """Gaussian bump at the tracklet's speed; bandwidth in bins.

    peak_weight mixes the bump with a uniform floor: 1.0 keeps the pure bump.
    """

    def __init__(self, bandwidth=1.0, peak_weight=1.0, grid_settings=None):
        super().__init__(grid_settings)
        if not 0.0 < peak_weight <= 1.0:
            raise ValueError("peak_weight must be in (0, 1]")
        self.bandwidth = bandwidth
        self.peak_weight = peak_weight

    def grid_for(self, tracklet, frame, context):
        bx, by = self.grid_settings.axes(context)
        speed = tracklet.speed
        sx = self.bandwidth * (bx[1] - bx[0]) if len(bx) > 1 else 0.0
        sy = self.bandwidth * (by[1] - by[0]) if len(by) > 1 else 0.0
        bump = gaussian_confidences(bx, by, (speed.dx, speed.dy), sx, sy)
        if self.peak_weight < 1.0:
            bump = self.peak_weight * bump + (1.0 - self.peak_weight) / bump.size
        return DisplacementGrid(bx, by, bump / bump.sum())


def truth_identity(ground_truth, frame, box, min_iou=0.5):
    best_id, best_iou = None, min_iou
    for gt_id, gt_box in ground_truth.get(frame, ()):
        overlap = iou(box, gt_box)
        if overlap >= best_iou:
            best_id, best_iou = gt_id, overlap
    return best_id


def truth_box(ground_truth, frame, gt_id):
    for candidate_id, gt_box in ground_truth.get(frame, ()):
        if candidate_id == gt_id:
            return gt_box
    return None


class NoisyTruthProvider(DisplacementProvider):
    """Evidence centered at the ground-truth displacement plus size-proportional noise.

    The anchor box at frame-1 is matched to a ground-truth identity at IoU >= 0.5.
    Noise std and bump bandwidth are noise_scale * box diagonal. With probability
    failure_rate the evidence is a wide low-confidence bump at a random offset.
    Randomness is keyed by (seed, frame, identity), so every tracker configuration
    sees the same evidence for the same object and frame.
    """

    FAILURE_BANDWIDTH = 4.0
    UNMATCHED_BANDWIDTH = 3.0

    def __init__(self, ground_truth, noise_scale=0.0, failure_rate=0.0, seed=0, grid_settings=None):
        super().__init__(grid_settings)
        self.ground_truth = ground_truth
        self.noise_scale = noise_scale
        self.failure_rate = failure_rate
        self.seed = seed

    def grid_for(self, tracklet, frame, context):
        bx, by = self.grid_settings.axes(context)
        step_x, step_y = bx[1] - bx[0], by[1] - by[0]
        anchor = tracklet.last_box
        gt_id = truth_identity(self.ground_truth, frame - 1, anchor)
        now = truth_box(self.ground_truth, frame, gt_id) if gt_id is not None else None
        if now is None:
            speed = tracklet.speed
            bump = gaussian_confidences(bx, by, (speed.dx, speed.dy),
                                        self.UNMATCHED_BANDWIDTH * step_x, self.UNMATCHED_BANDWIDTH * step_y)
            return DisplacementGrid(bx, by, bump)

        before = truth_box(self.ground_truth, frame - 1, gt_id)
        truth = center_displacement(before, now).as_array()
        rng = np.random.default_rng([self.seed, frame, gt_id])
        failure_draw = rng.random()
        offset = rng.standard_normal(2)
        if failure_draw < self.failure_rate:
            spread = np.array([bx[-1], by[-1]]) * 0.5
            center = truth + offset * spread
            bump = gaussian_confidences(bx, by, center,
                                        self.FAILURE_BANDWIDTH * step_x, self.FAILURE_BANDWIDTH * step_y)
        else:
            sigma = self.noise_scale * anchor.diagonal()
            center = truth + offset * sigma
            bump = gaussian_confidences(bx, by, center, sigma, sigma)
        return DisplacementGrid(bx, by, bump)


def _anchor_key(box: BoundingBox):
    return tuple(round(v, 2) for v in box.as_tuple())


def _read_oracle_rows(path, width):
    """Yield (line_no, seq, values); '#' lines and a 'seq,...' header are skipped."""
    for line_no, row in read_csv_cells(path, width):
        if row[0].startswith("#") or row[0] == "seq":
            continue
        if len(row) < width:
            raise InputError(f"{path}:{line_no}: expected {width} fields, got {len(row)}")
        try:
            values = [float(v) for v in row[1:width]]
        except ValueError as e:
            raise InputError(f"{path}:{line_no}: {e}") from e
        if not np.all(np.isfinite(values)):
            raise InputError(f"{path}:{line_no}: non-finite value")
        yield line_no, row[0], values


def _oracle_box(path, line_no, values):
    try:
        return BoundingBox(*values)
    except ValueError as e:
        raise InputError(f"{path}:{line_no}: {e}") from e


class FileOracleDisplacementProvider(DisplacementProvider):
    """Precomputed grids keyed by (sequence, frame, rounded anchor box)."""

    def __init__(self, table, sequence, grid_settings=None):
        super().__init__(grid_settings)
        self.table = table
        self.sequence = sequence

    @classmethod
    def load(cls, path, sequence, grid_settings=None):
        table = {}
        for line_no, seq, values in _read_oracle_rows(path, 8):
            frame, ax, ay, aw, ah, bin_index, confidence = values
            key = (seq, int(frame), _anchor_key(_oracle_box(path, line_no, (ax, ay, aw, ah))))
            table.setdefault(key, {})[int(bin_index)] = confidence
        return cls(table, sequence, grid_settings)

    def grid_for(self, tracklet, frame, context):
        key = (self.sequence, frame, _anchor_key(tracklet.last_box))
        if key not in self.table:
            raise MissingOracleKeyError(f"no displacement grid for {key}")
        bx, by = self.grid_settings.axes(context)
        raw = np.zeros(len(bx) * len(by))
        for index, confidence in self.table[key].items():
            if not 0 <= index < raw.size:
                raise GridError(f"bin index {index} outside grid of {raw.size} bins for {key}")
            raw[index] = confidence
        return DisplacementGrid.normalized(bx, by, raw.reshape(len(by), len(bx)))


class SimilarityProvider(ABC):
    """Stand-in for the visual-similarity network. Scores are symmetric in [0, 1]."""

    @abstractmethod
    def similarity(self, box_a, box_b, frame) -> float:
        ...


def visual_similarity(provider: SimilarityProvider, box_a, box_b, frame):
    return provider.similarity(box_a, box_b, frame)


class IdentityOverlapProvider(SimilarityProvider):
    def similarity(self, box_a, box_b, frame):
        return iou(box_a, box_b)


class TruthProvider(SimilarityProvider):
    """1 when both boxes match the same ground-truth identity at IoU >= 0.5."""

    def __init__(self, ground_truth):
        self.ground_truth = ground_truth

    def similarity(self, box_a, box_b, frame):
        id_a = truth_identity(self.ground_truth, frame, box_a)
        if id_a is None:
            return 0.0
        return 1.0 if truth_identity(self.ground_truth, frame, box_b) == id_a else 0.0


class FileOracleSimilarityProvider(SimilarityProvider):
    def __init__(self, table, sequence):
        self.table = table
        self.sequence = sequence

    @classmethod
    def load(cls, path, sequence):
        table = {}
        for line_no, seq, values in _read_oracle_rows(path, 11):
            frame = int(values[0])
            a = _anchor_key(_oracle_box(path, line_no, values[1:5]))
            b = _anchor_key(_oracle_box(path, line_no, values[5:9]))
            table[(seq, frame, a, b)] = values[9]
        return cls(table, sequence)

    def similarity(self, box_a, box_b, frame):
        a, b = _anchor_key(box_a), _anchor_key(box_b)
        for key in ((self.sequence, frame, a, b), (self.sequence, frame, b, a)):
            if key in self.table:
                return self.table[key]
        raise MissingOracleKeyError(f"no similarity score for {(self.sequence, frame, a, b)}")
