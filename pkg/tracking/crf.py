"""Continuous CRF over tracklet displacements.

Energy per frame step:

    E(d) = sum_i w1_i |d_i - f_i|^2
         + sum_{i != j} (1 - w1_i) sum_k w_ij^(k) |(d_i - d_j) - (s_i - s_j)|^2

w_ij^(k) is the weight of the message from sender j to receiver i. The mean-field
update sets every d_i to the minimizer of its own terms given the others (Jacobi
sweep); x and y never interact, so both columns are solved side by side.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.special import expit

from .errors import SingularSystemError
from .estimators import unary_confidence_weight
from .geometry import Displacement

PIVOT_GUARD = 1e-12


class PairwiseMode(str, Enum):
    ASYMMETRIC = "asymmetric"
    SIZE_ONLY = "size_only"
    CONFIDENCE_ONLY = "confidence_only"
    SYMMETRIC_GAUSSIAN = "symmetric_gaussian"
    NONE = "none"


@dataclass(frozen=True)
class CrfParams:
    # Magnitudes are working defaults; only the signs of a21 (> 0) and a22 (< 0) are prescribed.
    a1: float = 15.0
    b1: float = -2.5
    a21: tuple = (1.0, 1.0)
    b21: tuple = (0.0, 0.0)
    a22: tuple = (-1.0, -1.0)
    b22: tuple = (0.0, 0.0)
    symmetric_bandwidth: tuple = (100.0, 300.0)
    max_iterations: int = 10
    convergence_tol: float = 1e-6
    pairwise_mode: PairwiseMode = PairwiseMode.ASYMMETRIC
    neighborhood_radius: float = None
    paper_literal_sign: bool = False

    def __post_init__(self):
        object.__setattr__(self, "pairwise_mode", PairwiseMode(self.pairwise_mode))
        for name in ("a21", "b21", "a22", "b22", "symmetric_bandwidth"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        k = len(self.a21)
        if k < 1:
            raise ValueError("at least one weighting function is required")
        if any(len(getattr(self, name)) != k for name in ("b21", "a22", "b22")):
            raise ValueError("a21, b21, a22 and b22 must have one value per weighting function")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be positive")
        if self.pairwise_mode is PairwiseMode.SYMMETRIC_GAUSSIAN:
            if len(self.symmetric_bandwidth) != k or any(b <= 0 for b in self.symmetric_bandwidth):
                raise ValueError("symmetric mode needs one positive bandwidth per weighting function")
        if self.neighborhood_radius is not None and self.neighborhood_radius <= 0:
            raise ValueError("neighborhood_radius must be positive or unlimited")

    @property
    def num_weights(self):
        return len(self.a21)


@dataclass(frozen=True)
class CrfNode:
    """Everything the energy needs about one tracklet, all taken at t-1 except the evidence."""
    tracklet_id: int
    unary_mean: Displacement
    max_confidence: float
    w1: float
    speed: Displacement
    area: float
    center: tuple

    def __post_init__(self):
        if not 0.0 < self.w1 < 1.0:
            raise ValueError(f"node {self.tracklet_id}: w1 must lie strictly inside (0, 1), got {self.w1}")
        if not self.area > 0:
            raise ValueError(f"node {self.tracklet_id}: area must be positive")

    @classmethod
    def from_evidence(cls, tracklet_id, evidence, speed, box, params: CrfParams):
        return cls(
            tracklet_id=tracklet_id,
            unary_mean=evidence.mean_displacement,
            max_confidence=evidence.max_confidence,
            w1=unary_confidence_weight(evidence.max_confidence, params.a1, params.b1),
            speed=speed,
            area=box.area(),
            center=box.center(),
        )


@dataclass
class InferenceResult:
    values: np.ndarray
    iterations: int
    converged: bool
    final_max_delta: float
    node_ids: list = field(default_factory=list)

    @property
    def displacements(self):
        return [Displacement.from_array(row) for row in self.values]

    def by_tracklet(self):
        return dict(zip(self.node_ids, self.displacements))


def pairwise_weight(receiver: CrfNode, sender: CrfNode, params: CrfParams, k):
    """Asymmetric weight of the message from sender to receiver for weighting function k (0-based)."""
    size = expit(params.a21[k] * np.log(receiver.area / sender.area) + params.b21[k])
    confidence = expit(params.a22[k] * (receiver.max_confidence - sender.max_confidence) + params.b22[k])
    mode = params.pairwise_mode
    if mode is PairwiseMode.SIZE_ONLY:
        return float(size)
    if mode is PairwiseMode.CONFIDENCE_ONLY:
        return float(confidence)
    return float(size * confidence)


def symmetric_pairwise_weight(receiver: CrfNode, sender: CrfNode, params: CrfParams, k):
    dx = receiver.center[0] - sender.center[0]
    dy = receiver.center[1] - sender.center[1]
    bandwidth = params.symmetric_bandwidth[k]
    return float(np.exp(-(dx * dx + dy * dy) / (2.0 * bandwidth * bandwidth)))


def neighborhood_mask(nodes, params: CrfParams):
    n = len(nodes)
    mask = ~np.eye(n, dtype=bool)
    if params.neighborhood_radius is not None and n > 1:
        centers = np.array([node.center for node in nodes], dtype=float)
        dist = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
        mask &= dist <= params.neighborhood_radius
    return mask


def weight_table(nodes, params: CrfParams):
    """w[k, i, j]: message weight from j to i. Zero on the diagonal and outside the neighborhood."""
    n = len(nodes)
    weights = np.zeros((params.num_weights, n, n))
    if params.pairwise_mode is PairwiseMode.NONE:
        return weights
    weight_fn = (symmetric_pairwise_weight if params.pairwise_mode is PairwiseMode.SYMMETRIC_GAUSSIAN
                 else pairwise_weight)
    mask = neighborhood_mask(nodes, params)
    for i, j in zip(*np.nonzero(mask)):
        for k in range(params.num_weights):
            weights[k, i, j] = weight_fn(nodes[i], nodes[j], params, k)
    return weights


def _node_arrays(nodes):
    w1 = np.array([node.w1 for node in nodes])
    unary = np.array([node.unary_mean.as_array() for node in nodes]).reshape(len(nodes), 2)
    speed = np.array([node.speed.as_array() for node in nodes]).reshape(len(nodes), 2)
    return w1, unary, speed


def _speed_sign(params):
    return -1.0 if params.paper_literal_sign else 1.0


def energy(displacements, nodes, params: CrfParams, weights=None):
    d = np.asarray(displacements, dtype=float).reshape(len(nodes), 2)
    if weights is None:
        weights = weight_table(nodes, params)
    w1, unary, speed = _node_arrays(nodes)
    unary_term = float((w1 * ((d - unary) ** 2).sum(axis=1)).sum())
    summed = weights.sum(axis=0)
    delta_d = d[:, None, :] - d[None, :, :]
    delta_s = speed[:, None, :] - speed[None, :, :]
    mismatch = ((delta_d - delta_s) ** 2).sum(axis=-1)
    pairwise_term = float(((1.0 - w1)[:, None] * summed * mismatch).sum())
    return unary_term + pairwise_term


def mean_field_step(current, nodes, weights, params: CrfParams):
    """One synchronous update; every node reads only from `current`."""
    w1, unary, speed = _node_arrays(nodes)
    d = np.asarray(current, dtype=float).reshape(len(nodes), 2)
    summed = weights.sum(axis=0)
    row = summed.sum(axis=1)
    u = 1.0 - w1
    # sum_j W_ij (d_j + sign * (s_i - s_j))
    messages = summed @ d + _speed_sign(params) * (row[:, None] * speed - summed @ speed)
    numerator = w1[:, None] * unary + u[:, None] * messages
    denominator = w1 + u * row
    return numerator / denominator[:, None]


def direct_fixed_point_solve(nodes, weights, params: CrfParams):
    """Exact simultaneous solution of all update equations (linear in d)."""
    w1, unary, speed = _node_arrays(nodes)
    summed = weights.sum(axis=0)
    row = summed.sum(axis=1)
    u = 1.0 - w1
    system = np.diag(w1 + u * row) - u[:, None] * summed
    rhs = w1[:, None] * unary + u[:, None] * _speed_sign(params) * (row[:, None] * speed - summed @ speed)
    lu, piv = lu_factor(system)
    if np.min(np.abs(np.diag(lu))) < PIVOT_GUARD:
        raise SingularSystemError("fixed-point system is singular")
    return lu_solve((lu, piv), rhs)


def infer(nodes, params: CrfParams):
    if not nodes:
        raise ValueError("infer needs at least one node")
    ids = [node.tracklet_id for node in nodes]
    _, unary, _ = _node_arrays(nodes)
    if params.pairwise_mode is PairwiseMode.NONE:
        return InferenceResult(unary.copy(), 0, True, 0.0, ids)

    weights = weight_table(nodes, params)
    d = unary.copy()
    delta = float("inf")
    for iteration in range(1, params.max_iterations + 1):
        updated = mean_field_step(d, nodes, weights, params)
        delta = float(np.max(np.abs(updated - d)))
        d = updated
        if delta <= params.convergence_tol:
            return InferenceResult(d, iteration, True, delta, ids)
    return InferenceResult(d, params.max_iterations, False, delta, ids)
