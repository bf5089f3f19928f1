import re
from dataclasses import dataclass, field, fields, replace

import yaml

from .crf import CrfParams, PairwiseMode
from .errors import ConfigError, InputError
from .estimators import GridSettings
from .utils import config_number as _number

PER_K_KEYS = ("a21", "b21", "a22", "b22")
REQUIRED_KEYS = ("a1", "b1")
INDEXED_KEY = re.compile(r"^(a21|b21|a22|b22|symmetric_bandwidth)\.(\d+)$")

# Flat keys other than the per-k CRF parameters, with their defaults.
OPTIONAL_FIELDS = {
    "max_iterations": 10,
    "convergence_tol": 1e-6,
    "pairwise_mode": "asymmetric",
    "neighborhood_radius": None,
    "paper_literal_sign": False,
    "k_init": 4,
    "m_term": 5,
    "init_iou_gate": 0.3,
    "init_visual_gate": 0.8,
    "lambda": 1.0,
    "emit_virtual": True,
    "backfill_candidates": True,
    "commit_iou": 0.5,
    "average_iou": 0.3,
    "context_width_factor": 5.0,
    "context_height_factor": 2.0,
    "grid_bins_x": 20,
    "grid_bins_y": 20,
    "grid_range_scale": 0.5,
    "cv_bandwidth": 1.0,
    "cv_peak_weight": 1.0,
    "evidence_noise": 0.05,
    "evidence_failure_rate": 0.0,
    "speed_window": 5,
}


@dataclass(frozen=True)
class TrackerConfig:
    crf: CrfParams = field(default_factory=CrfParams)
    k_init: int = 4
    m_term: int = 5
    init_iou_gate: float = 0.3
    init_visual_gate: float = 0.8
    lam: float = 1.0
    emit_virtual: bool = True
    backfill_candidates: bool = True
    commit_iou: float = 0.5
    average_iou: float = 0.3
    context_width_factor: float = 5.0
    context_height_factor: float = 2.0
    grid: GridSettings = field(default_factory=GridSettings)
    cv_bandwidth: float = 1.0
    cv_peak_weight: float = 1.0
    evidence_noise: float = 0.05
    evidence_failure_rate: float = 0.0
    speed_window: int = 5

    def with_overrides(self, pairwise_mode=None, lam=None, **lifecycle):
        cfg = self
        if pairwise_mode is not None:
            try:
                cfg = replace(cfg, crf=replace(cfg.crf, pairwise_mode=PairwiseMode(pairwise_mode)))
            except ValueError as e:
                raise ConfigError("pairwise_mode", str(e))
        if lam is not None:
            cfg = replace(cfg, lam=float(lam))
        if lifecycle:
            cfg = replace(cfg, **lifecycle)
        return cfg


def _flag(key, value):
    if isinstance(value, bool):
        return value
    raise ConfigError(key, f"expected true or false, got {value!r}")


def config_from_mapping(mapping, require_crf_keys=True):
    """Build a TrackerConfig from the flat key/value mapping of a config file."""
    mapping = dict(mapping or {})
    indexed = {name: {} for name in PER_K_KEYS + ("symmetric_bandwidth",)}
    plain = {}
    for key, value in mapping.items():
        key = str(key)
        match = INDEXED_KEY.match(key)
        if match:
            k = int(match.group(2))
            if k < 1:
                raise ConfigError(key, "weighting function indices start at 1")
            indexed[match.group(1)][k] = _number(key, value)
        elif key in REQUIRED_KEYS or key in OPTIONAL_FIELDS:
            plain[key] = value
        else:
            raise ConfigError(key, "unknown configuration key")

    defaults = CrfParams()
    num_k = max([max(v) for v in indexed.values() if v], default=0)
    if require_crf_keys:
        for key in REQUIRED_KEYS:
            if key not in plain:
                raise ConfigError(key, "missing required key")
        if num_k == 0:
            raise ConfigError("a21.1", "missing required key")
        for k in range(1, num_k + 1):
            for name in PER_K_KEYS:
                if k not in indexed[name]:
                    raise ConfigError(f"{name}.{k}", "missing required key")
    else:
        num_k = num_k or defaults.num_weights

    def per_k(name, fallback):
        values = indexed[name]
        return tuple(values.get(k, fallback[(k - 1) % len(fallback)]) for k in range(1, num_k + 1))

    value = {**OPTIONAL_FIELDS, **plain}
    radius = value["neighborhood_radius"]
    if radius in ("unlimited", None):
        radius = None
    else:
        radius = _number("neighborhood_radius", radius)
    try:
        mode = PairwiseMode(value["pairwise_mode"])
    except ValueError:
        raise ConfigError("pairwise_mode", f"unknown mode {value['pairwise_mode']!r}")

    try:
        crf = CrfParams(
            a1=_number("a1", value.get("a1", defaults.a1)),
            b1=_number("b1", value.get("b1", defaults.b1)),
            a21=per_k("a21", defaults.a21),
            b21=per_k("b21", defaults.b21),
            a22=per_k("a22", defaults.a22),
            b22=per_k("b22", defaults.b22),
            symmetric_bandwidth=per_k("symmetric_bandwidth", defaults.symmetric_bandwidth),
            max_iterations=_number("max_iterations", value["max_iterations"], int),
            convergence_tol=_number("convergence_tol", value["convergence_tol"]),
            pairwise_mode=mode,
            neighborhood_radius=radius,
            paper_literal_sign=_flag("paper_literal_sign", value["paper_literal_sign"]),
        )
        grid = GridSettings(
            bins_x=_number("grid_bins_x", value["grid_bins_x"], int),
            bins_y=_number("grid_bins_y", value["grid_bins_y"], int),
            range_scale=_number("grid_range_scale", value["grid_range_scale"]),
        )
    except ValueError as e:
        raise ConfigError("crf", str(e))

    cfg = TrackerConfig(
        crf=crf,
        k_init=_number("k_init", value["k_init"], int),
        m_term=_number("m_term", value["m_term"], int),
        init_iou_gate=_number("init_iou_gate", value["init_iou_gate"]),
        init_visual_gate=_number("init_visual_gate", value["init_visual_gate"]),
        lam=_number("lambda", value["lambda"]),
        emit_virtual=_flag("emit_virtual", value["emit_virtual"]),
        backfill_candidates=_flag("backfill_candidates", value["backfill_candidates"]),
        commit_iou=_number("commit_iou", value["commit_iou"]),
        average_iou=_number("average_iou", value["average_iou"]),
        context_width_factor=_number("context_width_factor", value["context_width_factor"]),
        context_height_factor=_number("context_height_factor", value["context_height_factor"]),
        grid=grid,
        cv_bandwidth=_number("cv_bandwidth", value["cv_bandwidth"]),
        cv_peak_weight=_number("cv_peak_weight", value["cv_peak_weight"]),
        evidence_noise=_number("evidence_noise", value["evidence_noise"]),
        evidence_failure_rate=_number("evidence_failure_rate", value["evidence_failure_rate"]),
        speed_window=_number("speed_window", value["speed_window"], int),
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: TrackerConfig):
    if cfg.k_init < 1:
        raise ConfigError("k_init", "must be >= 1")
    if cfg.m_term < 0:
        raise ConfigError("m_term", "must be >= 0")
    if cfg.lam < 0:
        raise ConfigError("lambda", "must be >= 0")
    if not 0 <= cfg.average_iou <= cfg.commit_iou <= 1:
        raise ConfigError("average_iou", "gates must satisfy 0 <= average_iou <= commit_iou <= 1")
    if cfg.context_width_factor < 1 or cfg.context_height_factor < 1:
        raise ConfigError("context_width_factor", "context factors must be >= 1")
    if not 0 < cfg.cv_peak_weight <= 1:
        raise ConfigError("cv_peak_weight", "must lie in (0, 1]")
    if not 0 <= cfg.evidence_failure_rate <= 1:
        raise ConfigError("evidence_failure_rate", "must lie in [0, 1]")
    if cfg.speed_window < 1:
        raise ConfigError("speed_window", "must be >= 1")


def load_yaml(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}")
    except yaml.YAMLError as e:
        raise ConfigError(str(path), f"invalid YAML: {e}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(str(path), "expected a mapping of key: value lines")
    return data


def load_config(config_file):
    """Load a tracker config file; None yields the defaults."""
    if config_file is None:
        return TrackerConfig()
    return config_from_mapping(load_yaml(config_file))


def config_to_mapping(cfg: TrackerConfig):
    crf = cfg.crf
    config = {"a1": crf.a1, "b1": crf.b1}
    for k in range(crf.num_weights):
        for name in PER_K_KEYS:
            config[f"{name}.{k + 1}"] = getattr(crf, name)[k]
    for k, bandwidth in enumerate(crf.symmetric_bandwidth):
        config[f"symmetric_bandwidth.{k + 1}"] = bandwidth

    current = {
        "max_iterations": crf.max_iterations,
        "convergence_tol": crf.convergence_tol,
        "pairwise_mode": crf.pairwise_mode.value,
        "neighborhood_radius": crf.neighborhood_radius,
        "paper_literal_sign": crf.paper_literal_sign,
        "lambda": cfg.lam,
        "grid_bins_x": cfg.grid.bins_x,
        "grid_bins_y": cfg.grid.bins_y,
        "grid_range_scale": cfg.grid.range_scale,
    }
    names = {f.name for f in fields(TrackerConfig)}
    for key in OPTIONAL_FIELDS:
        if key in current:
            config[key] = current[key]
        elif key in names:
            config[key] = getattr(cfg, key)
    return config


def write_config(cfg: TrackerConfig, path):
    config_yaml = yaml.dump(config_to_mapping(cfg), default_flow_style=False, sort_keys=False)
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(config_yaml)
    except OSError as e:
        raise InputError(f"cannot write {path}: {e}")
    return config_yaml
