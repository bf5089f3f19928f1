"""Provider selection, per-sequence runs and seeded ablations."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import validate_config
from .errors import ConfigError
from .estimators import (ConstantVelocityProvider, FileOracleDisplacementProvider,
                         FileOracleSimilarityProvider, IdentityOverlapProvider, NoisyTruthProvider,
                         TruthProvider)
from .lifecycle import Tracker
from .metrics import combine_reports, displacement_diagnostic, evaluate
from .motio import generate_scenario, scenario_from_mapping

DISPLACEMENT_PROVIDERS = ("constant-velocity", "noisy-truth", "oracle")
SIMILARITY_PROVIDERS = ("overlap", "truth", "oracle")
SWEEP_KEYS = ("lambda", "k_init", "m_term")

EVIDENCE_STREAM = 1


def derive_seed(seed, stream):
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


def make_displacement_provider(kind, cfg, ground_truth=None, seed=0, oracle=None, sequence=None):
    if kind == "constant-velocity":
        return ConstantVelocityProvider(cfg.cv_bandwidth, cfg.cv_peak_weight, cfg.grid)
    if kind == "noisy-truth":
        if ground_truth is None:
            raise ConfigError("displacement_provider", "noisy-truth needs ground truth (--gt)")
        return NoisyTruthProvider(ground_truth, cfg.evidence_noise, cfg.evidence_failure_rate,
                                  derive_seed(seed, EVIDENCE_STREAM), cfg.grid)
    if kind == "oracle":
        if oracle is None:
            raise ConfigError("displacement_provider", "oracle needs an oracle file (--oracle)")
        return FileOracleDisplacementProvider.load(oracle, sequence, cfg.grid)
    raise ConfigError("displacement_provider", f"unknown provider {kind!r}")


def make_similarity_provider(kind, ground_truth=None, oracle=None, sequence=None):
    if kind == "overlap":
        return IdentityOverlapProvider()
    if kind == "truth":
        if ground_truth is None:
            raise ConfigError("similarity_provider", "truth needs ground truth (--gt)")
        return TruthProvider(ground_truth)
    if kind == "oracle":
        if oracle is None:
            raise ConfigError("similarity_provider", "oracle needs an oracle file (--similarity-oracle)")
        return FileOracleSimilarityProvider.load(oracle, sequence)
    raise ConfigError("similarity_provider", f"unknown provider {kind!r}")


def run_sequence(bundle, cfg, displacement="constant-velocity", similarity="overlap", ground_truth=None,
                 seed=0, oracle=None, similarity_oracle=None, verbose=False):
    displacement_provider = make_displacement_provider(displacement, cfg, ground_truth, seed, oracle, bundle.name)
    similarity_provider = make_similarity_provider(similarity, ground_truth, similarity_oracle, bundle.name)
    tracker = Tracker(cfg, displacement_provider, similarity_provider, name=bundle.name, verbose=verbose)
    return tracker.run(bundle)


def rounded_rows(rows):
    """Rows as they read back from a tracks file."""
    return [(frame, track_id, box.rounded()) for frame, track_id, box in rows]


def evaluate_scenario_seed(scenario_mapping, cfg, seed, match_iou=0.5, label=None):
    """Simulate one seed, track with ground-truth backed providers and score it."""
    bundle = generate_scenario(scenario_from_mapping(scenario_mapping, seed=seed))
    run = run_sequence(bundle, cfg, "noisy-truth", "truth", ground_truth=bundle.ground_truth, seed=seed)
    report = evaluate(bundle, rounded_rows(run.rows), match_iou, name=label or bundle.name)
    report.displacement_error = displacement_diagnostic(run.inference_log, bundle.ground_truth)[0]
    return report


def _evaluate_task(task):
    return evaluate_scenario_seed(*task)


@dataclass
class AblationRow:
    label: str
    reports: list = field(default_factory=list)

    @property
    def mean_mota(self):
        return float(np.mean([r.mota for r in self.reports]))

    @property
    def combined(self):
        return combine_reports(self.reports, name=self.label)


def parse_sweep(sweep):
    """'lambda=0.5,1,2' -> ('lambda', [0.5, 1.0, 2.0])."""
    key, sep, values = sweep.partition("=")
    key = key.strip()
    if not sep or key not in SWEEP_KEYS:
        raise ConfigError(key or "sweep", f"sweep must look like <{'|'.join(SWEEP_KEYS)}>=v1,v2,...")
    kind = float if key == "lambda" else int
    try:
        parsed = [kind(v) for v in values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(key, f"invalid sweep values {values!r}")
    if not parsed:
        raise ConfigError(key, "sweep needs at least one value")
    return key, parsed


def ablation_variants(cfg, modes, sweep=None):
    """(label, config) per pairwise mode, or per sweep value with the first mode."""
    if sweep is None:
        return [(mode, cfg.with_overrides(pairwise_mode=mode)) for mode in modes]
    key, values = parse_sweep(sweep)
    base = cfg.with_overrides(pairwise_mode=modes[0])
    variants = []
    for value in values:
        if key == "lambda":
            variant = base.with_overrides(lam=value)
        else:
            variant = base.with_overrides(**{key: value})
        validate_config(variant)
        variants.append((f"{modes[0]} {key}={value:g}", variant))
    return variants


def run_ablation(scenario_mapping, cfg, modes, seeds, match_iou=0.5, sweep=None, jobs=1):
    """Evaluate every variant on the same seeded scenarios; rows come back in variant order."""
    variants = ablation_variants(cfg, modes, sweep)
    tasks = [(scenario_mapping, variant, seed, match_iou, f"{label}#{seed}")
             for label, variant in variants for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_evaluate_task, tasks))
    else:
        reports = [_evaluate_task(task) for task in tasks]
    rows = []
    for k, (label, _) in enumerate(variants):
        rows.append(AblationRow(label, reports[k * len(seeds):(k + 1) * len(seeds)]))
    return rows
