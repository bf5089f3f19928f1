#!/usr/bin/env python3
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import click
import colorama

from logo.banner import display_banner
from tracking.config import load_config, load_yaml, validate_config
from tracking.crf import PairwiseMode
from tracking.errors import EXIT_IO, EXIT_USAGE, InputError, TrackingError
from tracking.metrics import evaluate, metrics_table
from tracking.motio import (generate_scenario, read_detections, read_ground_truth, read_tracks,
                            scenario_from_mapping, write_overlays, write_sequence, write_tracks)
from tracking.report import ablation_table, display_table, post_run_summary
from tracking.runner import DISPLACEMENT_PROVIDERS, SIMILARITY_PROVIDERS, run_ablation, run_sequence
from tracking.utils import log_error, log_message, log_success

colorama.init(autoreset=True)

MODES = [mode.value for mode in PairwiseMode]
DEFAULT_ABLATION_MODES = "asymmetric,symmetric_gaussian,none"


class TrackingGroup(click.Group):
    """Maps errors to exit codes: 1 usage, 2 I/O, 3 config, 4 internal."""

    def main(self, *args, **kwargs):
        kwargs.pop("standalone_mode", None)
        try:
            return super().main(*args, standalone_mode=False, **kwargs)
        except click.UsageError as e:
            e.show()
            sys.exit(EXIT_USAGE)
        except click.FileError as e:
            e.show()
            sys.exit(EXIT_IO)
        except click.ClickException as e:
            e.show()
            sys.exit(EXIT_USAGE)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(EXIT_USAGE)
        except TrackingError as e:
            log_error("error", f"{type(e).__name__}:", details=str(e))
            sys.exit(e.exit_code)


def require_files(*paths):
    for path in paths:
        if path is not None and not os.path.isfile(path):
            raise InputError(f"no such file: {path}")


def build_config(config, pairwise_mode=None, lam=None):
    cfg = load_config(config).with_overrides(pairwise_mode=pairwise_mode, lam=lam)
    validate_config(cfg)
    return cfg


def split_modes(modes):
    parsed = [m.strip() for m in modes.split(",") if m.strip()]
    unknown = [m for m in parsed if m not in MODES]
    if not parsed or unknown:
        raise click.BadParameter(f"expected a comma-separated list of {', '.join(MODES)}", param_hint="--modes")
    return parsed


def _track_one(task):
    detections, gt, cfg, options = task
    bundle = read_detections(detections)
    ground_truth = read_ground_truth(gt).ground_truth if gt else None
    return run_sequence(bundle, cfg, ground_truth=ground_truth, **options)


def _output_path(out, run, multiple):
    if not multiple:
        return out
    return os.path.join(out, f"{run.name}.txt")


@click.group(cls=TrackingGroup)
def cli():
    """Online multi-object tracking with a deep continuous CRF"""
    pass


@cli.command()
@click.option('--config', '-c', default=None, help='Path to tracker config (YAML)')
@click.option('--detections', '-d', multiple=True, required=True,
              help='MOT detection file (repeat for several sequences)')
@click.option('--gt', '-g', multiple=True, help='Ground truth per sequence, for truth-backed providers')
@click.option('--out', '-o', required=True, help='Tracks file, or a directory when several sequences are given')
@click.option('--pairwise-mode', type=click.Choice(MODES), default=None, help='Override pairwise_mode')
@click.option('--lambda', 'lam', type=float, default=None, help='Override the IoU weight in overall similarity')
@click.option('--seed', type=int, default=0, show_default=True, help='Seed for stochastic providers')
@click.option('--jobs', '-j', type=click.IntRange(min=1), default=1, show_default=True,
              help='Sequences processed in parallel')
@click.option('--displacement-provider', type=click.Choice(DISPLACEMENT_PROVIDERS), default='constant-velocity',
              show_default=True)
@click.option('--similarity-provider', type=click.Choice(SIMILARITY_PROVIDERS), default='overlap',
              show_default=True)
@click.option('--oracle', default=None, help='Precomputed displacement grids (CSV)')
@click.option('--similarity-oracle', default=None, help='Precomputed similarity scores (CSV)')
@click.option('--dump-overlays', is_flag=True, help='Also write <out>.overlays.csv with box provenance')
@click.option('--verbose', '-v', is_flag=True, help='Log tracklet promotions and terminations')
@click.option('--quiet', '-q', is_flag=True, help='Skip the banner')
def track(config, detections, gt, out, pairwise_mode, lam, seed, jobs, displacement_provider,
          similarity_provider, oracle, similarity_oracle, dump_overlays, verbose, quiet):
    """Track detections and write MOT-format tracks"""
    if gt and len(gt) != len(detections):
        raise click.BadParameter("give one --gt per --detections", param_hint="--gt")
    require_files(config, oracle, similarity_oracle, *detections, *gt)
    cfg = build_config(config, pairwise_mode, lam)
    if not quiet:
        display_banner("track")

    log_message("track", "Pairwise mode:", details=cfg.crf.pairwise_mode.value)
    options = dict(displacement=displacement_provider, similarity=similarity_provider, seed=seed,
                   oracle=oracle, similarity_oracle=similarity_oracle, verbose=verbose)
    tasks = [(path, gt[k] if gt else None, cfg, options) for k, path in enumerate(detections)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_track_one, tasks))
    else:
        runs = [_track_one(task) for task in tasks]

    multiple = len(runs) > 1
    for run in runs:
        path = _output_path(out, run, multiple)
        write_tracks(run.rows, path)
        if dump_overlays:
            write_overlays(run.overlays, os.path.splitext(path)[0] + ".overlays.csv")
        post_run_summary(run, path)


@cli.command(name='eval')
@click.option('--gt', '-g', multiple=True, required=True, help='Ground truth file (repeat per sequence)')
@click.option('--tracks', '-t', multiple=True, required=True, help='Tracks file, aligned with --gt')
@click.option('--match-iou', type=click.FloatRange(0.0, 1.0, min_open=True), default=0.5, show_default=True)
@click.option('--csv', 'csv_format', is_flag=True, help='Print CSV instead of an aligned table')
@click.option('--out', '-o', default=None, help='Also write the report as CSV')
def evaluate_command(gt, tracks, match_iou, csv_format, out):
    """Score tracks against ground truth with CLEAR MOT metrics"""
    if len(gt) != len(tracks):
        raise click.BadParameter("give one --tracks per --gt", param_hint="--tracks")
    require_files(*gt, *tracks)
    reports = []
    for gt_path, tracks_path in zip(gt, tracks):
        truth = read_ground_truth(gt_path)
        hypotheses = read_tracks(tracks_path).ground_truth
        reports.append(evaluate(truth, hypotheses, match_iou, name=truth.name))

    text = metrics_table(reports, csv_format=csv_format)
    if csv_format:
        click.echo(text, nl=False)
    else:
        display_table(text)
    if out:
        _write_text(out, metrics_table(reports, csv_format=True))
        log_success("eval", "Report written to", details=out)


@cli.command()
@click.option('--scenario', '-s', required=True, help='Scenario file (YAML)')
@click.option('--out', '-o', required=True, help='Sequence directory to create')
@click.option('--seed', type=int, default=None, help='Override the scenario seed')
@click.option('--quiet', '-q', is_flag=True, help='Skip the banner')
def simulate(scenario, out, seed, quiet):
    """Generate a synthetic MOT sequence with ground truth"""
    require_files(scenario)
    synthetic = scenario_from_mapping(load_yaml(scenario), seed=seed)
    if not quiet:
        display_banner("simulate")
    bundle = generate_scenario(synthetic)
    write_sequence(bundle, out)
    detections = sum(len(d) for d in bundle.detections.values())
    log_message(bundle.name, "Objects:", details=len(synthetic.objects))
    log_message(bundle.name, "Frames:", details=bundle.frame_count)
    log_success(bundle.name, f"Wrote {detections} detections to", details=out)


@cli.command()
@click.option('--scenario', '-s', required=True, help='Scenario file (YAML)')
@click.option('--config', '-c', default=None, help='Path to tracker config (YAML)')
@click.option('--modes', '-m', default=DEFAULT_ABLATION_MODES, show_default=True,
              help='Comma-separated pairwise modes')
@click.option('--seeds', type=click.IntRange(min=1), default=20, show_default=True, help='Number of seeds')
@click.option('--seed', type=int, default=0, show_default=True, help='First seed')
@click.option('--sweep', default=None, help='Sweep one parameter, e.g. lambda=0.5,1,2 (k_init, m_term too)')
@click.option('--lambda', 'lam', type=float, default=None, help='Override the IoU weight in overall similarity')
@click.option('--match-iou', type=click.FloatRange(0.0, 1.0, min_open=True), default=0.5, show_default=True)
@click.option('--jobs', '-j', type=click.IntRange(min=1), default=1, show_default=True,
              help='Seeds evaluated in parallel')
@click.option('--csv', 'csv_format', is_flag=True, help='Print CSV instead of an aligned table')
@click.option('--out', '-o', default=None, help='Also write the table as CSV')
@click.option('--quiet', '-q', is_flag=True, help='Skip the banner')
def ablate(scenario, config, modes, seeds, seed, sweep, lam, match_iou, jobs, csv_format, out, quiet):
    """Compare pairwise modes (or a parameter sweep) on seeded synthetic data"""
    mode_list = split_modes(modes)
    require_files(scenario, config)
    cfg = build_config(config, lam=lam)
    mapping = load_yaml(scenario)
    scenario_from_mapping(mapping)
    if not quiet:
        display_banner("ablate")

    seed_list = list(range(seed, seed + seeds))
    log_message("ablate", "Seeds:", details=f"{seed_list[0]}..{seed_list[-1]}")
    rows = run_ablation(mapping, cfg, mode_list, seed_list, match_iou=match_iou, sweep=sweep, jobs=jobs)

    text = ablation_table(rows, csv_format=csv_format)
    if csv_format:
        click.echo(text, nl=False)
    else:
        display_table(text)
    if out:
        _write_text(out, ablation_table(rows, csv_format=True))
        log_success("ablate", "Table written to", details=out)


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    except OSError as e:
        raise InputError(f"cannot write {path}: {e}")


if __name__ == '__main__':
    cli()
