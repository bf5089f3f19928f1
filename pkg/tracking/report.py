import colorama

from .metrics import format_csv, format_table
from .utils import log_message, log_success, log_warning


def post_run_summary(run, out_path=None):
    """Per-sequence summary printed after `track`."""
    log_message(run.name, "Tracklets created:", details=run.created)
    log_message(run.name, "Tracklets terminated:", details=run.terminated)
    log_message(run.name, "Mean inference iterations:", details=f"{run.mean_iterations:.2f}")
    if not run.rows:
        log_warning(run.name, "No tracks emitted.", details=f"{run.frames} frames processed")
    elif out_path:
        log_success(run.name, f"Wrote {len(run.rows)} boxes to", details=out_path)


ABLATION_COLUMNS = ("Variant", "MOTA", "MOTP", "MT", "ML", "FP", "FN", "IDSW", "Frag", "DispErr")


def ablation_row(row):
    combined = row.combined
    error = combined.displacement_error
    return [
        row.label,
        f"{row.mean_mota:.1f}",
        f"{combined.motp:.1f}",
        f"{combined.mt:.3f}",
        f"{combined.ml:.3f}",
        str(combined.fp),
        str(combined.fn),
        str(combined.idsw),
        str(combined.frag),
        "-" if error is None else f"{error:.3f}",
    ]


def ablation_table(rows, csv_format=False):
    """MOTA is the mean over seeds; counters are summed across seeds."""
    lines = [ablation_row(row) for row in rows]
    if csv_format:
        return format_csv(ABLATION_COLUMNS, lines)
    return format_table(ABLATION_COLUMNS, lines)


def display_table(text):
    header, *rest = text.splitlines()
    log_message("table", colorama.Fore.YELLOW + header)
    for line in rest:
        log_message("table", line)
