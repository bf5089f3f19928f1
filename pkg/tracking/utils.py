"""Console output and value conversion shared by the CLI, the tracker and the file readers."""
import click
import colorama
import pandas as pd

from .errors import ConfigError, InputError


def log_message(scope, message, color=colorama.Fore.CYAN, details=None, details_color=colorama.Fore.MAGENTA):
    """Echo `[scope] message details`; scope names the sequence or command speaking."""
    line = f"{color}[{colorama.Fore.YELLOW}{scope}{color}] {message}"
    if details is not None:
        line += f" {details_color}{details}"
    click.echo(line)


def log_error(scope, message, details=None):
    log_message(scope, message, color=colorama.Fore.RED, details=details, details_color=colorama.Fore.RED)


def log_success(scope, message, details=None):
    log_message(scope, message, color=colorama.Fore.GREEN, details=details)


def log_warning(scope, message, details=None):
    log_message(scope, message, color=colorama.Fore.YELLOW, details=details, details_color=colorama.Fore.YELLOW)


def config_number(key, value, kind=float):
    """Number for a config or scenario key; kind=int rejects fractional values such as 2.5."""
    if isinstance(value, bool) or value is None:
        raise ConfigError(key, f"expected a number, got {value!r}")
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if kind is int:
        if not number.is_integer():
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return int(number)
    return number


def read_csv_cells(path, columns):
    """Yield (line_no, cells) per non-blank line of a headerless CSV.

    Cells are stripped strings with trailing empty fields dropped; line numbers
    are 1-based file lines.
    """
    try:
        frame = pd.read_csv(path, header=None, names=list(range(columns)), index_col=False, dtype=str,
                            keep_default_na=False, skip_blank_lines=False, skipinitialspace=True,
                            encoding="utf-8")
    except pd.errors.EmptyDataError:
        return
    except pd.errors.ParserError as e:
        raise InputError(f"{path}: {e}")
    except UnicodeDecodeError as e:
        raise InputError(f"{path}: not UTF-8 ({e})")
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}")
    for index, *row in frame.fillna("").itertuples(name=None):
        cells = [str(cell).strip() for cell in row]
        while cells and not cells[-1]:
            cells.pop()
        if cells:
            yield index + 1, cells
