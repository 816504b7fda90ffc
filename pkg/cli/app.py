"""Command-line surface: ``python run.py [--log-level L] <command> ...``.

Exit status: 0 on success, 3 validation, 4 shape, 5 numeric, 6 domain, 1 anything else,
2 for usage errors (click).
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import click

from cli.bench import DEFAULT_WINDOWS, MIN_REPEATS, run_bench, run_sweep
from core.errors import DomainError, PgruError, exit_code_for
from core.model import evaluate_model, forecast_horizon, train_pgru
from core.preprocess import build_windows, dump_sample_set, normalize_dataset
from integrations.checkpoint import load_checkpoint, save_checkpoint, write_manifest
from integrations.dataio import load_dataset
from integrations.report_writer import (write_cv_report, write_evaluation, write_forecast,
                                        write_frame, write_histories)
from integrations.synthetic_source import MIN_DAYS, PROFILES, write_synthetic
from utils import settings
from utils.traceback_capture import set_traceback_dir, write_traceback

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

DATA_FILE = click.Path(exists=True, dir_okay=False, path_type=Path)


class PgruGroup(click.Group):
    """Maps forecaster errors to exit codes and records the traceback."""

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except (click.ClickException, click.exceptions.Exit, click.Abort):
            raise
        except Exception as e:
            path = write_traceback(e)
            if isinstance(e, PgruError):
                click.echo(f"error: {type(e).__name__}: {e}", err=True)
            else:
                logger.exception("Unexpected failure")
                click.echo(f"error: unexpected {type(e).__name__}: {e}", err=True)
            if path is not None:
                click.echo(f"traceback: {path}", err=True)
            ctx.exit(exit_code_for(e))


def _csv_list(kind):
    def parse(ctx, param, value: Optional[str]):
        if value is None:
            return None
        try:
            return tuple(kind(item.strip()) for item in value.split(",") if item.strip())
        except ValueError:
            raise click.BadParameter(f"expected a comma-separated list, got '{value}'") from None
    return parse


def _prepare_out_dir(out_dir: Optional[Path]) -> Path:
    directory = Path(out_dir) if out_dir else settings.output_dir()
    directory.mkdir(parents=True, exist_ok=True)
    set_traceback_dir(directory)
    return directory


_RUN_OPTIONS = (
    click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), default=None,
                 help="Output directory (default: $PGRU_OUTPUT_DIR or ./runs)."),
    click.option("--config", "config_path", type=DATA_FILE, default=None,
                 help="JSON file with PgruConfig fields; flags override it."),
    click.option("--jobs", type=click.IntRange(min=1), default=None,
                 help="Parallel fold work items (default: $PGRU_JOBS or 1)."),
)

_MODEL_OPTIONS = (
    click.option("--window", "-w", type=int, default=None, help="Window length (days)."),
    click.option("--cell", type=click.Choice(["gru", "lstm"]), default=None),
    click.option("--hidden-dim", type=int, default=None),
    click.option("--epochs", type=int, default=None),
    click.option("--folds", "-k", type=int, default=None),
    click.option("--fold-scheme", type=click.Choice(["block", "shuffled"]), default=None),
    click.option("--seed", type=int, default=None),
    click.option("--normalization", type=click.Choice(["leakfree", "global"]), default=None,
                 help="leakfree fits scaling on training rows only; global fits on all rows."),
    click.option("--scaling", type=click.Choice(["zscore", "minmax"]), default=None),
    click.option("--lr", type=float, default=None, help="Adam learning rate."),
)


def _apply(options, fn):
    for option in reversed(options):
        fn = option(fn)
    return fn


def run_options(fn):
    """--out-dir, --config and --jobs, shared by every training command."""
    return _apply(_RUN_OPTIONS, fn)


def model_options(fn):
    return _apply(_MODEL_OPTIONS, fn)


def _config_from(config_path: Optional[Path], **flags: Any):
    lr = flags.pop("lr", None)
    overrides: Dict[str, Any] = dict(flags)
    if lr is not None:
        overrides["adam"] = {"lr": lr}
    return settings.build_config(config_path, overrides)


@click.group(cls=PgruGroup)
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default=None, help="Logging level (default: $PGRU_LOG_LEVEL or INFO).")
def cli(log_level: Optional[str]) -> None:
    """Parallel recurrent price forecaster."""
    settings.load_environment()
    level = (log_level or settings.log_level()).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)


@cli.command()
@click.argument("price", type=DATA_FILE)
@click.argument("structural", type=DATA_FILE)
@click.option("--report", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Also write the load report to this file.")
def validate(price: Path, structural: Path, report: Optional[Path]) -> None:
    """Load, validate and align PRICE and STRUCTURAL CSV files."""
    _, load_report = load_dataset(price, structural)
    text = load_report.format_text()
    click.echo(text)
    if report:
        report.parent.mkdir(parents=True, exist_ok=True)
        report.write_text(text + "\n", encoding="utf-8")


@cli.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--days", "n_days", type=int, default=365, show_default=True,
              help=f"Number of days (at least {MIN_DAYS}).")
@click.option("--profile", type=click.Choice(sorted(PROFILES)), default="seasonal", show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), default=None)
def synth(seed: int, n_days: int, profile: str, out_dir: Optional[Path]) -> None:
    """Write a synthetic price.csv / structural.csv pair."""
    directory = _prepare_out_dir(out_dir)
    price_path, struct_path = write_synthetic(directory, seed, n_days, profile)
    click.echo(f"wrote {price_path}")
    click.echo(f"wrote {struct_path}")


@cli.command()
@click.argument("price", type=DATA_FILE)
@click.argument("structural", type=DATA_FILE)
@model_options
@run_options
@click.option("--dump-samples", is_flag=True, help="Write the refit's windowed samples as CSV shards.")
def train(price: Path, structural: Path, out_dir: Optional[Path], config_path: Optional[Path],
          dump_samples: bool, **flags: Any) -> None:
    """Cross-validate, refit and write checkpoint, manifest and CV report."""
    directory = _prepare_out_dir(out_dir)
    cfg = _config_from(config_path, **flags)
    dataset, _ = load_dataset(price, structural)
    model, report = train_pgru(dataset, cfg)

    save_checkpoint(model, directory / "checkpoint.json")
    write_cv_report(directory, report)
    write_histories(directory, model.price_history, model.struct_history)
    write_frame(model.train_trace.to_frame(), directory / "train_trace.csv")
    write_manifest(directory / "manifest.json", cfg, [price, structural], metrics=report.summary())
    if dump_samples:
        normalized = normalize_dataset(dataset, model.price_norm, model.struct_norm)
        dump_sample_set(build_windows(normalized, cfg.window), directory / "samples")

    agg = report.aggregate
    click.echo(f"{cfg.cell.upper()} w={cfg.window} k={cfg.folds}: MSE {agg['mse']:.1f}  "
               f"RMSE {agg['rmse']:.1f}  MAE {agg['mae']:.1f}  MAPE {agg['mape']:.2f}%  "
               f"(persistence MAPE {agg['persistence_mape']:.2f}%)")
    click.echo(f"artifacts in {directory}")


@cli.command()
@click.argument("checkpoint", type=DATA_FILE)
@click.argument("price", type=DATA_FILE)
@click.argument("structural", type=DATA_FILE)
@click.option("--horizon", "-H", type=int, default=10, show_default=True, help="Days to forecast.")
@click.option("--holdout", is_flag=True,
              help="Score against the last HORIZON rows, forecasting from the rows before them.")
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), default=None)
def forecast(checkpoint: Path, price: Path, structural: Path, horizon: int, holdout: bool,
             out_dir: Optional[Path]) -> None:
    """Recursive multi-day forecast from the end of the data."""
    directory = _prepare_out_dir(out_dir)
    if horizon < 1:
        raise DomainError("forecast horizon must be at least 1 day", horizon=horizon)
    model = load_checkpoint(checkpoint)
    dataset, _ = load_dataset(price, structural)
    if holdout:
        cut = len(dataset) - horizon
        result = forecast_horizon(model, dataset.slice(0, cut), horizon,
                                  true_prices=dataset.avg_price[cut:])
    else:
        result = forecast_horizon(model, dataset, horizon)
    write_forecast(directory, result)
    click.echo(result.to_frame().to_string(index=False))
    metrics = result.metrics()
    if metrics is not None:
        click.echo(f"MAE {metrics.mae:.1f}  MAPE {metrics.mape:.2f}%")


@cli.command()
@click.argument("checkpoint", type=DATA_FILE)
@click.argument("price", type=DATA_FILE)
@click.argument("structural", type=DATA_FILE)
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), default=None)
def evaluate(checkpoint: Path, price: Path, structural: Path, out_dir: Optional[Path]) -> None:
    """One-step predictions over the data with per-day errors and a plot-ready trace."""
    directory = _prepare_out_dir(out_dir)
    model = load_checkpoint(checkpoint)
    dataset, _ = load_dataset(price, structural)
    result = evaluate_model(model, dataset)
    write_evaluation(directory, result)
    m, p = result.metrics, result.persistence
    click.echo(f"{m.n} one-step predictions: MSE {m.mse:.1f}  RMSE {m.rmse:.1f}  MAE {m.mae:.1f}  "
               f"MAPE {m.mape:.2f}%  (persistence MAPE {p.mape:.2f}%)")


def _experiment_args(cells: Optional[Tuple[str, ...]], windows: Optional[Tuple[int, ...]]):
    cells = cells or ("gru", "lstm")
    unknown = [c for c in cells if c not in ("gru", "lstm")]
    if unknown:
        raise click.BadParameter(f"unknown cell type(s): {', '.join(unknown)}", param_hint="--cells")
    return cells, windows or DEFAULT_WINDOWS


@cli.command()
@click.argument("price", type=DATA_FILE)
@click.argument("structural", type=DATA_FILE)
@click.option("--cells", callback=_csv_list(str), default=None, help="Comma-separated, default gru,lstm.")
@click.option("--windows", callback=_csv_list(int), default=None, help="Comma-separated, default 5,10,15,20,25.")
@click.option("--repeats", "-r", type=int, default=MIN_REPEATS, show_default=True)
@model_options
@run_options
def bench(price: Path, structural: Path, cells: Optional[Sequence[str]], windows: Optional[Sequence[int]],
          repeats: int, out_dir: Optional[Path], config_path: Optional[Path], **flags: Any) -> None:
    """Mean wall-clock of full training runs per cell type and window length."""
    directory = _prepare_out_dir(out_dir)
    if repeats < MIN_REPEATS:
        raise DomainError(f"benchmark needs at least {MIN_REPEATS} repeats", repeats=repeats)
    cells, windows = _experiment_args(cells, windows)
    cfg = _config_from(config_path, **flags)
    dataset, _ = load_dataset(price, structural)
    raw, summary = run_bench(dataset, cfg, cells, windows, repeats)
    write_frame(raw, directory / "bench.csv")
    write_frame(summary, directory / "bench_summary.csv")
    click.echo(summary.to_string(index=False))


@cli.command()
@click.argument("price", type=DATA_FILE)
@click.argument("structural", type=DATA_FILE)
@click.option("--cells", callback=_csv_list(str), default=None, help="Comma-separated, default gru,lstm.")
@click.option("--windows", callback=_csv_list(int), default=None, help="Comma-separated, default 5,10,15,20,25.")
@model_options
@run_options
def sweep(price: Path, structural: Path, cells: Optional[Sequence[str]], windows: Optional[Sequence[int]],
          out_dir: Optional[Path], config_path: Optional[Path], **flags: Any) -> None:
    """Cross-validated accuracy for every cell type and window length."""
    directory = _prepare_out_dir(out_dir)
    cells, windows = _experiment_args(cells, windows)
    cfg = _config_from(config_path, **flags)
    dataset, _ = load_dataset(price, structural)
    table = run_sweep(dataset, cfg, cells, windows)
    write_frame(table, directory / "sweep.csv")
    click.echo(table.to_string(index=False))


def main(argv: Optional[Sequence[str]] = None) -> None:
    cli.main(args=list(argv) if argv is not None else None, prog_name="pgru")
