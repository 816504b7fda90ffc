"""CSV/JSON emission for run reports: CV table, training histories, per-day errors, traces."""

import logging
from pathlib import Path
from typing import Dict, List, Union

import pandas as pd

from core.model import CvReport, EvaluationResult, ForecastResult
from networks.optim import TrainingHistory

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CSV_FLOAT_FORMAT = "%.6f"


def write_frame(frame: pd.DataFrame, path: PathLike, json_copy: bool = False) -> List[Path]:
    """Write ``frame`` as CSV (and optionally a records-oriented JSON twin)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    written = [path]
    if json_copy:
        json_path = path.with_suffix(".json")
        json_path.write_text(frame.to_json(orient="records", indent=1, double_precision=10) + "\n",
                             encoding="utf-8")
        written.append(json_path)
    logger.debug(f"Wrote {', '.join(str(p) for p in written)}")
    return written


def write_histories(out_dir: PathLike, price: TrainingHistory, structural: TrainingHistory) -> List[Path]:
    out_dir = Path(out_dir)
    return (write_frame(price.to_frame(), out_dir / "history_price.csv")
            + write_frame(structural.to_frame(), out_dir / "history_structural.csv"))


def write_cv_report(out_dir: PathLike, report: CvReport) -> List[Path]:
    """``cv_report.csv``/``.json`` plus per-fold histories under ``folds/<k>/``."""
    out_dir = Path(out_dir)
    written = write_frame(report.to_frame(), out_dir / "cv_report.csv", json_copy=True)
    for fold, (price, structural) in sorted(report.histories.items()):
        written += write_histories(out_dir / "folds" / str(fold), price, structural)
    return written


def write_forecast(out_dir: PathLike, result: ForecastResult, name: str = "forecast") -> List[Path]:
    return write_frame(result.to_frame(), Path(out_dir) / f"{name}.csv", json_copy=True)


def write_evaluation(out_dir: PathLike, result: EvaluationResult) -> List[Path]:
    """Per-day table, the plot-ready ``trace.csv`` and a one-row metrics summary."""
    out_dir = Path(out_dir)
    trace = result.trace
    days = ForecastResult(tuple(trace.dates), trace.pred, trace.true).to_frame()
    written = write_frame(days, out_dir / "evaluation.csv", json_copy=True)
    written += write_frame(result.trace_frame(), out_dir / "trace.csv")
    summary: Dict[str, object] = {f"fused_{k}": v for k, v in result.metrics.to_dict().items()}
    summary.update({f"persistence_{k}": v for k, v in result.persistence.to_dict().items()})
    written += write_frame(pd.DataFrame([summary]), out_dir / "metrics.csv")
    return written
