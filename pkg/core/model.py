"""End-to-end pipeline: cross-validated training, refit, one-step prediction and
recursive multi-day forecasting."""

import datetime as dt
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from core.config import PgruConfig
from core.errors import DomainError, ShapeError, WindowError
from core.metrics import (DAY_COLUMNS, DayError, MetricsReport, compute_metrics,
                          per_day_errors, persistence_predictions)
from core.ndcore import as_matrix
from core.pgru_workflow import FoldOutcome, PredictionTrace, run_fold
from core.preprocess import (NormParams, build_windows, invert_column, kfold_split,
                             normalize_dataset, window_starts, zscore_apply)
from integrations.dataio import PRICE_FEATURES, STRUCT_FEATURES, AlignedDataset
from networks.fusion import FusionNetwork
from networks.optim import TrainingHistory
from networks.rnn import StreamNetwork, predict, stream_forward

logger = logging.getLogger(__name__)

CV_COLUMNS = ("fold", "n_train", "n_valid", "mse", "rmse", "mae", "mape",
              "price_mse", "price_mape", "structural_mse", "structural_mape",
              "persistence_mse", "persistence_mape")


@dataclass(eq=False)
class TrainedModel:
    config: PgruConfig
    price_net: StreamNetwork
    struct_net: StreamNetwork
    fusion: FusionNetwork
    price_norm: NormParams
    struct_norm: NormParams
    train_trace: Optional[PredictionTrace] = None
    price_history: Optional[TrainingHistory] = None
    struct_history: Optional[TrainingHistory] = None

    def __post_init__(self):
        expected = (
            ("price stream input", self.price_net.input_dim, len(PRICE_FEATURES)),
            ("structural stream input", self.struct_net.input_dim, len(STRUCT_FEATURES)),
            ("price normalization", self.price_norm.columns, len(PRICE_FEATURES)),
            ("structural normalization", self.struct_norm.columns, len(STRUCT_FEATURES)),
        )
        for what, got, want in expected:
            if got != want:
                raise ShapeError(f"{what} has width {got}, expected {want}")
        for net in (self.price_net, self.struct_net):
            if net.cell_type != self.config.cell:
                raise ShapeError("stream cell type differs from the configuration",
                                 cell=net.cell_type, config=self.config.cell)

    @property
    def w(self) -> int:
        return self.config.window

    @classmethod
    def from_outcome(cls, config: PgruConfig, outcome: FoldOutcome) -> "TrainedModel":
        return cls(config, outcome.price_net, outcome.struct_net, outcome.fusion,
                   outcome.price_norm, outcome.struct_norm, outcome.train_trace,
                   outcome.price_history, outcome.struct_history)


@dataclass(eq=False)
class CvReport:
    rows: List[Dict[str, Any]]
    aggregate: Dict[str, Any]
    histories: Dict[int, Tuple[TrainingHistory, TrainingHistory]] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows + [self.aggregate], columns=list(CV_COLUMNS))
        return frame.astype({"fold": str})

    def summary(self) -> Dict[str, Optional[float]]:
        return {k: self.aggregate[k] for k in ("mse", "rmse", "mae", "mape", "persistence_mape")}


def _aggregate(rows: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    aggregate: Dict[str, Any] = {"fold": "aggregate"}
    for column in CV_COLUMNS[1:]:
        values = [r[column] for r in rows if r[column] is not None]
        aggregate[column] = float(np.mean(values)) if values else None
    return aggregate


def _cv_row(outcome: FoldOutcome) -> Dict[str, Any]:
    row: Dict[str, Any] = {"fold": outcome.fold, "n_train": outcome.n_train, "n_valid": outcome.n_valid}
    row.update(outcome.metrics)
    return row


def train_pgru(dataset: AlignedDataset, cfg: PgruConfig,
               refit: bool = True) -> Tuple[Optional[TrainedModel], CvReport]:
    """k-fold cross-validation for reporting, then a refit on every window for the final model.

    With ``refit=False`` only the cross-validation report is produced and the model is None.
    """
    cfg.check_dataset(len(dataset))
    starts = window_starts(dataset, cfg.window)
    plan = kfold_split(len(starts), cfg.folds, cfg.fold_scheme, seed=cfg.seed)
    logger.info(f"Cross-validating {cfg.cell.upper()} PGRU: w={cfg.window}, k={cfg.folds} "
                f"({cfg.fold_scheme}), {len(starts)} samples, jobs={cfg.jobs}")

    outcomes: List[FoldOutcome] = Parallel(n_jobs=cfg.jobs)(
        delayed(run_fold)(dataset, cfg, starts, plan.train_indices(fold), plan.valid_indices(fold), fold)
        for fold in range(cfg.folds)
    )
    outcomes.sort(key=lambda o: o.fold)
    rows = [_cv_row(o) for o in outcomes]
    report = CvReport(rows, _aggregate(rows),
                      {o.fold: (o.price_history, o.struct_history) for o in outcomes})
    logger.info(f"CV aggregate: MSE {report.aggregate['mse']:.2f}, MAPE {report.aggregate['mape']:.3f}% "
                f"(persistence {report.aggregate['persistence_mape']:.3f}%)")

    if not refit:
        return None, report
    # The refit uses fold index k so its RNG substreams differ from every CV fold.
    final = run_fold(dataset, cfg, starts, np.arange(len(starts)), np.arange(0), cfg.folds)
    return TrainedModel.from_outcome(cfg, final), report


def _check_window(window: np.ndarray, w: int, width: int, name: str) -> np.ndarray:
    x = as_matrix(window, name)
    if x.shape != (w, width):
        raise ShapeError(f"{name} must be {w}x{width}", shape=x.shape)
    return x


def predict_next(model: TrainedModel, last_w_price: np.ndarray, last_w_struct: np.ndarray) -> float:
    """Next-day average price in USD from the last w raw rows of both streams."""
    price = _check_window(last_w_price, model.w, len(PRICE_FEATURES), "price window")
    struct = _check_window(last_w_struct, model.w, len(STRUCT_FEATURES), "structural window")
    p1, _ = stream_forward(model.price_net, zscore_apply(model.price_norm, price))
    p2, _ = stream_forward(model.struct_net, zscore_apply(model.struct_norm, struct))
    fused = model.fusion.forward(np.array([[p1, p2]]))[0]
    return float(invert_column(model.price_norm, fused))


@dataclass(eq=False)
class ForecastResult:
    dates: Tuple[dt.date, ...]
    pred: np.ndarray
    true: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.dates) != self.pred.shape[0]:
            raise ShapeError("dates and predictions differ in length")
        if self.true is not None and self.true.shape != self.pred.shape:
            raise ShapeError("true and predicted prices differ in length")

    def __len__(self) -> int:
        return len(self.dates)

    def day_errors(self) -> List[DayError]:
        if self.true is None:
            return []
        return per_day_errors(self.dates, self.true, self.pred)

    def metrics(self) -> Optional[MetricsReport]:
        return None if self.true is None else compute_metrics(self.true, self.pred)

    def to_frame(self) -> pd.DataFrame:
        if self.true is None:
            return pd.DataFrame({
                "day": [d.isoformat() for d in self.dates],
                "true": [None] * len(self),
                "pred": [f"{p:.1f}" for p in self.pred],
                "abs_err": [None] * len(self),
                "abs_pct_err": [None] * len(self),
            }, columns=list(DAY_COLUMNS))
        return pd.DataFrame([e.formatted() for e in self.day_errors()], columns=list(DAY_COLUMNS))


def forecast_horizon(model: TrainedModel, dataset_tail: AlignedDataset, horizon: int,
                     true_prices: Optional[Sequence[float]] = None) -> ForecastResult:
    """Recursive multi-day forecast from the last w rows of ``dataset_tail``.

    Each predicted price is fed back as a row with avg=open=low=high=prediction while the
    structural features of the last observed row are carried forward.
    """
    if horizon < 1:
        raise DomainError("forecast horizon must be at least 1 day", horizon=horizon)
    w = model.w
    if len(dataset_tail) < w:
        raise WindowError(f"forecast needs at least {w} rows of context", rows=len(dataset_tail), w=w)
    truth = None
    if true_prices is not None:
        truth = np.asarray(true_prices, dtype=np.float64)
        if truth.shape != (horizon,):
            raise ShapeError("true prices must cover the horizon", got=truth.shape, horizon=horizon)

    price = dataset_tail.price[-w:].copy()
    struct = dataset_tail.structural[-w:].copy()
    last_struct = struct[-1].copy()
    last_date = dataset_tail.dates[-1]
    preds = np.empty(horizon)
    for day in range(horizon):
        preds[day] = predict_next(model, price, struct)
        price = np.vstack([price[1:], np.full(len(PRICE_FEATURES), preds[day])])
        struct = np.vstack([struct[1:], last_struct])
    dates = tuple(last_date + dt.timedelta(days=k) for k in range(1, horizon + 1))
    logger.info(f"Forecast {horizon} day(s) after {last_date.isoformat()}")
    return ForecastResult(dates, preds, truth)


@dataclass(eq=False)
class EvaluationResult:
    trace: PredictionTrace
    metrics: MetricsReport
    persistence: MetricsReport

    def trace_frame(self) -> pd.DataFrame:
        return self.trace.to_frame()


def evaluate_model(model: TrainedModel, dataset: AlignedDataset) -> EvaluationResult:
    """One-step predictions for every valid window of ``dataset``, scored in USD."""
    w = model.w
    starts = window_starts(dataset, w)
    samples = build_windows(normalize_dataset(dataset, model.price_norm, model.struct_norm), w, starts)
    preds = np.column_stack([predict(model.price_net, samples.input1),
                             predict(model.struct_net, samples.input2)])
    pred = invert_column(model.price_norm, model.fusion.forward(preds))
    avg = dataset.avg_price
    true = avg[starts + w]
    trace = PredictionTrace(samples.sample_dates, true, pred)
    return EvaluationResult(trace, compute_metrics(true, pred),
                            compute_metrics(*persistence_predictions(avg, starts, w)))
