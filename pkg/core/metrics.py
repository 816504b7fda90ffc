"""Regression metrics (MSE, RMSE, MAE, MAPE) and per-day error rows, in raw USD."""

import datetime as dt
import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from sklearn.metrics import mean_absolute_error, mean_absolute_percentage_error, mean_squared_error

from core.errors import DomainError, ShapeError

logger = logging.getLogger(__name__)

DAY_COLUMNS = ("day", "true", "pred", "abs_err", "abs_pct_err")


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    rmse: float
    mae: float
    mape: Optional[float]
    n: int

    def to_dict(self) -> Dict[str, Optional[float]]:
        return asdict(self)


def _vectors(true: Sequence[float], pred: Sequence[float]):
    y = np.asarray(true, dtype=np.float64).ravel()
    y_hat = np.asarray(pred, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise ShapeError("true and predicted vectors differ in length", true=y.size, pred=y_hat.size)
    if y.size == 0:
        raise DomainError("metrics need at least one value")
    return y, y_hat


def _require_nonzero(y: np.ndarray) -> None:
    zero = np.flatnonzero(y == 0)
    if zero.size:
        raise DomainError("MAPE undefined for a zero true value", index=int(zero[0]))


def compute_metrics(true: Sequence[float], pred: Sequence[float], with_mape: bool = True) -> MetricsReport:
    y, y_hat = _vectors(true, pred)
    mse = float(mean_squared_error(y, y_hat))
    mape = None
    if with_mape:
        _require_nonzero(y)
        # sklearn divides by |y| and reports a fraction.
        mape = 100.0 * float(mean_absolute_percentage_error(y, y_hat))
    return MetricsReport(mse=mse, rmse=float(np.sqrt(mse)), mae=float(mean_absolute_error(y, y_hat)),
                         mape=mape, n=int(y.size))


@dataclass(frozen=True)
class DayError:
    day: Union[int, dt.date]
    true: float
    pred: float
    abs_err: float
    abs_pct_err: float

    def formatted(self) -> Dict[str, str]:
        """Presentation rounding: one decimal for USD, two for percent."""
        day = self.day.isoformat() if isinstance(self.day, dt.date) else str(self.day)
        return {
            "day": day,
            "true": f"{self.true:.1f}",
            "pred": f"{self.pred:.1f}",
            "abs_err": f"{self.abs_err:.1f}",
            "abs_pct_err": f"{self.abs_pct_err:.2f}",
        }


def per_day_errors(dates: Sequence[Union[int, dt.date]], true: Sequence[float],
                   pred: Sequence[float]) -> List[DayError]:
    y, y_hat = _vectors(true, pred)
    if len(dates) != y.size:
        raise ShapeError("dates and values differ in length", dates=len(dates), values=y.size)
    _require_nonzero(y)
    abs_err = np.abs(y - y_hat)
    pct = 100.0 * abs_err / np.abs(y)
    return [DayError(d, float(t), float(p), float(a), float(q))
            for d, t, p, a, q in zip(dates, y, y_hat, abs_err, pct)]


def persistence_predictions(avg_price: Sequence[float], starts: Sequence[int], w: int):
    """Naive forecast: the price of the last input day is tomorrow's price.

    Returns ``(true, pred)`` in the units of ``avg_price`` for the samples with the given
    window starts (target row ``start + w``).
    """
    avg = np.asarray(avg_price, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.int64)
    if starts.size and (starts.min() < 0 or starts.max() + w >= avg.size):
        raise ShapeError("window start outside the price series", n=avg.size, w=w)
    return avg[starts + w], avg[starts + w - 1]
