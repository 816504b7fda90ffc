import datetime as dt

import numpy as np
import pytest

from core.errors import DomainError, ShapeError
from core.metrics import compute_metrics, per_day_errors, persistence_predictions
from reference_tables import (ACCURACY, ERRATA, FORECAST_10_DAY, TIMING, TRUE_10_DAY, WINDOWS,
                              seconds)


def test_known_values():
    report = compute_metrics([100.0, 200.0], [110.0, 190.0])
    assert report.mse == pytest.approx(100.0)
    assert report.rmse == pytest.approx(10.0)
    assert report.mae == pytest.approx(10.0)
    assert report.mape == pytest.approx(7.5)
    assert report.n == 2


def test_perfect_prediction():
    report = compute_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert report.mse == 0.0 and report.mae == 0.0 and report.mape == 0.0


def test_rmse_dominates_mae():
    rng = np.random.default_rng(0)
    y = rng.uniform(100, 200, 50)
    report = compute_metrics(y, y + rng.normal(0, 10, 50))
    assert report.rmse >= report.mae


def test_scaling_both_vectors():
    y = np.array([100.0, 120.0, 90.0])
    y_hat = np.array([104.0, 115.0, 93.0])
    base, scaled = compute_metrics(y, y_hat), compute_metrics(3 * y, 3 * y_hat)
    assert scaled.mape == pytest.approx(base.mape)
    assert scaled.mse == pytest.approx(9 * base.mse)
    assert scaled.mae == pytest.approx(3 * base.mae)


def test_zero_true_value_rejects_mape():
    with pytest.raises(DomainError) as err:
        compute_metrics([1.0, 0.0, 2.0], [1.0, 1.0, 1.0])
    assert err.value.context["index"] == 1
    assert compute_metrics([1.0, 0.0], [1.0, 1.0], with_mape=False).mape is None


def test_length_mismatch_and_empty():
    with pytest.raises(ShapeError):
        compute_metrics([1.0, 2.0], [1.0])
    with pytest.raises(DomainError):
        compute_metrics([], [])


@pytest.mark.parametrize("cell", ["gru", "lstm"])
def test_day_errors_reproduce_reference_rows(cell):
    dates = [dt.date(2021, 1, 1) + dt.timedelta(days=i) for i in range(10)]
    preds = [row[0] for row in FORECAST_10_DAY[cell]]
    errors = per_day_errors(dates, TRUE_10_DAY, preds)
    for day, (error, (_, abs_err, pct)) in enumerate(zip(errors, FORECAST_10_DAY[cell]), start=1):
        assert abs(error.abs_pct_err - pct) <= 0.05
        if (cell, day) not in ERRATA:
            assert abs(error.abs_err - abs_err) <= 0.05
    first = errors[0].formatted()
    assert first["day"] == "2021-01-01"
    assert first["true"] == "33515.7"


def test_reference_errata_rows_are_off_by_at_most_one_dollar():
    preds = [row[0] for row in FORECAST_10_DAY["lstm"]]
    errors = per_day_errors(list(range(1, 11)), TRUE_10_DAY, preds)
    gaps = {day: abs(errors[day - 1].abs_err - FORECAST_10_DAY["lstm"][day - 1][1])
            for _, day in ERRATA}
    assert gaps[4] == pytest.approx(0.1, abs=1e-6)
    assert gaps[6] == pytest.approx(1.0, abs=1e-6)


def test_day_error_formatting():
    (error,) = per_day_errors([1], [33515.7], [33174.3])
    assert error.formatted() == {"day": "1", "true": "33515.7", "pred": "33174.3",
                                 "abs_err": "341.4", "abs_pct_err": "1.02"}


def test_ten_day_mape_matches_mean_percent_error():
    mapes = {}
    for cell, rows in FORECAST_10_DAY.items():
        report = compute_metrics(TRUE_10_DAY, [r[0] for r in rows])
        mapes[cell] = report.mape
        assert report.mape == pytest.approx(np.mean([r[2] for r in rows]), abs=0.02)
    assert mapes["gru"] < mapes["lstm"]


def test_reference_accuracy_table_is_consistent():
    for cell, rows in ACCURACY.items():
        assert [r[0] for r in rows] == list(WINDOWS)
        for _, mse, rmse, mae, _ in rows:
            assert abs(np.sqrt(mse) - rmse) < 0.1
            assert rmse >= mae
    for gru, lstm in zip(ACCURACY["gru"], ACCURACY["lstm"]):
        assert gru[1] < lstm[1] and gru[4] <= lstm[4]


def test_reference_timings_favour_gru():
    for gru, lstm in zip(TIMING["gru"], TIMING["lstm"]):
        assert seconds(gru) < seconds(lstm)
    assert seconds("10:58") == 658


def test_persistence_predictions():
    avg = np.array([10.0, 11.0, 12.0, 13.0, 14.0])
    true, pred = persistence_predictions(avg, [0, 1, 2], 2)
    np.testing.assert_array_equal(true, [12.0, 13.0, 14.0])
    np.testing.assert_array_equal(pred, [11.0, 12.0, 13.0])
    with pytest.raises(ShapeError):
        persistence_predictions(avg, [3], 2)
