import numpy as np
import pandas as pd
import pytest

from conftest import toy_dataset
from core.errors import DegenerateColumnError, DomainError, WindowError
from core.preprocess import (build_windows, dump_sample_set, fit_scaler, invert_column,
                             kfold_split, minmax_fit, normalize_dataset, training_rows,
                             window_starts, zscore_apply, zscore_fit, zscore_invert)


@pytest.fixture
def columns():
    rng = np.random.default_rng(4)
    return rng.normal(50.0, 7.0, size=(40, 3))


def test_zscore_fit_standardizes(columns):
    params = zscore_fit(columns)
    z = zscore_apply(params, columns)
    assert np.all(np.abs(z.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(z.std(axis=0, ddof=1) - 1.0) < 1e-10)


def test_zscore_invert_round_trip(columns):
    params = zscore_fit(columns)
    np.testing.assert_allclose(zscore_invert(params, zscore_apply(params, columns)), columns,
                               rtol=0, atol=1e-12 * np.abs(columns).max())
    z = np.array([-1.5, 0.0, 2.0])
    assert np.allclose(zscore_apply(params, np.column_stack([invert_column(params, z)] * 3))[:, 0], z)


def test_constant_column_is_degenerate(columns):
    columns[:, 2] = 4.2
    with pytest.raises(DegenerateColumnError) as err:
        zscore_fit(columns)
    assert err.value.context["column"] == 2
    with pytest.raises(DegenerateColumnError):
        minmax_fit(columns)


@pytest.mark.parametrize("fit", [zscore_fit, minmax_fit])
def test_constant_price_column_is_degenerate_despite_rounding(fit):
    with pytest.raises(DegenerateColumnError) as err:
        fit(np.full((11, 1), 33515.7))
    assert err.value.context["column"] == 0


def test_one_dimensional_input_is_a_single_column():
    params = zscore_fit([2.0, 4.0, 6.0])
    np.testing.assert_allclose(params.mu, [4.0])
    np.testing.assert_allclose(params.sigma, [2.0])
    np.testing.assert_allclose(zscore_apply(params, [2.0, 4.0, 6.0]), [-1.0, 0.0, 1.0])
    np.testing.assert_allclose(zscore_invert(params, [-1.0, 0.0, 1.0]), [2.0, 4.0, 6.0])


def test_minmax_maps_to_unit_interval(columns):
    z = zscore_apply(fit_scaler(columns, "minmax"), columns)
    np.testing.assert_allclose(z.min(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(z.max(axis=0), 1.0, atol=1e-12)
    with pytest.raises(DomainError):
        fit_scaler(columns, "robust")


def test_windows_never_read_their_target():
    dataset = toy_dataset(30)
    w = 5
    samples = build_windows(dataset, w)
    assert len(samples) == 30 - w
    assert samples.input1.shape == (25, w, 4) and samples.input2.shape == (25, w, 5)
    for i in range(len(samples)):
        rows = samples.input_rows(i)
        target_row = samples.starts[i] + w
        assert rows.max() < target_row
        np.testing.assert_array_equal(samples.input1[i], dataset.price[rows])
        np.testing.assert_array_equal(samples.input2[i], dataset.structural[rows])
        assert samples.output[i] == dataset.price[target_row, 0]
        assert samples.sample_dates[i] == dataset.dates[target_row]


@pytest.mark.parametrize("w", [0, 30, 31])
def test_window_length_bounds(w):
    with pytest.raises(WindowError):
        window_starts(toy_dataset(30), w)


def test_windows_do_not_span_gaps():
    # A calendar gap sits between rows 9 and 10.
    dataset = toy_dataset(20, skip_after=(9,))
    starts = window_starts(dataset, 3)
    for s in starts:
        assert not (s < 10 <= s + 3)
    assert len(starts) == (10 - 3) + (10 - 3)


def test_training_rows_cover_inputs_and_targets():
    np.testing.assert_array_equal(training_rows([0, 5], 2), [0, 1, 2, 5, 6, 7])
    assert training_rows([], 3).size == 0


def test_normalize_dataset_keeps_dates():
    dataset = toy_dataset(20)
    price, struct = zscore_fit(dataset.price), zscore_fit(dataset.structural)
    normalized = normalize_dataset(dataset, price, struct)
    assert normalized.dates == dataset.dates
    assert abs(normalized.price[:, 0].mean()) < 1e-10


def test_fold_sizes_and_remainder():
    plan = kfold_split(10, 3)
    assert plan.fold_sizes() == [4, 3, 3]
    np.testing.assert_array_equal(plan.valid_indices(0), [0, 1, 2, 3])
    np.testing.assert_array_equal(plan.train_indices(0), np.arange(4, 10))


@pytest.mark.parametrize("n,k", [(25, 10), (101, 7), (12, 12)])
def test_folds_partition_the_samples(n, k):
    for scheme in ("block", "shuffled"):
        plan = kfold_split(n, k, scheme, seed=3)
        sizes = plan.fold_sizes()
        assert sum(sizes) == n and max(sizes) - min(sizes) <= 1
        for fold in range(k):
            train, valid = plan.train_indices(fold), plan.valid_indices(fold)
            assert set(train).isdisjoint(valid)
            assert len(train) + len(valid) == n


def test_shuffled_folds_are_seeded():
    a = kfold_split(50, 5, "shuffled", seed=11).assignments
    b = kfold_split(50, 5, "shuffled", seed=11).assignments
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, kfold_split(50, 5, "block").assignments)


@pytest.mark.parametrize("k", [1, 11])
def test_invalid_fold_count(k):
    with pytest.raises(DomainError):
        kfold_split(10, k)


def test_dump_sample_set(tmp_path):
    samples = build_windows(toy_dataset(12), 3)
    paths = dump_sample_set(samples, tmp_path / "samples")
    assert [p.name for p in paths] == ["input1.csv", "input2.csv", "output.csv"]
    input1 = pd.read_csv(paths[0])
    assert list(input1.columns) == ["sample", "step", "avg", "open", "low", "high"]
    assert len(input1) == len(samples) * 3
    output = pd.read_csv(paths[2])
    np.testing.assert_allclose(output["target"], samples.output)
