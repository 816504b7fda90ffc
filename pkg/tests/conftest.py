"""Shared fixtures. Puts the project root on sys.path the way run.py does."""

import datetime as dt
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.config import PgruConfig  # noqa: E402
from integrations.dataio import AlignedDataset, write_csv  # noqa: E402
from integrations.synthetic_source import generate  # noqa: E402

START = dt.date(2020, 1, 1)


def toy_dataset(n: int, start: dt.date = START, skip_after=()) -> AlignedDataset:
    """Small deterministic dataset; a calendar day is skipped after each index in ``skip_after``."""
    dates, day = [], start
    for i in range(n):
        dates.append(day)
        day += dt.timedelta(days=2 if i in skip_after else 1)
    t = np.arange(n, dtype=np.float64)
    avg = 100.0 + t + 5.0 * np.sin(t)
    price = np.column_stack([avg, avg * 1.001, avg * 0.99, avg * 1.01])
    structural = np.column_stack([
        1.0 + 0.01 * t,
        1e6 + 1e3 * np.cos(t) + 10 * t,
        2e11 + 1e8 * t,
        np.round(1e5 + 100 * t + 50 * np.sin(2 * t)),
        1e7 + 1e4 * avg,
    ])
    return AlignedDataset(tuple(dates), price, structural)


def tiny_config(**overrides) -> PgruConfig:
    """Small networks and few epochs so pipeline tests stay fast."""
    base = dict(window=5, hidden_dim=4, head_units=4, epochs=3, folds=2, fusion_hidden=2, seed=0)
    base.update(overrides)
    return PgruConfig(**base)


@pytest.fixture
def synthetic_60():
    return generate(seed=0, n_days=60)


@pytest.fixture
def data_files(tmp_path):
    """A synthetic price/structural CSV pair of 60 days."""
    price_path, struct_path = tmp_path / "price.csv", tmp_path / "structural.csv"
    write_csv(generate(seed=0, n_days=60), price_path, struct_path)
    return price_path, struct_path
