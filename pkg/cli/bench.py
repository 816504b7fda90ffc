"""Experiment drivers: GRU vs LSTM wall-clock benchmark and the window-length sweep."""

import logging
import time
from dataclasses import replace
from typing import List, Sequence, Tuple

import numpy as np
import pandas as pd

from core.config import PgruConfig
from core.errors import DomainError
from core.model import train_pgru
from core.pgru_workflow import run_fold
from core.preprocess import window_starts
from integrations.dataio import AlignedDataset

logger = logging.getLogger(__name__)

MIN_REPEATS = 3
DEFAULT_WINDOWS = (5, 10, 15, 20, 25)


def time_training_run(dataset: AlignedDataset, cfg: PgruConfig) -> Tuple[float, int]:
    """Seconds for one full fit (both streams and fusion on every window) and its parameter count."""
    starts = window_starts(dataset, cfg.window)
    began = time.perf_counter()
    outcome = run_fold(dataset, cfg, starts, np.arange(len(starts)), np.arange(0), 0)
    seconds = time.perf_counter() - began
    params = (outcome.price_net.parameter_count() + outcome.struct_net.parameter_count()
              + outcome.fusion.parameter_count())
    return seconds, params


def run_bench(dataset: AlignedDataset, cfg: PgruConfig, cells: Sequence[str] = ("gru", "lstm"),
              windows: Sequence[int] = DEFAULT_WINDOWS, repeats: int = MIN_REPEATS
              ) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Time every (cell, w) pair ``repeats`` times; cells alternate within a repeat.

    Returns the raw table (cell, w, repeat, seconds) and the summary
    (cell, w, mean_seconds, parameter_count).
    """
    if repeats < MIN_REPEATS:
        raise DomainError(f"benchmark needs at least {MIN_REPEATS} repeats", repeats=repeats)
    if not cells or not windows:
        raise DomainError("benchmark needs at least one cell type and one window length")
    rows: List[dict] = []
    params = {}
    for w in windows:
        for repeat in range(1, repeats + 1):
            for cell in cells:
                run_cfg = replace(cfg, cell=cell, window=w)
                seconds, params[(cell, w)] = time_training_run(dataset, run_cfg)
                rows.append({"cell": cell, "w": w, "repeat": repeat, "seconds": seconds})
                logger.info(f"bench {cell} w={w} repeat {repeat}/{repeats}: {seconds:.3f}s")

    raw = pd.DataFrame(rows, columns=["cell", "w", "repeat", "seconds"])
    summary = (raw.groupby(["cell", "w"], sort=False)["seconds"].mean()
               .rename("mean_seconds").reset_index())
    summary["parameter_count"] = [params[(c, w)] for c, w in zip(summary["cell"], summary["w"])]
    return raw, summary


def run_sweep(dataset: AlignedDataset, cfg: PgruConfig, cells: Sequence[str] = ("gru", "lstm"),
              windows: Sequence[int] = DEFAULT_WINDOWS) -> pd.DataFrame:
    """Aggregate CV metrics for every (cell, w): one row of the accuracy table each."""
    if not cells or not windows:
        raise DomainError("sweep needs at least one cell type and one window length")
    rows = []
    for cell in cells:
        for w in windows:
            _, report = train_pgru(dataset, replace(cfg, cell=cell, window=w), refit=False)
            agg = report.aggregate
            rows.append({"cell": cell, "w": w, "mse": agg["mse"], "rmse": agg["rmse"],
                         "mae": agg["mae"], "mape": agg["mape"]})
    return pd.DataFrame(rows, columns=["cell", "w", "mse", "rmse", "mae", "mape"])
