"""Normalization, sliding-window sample construction and fold partitioning."""

import datetime as dt
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.model_selection import KFold

from core.errors import DegenerateColumnError, DomainError, ShapeError, WindowError
from core.ndcore import Matrix, SeededRng, as_matrix
from integrations.dataio import PRICE_FEATURES, STRUCT_FEATURES, AlignedDataset

logger = logging.getLogger(__name__)

ScalingKind = Literal["zscore", "minmax"]
FoldScheme = Literal["block", "shuffled"]

# Column of the price stream used as the supervised target (average daily price).
TARGET_COLUMN = 0


@dataclass(frozen=True, eq=False)
class NormParams:
    """Per-column affine scaling ``z = (x - mu) / sigma``.

    For ``kind == "minmax"`` mu holds the column minimum and sigma the range.
    """

    mu: np.ndarray
    sigma: np.ndarray
    kind: ScalingKind = "zscore"

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 1:
            raise ShapeError("mu and sigma must be vectors of equal length",
                             mu=self.mu.shape, sigma=self.sigma.shape)
        bad = np.flatnonzero(~(self.sigma > 0))
        if bad.size:
            raise DegenerateColumnError("scale must be positive", column=int(bad[0]))

    @property
    def columns(self) -> int:
        return int(self.mu.shape[0])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "mu": self.mu.tolist(), "sigma": self.sigma.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "NormParams":
        return cls(np.asarray(data["mu"], dtype=np.float64),
                   np.asarray(data["sigma"], dtype=np.float64),
                   data.get("kind", "zscore"))


def _fit_input(columns: Matrix) -> np.ndarray:
    """Rows x columns for fitting; a 1-D sequence is a single column."""
    if np.ndim(columns) == 1:
        columns = np.asarray(columns, dtype=np.float64)[:, None]
    x = as_matrix(columns, "columns")
    if x.shape[0] < 2:
        raise DomainError("need at least two rows to fit normalization", rows=x.shape[0])
    # Exact range test: a rounded std of a constant column is tiny but nonzero.
    degenerate = np.flatnonzero(np.ptp(x, axis=0) == 0)
    if degenerate.size:
        raise DegenerateColumnError("constant column cannot be normalized", column=int(degenerate[0]))
    return x


def zscore_fit(columns: Matrix) -> NormParams:
    """Column means and sample (n-1) standard deviations."""
    x = _fit_input(columns)
    return NormParams(x.mean(axis=0), x.std(axis=0, ddof=1), "zscore")


def minmax_fit(columns: Matrix) -> NormParams:
    x = _fit_input(columns)
    lo = x.min(axis=0)
    return NormParams(lo, x.max(axis=0) - lo, "minmax")


def fit_scaler(columns: Matrix, kind: ScalingKind = "zscore") -> NormParams:
    if kind == "zscore":
        return zscore_fit(columns)
    if kind == "minmax":
        return minmax_fit(columns)
    raise DomainError(f"unknown scaling '{kind}'")


def _check_columns(params: NormParams, x: np.ndarray) -> None:
    if x.ndim == 1 and params.columns == 1:
        return
    if x.shape[-1] != params.columns:
        raise ShapeError("column count does not match normalization parameters",
                         columns=x.shape[-1], expected=params.columns)


def zscore_apply(params: NormParams, columns: np.ndarray) -> np.ndarray:
    x = np.asarray(columns, dtype=np.float64)
    _check_columns(params, x)
    return (x - params.mu) / params.sigma


def zscore_invert(params: NormParams, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    _check_columns(params, z)
    return z * params.sigma + params.mu


def invert_column(params: NormParams, z: Union[float, np.ndarray], column: int = TARGET_COLUMN):
    """Denormalize values of a single column (the target by default)."""
    return np.asarray(z, dtype=np.float64) * params.sigma[column] + params.mu[column]


def normalize_dataset(dataset: AlignedDataset, price_params: NormParams,
                      struct_params: NormParams) -> AlignedDataset:
    return replace(dataset,
                   price=np.ascontiguousarray(zscore_apply(price_params, dataset.price)),
                   structural=np.ascontiguousarray(zscore_apply(struct_params, dataset.structural)))


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Windowed supervised samples.

    ``input1`` is (N, w, 4), ``input2`` is (N, w, 5), ``output`` is (N,). ``starts[i]`` is
    the first source row of sample i; its target row is ``starts[i] + w``.
    """

    w: int
    input1: np.ndarray
    input2: np.ndarray
    output: np.ndarray
    sample_dates: Tuple[dt.date, ...]
    starts: np.ndarray

    def __len__(self) -> int:
        return int(self.output.shape[0])

    def subset(self, indices: Sequence[int]) -> "SampleSet":
        idx = np.asarray(indices, dtype=np.int64)
        return SampleSet(self.w, self.input1[idx], self.input2[idx], self.output[idx],
                         tuple(self.sample_dates[i] for i in idx), self.starts[idx])

    def input_rows(self, i: int) -> np.ndarray:
        """Source rows read by the inputs of sample i."""
        start = int(self.starts[i])
        return np.arange(start, start + self.w)


def window_starts(dataset: AlignedDataset, w: int) -> np.ndarray:
    """Start rows of every window whose inputs and target lie inside one gap-free run."""
    n = len(dataset)
    if w < 1 or w >= n:
        raise WindowError(f"window length {w} needs 1 <= w < n", w=w, n=n)
    breaks = dataset.breaks
    # A window starting at i reads rows i..i+w; it is valid when no break occurs in i+1..i+w.
    cumulative = np.concatenate([[0], np.cumsum(breaks.astype(np.int64))])
    starts = np.arange(0, n - w)
    crossing = cumulative[starts + w + 1] - cumulative[starts + 1]
    valid = starts[crossing == 0]
    if valid.size == 0:
        raise WindowError("no window fits between calendar gaps", w=w, n=n)
    dropped = starts.size - valid.size
    if dropped:
        logger.info(f"Dropped {dropped} window(s) spanning calendar gaps")
    return valid


def build_windows(aligned: AlignedDataset, w: int,
                  starts: Optional[Sequence[int]] = None) -> SampleSet:
    """Samples from an already-normalized dataset; all valid windows when ``starts`` is None."""
    if starts is None:
        starts = window_starts(aligned, w)
    else:
        if w < 1 or w >= len(aligned):
            raise WindowError(f"window length {w} needs 1 <= w < n", w=w, n=len(aligned))
    starts = np.asarray(starts, dtype=np.int64)
    offsets = starts[:, None] + np.arange(w)[None, :]
    input1 = aligned.price[offsets]
    input2 = aligned.structural[offsets]
    output = aligned.price[starts + w, TARGET_COLUMN].copy()
    dates = tuple(aligned.dates[int(s) + w] for s in starts)
    return SampleSet(w, input1, input2, output, dates, starts)


def training_rows(starts: Sequence[int], w: int) -> np.ndarray:
    """Every source row (inputs and target) touched by the given samples."""
    starts = np.asarray(starts, dtype=np.int64)
    if starts.size == 0:
        return starts
    rows = starts[:, None] + np.arange(w + 1)[None, :]
    return np.unique(rows)


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    assignments: np.ndarray

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def valid_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def fold_sizes(self) -> List[int]:
        return np.bincount(self.assignments, minlength=self.k).tolist()


def kfold_split(n_samples: int, k: int, scheme: FoldScheme = "block",
                seed: Optional[int] = None) -> FoldPlan:
    """Partition sample indices into k folds whose sizes differ by at most one.

    Remainder samples go to the first folds. ``block`` keeps time order; ``shuffled``
    permutes indices with the seeded generator first.
    """
    if not 2 <= k <= n_samples:
        raise DomainError("fold count must satisfy 2 <= k <= n_samples", k=k, n_samples=n_samples)
    if scheme == "block":
        order = np.arange(n_samples)
    elif scheme == "shuffled":
        order = SeededRng(0 if seed is None else seed).permutation(n_samples)
    else:
        raise DomainError(f"unknown fold scheme '{scheme}'")
    assignments = np.empty(n_samples, dtype=np.int64)
    # KFold gives the first n % k folds one extra position.
    for fold, (_, positions) in enumerate(KFold(n_splits=k).split(order)):
        assignments[order[positions]] = fold
    return FoldPlan(k, assignments)


def dump_sample_set(samples: SampleSet, directory: Union[str, Path]) -> List[Path]:
    """Write one CSV shard per SampleSet component for inspection."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n, w = len(samples), samples.w
    index = pd.MultiIndex.from_product([range(n), range(w)], names=["sample", "step"])
    input1 = pd.DataFrame(samples.input1.reshape(n * w, -1), index=index, columns=list(PRICE_FEATURES))
    input2 = pd.DataFrame(samples.input2.reshape(n * w, -1), index=index, columns=list(STRUCT_FEATURES))
    output = pd.DataFrame({
        "sample": range(n),
        "date": [d.isoformat() for d in samples.sample_dates],
        "target": samples.output,
    })
    paths = [directory / "input1.csv", directory / "input2.csv", directory / "output.csv"]
    input1.to_csv(paths[0], lineterminator="\n")
    input2.to_csv(paths[1], lineterminator="\n")
    output.to_csv(paths[2], index=False, lineterminator="\n")
    return paths
