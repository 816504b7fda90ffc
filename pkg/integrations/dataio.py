"""CSV ingestion for the two daily datasets: price features and blockchain-structural features.

Dialect: comma separated, '.' decimal point, UTF-8, one header row. Thousands separators are
rejected. Column names are fixed (see ``PRICE_COLUMNS`` / ``STRUCT_COLUMNS``).
"""

import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.errors import AlignmentError, ParseError, SchemaError, ValidationError
from core.ndcore import Matrix, as_matrix

logger = logging.getLogger(__name__)

Schema = Literal["price", "structural"]

PRICE_COLUMNS = ("date", "avg", "open", "low", "high")
STRUCT_COLUMNS = ("date", "block_size", "hash_rate", "difficulty", "tx_count", "miner_revenue")
PRICE_FEATURES = PRICE_COLUMNS[1:]
STRUCT_FEATURES = STRUCT_COLUMNS[1:]

ONE_DAY = dt.timedelta(days=1)


@dataclass(frozen=True)
class PriceRow:
    date: dt.date
    avg: float
    open: float
    low: float
    high: float

    def validate(self) -> None:
        values = (self.avg, self.open, self.low, self.high)
        if any(v <= 0 for v in values):
            raise ValidationError("prices must be positive", date=self.date.isoformat())
        if not self.low <= self.avg <= self.high:
            raise ValidationError("expected low <= avg <= high", date=self.date.isoformat())
        if not self.low <= self.open <= self.high:
            raise ValidationError("expected low <= open <= high", date=self.date.isoformat())

    def features(self) -> Tuple[float, ...]:
        return (self.avg, self.open, self.low, self.high)


@dataclass(frozen=True)
class StructRow:
    date: dt.date
    block_size: float
    hash_rate: float
    difficulty: float
    tx_count: float
    miner_revenue: float

    def validate(self) -> None:
        if any(v <= 0 for v in self.features()):
            raise ValidationError("structural values must be positive", date=self.date.isoformat())
        if not float(self.tx_count).is_integer():
            raise ValidationError("tx_count must be integral", date=self.date.isoformat())

    def features(self) -> Tuple[float, ...]:
        return (self.block_size, self.hash_rate, self.difficulty, self.tx_count, self.miner_revenue)


Row = Union[PriceRow, StructRow]

_SCHEMAS: Dict[str, Tuple[Tuple[str, ...], type]] = {
    "price": (PRICE_COLUMNS, PriceRow),
    "structural": (STRUCT_COLUMNS, StructRow),
}


@dataclass(frozen=True, eq=False)
class AlignedDataset:
    """Date-aligned pair of feature matrices (price n×4, structural n×5)."""

    dates: Tuple[dt.date, ...]
    price: Matrix
    structural: Matrix

    def __post_init__(self):
        n = len(self.dates)
        if self.price.shape != (n, len(PRICE_FEATURES)):
            raise ValidationError("price matrix does not match dates", shape=self.price.shape, rows=n)
        if self.structural.shape != (n, len(STRUCT_FEATURES)):
            raise ValidationError("structural matrix does not match dates",
                                  shape=self.structural.shape, rows=n)
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValidationError("dates must be strictly increasing")

    def __len__(self) -> int:
        return len(self.dates)

    def same_as(self, other: "AlignedDataset") -> bool:
        return (self.dates == other.dates
                and np.array_equal(self.price, other.price)
                and np.array_equal(self.structural, other.structural))

    @property
    def breaks(self) -> np.ndarray:
        """``breaks[j]`` is True when calendar days are missing between rows j-1 and j."""
        flags = np.zeros(len(self.dates), dtype=bool)
        for j in range(1, len(self.dates)):
            flags[j] = (self.dates[j] - self.dates[j - 1]) > ONE_DAY
        return flags

    @property
    def gaps(self) -> List[Tuple[dt.date, dt.date]]:
        return [(self.dates[j - 1], self.dates[j]) for j in np.flatnonzero(self.breaks)]

    @property
    def avg_price(self) -> np.ndarray:
        return self.price[:, 0]

    def slice(self, start: int, stop: int) -> "AlignedDataset":
        return AlignedDataset(self.dates[start:stop], self.price[start:stop].copy(),
                              self.structural[start:stop].copy())

    def to_rows(self) -> Tuple[List[PriceRow], List[StructRow]]:
        price_rows = [PriceRow(d, *map(float, p)) for d, p in zip(self.dates, self.price)]
        struct_rows = [StructRow(d, *map(float, s)) for d, s in zip(self.dates, self.structural)]
        return price_rows, struct_rows


@dataclass
class LoadReport:
    price_rows: int
    structural_rows: int
    aligned_rows: int
    first_date: dt.date
    last_date: dt.date
    gaps: List[Tuple[dt.date, dt.date]] = field(default_factory=list)

    def format_text(self) -> str:
        lines = [
            f"price rows:      {self.price_rows}",
            f"structural rows: {self.structural_rows}",
            f"aligned rows:    {self.aligned_rows}",
            f"date range:      {self.first_date.isoformat()} .. {self.last_date.isoformat()}",
            f"gaps:            {len(self.gaps)}",
        ]
        for before, after in self.gaps:
            missing = (after - before).days - 1
            lines.append(f"  {before.isoformat()} -> {after.isoformat()} ({missing} missing day(s))")
        return "\n".join(lines)


def _parse_number(cell: str, column: str, line: int) -> float:
    if not isinstance(cell, str):
        raise ParseError(f"missing value for '{column}'", line=line)
    text = cell.strip()
    if "," in text:
        raise ParseError(f"thousands separators are not allowed in '{column}'", line=line, value=cell)
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"cannot parse '{column}' as a number", line=line, value=cell) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value in '{column}'", line=line, value=cell)
    return value


def _parse_date(cell: str, line: int) -> dt.date:
    if not isinstance(cell, str):
        raise ParseError("missing date", line=line)
    try:
        return dt.date.fromisoformat(cell.strip())
    except ValueError:
        raise ParseError("cannot parse date (expected YYYY-MM-DD)", line=line, value=cell) from None


def _is_blank(cell) -> bool:
    return not isinstance(cell, str) or not cell.strip()


def load_csv(path: Union[str, Path], schema: Schema) -> List[Row]:
    """Parse and validate one CSV file; rows are returned in file order."""
    if schema not in _SCHEMAS:
        raise SchemaError(f"unknown schema '{schema}'")
    columns, row_type = _SCHEMAS[schema]
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8",
                            skipinitialspace=True, skip_blank_lines=False)
    except pd.errors.ParserError as e:
        raise ParseError(f"malformed CSV: {e}", path=str(path)) from None
    except pd.errors.EmptyDataError:
        raise SchemaError("file is empty", path=str(path)) from None

    header = [c.strip() for c in frame.columns]
    frame.columns = header
    for column in columns:
        if column not in header:
            raise SchemaError(f"missing column '{column}'", path=str(path), column=column)

    rows: List[Row] = []
    for offset, record in enumerate(frame[list(columns)].itertuples(index=False, name=None)):
        line = offset + 2
        if all(_is_blank(cell) for cell in record):
            continue
        date = _parse_date(record[0], line)
        values = [_parse_number(cell, col, line) for cell, col in zip(record[1:], columns[1:])]
        row = row_type(date, *values)
        row.validate()
        rows.append(row)
    logger.info(f"Loaded {len(rows)} {schema} rows from {path}")
    return rows


def _index_by_date(rows: Sequence[Row], label: str) -> Dict[dt.date, Row]:
    indexed: Dict[dt.date, Row] = {}
    for row in rows:
        if row.date in indexed:
            raise ValidationError(f"duplicate date in {label} input", date=row.date.isoformat())
        indexed[row.date] = row
    return indexed


def align(price_rows: Sequence[PriceRow], struct_rows: Sequence[StructRow]) -> AlignedDataset:
    """Keep the dates present in both inputs, ascending."""
    if not price_rows or not struct_rows:
        raise AlignmentError("both inputs must be non-empty",
                             price_rows=len(price_rows), structural_rows=len(struct_rows))
    price_by_date = _index_by_date(price_rows, "price")
    struct_by_date = _index_by_date(struct_rows, "structural")
    common = sorted(set(price_by_date) & set(struct_by_date))
    if not common:
        raise AlignmentError("price and structural inputs share no dates")
    price = as_matrix([price_by_date[d].features() for d in common], "price")
    structural = as_matrix([struct_by_date[d].features() for d in common], "structural")
    dataset = AlignedDataset(tuple(common), price, structural)
    if dataset.gaps:
        logger.warning(f"{len(dataset.gaps)} calendar gap(s) inside the aligned range; "
                       "windows will not span them")
    return dataset


def load_dataset(price_path: Union[str, Path],
                 struct_path: Union[str, Path]) -> Tuple[AlignedDataset, LoadReport]:
    """Load both files, align them and build the load report."""
    price_rows = load_csv(price_path, "price")
    struct_rows = load_csv(struct_path, "structural")
    dataset = align(price_rows, struct_rows)
    report = LoadReport(
        price_rows=len(price_rows),
        structural_rows=len(struct_rows),
        aligned_rows=len(dataset),
        first_date=dataset.dates[0],
        last_date=dataset.dates[-1],
        gaps=dataset.gaps,
    )
    return dataset, report


def write_csv(dataset: AlignedDataset, price_path: Union[str, Path],
              struct_path: Union[str, Path]) -> None:
    """Write both halves of ``dataset`` in the input dialect."""
    dates = [d.isoformat() for d in dataset.dates]
    price = pd.DataFrame(dataset.price, columns=list(PRICE_FEATURES))
    price.insert(0, "date", dates)
    structural = pd.DataFrame(dataset.structural, columns=list(STRUCT_FEATURES))
    structural.insert(0, "date", dates)
    structural["tx_count"] = structural["tx_count"].round().astype(np.int64)
    price.to_csv(price_path, index=False, float_format="%.6f", lineterminator="\n")
    structural.to_csv(struct_path, index=False, float_format="%.6f", lineterminator="\n")
