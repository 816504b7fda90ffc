"""Seeded synthetic stand-in for the daily price and blockchain-structural datasets.

Price: geometric trend times a short and a long seasonal cycle times small seeded noise;
open/low/high are derived around the average with ``low <= avg, open <= high`` enforced.
Structural series are positive, trend upward and are driven by the price level.
"""

import datetime as dt
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from core.errors import DomainError
from core.ndcore import SeededRng
from integrations.dataio import AlignedDataset, write_csv

logger = logging.getLogger(__name__)

MIN_DAYS = 30
DEFAULT_START = dt.date(2016, 1, 1)


@dataclass(frozen=True)
class Profile:
    base: float = 20000.0
    trend: float = 0.0005        # log-price drift per day
    cycle_days: float = 9.0
    cycle_amp: float = 0.12
    slow_days: float = 90.0
    slow_amp: float = 0.08
    noise: float = 0.004         # relative iid noise on the average price
    spread: float = 0.01         # typical relative intraday range


PROFILES: Dict[str, Profile] = {
    "seasonal": Profile(),
    "trending": Profile(trend=0.002, cycle_amp=0.04, slow_amp=0.03),
    "volatile": Profile(cycle_amp=0.05, noise=0.02, spread=0.03),
}


def _price_block(profile: Profile, n: int, rng: SeededRng) -> np.ndarray:
    t = np.arange(n, dtype=np.float64)
    log_avg = (np.log(profile.base) + profile.trend * t
               + profile.cycle_amp * np.sin(2 * np.pi * t / profile.cycle_days)
               + profile.slow_amp * np.sin(2 * np.pi * t / profile.slow_days)
               + profile.noise * rng.normal(n))
    avg = np.exp(log_avg)
    open_ = avg * np.exp(0.5 * profile.spread * rng.normal(n))
    # Margins keep the ordering strict after the CSV's six-decimal rounding.
    low = np.minimum(avg, open_) * (1.0 - 0.002 - profile.spread * np.abs(rng.normal(n)))
    high = np.maximum(avg, open_) * (1.0 + 0.002 + profile.spread * np.abs(rng.normal(n)))
    return np.column_stack([avg, open_, low, high])


def _structural_block(avg: np.ndarray, rng: SeededRng) -> np.ndarray:
    n = avg.size
    t = np.arange(n, dtype=np.float64)
    level = np.log(avg / avg[0])
    hash_rate = 1.5e6 * np.exp(0.002 * t + 0.6 * level + 0.02 * rng.normal(n))
    difficulty = 2.0e11 * np.exp(0.002 * t + 0.5 * level + 0.01 * rng.normal(n))
    block_size = 0.9 * np.exp(0.0005 * t + 0.1 * level + 0.03 * rng.normal(n))
    tx_count = np.round(2.5e5 * np.exp(0.001 * t + 0.3 * level + 0.05 * rng.normal(n)))
    miner_revenue = 1800.0 * avg * np.exp(0.02 * rng.normal(n))
    return np.column_stack([block_size, hash_rate, difficulty, tx_count, miner_revenue])


def generate(seed: int, n_days: int, profile: str = "seasonal",
             start: dt.date = DEFAULT_START) -> AlignedDataset:
    """Deterministic aligned dataset of ``n_days`` consecutive days."""
    if n_days < MIN_DAYS:
        raise DomainError(f"synthetic data needs at least {MIN_DAYS} days", n_days=n_days)
    if profile not in PROFILES:
        raise DomainError(f"unknown synthetic profile '{profile}'", choices=", ".join(PROFILES))
    rng = SeededRng(seed)
    price = _price_block(PROFILES[profile], n_days, rng.substream(0))
    structural = _structural_block(price[:, 0], rng.substream(1))
    dates = tuple(start + dt.timedelta(days=k) for k in range(n_days))
    logger.info(f"Generated {n_days} synthetic day(s) ({profile}, seed={seed})")
    return AlignedDataset(dates, price, structural)


def with_noise_structural(dataset: AlignedDataset, seed: int) -> AlignedDataset:
    """Replace the structural stream by positive iid noise carrying no price information."""
    rng = SeededRng(seed).substream(2)
    n = len(dataset)
    scale = np.array([1.0, 1e6, 1e11, 1e5, 1e7])
    noise = scale * np.exp(0.3 * rng.normal((n, 5)))
    noise[:, 3] = np.round(noise[:, 3])
    return replace(dataset, structural=noise)


def write_synthetic(out_dir: Union[str, Path], seed: int, n_days: int,
                    profile: str = "seasonal") -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    price_path, struct_path = out_dir / "price.csv", out_dir / "structural.csv"
    write_csv(generate(seed, n_days, profile), price_path, struct_path)
    return price_path, struct_path
