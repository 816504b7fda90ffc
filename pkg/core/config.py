"""Run configuration for the parallel recurrent forecaster."""

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Literal, Mapping

from core.errors import DomainError, WindowError
from networks.optim import AdamConfig, LmConfig

NormalizationMode = Literal["leakfree", "global"]

CELLS = ("gru", "lstm")
FOLD_SCHEMES = ("block", "shuffled")
NORMALIZATION_MODES = ("leakfree", "global")
SCALINGS = ("zscore", "minmax")


@dataclass(frozen=True)
class PgruConfig:
    window: int = 15
    cell: str = "gru"
    hidden_dim: int = 32
    head_units: int = 16
    head_layers: int = 1
    epochs: int = 200
    folds: int = 10
    fold_scheme: str = "block"
    seed: int = 0
    normalization: NormalizationMode = "leakfree"
    scaling: str = "zscore"
    batch_size: int = 64
    full_batch_limit: int = 4096
    fusion_hidden: int = 4
    fusion_skip: bool = True
    fusion_holdout: float = 0.2
    adam: AdamConfig = field(default_factory=AdamConfig)
    lm: LmConfig = field(default_factory=LmConfig)
    jobs: int = 1

    def __post_init__(self):
        if self.window < 1:
            raise WindowError("window length must be at least 1", w=self.window)
        if self.folds < 2:
            raise DomainError("cross-validation needs at least 2 folds", k=self.folds)
        checks = {
            "cell": (self.cell, CELLS),
            "fold_scheme": (self.fold_scheme, FOLD_SCHEMES),
            "normalization": (self.normalization, NORMALIZATION_MODES),
            "scaling": (self.scaling, SCALINGS),
        }
        for name, (value, allowed) in checks.items():
            if value not in allowed:
                raise DomainError(f"{name} must be one of {', '.join(allowed)}", value=value)
        for name in ("hidden_dim", "epochs", "batch_size", "full_batch_limit", "jobs"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be positive", value=getattr(self, name))
        if self.head_layers < 0 or self.fusion_hidden < 0 or self.seed < 0:
            raise DomainError("head_layers, fusion_hidden and seed must be non-negative")
        if not 0.0 <= self.fusion_holdout <= 0.5:
            raise DomainError("fusion_holdout must lie in [0, 0.5]", value=self.fusion_holdout)

    def check_dataset(self, n_rows: int) -> None:
        if self.window >= n_rows:
            raise WindowError(f"window length {self.window} needs 1 <= w < n",
                              w=self.window, n=n_rows)
        if n_rows <= self.window + self.folds:
            raise DomainError("dataset too short for the window and fold count",
                              rows=n_rows, w=self.window, k=self.folds)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PgruConfig":
        return cls().merged(data)

    def merged(self, overrides: Mapping[str, Any]) -> "PgruConfig":
        """Copy with ``overrides`` applied; ``None`` values are ignored, nested dicts merge."""
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise DomainError(f"unknown configuration key(s): {', '.join(sorted(unknown))}")
        changes: Dict[str, Any] = {}
        for key, value in overrides.items():
            if value is None:
                continue
            if key in ("adam", "lm"):
                value = _merge_section(key, getattr(self, key), value)
            changes[key] = value
        return replace(self, **changes)


def _merge_section(name: str, current: Any, value: Any) -> Any:
    if isinstance(value, type(current)):
        return value
    if not isinstance(value, Mapping):
        raise DomainError(f"'{name}' must be an object", value=value)
    unknown = set(value) - {f.name for f in fields(current)}
    if unknown:
        raise DomainError(f"unknown {name} key(s): {', '.join(sorted(unknown))}")
    return replace(current, **value)
