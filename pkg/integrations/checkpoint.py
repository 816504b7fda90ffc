"""Model checkpoint and run manifest files.

``checkpoint.json`` layout (format ``pgru-checkpoint/1``, UTF-8, keys sorted)::

    {
      "format": "pgru-checkpoint/1",
      "config": {...PgruConfig...},
      "price_stream": {"cell", "input_dim", "hidden_dim", "head_units", "head_layers",
                       "tensors": {name: {"shape": [...], "data": [...]}}},
      "structural_stream": {...},
      "fusion": {"activation", "hidden", "skip", "c", "W", "b", "v", "s"},
      "price_norm": {"kind", "mu", "sigma"},
      "structural_norm": {...}
    }

Floats are written with Python's shortest round-trip repr, so loading restores every
parameter bit for bit and identical runs produce identical bytes.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from core.config import PgruConfig
from core.errors import SchemaError
from core.model import TrainedModel
from core.ndcore import RNG_ALGORITHM, SeededRng
from core.preprocess import NormParams
from networks.fusion import FusionNetwork
from networks.rnn import StreamNetwork

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "pgru-checkpoint/1"
MANIFEST_FORMAT = "pgru-manifest/1"

PathLike = Union[str, Path]


def _tensor(a: np.ndarray) -> Dict[str, Any]:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _array(entry: Dict[str, Any]) -> np.ndarray:
    return np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])


def stream_to_dict(net: StreamNetwork) -> Dict[str, Any]:
    out = dict(net.describe())
    out["tensors"] = {name: _tensor(t) for name, t in net.tensors().items()}
    return out


def stream_from_dict(data: Dict[str, Any]) -> StreamNetwork:
    # Shapes come from a throwaway init; every tensor is then overwritten.
    skeleton = StreamNetwork.init(data["cell"], data["input_dim"], data["hidden_dim"], SeededRng(0),
                                  head_units=data["head_units"] or 1, head_layers=data["head_layers"])
    return skeleton.with_tensors({name: _array(t) for name, t in data["tensors"].items()})


def fusion_to_dict(fusion: FusionNetwork) -> Dict[str, Any]:
    return {
        "activation": fusion.activation,
        "hidden": fusion.hidden,
        "skip": fusion.skip,
        "W": _tensor(fusion.W),
        "b": _tensor(fusion.b),
        "v": _tensor(fusion.v),
        "c": float(fusion.c),
        "s": _tensor(fusion.s),
    }


def fusion_from_dict(data: Dict[str, Any]) -> FusionNetwork:
    return FusionNetwork(_array(data["W"]), _array(data["b"]), _array(data["v"]), float(data["c"]),
                         _array(data["s"]), data["activation"])


def _dump(payload: Dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, sort_keys=True, indent=1, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def save_checkpoint(model: TrainedModel, path: PathLike) -> Path:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": model.config.to_dict(),
        "price_stream": stream_to_dict(model.price_net),
        "structural_stream": stream_to_dict(model.struct_net),
        "fusion": fusion_to_dict(model.fusion),
        "price_norm": model.price_norm.to_dict(),
        "structural_norm": model.struct_norm.to_dict(),
    }
    path = _dump(payload, Path(path))
    logger.info(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path: PathLike) -> TrainedModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"checkpoint is not valid JSON: {e.msg}", line=e.lineno) from None
    if data.get("format") != CHECKPOINT_FORMAT:
        raise SchemaError("unsupported checkpoint format", format=data.get("format"))
    try:
        return TrainedModel(
            config=PgruConfig.from_dict(data["config"]),
            price_net=stream_from_dict(data["price_stream"]),
            struct_net=stream_from_dict(data["structural_stream"]),
            fusion=fusion_from_dict(data["fusion"]),
            price_norm=NormParams.from_dict(data["price_norm"]),
            struct_norm=NormParams.from_dict(data["structural_norm"]),
        )
    except KeyError as e:
        raise SchemaError(f"checkpoint is missing key {e}") from None


def dataset_digest(*paths: PathLike) -> str:
    """SHA-256 over the bytes of the given files, in order."""
    sha = hashlib.sha256()
    for p in paths:
        sha.update(Path(p).read_bytes())
    return sha.hexdigest()


def write_manifest(path: PathLike, config: PgruConfig, data_paths, metrics: Optional[Dict[str, Any]] = None,
                   extra: Optional[Dict[str, Any]] = None) -> Path:
    """Run manifest: config snapshot, seeds, dataset digest, cell type and metric summary."""
    payload = {
        "format": MANIFEST_FORMAT,
        "cell": config.cell,
        "config": config.to_dict(),
        "seeds": {"seed": config.seed, "rng": RNG_ALGORITHM},
        "dataset": {
            "files": [Path(p).name for p in data_paths],
            "sha256": dataset_digest(*data_paths),
        },
        "metrics": metrics or {},
    }
    if extra:
        payload.update(extra)
    return _dump(payload, Path(path))


def read_manifest(path: PathLike) -> Dict[str, Any]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("format") != MANIFEST_FORMAT:
        raise SchemaError("unsupported manifest format", format=data.get("format"))
    return data
