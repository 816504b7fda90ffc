"""GRU and LSTM recurrent streams with exact backpropagation through time.

Conventions (row vectors, so a batch is a stack of rows):

GRU::

    z  = sigmoid(x W_z^T + h U_z^T + b_z)
    r  = sigmoid(x W_r^T + h U_r^T + b_r)
    h~ = tanh(x W_h^T + (r * h) U_h^T + b_h)
    h' = (1 - z) * h + z * h~

LSTM::

    f, i, o = sigmoid(x W_k^T + h U_k^T + b_k)
    g       = tanh(x W_g^T + h U_g^T + b_g)
    c'      = f * c + i * g
    h'      = o * tanh(c')

Weight matrices are stored (out, in), e.g. W_z is hidden×input. The stream unrolls the cell
from a zero state over the window and maps the last hidden state through a dense head
(tanh hidden layers, linear scalar output).
"""

import logging
import uuid
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Tuple, Union

import numpy as np

from core.errors import ContractError, DomainError, ShapeError
from core.ndcore import SeededRng, sigmoid, tanh

logger = logging.getLogger(__name__)

CellType = Literal["gru", "lstm"]
Tensors = Dict[str, np.ndarray]

GRU_GATES = ("z", "r", "h")
LSTM_GATES = ("f", "i", "o", "g")


def _cell_tensor_names(gates) -> List[str]:
    return [f"{kind}_{g}" for g in gates for kind in ("W", "U", "b")]


@dataclass(frozen=True, eq=False)
class GruParams:
    W_z: np.ndarray
    U_z: np.ndarray
    b_z: np.ndarray
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray

    gates = GRU_GATES

    @property
    def input_dim(self) -> int:
        return int(self.W_z.shape[1])

    @property
    def hidden_dim(self) -> int:
        return int(self.W_z.shape[0])

    def tensors(self) -> Tensors:
        return {name: getattr(self, name) for name in _cell_tensor_names(self.gates)}

    @classmethod
    def init(cls, rng: SeededRng, input_dim: int, hidden_dim: int) -> "GruParams":
        bound = 1.0 / np.sqrt(hidden_dim)
        values = {}
        for g in cls.gates:
            values[f"W_{g}"] = rng.uniform((hidden_dim, input_dim), -bound, bound)
            values[f"U_{g}"] = rng.uniform((hidden_dim, hidden_dim), -bound, bound)
            values[f"b_{g}"] = rng.uniform(hidden_dim, -bound, bound)
        return cls(**values)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "GruParams":
        return cls(**_zero_cell(cls.gates, input_dim, hidden_dim))


@dataclass(frozen=True, eq=False)
class LstmParams:
    W_f: np.ndarray
    U_f: np.ndarray
    b_f: np.ndarray
    W_i: np.ndarray
    U_i: np.ndarray
    b_i: np.ndarray
    W_o: np.ndarray
    U_o: np.ndarray
    b_o: np.ndarray
    W_g: np.ndarray
    U_g: np.ndarray
    b_g: np.ndarray

    gates = LSTM_GATES

    @property
    def input_dim(self) -> int:
        return int(self.W_f.shape[1])

    @property
    def hidden_dim(self) -> int:
        return int(self.W_f.shape[0])

    def tensors(self) -> Tensors:
        return {name: getattr(self, name) for name in _cell_tensor_names(self.gates)}

    @classmethod
    def init(cls, rng: SeededRng, input_dim: int, hidden_dim: int) -> "LstmParams":
        bound = 1.0 / np.sqrt(hidden_dim)
        values = {}
        for g in cls.gates:
            values[f"W_{g}"] = rng.uniform((hidden_dim, input_dim), -bound, bound)
            values[f"U_{g}"] = rng.uniform((hidden_dim, hidden_dim), -bound, bound)
            values[f"b_{g}"] = rng.uniform(hidden_dim, -bound, bound)
        values["b_f"] = np.ones(hidden_dim)
        return cls(**values)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmParams":
        return cls(**_zero_cell(cls.gates, input_dim, hidden_dim))


CellParams = Union[GruParams, LstmParams]
_CELL_CLASSES = {"gru": GruParams, "lstm": LstmParams}


def _zero_cell(gates, input_dim: int, hidden_dim: int) -> Tensors:
    values = {}
    for g in gates:
        values[f"W_{g}"] = np.zeros((hidden_dim, input_dim))
        values[f"U_{g}"] = np.zeros((hidden_dim, hidden_dim))
        values[f"b_{g}"] = np.zeros(hidden_dim)
    return values


def cell_parameter_count(cell: CellType, input_dim: int, hidden_dim: int) -> int:
    gates = len(_CELL_CLASSES[cell].gates)
    return gates * (hidden_dim * input_dim + hidden_dim * hidden_dim + hidden_dim)


def _as_batch(v: np.ndarray) -> Tuple[np.ndarray, bool]:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        return v[None, :], True
    return v, False


def _check_step_shapes(p: CellParams, x: np.ndarray, h: np.ndarray) -> None:
    if x.shape[1] != p.input_dim:
        raise ShapeError("input width does not match cell", width=x.shape[1], expected=p.input_dim)
    if h.shape[1] != p.hidden_dim or h.shape[0] != x.shape[0]:
        raise ShapeError("hidden state shape does not match cell", shape=h.shape,
                         expected=(x.shape[0], p.hidden_dim))


def gru_step(p: GruParams, x_t: np.ndarray, h_prev: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """One GRU step for a vector or a batch of row vectors."""
    x, single = _as_batch(x_t)
    h, _ = _as_batch(h_prev)
    _check_step_shapes(p, x, h)
    z = sigmoid(x @ p.W_z.T + h @ p.U_z.T + p.b_z)
    r = sigmoid(x @ p.W_r.T + h @ p.U_r.T + p.b_r)
    rh = r * h
    h_tilde = tanh(x @ p.W_h.T + rh @ p.U_h.T + p.b_h)
    h_new = (1.0 - z) * h + z * h_tilde
    cache = {"x": x, "h_prev": h, "z": z, "r": r, "rh": rh, "h_tilde": h_tilde}
    return (h_new[0] if single else h_new), cache


def gru_step_backward(p: GruParams, cache: Dict[str, np.ndarray], dh: np.ndarray,
                      grads: Tensors) -> np.ndarray:
    """Accumulate parameter gradients of one step into ``grads``; return dL/dh_prev."""
    x, h, z, r, rh, h_tilde = (cache[k] for k in ("x", "h_prev", "z", "r", "rh", "h_tilde"))
    dz = dh * (h_tilde - h)
    dh_prev = dh * (1.0 - z)

    da_h = dh * z * (1.0 - h_tilde ** 2)
    grads["W_h"] += da_h.T @ x
    grads["U_h"] += da_h.T @ rh
    grads["b_h"] += da_h.sum(axis=0)
    drh = da_h @ p.U_h
    dh_prev += drh * r

    da_r = drh * h * r * (1.0 - r)
    grads["W_r"] += da_r.T @ x
    grads["U_r"] += da_r.T @ h
    grads["b_r"] += da_r.sum(axis=0)
    dh_prev += da_r @ p.U_r

    da_z = dz * z * (1.0 - z)
    grads["W_z"] += da_z.T @ x
    grads["U_z"] += da_z.T @ h
    grads["b_z"] += da_z.sum(axis=0)
    dh_prev += da_z @ p.U_z
    return dh_prev


def lstm_step(p: LstmParams, x_t: np.ndarray,
              state: Tuple[np.ndarray, np.ndarray]) -> Tuple[Tuple[np.ndarray, np.ndarray], Dict[str, np.ndarray]]:
    """One LSTM step; ``state`` is (h_prev, c_prev)."""
    x, single = _as_batch(x_t)
    h, _ = _as_batch(state[0])
    c, _ = _as_batch(state[1])
    _check_step_shapes(p, x, h)
    if c.shape != h.shape:
        raise ShapeError("cell state shape does not match hidden state", c=c.shape, h=h.shape)
    f = sigmoid(x @ p.W_f.T + h @ p.U_f.T + p.b_f)
    i = sigmoid(x @ p.W_i.T + h @ p.U_i.T + p.b_i)
    o = sigmoid(x @ p.W_o.T + h @ p.U_o.T + p.b_o)
    g = tanh(x @ p.W_g.T + h @ p.U_g.T + p.b_g)
    c_new = f * c + i * g
    tanh_c = tanh(c_new)
    h_new = o * tanh_c
    cache = {"x": x, "h_prev": h, "c_prev": c, "f": f, "i": i, "o": o, "g": g, "tanh_c": tanh_c}
    if single:
        return (h_new[0], c_new[0]), cache
    return (h_new, c_new), cache


def lstm_step_backward(p: LstmParams, cache: Dict[str, np.ndarray], dh: np.ndarray, dc: np.ndarray,
                       grads: Tensors) -> Tuple[np.ndarray, np.ndarray]:
    """Accumulate gradients of one step; return (dL/dh_prev, dL/dc_prev)."""
    x, h, c = cache["x"], cache["h_prev"], cache["c_prev"]
    f, i, o, g, tanh_c = (cache[k] for k in ("f", "i", "o", "g", "tanh_c"))
    do = dh * tanh_c
    dc_total = dc + dh * o * (1.0 - tanh_c ** 2)
    pre_grads = {
        "f": dc_total * c * f * (1.0 - f),
        "i": dc_total * g * i * (1.0 - i),
        "o": do * o * (1.0 - o),
        "g": dc_total * i * (1.0 - g ** 2),
    }
    dh_prev = np.zeros_like(h)
    for gate, da in pre_grads.items():
        grads[f"W_{gate}"] += da.T @ x
        grads[f"U_{gate}"] += da.T @ h
        grads[f"b_{gate}"] += da.sum(axis=0)
        dh_prev += da @ getattr(p, f"U_{gate}")
    return dh_prev, dc_total * f


@dataclass(frozen=True, eq=False)
class DenseLayer:
    W: np.ndarray
    b: np.ndarray


@dataclass(frozen=True, eq=False)
class StreamNetwork:
    """One recurrent stream: cell + dense head producing a scalar next-day prediction."""

    cell_type: CellType
    cell: CellParams
    head: Tuple[DenseLayer, ...]
    uid: str = field(default_factory=lambda: uuid.uuid4().hex, compare=False)

    def __post_init__(self):
        if self.head[-1].W.shape[0] != 1:
            raise ShapeError("head output dimension must be 1", shape=self.head[-1].W.shape)
        if self.head[0].W.shape[1] != self.cell.hidden_dim:
            raise ShapeError("head input does not match hidden size",
                             head=self.head[0].W.shape, hidden=self.cell.hidden_dim)

    @property
    def input_dim(self) -> int:
        return self.cell.input_dim

    @property
    def hidden_dim(self) -> int:
        return self.cell.hidden_dim

    @classmethod
    def init(cls, cell_type: CellType, input_dim: int, hidden_dim: int, rng: SeededRng,
             head_units: int = 16, head_layers: int = 1) -> "StreamNetwork":
        if cell_type not in _CELL_CLASSES:
            raise DomainError(f"unknown cell type '{cell_type}'")
        if hidden_dim < 1 or input_dim < 1 or head_layers < 0:
            raise DomainError("network dimensions must be positive",
                              input_dim=input_dim, hidden_dim=hidden_dim, head_layers=head_layers)
        cell = _CELL_CLASSES[cell_type].init(rng, input_dim, hidden_dim)
        sizes = [hidden_dim] + [head_units] * head_layers + [1]
        head = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            head.append(DenseLayer(rng.uniform((fan_out, fan_in), -bound, bound),
                                   rng.uniform(fan_out, -bound, bound)))
        return cls(cell_type, cell, tuple(head))

    def tensors(self) -> Tensors:
        out = dict(self.cell.tensors())
        for idx, layer in enumerate(self.head):
            out[f"head.{idx}.W"] = layer.W
            out[f"head.{idx}.b"] = layer.b
        return out

    def with_tensors(self, tensors: Tensors) -> "StreamNetwork":
        """New network with copies of the given tensors (same names and shapes)."""
        current = self.tensors()
        for name, value in tensors.items():
            if name not in current:
                raise ShapeError(f"unknown tensor '{name}'")
            if np.shape(value) != current[name].shape:
                raise ShapeError(f"tensor '{name}' has wrong shape",
                                 shape=np.shape(value), expected=current[name].shape)
        merged = {**current, **{k: np.array(v, dtype=np.float64, copy=True) for k, v in tensors.items()}}
        cell_cls = _CELL_CLASSES[self.cell_type]
        cell = cell_cls(**{name: merged[name] for name in _cell_tensor_names(cell_cls.gates)})
        head = tuple(DenseLayer(merged[f"head.{i}.W"], merged[f"head.{i}.b"])
                     for i in range(len(self.head)))
        return StreamNetwork(self.cell_type, cell, head)

    def parameter_count(self) -> int:
        return int(sum(t.size for t in self.tensors().values()))

    def describe(self) -> Dict[str, Any]:
        return {
            "cell": self.cell_type,
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "head_units": int(self.head[0].W.shape[0]) if len(self.head) > 1 else 0,
            "head_layers": len(self.head) - 1,
        }


@dataclass(eq=False)
class ForwardCache:
    network_uid: str
    steps: List[Dict[str, np.ndarray]]
    head_inputs: List[np.ndarray]
    single: bool

    def __len__(self) -> int:
        return len(self.steps)


def stream_forward(net: StreamNetwork, window: np.ndarray) -> Tuple[Union[float, np.ndarray], ForwardCache]:
    """Predict from a (w, d) window or a (B, w, d) batch of windows."""
    win = np.asarray(window, dtype=np.float64)
    single = win.ndim == 2
    if single:
        win = win[None, :, :]
    if win.ndim != 3 or win.shape[2] != net.input_dim:
        raise ShapeError("window width does not match stream input size",
                         shape=win.shape, expected_width=net.input_dim)
    batch, w = win.shape[0], win.shape[1]
    if w < 1:
        raise ShapeError("window must contain at least one timestep")
    h = np.zeros((batch, net.hidden_dim))
    steps: List[Dict[str, np.ndarray]] = []
    if net.cell_type == "gru":
        for t in range(w):
            h, step = gru_step(net.cell, win[:, t, :], h)
            steps.append(step)
    else:
        c = np.zeros_like(h)
        for t in range(w):
            (h, c), step = lstm_step(net.cell, win[:, t, :], (h, c))
            steps.append(step)

    head_inputs = [h]
    u = h
    for layer in net.head[:-1]:
        u = tanh(u @ layer.W.T + layer.b)
        head_inputs.append(u)
    out = net.head[-1]
    pred = (u @ out.W.T + out.b)[:, 0]
    cache = ForwardCache(net.uid, steps, head_inputs, single)
    return (float(pred[0]) if single else pred), cache


def stream_backward(net: StreamNetwork, cache: ForwardCache,
                    dL_dpred: Union[float, np.ndarray]) -> Tensors:
    """Gradients of sum_b dL_dpred[b] * pred[b] w.r.t. every tensor of ``net``."""
    if cache.network_uid != net.uid:
        raise ContractError("forward cache was produced by a different network")
    batch = cache.head_inputs[0].shape[0]
    upstream = np.asarray(dL_dpred, dtype=np.float64).reshape(-1)
    if upstream.size != batch:
        raise ContractError("upstream gradient does not match cached batch",
                            batch=batch, got=upstream.size)

    grads = {name: np.zeros_like(t) for name, t in net.tensors().items()}
    d = upstream[:, None]
    last = len(net.head) - 1
    for idx in range(last, -1, -1):
        layer = net.head[idx]
        u_in = cache.head_inputs[idx]
        grads[f"head.{idx}.W"] += d.T @ u_in
        grads[f"head.{idx}.b"] += d.sum(axis=0)
        d = d @ layer.W
        if idx > 0:
            d = d * (1.0 - u_in ** 2)

    dh = d
    if net.cell_type == "gru":
        for step in reversed(cache.steps):
            dh = gru_step_backward(net.cell, step, dh, grads)
    else:
        dc = np.zeros_like(dh)
        for step in reversed(cache.steps):
            dh, dc = lstm_step_backward(net.cell, step, dh, dc, grads)
    return grads


def predict(net: StreamNetwork, windows: np.ndarray) -> np.ndarray:
    """Batch predictions without keeping the cache around."""
    pred, _ = stream_forward(net, windows)
    return np.atleast_1d(np.asarray(pred, dtype=np.float64))


def grad_check(net: StreamNetwork, sample: np.ndarray, eps: float = 1e-5) -> float:
    """Max relative error between BPTT gradients and central differences of the prediction."""
    if not 1e-7 <= eps <= 1e-3:
        raise DomainError("eps must lie in [1e-7, 1e-3]", eps=eps)
    _, cache = stream_forward(net, sample)
    analytic = stream_backward(net, cache, 1.0)
    tensors = {name: t.copy() for name, t in net.tensors().items()}

    def evaluate(name: str, index: Tuple[int, ...], value: float) -> float:
        shifted = tensors[name].copy()
        shifted[index] = value
        return float(stream_forward(net.with_tensors({name: shifted}), sample)[0])

    worst = 0.0
    for name, tensor in tensors.items():
        for index in np.ndindex(*tensor.shape):
            theta = tensor[index]
            numeric = (evaluate(name, index, theta + eps) - evaluate(name, index, theta - eps)) / (2 * eps)
            a = float(analytic[name][index])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, err)
    logger.debug(f"grad_check on {net.cell_type} stream: max relative error {worst:.3e}")
    return worst
