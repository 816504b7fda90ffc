"""Optimizers and training loops: Adam for the recurrent streams, Levenberg–Marquardt for fusion."""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from numpy.linalg import LinAlgError
from scipy.linalg import cho_factor, cho_solve
from sklearn.model_selection import KFold
from tenacity import Retrying, retry_if_exception_type

from core.errors import DivergenceError, DomainError, NumericError, ShapeError
from core.ndcore import SeededRng, check_finite
from core.preprocess import SampleSet
from networks.fusion import FusionNetwork
from networks.rnn import StreamNetwork, Tensors, stream_backward, stream_forward

logger = logging.getLogger(__name__)

StreamName = Literal["price", "structural"]

LAMBDA_MIN = 1e-12
LAMBDA_MAX = 1e12
FUSION_CV_FOLDS = 5


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (self.lr > 0 and 0 < self.beta1 < 1 and 0 < self.beta2 < 1 and self.eps > 0):
            raise DomainError("invalid Adam hyperparameters", lr=self.lr, beta1=self.beta1,
                              beta2=self.beta2, eps=self.eps)


@dataclass(frozen=True, eq=False)
class AdamState:
    t: int
    m: Tensors
    v: Tensors
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: Tensors, config: Optional[AdamConfig] = None) -> "AdamState":
        config = config or AdamConfig()
        return cls(0, {k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()},
                   config.lr, config.beta1, config.beta2, config.eps)


def adam_step(state: AdamState, params: Tensors, grads: Tensors) -> Tuple[Tensors, AdamState]:
    """One bias-corrected Adam update; inputs are not modified."""
    t = state.t + 1
    new_params: Tensors = {}
    new_m: Tensors = {}
    new_v: Tensors = {}
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape or state.m[name].shape != theta.shape:
            raise ShapeError(f"gradient shape mismatch for '{name}'", grad=g.shape, param=theta.shape)
        check_finite(g, f"gradient '{name}'")
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        new_params[name] = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, replace(state, t=t, m=new_m, v=new_v)


@dataclass(frozen=True)
class LmConfig:
    lambda0: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    tol: float = 1e-10
    max_iters: int = 200

    def __post_init__(self):
        if not (self.lambda0 > 0 and self.lambda_up > 1 and self.lambda_down > 1
                and self.tol > 0 and self.max_iters >= 1):
            raise DomainError("invalid Levenberg-Marquardt settings", lambda0=self.lambda0,
                              lambda_up=self.lambda_up, lambda_down=self.lambda_down)


@dataclass(frozen=True)
class LmState:
    lambda_: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    max_iters: int = 200
    tol: float = 1e-10
    sse: Optional[float] = None

    @classmethod
    def from_config(cls, config: Optional[LmConfig] = None) -> "LmState":
        config = config or LmConfig()
        return cls(config.lambda0, config.lambda_up, config.lambda_down, config.max_iters, config.tol)


def _sse(fusion: FusionNetwork, inputs: np.ndarray, targets: np.ndarray) -> float:
    r = fusion.forward(inputs) - targets
    return float(r @ r)


def _factor_damped(JtJ: np.ndarray, lam: float, lambda_up: float):
    """Cholesky factor of JtJ + lam*I, escalating lam while the factorization fails."""
    damping = {"lambda": lam}
    eye = np.eye(JtJ.shape[0])

    def escalate(retry_state) -> None:
        damping["lambda"] *= lambda_up
        logger.warning(f"Damped normal matrix not positive definite; lambda -> {damping['lambda']:.1e}")

    retrying = Retrying(
        retry=retry_if_exception_type(LinAlgError),
        stop=lambda retry_state: damping["lambda"] * lambda_up > LAMBDA_MAX,
        before_sleep=escalate,
        reraise=True,
    )
    try:
        for attempt in retrying:
            with attempt:
                factor = cho_factor(JtJ + damping["lambda"] * eye)
    except LinAlgError:
        raise NumericError("damped normal matrix stayed singular past the damping cap",
                           lambda_=damping["lambda"]) from None
    return factor, damping["lambda"]


def lm_step(fusion: FusionNetwork, batch: Tuple[np.ndarray, np.ndarray],
            state: LmState) -> Tuple[FusionNetwork, LmState, bool]:
    """One damped Gauss–Newton trial: accept iff the sum of squared residuals decreases."""
    inputs, targets = np.asarray(batch[0], dtype=np.float64), np.asarray(batch[1], dtype=np.float64)
    if targets.size == 0:
        raise DomainError("LM batch must be non-empty")
    residual = fusion.forward(inputs) - targets
    sse = float(residual @ residual)
    J = fusion.jacobian(inputs)
    JtJ = J.T @ J
    gradient = J.T @ residual
    factor, lam = _factor_damped(JtJ, state.lambda_, state.lambda_up)
    delta = -cho_solve(factor, gradient)
    check_finite(delta, "LM step")

    candidate = fusion.with_flat(fusion.flatten() + delta)
    candidate_sse = _sse(candidate, inputs, targets)
    if np.isfinite(candidate_sse) and candidate_sse < sse:
        new_state = replace(state, lambda_=max(lam / state.lambda_down, LAMBDA_MIN), sse=candidate_sse)
        return candidate, new_state, True
    new_state = replace(state, lambda_=min(lam * state.lambda_up, LAMBDA_MAX), sse=sse)
    return fusion, new_state, False


@dataclass
class TrainingHistory:
    epochs: List[int] = field(default_factory=list)
    train_mse: List[float] = field(default_factory=list)
    valid_mse: List[float] = field(default_factory=list)
    best_epoch: int = 0

    def append(self, epoch: int, train_mse: float, valid_mse: float) -> None:
        self.epochs.append(epoch)
        self.train_mse.append(train_mse)
        self.valid_mse.append(valid_mse)

    def __len__(self) -> int:
        return len(self.epochs)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"epoch": self.epochs, "train_mse": self.train_mse,
                             "valid_mse": self.valid_mse})


def stream_inputs(samples: SampleSet, stream: StreamName) -> np.ndarray:
    if stream == "price":
        return samples.input1
    if stream == "structural":
        return samples.input2
    raise DomainError(f"unknown stream '{stream}'")


def _mse(net: StreamNetwork, inputs: np.ndarray, targets: np.ndarray) -> float:
    pred, _ = stream_forward(net, inputs)
    err = np.asarray(pred) - targets
    return float(np.mean(err * err))


def _loss_gradients(net: StreamNetwork, inputs: np.ndarray, targets: np.ndarray) -> Tuple[float, Tensors]:
    pred, cache = stream_forward(net, inputs)
    err = np.asarray(pred) - targets
    loss = float(np.mean(err * err))
    grads = stream_backward(net, cache, 2.0 * err / err.size)
    return loss, grads


def train_stream(net: StreamNetwork, train: SampleSet, valid: Optional[SampleSet], epochs: int,
                 adam: Optional[AdamConfig] = None, seed: int = 0, stream: StreamName = "price",
                 batch_size: int = 64, full_batch_limit: int = 4096,
                 keep_best: bool = True) -> Tuple[StreamNetwork, TrainingHistory]:
    """Minimize the stream's MSE with Adam.

    Returns the network of the best-scoring epoch (validation MSE, or training MSE without a
    validation set) when ``keep_best``, otherwise the network after the last epoch.
    """
    if len(train) == 0:
        raise DomainError("training set is empty")
    if epochs < 1:
        raise DomainError("epochs must be positive", epochs=epochs)
    x_train, y_train = stream_inputs(train, stream), train.output
    has_valid = valid is not None and len(valid) > 0
    x_valid = stream_inputs(valid, stream) if has_valid else None
    y_valid = valid.output if has_valid else None

    rng = SeededRng(seed)
    full_batch = len(train) < full_batch_limit
    state = AdamState.fresh(net.tensors(), adam)
    history = TrainingHistory()
    best_net, best_score = net, np.inf

    for epoch in range(1, epochs + 1):
        if full_batch:
            batches = [np.arange(len(train))]
        else:
            order = rng.permutation(len(train))
            batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
        for idx in batches:
            loss, grads = _loss_gradients(net, x_train[idx], y_train[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"{stream} stream loss became non-finite", epoch=epoch)
            params, state = adam_step(state, net.tensors(), grads)
            net = net.with_tensors(params)

        train_mse = _mse(net, x_train, y_train)
        valid_mse = _mse(net, x_valid, y_valid) if has_valid else float("nan")
        if not np.isfinite(train_mse):
            raise DivergenceError(f"{stream} stream loss became non-finite", epoch=epoch)
        history.append(epoch, train_mse, valid_mse)
        score = valid_mse if has_valid else train_mse
        if score < best_score:
            best_net, best_score = net, score
            history.best_epoch = epoch
        if epoch % 50 == 0 or epoch == epochs:
            logger.debug(f"{stream} stream epoch {epoch}/{epochs}: train {train_mse:.6f} valid {valid_mse:.6f}")

    logger.info(f"Trained {stream} stream ({net.cell_type}, h={net.hidden_dim}) for {epochs} epochs; "
                f"best epoch {history.best_epoch} score {best_score:.6f}")
    return (best_net if keep_best else net), history


def train_fusion(fusion: FusionNetwork, stream_preds: np.ndarray, targets: np.ndarray,
                 lm: Optional[LmState] = None) -> Tuple[FusionNetwork, List[float]]:
    """Run LM steps until the SSE change drops below tol or max_iters; return best fit and SSE trace."""
    inputs = np.asarray(stream_preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != 2 or inputs.shape[0] != targets.shape[0]:
        raise ShapeError("stream predictions must be n×2 and match targets",
                         preds=inputs.shape, targets=targets.shape)
    n, n_params = targets.shape[0], fusion.parameter_count()
    if n < n_params:
        raise DomainError("fusion fit is underdetermined", samples=n, parameters=n_params)

    state = lm or LmState()
    sse = _sse(fusion, inputs, targets)
    trace = [sse]
    for iteration in range(state.max_iters):
        fusion, state, accepted = lm_step(fusion, (inputs, targets), state)
        if accepted:
            change = sse - state.sse
            sse = state.sse
            trace.append(sse)
            if change < state.tol:
                break
        elif state.lambda_ >= LAMBDA_MAX:
            break
    logger.info(f"Fusion LM finished after {iteration + 1} iteration(s): SSE {trace[0]:.6g} -> {sse:.6g}")
    return fusion, trace


@dataclass(eq=False)
class FusionChoice:
    fusion: FusionNetwork
    trace: List[float]
    selected: Literal["fitted", "copy"]
    cv_sse: float
    copy_sse: float


def fusion_cv_supported(fusion: FusionNetwork, n_samples: int, folds: int = FUSION_CV_FOLDS) -> bool:
    """True when every inner training split still determines all fusion parameters."""
    if not fusion.skip or n_samples < folds:
        return False
    largest_test = -(-n_samples // folds)
    return n_samples - largest_test >= fusion.parameter_count()


def select_fusion(fusion: FusionNetwork, stream_preds: np.ndarray, targets: np.ndarray,
                  lm: Optional[LmState] = None, folds: int = FUSION_CV_FOLDS) -> FusionChoice:
    """Fit the fusion from the copying start and keep it only if it beats copying out of fold.

    ``stream_preds`` must come from windows the streams were not trained on.
    """
    inputs = np.asarray(stream_preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != 2 or inputs.shape[0] != targets.shape[0]:
        raise ShapeError("stream predictions must be n×2 and match targets",
                         preds=inputs.shape, targets=targets.shape)
    if not fusion_cv_supported(fusion, targets.shape[0], folds):
        raise DomainError("too few samples to cross-validate the fusion",
                          samples=targets.shape[0], parameters=fusion.parameter_count(), folds=folds)

    start = fusion.copying()
    copy_err = inputs[:, 0] - targets
    copy_sse = float(copy_err @ copy_err)
    cv_sse = 0.0
    for train_idx, test_idx in KFold(n_splits=folds).split(inputs):
        fitted, _ = train_fusion(start, inputs[train_idx], targets[train_idx], lm)
        err = fitted.forward(inputs[test_idx]) - targets[test_idx]
        cv_sse += float(err @ err)

    if cv_sse < copy_sse:
        chosen, trace = train_fusion(start, inputs, targets, lm)
        selected = "fitted"
    else:
        chosen, trace, selected = start, [copy_sse], "copy"
    logger.info(f"Fusion selection: out-of-fold SSE {cv_sse:.6g} vs copying {copy_sse:.6g} -> {selected}")
    return FusionChoice(chosen, trace, selected, cv_sse, copy_sse)
