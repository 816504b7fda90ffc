"""Feedforward fusion of the two stream predictions.

``y = v · act(W x + b) + c + s · x``: a hidden layer of ``hidden`` units plus an optional
direct linear path ``s · x`` from the two inputs. ``hidden=0`` leaves the linear model
``y = s · x + c``.
"""

import logging
from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np

from core.errors import DomainError, ShapeError
from core.ndcore import SeededRng

logger = logging.getLogger(__name__)

Activation = Literal["tanh", "identity"]
N_INPUTS = 2


@dataclass(frozen=True, eq=False)
class FusionNetwork:
    W: np.ndarray          # (hidden, 2)
    b: np.ndarray          # (hidden,)
    v: np.ndarray          # (hidden,)
    c: float
    s: np.ndarray          # (2,) or (0,) without the linear path
    activation: Activation = "tanh"

    def __post_init__(self):
        hidden = self.W.shape[0]
        if self.W.shape != (hidden, N_INPUTS) or self.b.shape != (hidden,) or self.v.shape != (hidden,):
            raise ShapeError("inconsistent fusion parameter shapes",
                             W=self.W.shape, b=self.b.shape, v=self.v.shape)
        if self.s.shape not in ((N_INPUTS,), (0,)):
            raise ShapeError("linear path must have two weights or none", s=self.s.shape)
        if hidden == 0 and self.s.size == 0:
            raise DomainError("fusion network needs hidden units or the linear path")
        if self.activation not in ("tanh", "identity"):
            raise DomainError(f"unknown fusion activation '{self.activation}'")

    @property
    def hidden(self) -> int:
        return int(self.W.shape[0])

    @property
    def skip(self) -> bool:
        return self.s.size == N_INPUTS

    @classmethod
    def init(cls, rng: SeededRng, hidden: int = 4, skip: bool = True,
             activation: Activation = "tanh") -> "FusionNetwork":
        if hidden < 0:
            raise DomainError("hidden unit count must be non-negative", hidden=hidden)
        bound = 1.0 / np.sqrt(N_INPUTS)
        W = rng.uniform((hidden, N_INPUTS), -bound, bound) if hidden else np.zeros((0, N_INPUTS))
        b = rng.uniform(hidden, -bound, bound) if hidden else np.zeros(0)
        v_bound = 1.0 / np.sqrt(max(hidden, 1))
        v = rng.uniform(hidden, -v_bound, v_bound) if hidden else np.zeros(0)
        s = np.full(N_INPUTS, 0.5) if skip else np.zeros(0)
        return cls(W, b, v, 0.0, s, activation)

    def copying(self) -> "FusionNetwork":
        """Same shape, but passes the price-stream prediction through unchanged."""
        if not self.skip:
            raise DomainError("only a fusion with the linear path can copy its input")
        return FusionNetwork(self.W.copy(), self.b.copy(), np.zeros(self.hidden), 0.0,
                             np.array([1.0, 0.0]), self.activation)

    def parameter_count(self) -> int:
        return self.W.size + self.b.size + self.v.size + 1 + self.s.size

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.W.ravel(), self.b, self.v, [self.c], self.s])

    def with_flat(self, theta: np.ndarray) -> "FusionNetwork":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.parameter_count(),):
            raise ShapeError("flat parameter vector has wrong length",
                             got=theta.shape, expected=self.parameter_count())
        h = self.hidden
        pos = 0
        W = theta[pos:pos + 2 * h].reshape(h, N_INPUTS)
        pos += 2 * h
        b = theta[pos:pos + h]
        pos += h
        v = theta[pos:pos + h]
        pos += h
        c = float(theta[pos])
        pos += 1
        s = theta[pos:pos + self.s.size]
        return FusionNetwork(W.copy(), b.copy(), v.copy(), c, s.copy(), self.activation)

    def _hidden(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        a = x @ self.W.T + self.b
        if self.activation == "tanh":
            u = np.tanh(a)
            return u, 1.0 - u ** 2
        return a, np.ones_like(a)

    @staticmethod
    def _check_inputs(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != N_INPUTS:
            raise ShapeError("fusion input must be n×2", shape=x.shape)
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = self._check_inputs(x)
        u, _ = self._hidden(x)
        y = u @ self.v + self.c
        if self.skip:
            y = y + x @ self.s
        return y

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """d y_i / d theta for every sample, in ``flatten`` order (n × P)."""
        x = self._check_inputs(x)
        n, h = x.shape[0], self.hidden
        u, du = self._hidden(x)
        da = du * self.v                              # (n, h)
        dW = (da[:, :, None] * x[:, None, :]).reshape(n, 2 * h)
        parts = [dW, da, u, np.ones((n, 1))]
        if self.skip:
            parts.append(x)
        return np.hstack(parts)
