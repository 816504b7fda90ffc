"""Dense numeric kernel: float64 row-major matrices, gate nonlinearities, seeded RNG.

A ``Matrix`` is a 2-D C-contiguous float64 ``numpy.ndarray``. Every other module accepts
matrices through :func:`as_matrix` so the finiteness invariant is checked at the boundary.

The random generator is Philox-4x64 (``numpy.random.Philox``), a counter-based generator
whose stream depends only on the seed and the spawn key. It is frozen: changing it
changes every seeded result in the repository.
"""

import logging
from typing import Callable, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy.special import expit

from core.errors import DomainError, NumericError, ShapeError

logger = logging.getLogger(__name__)

Matrix = npt.NDArray[np.float64]
ElementwiseFn = Union[str, Callable[[np.ndarray], np.ndarray]]

RNG_ALGORITHM = "philox4x64"


def check_finite(a: np.ndarray, name: str = "array") -> np.ndarray:
    """Raise NumericError naming the first non-finite index of ``a``."""
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))[0]
        index = tuple(int(i) for i in bad)
        raise NumericError(f"non-finite value in {name}", index=index)
    return a


def as_matrix(x: Union[np.ndarray, Sequence[Sequence[float]]], name: str = "matrix") -> Matrix:
    """Coerce ``x`` to a finite 2-D row-major float64 array."""
    a = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D", shape=a.shape)
    return check_finite(a, name)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with an explicit shape check."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}",
                         left=a.shape, right=b.shape)
    return check_finite(a @ b, "matmul result")


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


_NAMED_FUNCTIONS = {
    "sigmoid": sigmoid,
    "tanh": tanh,
}


def map_elementwise(f: ElementwiseFn, a: Matrix) -> Matrix:
    """Apply ``f`` ("sigmoid", "tanh" or a callable) to every entry of ``a``."""
    a = as_matrix(a, "input")
    if isinstance(f, str):
        if f not in _NAMED_FUNCTIONS:
            raise DomainError(f"unknown elementwise function '{f}'")
        fn = _NAMED_FUNCTIONS[f]
        name = f
    else:
        fn = f
        name = getattr(f, "__name__", "custom")
    with np.errstate(all="ignore"):
        out = np.asarray(fn(a), dtype=np.float64)
    if out.shape != a.shape:
        raise ShapeError(f"elementwise '{name}' changed shape", before=a.shape, after=out.shape)
    return check_finite(np.ascontiguousarray(out), f"{name} output")


class SeededRng:
    """Single-owner seeded generator. Use :meth:`substream` instead of sharing."""

    def __init__(self, seed: int, spawn_key: Tuple[int, ...] = ()):
        if seed < 0:
            raise DomainError("seed must be a non-negative integer", seed=seed)
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self._gen = np.random.Generator(np.random.Philox(sequence))

    def substream(self, *keys: int) -> "SeededRng":
        """Independent generator derived from this seed and ``keys``; does not advance self."""
        return SeededRng(self.seed, self.spawn_key + tuple(keys))

    def uniform(self, size: Union[int, Tuple[int, ...]], lo: float, hi: float) -> np.ndarray:
        if not lo < hi:
            raise DomainError("uniform range requires lo < hi", lo=lo, hi=hi)
        return self._gen.uniform(lo, hi, size=size)

    def normal(self, size: Union[int, Tuple[int, ...]], scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, spawn_key={self.spawn_key}, algorithm={RNG_ALGORITHM})"


def rng_uniform(rng: SeededRng, n: int, lo: float, hi: float) -> np.ndarray:
    """``n`` values in [lo, hi); advances ``rng``."""
    if n < 0:
        raise DomainError("n must be non-negative", n=n)
    return rng.uniform(n, lo, hi)


def derive_seed(seed: int, *keys: int) -> int:
    """Stable 32-bit seed for the substream ``keys`` of ``seed``."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1)[0])
