"""Parameter storage and initialisation."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from gatt.numcore.tensor import Tape, Tensor

GAUSSIAN_STD = 0.01


def make_rng(seed: int) -> np.random.Generator:
    """The one generator used everywhere: numpy's PCG64 seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(seed))


def init_param(shape: tuple[int, ...], kind: str, rng: np.random.Generator, std: float = GAUSSIAN_STD) -> np.ndarray:
    """Draw an initial value.

    ``gaussian`` samples i.i.d. N(0, std^2), 0.01 by default.  ``orthogonal`` takes the Q factor
    of a QR decomposition of a standard Gaussian matrix, with column signs
    fixed so that R has a positive diagonal; this makes the result a
    deterministic function of the generator state.
    """
    shape = tuple(int(s) for s in shape)
    if kind == "gaussian":
        return rng.normal(0.0, std, size=shape)
    if kind == "orthogonal":
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValueError(f"orthogonal init needs a square matrix, got {shape}")
        q, r = np.linalg.qr(rng.standard_normal(shape))
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        return q * signs
    if kind == "zeros":
        return np.zeros(shape)
    raise ValueError(f"unknown init kind {kind!r}")


def default_kind(shape: tuple[int, ...]) -> str:
    return "orthogonal" if len(shape) == 2 and shape[0] == shape[1] else "gaussian"


class ParamStore:
    """Ordered name -> value, gradient accumulator and Adadelta slots."""

    def __init__(self, gaussian_std: float = GAUSSIAN_STD):
        self.gaussian_std = gaussian_std
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.acc_grad: dict[str, np.ndarray] = {}
        self.acc_delta: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.values:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.array(value, dtype=np.float64)
        self.values[name] = value
        self.grads[name] = np.zeros_like(value)
        self.acc_grad[name] = np.zeros_like(value)
        self.acc_delta[name] = np.zeros_like(value)

    def create(self, name: str, shape, rng: np.random.Generator, kind: str | None = None) -> None:
        self.add(name, init_param(shape, kind or default_kind(tuple(shape)), rng, self.gaussian_std))

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def names(self) -> list[str]:
        return list(self.values)

    def size(self) -> int:
        return sum(v.size for v in self.values.values())

    def bind(self, tape: Tape | None) -> dict[str, Tensor]:
        """Wrap every value as a tensor; differentiable leaves if ``tape`` is given."""
        if tape is None:
            return {k: Tensor(v, name=k) for k, v in self.values.items()}
        return {k: tape.leaf(v, name=k) for k, v in self.values.items()}

    def collect(self, tape: Tape) -> None:
        """Add the leaf gradients recorded on ``tape`` into the accumulators."""
        for name, leaf in tape.leaves.items():
            if leaf.grad is not None and name in self.grads:
                self.grads[name] += leaf.grad

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g * g)) for g in self.grads.values())))

    def check_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.values.values())

    def copy(self) -> "ParamStore":
        out = ParamStore(self.gaussian_std)
        for k in self.values:
            out.add(k, self.values[k])
        return out
