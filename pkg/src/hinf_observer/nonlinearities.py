"""Named nonlinearities usable from problem files.

Every builtin is a small frozen dataclass that is callable as ``phi(x, u)``
and round-trips through :func:`to_dict` / :func:`from_dict`. Library users
can pass any callable with the same signature instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

Nonlinearity = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Zero:
    n: int

    def __call__(self, x, u=None):
        return np.zeros(self.n)

    def to_dict(self):
        return {"kind": "zero", "n": self.n}


@dataclass(frozen=True)
class SinChannel:
    """``out[output] = gain * sin(x[input])``, other components zero.

    Indices are 1-based to match how matrices are written in problem files.
    """

    n: int
    gain: float
    input: int
    output: int

    def __call__(self, x, u=None):
        out = np.zeros(self.n)
        out[self.output - 1] = self.gain * np.sin(x[self.input - 1])
        return out

    def to_dict(self):
        return {"kind": "sin_channel", "n": self.n, "gain": self.gain,
                "input": self.input, "output": self.output}


@dataclass(frozen=True)
class Linear:
    matrix: tuple

    @property
    def n(self) -> int:
        return len(self.matrix)

    def __call__(self, x, u=None):
        return np.asarray(self.matrix, dtype=float) @ np.asarray(x, dtype=float)

    def to_dict(self):
        return {"kind": "linear", "matrix": [list(r) for r in self.matrix]}


@dataclass(frozen=True)
class Sum:
    terms: tuple = field(default_factory=tuple)

    def __call__(self, x, u=None):
        return sum(t(x, u) for t in self.terms)

    def to_dict(self):
        return {"kind": "sum", "terms": [t.to_dict() for t in self.terms]}


def from_dict(spec: dict[str, Any], n: int | None = None):
    """Build a builtin nonlinearity from its JSON description."""
    kind = spec.get("kind")
    if kind == "zero":
        return Zero(int(spec.get("n", n)))
    if kind == "sin_channel":
        return SinChannel(int(spec.get("n", n)), float(spec["gain"]),
                          int(spec["input"]), int(spec["output"]))
    if kind == "linear":
        return Linear(tuple(tuple(float(v) for v in row) for row in spec["matrix"]))
    if kind == "sum":
        return Sum(tuple(from_dict(t, n) for t in spec["terms"]))
    raise ValueError(f"unknown nonlinearity kind {kind!r}")
