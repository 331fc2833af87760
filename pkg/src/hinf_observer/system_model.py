"""Uncertain Lipschitz plant description and Lipschitz-constant estimators.

The plant is

    xdot = (A + M1 F(t) N1) x + phi(x, u) + B w
    y    = (C + M2 F(t) N2) x + D w

with ``F(t)^T F(t) <= I`` and ``phi`` Lipschitz in ``x`` on a box region.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import (DimensionMismatch, EmptyRegion, NonvanishingOrigin,
                     PreconditionViolated)

DEFAULT_HALF_WIDTH = 10.0
DEFAULT_SAMPLES = 10_000


def _mat(a) -> np.ndarray:
    return np.atleast_2d(np.asarray(a, dtype=float))


class Dimensions(NamedTuple):
    n: int  # states
    p: int  # measurements
    q: int  # disturbances
    k: int  # uncertainty size
    m: int  # controlled outputs


class Box(NamedTuple):
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def symmetric(cls, half_width: float, n: int) -> "Box":
        return cls(-half_width * np.ones(n), half_width * np.ones(n))

    @classmethod
    def coerce(cls, region, n: int) -> "Box":
        if isinstance(region, Box):
            box = region
        else:
            lo, hi = region
            box = cls(np.asarray(lo, dtype=float) * np.ones(n),
                      np.asarray(hi, dtype=float) * np.ones(n))
        if box.lo.shape != (n,) or box.hi.shape != (n,):
            raise DimensionMismatch("region", "A", f"box must have {n} coordinates")
        if np.any(box.hi < box.lo) or np.all(box.hi == box.lo):
            raise EmptyRegion(f"region [{box.lo}, {box.hi}] contains no pair of distinct points")
        return box


@dataclass(frozen=True, eq=False)
class UncertainSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    M1: np.ndarray
    N1: np.ndarray
    M2: np.ndarray
    N2: np.ndarray
    H: np.ndarray
    phi: Callable[[np.ndarray, np.ndarray], np.ndarray]
    gamma_actual: float
    Gamma_actual: np.ndarray | None = None
    region: Box | None = None
    u_nominal: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name in ("A", "B", "C", "D", "M1", "N1", "M2", "N2", "H"):
            object.__setattr__(self, name, _mat(getattr(self, name)))
        if self.Gamma_actual is not None:
            object.__setattr__(self, "Gamma_actual", _mat(self.Gamma_actual))
        object.__setattr__(self, "u_nominal", np.atleast_1d(np.asarray(self.u_nominal, dtype=float)))
        object.__setattr__(self, "gamma_actual", float(self.gamma_actual))
        if self.region is None:
            n = self.A.shape[0]
            object.__setattr__(self, "region", Box.symmetric(DEFAULT_HALF_WIDTH, n))
        elif not isinstance(self.region, Box):
            object.__setattr__(self, "region", Box.coerce(self.region, self.A.shape[0]))

    @property
    def dims(self) -> Dimensions:
        return Dimensions(self.A.shape[0], self.C.shape[0], self.B.shape[1],
                          self.M1.shape[1], self.H.shape[0])

    def with_phi(self, phi, gamma_actual: float | None = None) -> "UncertainSystem":
        """Copy of the system with a different nonlinearity."""
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw["phi"] = phi
        if gamma_actual is not None:
            kw["gamma_actual"] = gamma_actual
        return UncertainSystem(**kw)

    def replace(self, **changes) -> "UncertainSystem":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return UncertainSystem(**kw)


def _check_shape(name, arr, shape, ref_name):
    if arr.shape != shape:
        raise DimensionMismatch(name, ref_name, f"{name} is {arr.shape[0]}x{arr.shape[1]}, "
                                f"expected {shape[0]}x{shape[1]}")


def validate_system(sys: UncertainSystem, n_u_samples: int = 5, seed: int = 0,
                    lipschitz_samples: int = 2000) -> UncertainSystem:
    """Check every structural invariant and return ``sys`` unchanged."""
    A = sys.A
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch("A", "A", "state matrix must be square")
    n = A.shape[0]
    if sys.C.shape[1] != n:
        raise DimensionMismatch("C", "A", f"C has {sys.C.shape[1]} columns, A is {n}x{n}")
    p = sys.C.shape[0]
    if sys.B.shape[0] != n:
        raise DimensionMismatch("B", "A", f"B has {sys.B.shape[0]} rows, A is {n}x{n}")
    q = sys.B.shape[1]
    _check_shape("D", sys.D, (p, q), "C/B")
    k = sys.M1.shape[1]
    _check_shape("M1", sys.M1, (n, k), "A")
    _check_shape("N1", sys.N1, (k, n), "M1")
    _check_shape("M2", sys.M2, (p, k), "M1/C")
    _check_shape("N2", sys.N2, (k, n), "M1")
    if sys.H.shape[1] != n:
        raise DimensionMismatch("H", "A", f"H has {sys.H.shape[1]} columns, A is {n}x{n}")
    if sys.Gamma_actual is not None:
        _check_shape("Gamma_actual", sys.Gamma_actual, (n, n), "A")
        if not np.all(np.isfinite(sys.Gamma_actual)):
            raise ValueError("Gamma_actual has non-finite entries")
    if not sys.gamma_actual > 0:
        raise ValueError(f"gamma_actual must be positive, got {sys.gamma_actual}")

    rng = np.random.default_rng(seed)
    u0 = sys.u_nominal
    us = [u0] + [u0 + rng.standard_normal(u0.shape) for _ in range(n_u_samples if u0.size else 0)]
    zero = np.zeros(n)
    for u in us:
        val = np.asarray(sys.phi(zero, u), dtype=float)
        if val.shape != (n,):
            raise DimensionMismatch("phi", "A", f"phi returns shape {val.shape}, expected ({n},)")
        if np.linalg.norm(val) > 1e-9:
            raise NonvanishingOrigin(f"|phi(0, u)| = {np.linalg.norm(val):.3g} at u = {u}")

    if lipschitz_samples:
        est = estimate_lipschitz(sys, n_samples=lipschitz_samples, seed=seed)
        if est > sys.gamma_actual * (1 + 1e-9):
            raise PreconditionViolated(
                f"sampled Lipschitz ratio {est:.6g} exceeds declared gamma_actual {sys.gamma_actual:.6g}")
        if sys.Gamma_actual is not None:
            gnorm = np.linalg.norm(sys.Gamma_actual, 2)
            if est > gnorm * (1 + 1e-9):
                raise PreconditionViolated(
                    f"sampled Lipschitz ratio {est:.6g} exceeds |Gamma_actual| = {gnorm:.6g}")
    return sys


# -- sampling ---------------------------------------------------------------

def sample_pairs(box: Box, n_pairs: int, rng: np.random.Generator):
    """Draw point pairs in ``box``.

    Half the pairs are independent uniform points; the other half are
    local pairs at log-uniform separations in random directions, which is
    what makes the sampled ratio approach the true constant.
    """
    n = box.lo.size
    width = box.hi - box.lo
    n_global = n_pairs // 2
    n_local = n_pairs - n_global
    x1 = box.lo + rng.random((n_pairs, n)) * width
    x2 = np.empty_like(x1)
    x2[:n_global] = box.lo + rng.random((n_global, n)) * width
    d = rng.standard_normal((n_local, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    scale = np.max(width) * 10.0 ** rng.uniform(-6, 0, size=(n_local, 1))
    x2[n_global:] = np.clip(x1[n_global:] + scale * d, box.lo, box.hi)
    keep = np.linalg.norm(x1 - x2, axis=1) > 0
    return x1[keep], x2[keep]


def max_ratio(f, x1: np.ndarray, x2: np.ndarray, u: np.ndarray):
    """Largest ``|f(a) - f(b)| / |a - b|`` over the pairs, with its argmax."""
    best, arg = 0.0, None
    for a, b in zip(x1, x2):
        num = np.linalg.norm(np.asarray(f(a, u)) - np.asarray(f(b, u)))
        r = num / np.linalg.norm(a - b)
        if r > best:
            best, arg = r, (a, b)
    return best, arg


def estimate_lipschitz(sys: UncertainSystem, region=None, n_samples: int = DEFAULT_SAMPLES,
                       seed: int = 0) -> float:
    """Sampled lower bound on the Lipschitz constant of ``sys.phi``.

    Never overwrites ``sys.gamma_actual``; compare against it instead.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    n = sys.A.shape[0]
    box = Box.coerce(region if region is not None else sys.region, n)
    rng = np.random.default_rng(seed)
    x1, x2 = sample_pairs(box, n_samples, rng)
    return max_ratio(sys.phi, x1, x2, sys.u_nominal)[0]


def _slope_matrix(phi, box: Box, u, n_samples: int, rng) -> np.ndarray:
    # max |d phi_i / d x_j| from coordinate-aligned secants
    n = box.lo.size
    width = box.hi - box.lo
    per_coord = max(n_samples // max(n, 1), 1)
    J = np.zeros((n, n))
    for j in range(n):
        if width[j] == 0:
            continue
        x = box.lo + rng.random((per_coord, n)) * width
        h = width[j] * 10.0 ** rng.uniform(-6, 0, size=per_coord)
        h *= rng.choice([-1.0, 1.0], size=per_coord)
        xj = np.clip(x[:, j] + h, box.lo[j], box.hi[j])
        for row, xjj in zip(x, xj):
            step = xjj - row[j]
            if step == 0:
                continue
            other = row.copy()
            other[j] = xjj
            diff = np.abs(np.asarray(phi(other, u)) - np.asarray(phi(row, u))) / abs(step)
            J[:, j] = np.maximum(J[:, j], diff)
    return J


def certificate_holds(phi, Gamma: np.ndarray, x1, x2, u, rtol: float = 1e-9) -> bool:
    for a, b in zip(x1, x2):
        lhs = np.linalg.norm(np.asarray(phi(a, u)) - np.asarray(phi(b, u)))
        rhs = np.linalg.norm(Gamma @ (a - b))
        if lhs > rhs * (1 + rtol) + 1e-15:
            return False
    return True


def estimate_matrix_lipschitz(sys: UncertainSystem, region=None, n_samples: int = DEFAULT_SAMPLES,
                              seed: int = 0, safety: float = 0.01) -> np.ndarray:
    """Matrix-type Lipschitz certificate ``G`` with ``|phi(a)-phi(b)| <= |G (a-b)|``.

    The candidate is the matrix of sampled absolute partial slopes. It is
    checked on a fresh sample; if sign cancellation in ``G (a - b)`` breaks
    it, the diagonal bound ``diag(sqrt(rowsum(|J|^T |J|)))`` is used instead,
    inflated until the fresh sample passes.

    Sampled slopes approach the true supremum from below, so the candidate
    is first scaled by ``1 + safety``.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    n = sys.A.shape[0]
    box = Box.coerce(region if region is not None else sys.region, n)
    rng = np.random.default_rng(seed)
    u = sys.u_nominal
    J = _slope_matrix(sys.phi, box, u, n_samples, rng) * (1.0 + safety)
    x1, x2 = sample_pairs(box, n_samples, rng)
    if certificate_holds(sys.phi, J, x1, x2, u):
        return J
    K = J.T @ J
    Gamma = np.diag(np.sqrt(K.sum(axis=1)))
    for _ in range(60):
        if certificate_holds(sys.phi, Gamma, x1, x2, u):
            return Gamma
        Gamma = Gamma * 1.05 + 1e-12 * np.eye(n)
    raise PreconditionViolated("could not build a matrix Lipschitz certificate on the sample")


# -- parametric uncertainty -------------------------------------------------

@dataclass(frozen=True, eq=False)
class UncertaintyRealization:
    """Time-varying uncertainty ``F(t)`` with ``sigma_max(F(t)) <= 1``."""

    f_of_t: Callable[[float], np.ndarray]
    k: int

    def __call__(self, t: float) -> np.ndarray:
        return np.atleast_2d(np.asarray(self.f_of_t(t), dtype=float))

    def check(self, times: Sequence[float], tol: float = 1e-12) -> None:
        for t in times:
            F = self(t)
            if F.shape != (self.k, self.k):
                raise DimensionMismatch("F", "M1", f"F(t) is {F.shape}, expected ({self.k}, {self.k})")
            s = np.linalg.norm(F, 2)
            if s > 1 + tol:
                raise PreconditionViolated(f"sigma_max(F({t:.4g})) = {s:.6g} > 1")

    @property
    def is_zero(self) -> bool:
        return getattr(self.f_of_t, "_zero", False)

    @classmethod
    def zero(cls, k: int) -> "UncertaintyRealization":
        def f(t):
            return np.zeros((k, k))
        f._zero = True
        return cls(f, k)

    @classmethod
    def constant(cls, F0) -> "UncertaintyRealization":
        F0 = _mat(F0)
        return cls(lambda t: F0, F0.shape[0])

    @classmethod
    def sinusoidal(cls, F0, omega: float = 2.0) -> "UncertaintyRealization":
        F0 = _mat(F0)
        return cls(lambda t: np.sin(omega * t) * F0, F0.shape[0])

    @classmethod
    def random(cls, k: int, rng: np.random.Generator, omega: float | None = None) -> "UncertaintyRealization":
        """``sin(omega t) F0`` with a random ``F0`` scaled to unit spectral norm."""
        F0 = rng.standard_normal((k, k))
        F0 /= np.linalg.norm(F0, 2)
        if omega is None:
            omega = float(rng.uniform(0.5, 5.0))
        return cls.sinusoidal(F0, omega)


def example_system(phi=None) -> UncertainSystem:
    """The two-state example system with ``phi = [0, 0.2 sin(x1)]``."""
    from .nonlinearities import SinChannel

    return UncertainSystem(
        A=[[0.0, 1.0], [-1.0, -1.0]],
        B=[[1.0], [1.0]],
        C=[[1.0, 0.0]],
        D=[[0.2]],
        M1=[[0.1, 0.05], [-2.0, 0.1]],
        N1=0.1 * np.eye(2),
        M2=[[-0.2, 0.8]],
        N2=0.1 * np.eye(2),
        H=0.5 * np.eye(2),
        phi=phi if phi is not None else SinChannel(2, 0.2, 1, 2),
        gamma_actual=0.2,
        Gamma_actual=[[0.0, 0.0], [0.2, 0.0]],
    )
