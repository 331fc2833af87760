"""Block-structured affine matrix inequalities for observer synthesis.

A constraint is a symmetric block matrix assembled from :class:`Term`
objects, each contributing ``left @ X @ right`` (or ``x * left`` for a
scalar variable, or a constant) to one block and its transpose to the
mirrored block. Every constraint is therefore symmetric and affine in the
decision variables by construction.

Three problem families are provided:

* :func:`build_theorem1` maximises the admissible Lipschitz constant for
  a given decay rate (optionally with gamma and/or zeta fixed),
* :func:`build_corollary1` maximises a weighted minimum of the entries of a
  matrix-type Lipschitz constant,
* :func:`build_theorem2` minimises ``lam * (-gamma) + (1 - lam) * zeta``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

from .errors import (LambdaOutOfRange, NonpositiveWeight, NotPositiveDefinite,
                     ShapeMismatch)
from .system_model import UncertainSystem, validate_system

DEFAULT_MARGIN = 1e-7

SYMMETRIC = "symmetric"
RECTANGULAR = "rectangular"
SCALAR = "scalar"
ENTRYWISE_POSITIVE = "entrywise-positive"


def sym_sqrt(M) -> np.ndarray:
    """Symmetric positive definite square root via eigendecomposition."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise NotPositiveDefinite("matrix is not square")
    scale = max(np.abs(M).max(), 1.0)
    if np.abs(M - M.T).max() > 1e-12 * scale:
        raise NotPositiveDefinite("matrix is not symmetric")
    w, V = np.linalg.eigh((M + M.T) / 2)
    if w.min() <= 0:
        raise NotPositiveDefinite(f"smallest eigenvalue {w.min():.3g} is not positive")
    S = (V * np.sqrt(w)) @ V.T
    return (S + S.T) / 2


@dataclass(frozen=True)
class MatrixVariable:
    name: str
    shape: tuple[int, int]
    structure: str = RECTANGULAR

    def __post_init__(self):
        if self.structure == SYMMETRIC and self.shape[0] != self.shape[1]:
            raise ShapeMismatch(f"symmetric variable {self.name} must be square")
        if self.structure == SCALAR and self.shape != (1, 1):
            raise ShapeMismatch(f"scalar variable {self.name} must be 1x1")

    @property
    def n_coords(self) -> int:
        r, c = self.shape
        if self.structure == SYMMETRIC:
            return r * (r + 1) // 2
        return r * c

    def _index(self) -> list[tuple[int, int]]:
        r, c = self.shape
        if self.structure == SYMMETRIC:
            return [(i, j) for j in range(c) for i in range(j + 1)]
        return [(i, j) for i in range(r) for j in range(c)]

    def basis(self) -> Iterator[np.ndarray]:
        for i, j in self._index():
            E = np.zeros(self.shape)
            E[i, j] = 1.0
            if self.structure == SYMMETRIC and i != j:
                E[j, i] = 1.0
            yield E

    def from_coords(self, v) -> np.ndarray:
        X = np.zeros(self.shape)
        for val, (i, j) in zip(np.asarray(v, dtype=float), self._index()):
            X[i, j] = val
            if self.structure == SYMMETRIC:
                X[j, i] = val
        return X

    def to_coords(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(self.shape)
        return np.array([X[i, j] for i, j in self._index()])


@dataclass(frozen=True, eq=False)
class Term:
    """Contribution ``left @ X @ right`` to block ``(row, col)``.

    ``var=None`` marks a constant (``left`` is the value). For scalar
    variables the contribution is ``x * left``. ``sym`` on a diagonal block
    adds the transpose, so ``Term(0, 0, "P", I, A, sym=True)`` is
    ``P A + A^T P``. ``transpose`` uses ``X^T`` in place of ``X``.
    """

    row: int
    col: int
    var: str | None
    left: np.ndarray
    right: np.ndarray | None = None
    sym: bool = False
    transpose: bool = False

    def value(self, X: np.ndarray | None) -> np.ndarray:
        if self.var is None:
            return self.left
        if self.right is None:
            return float(np.asarray(X).reshape(-1)[0]) * self.left
        Xv = X.T if self.transpose else X
        return self.left @ Xv @ self.right

    def to_dict(self) -> dict:
        d = {"block": [self.row, self.col], "var": self.var,
             "left": np.asarray(self.left).tolist()}
        if self.right is not None:
            d["right"] = np.asarray(self.right).tolist()
        if self.sym:
            d["sym"] = True
        if self.transpose:
            d["transpose"] = True
        return d


@dataclass(frozen=True, eq=False)
class LmiConstraint:
    """``sum(terms) < -margin*I`` (sense ``"neg"``) or ``> margin*I`` (``"pos"``)."""

    name: str
    blocks: tuple[int, ...]
    terms: tuple[Term, ...]
    sense: str = "neg"

    @property
    def size(self) -> int:
        return int(sum(self.blocks))

    @property
    def variables(self) -> set[str]:
        return {t.var for t in self.terms if t.var is not None}

    def evaluate(self, assignment: Mapping[str, np.ndarray]) -> np.ndarray:
        off = np.concatenate([[0], np.cumsum(self.blocks)]).astype(int)
        M = np.zeros((self.size, self.size))
        for t in self.terms:
            V = t.value(None if t.var is None else assignment[t.var])
            rs = slice(off[t.row], off[t.row + 1])
            cs = slice(off[t.col], off[t.col + 1])
            if t.row == t.col:
                M[rs, cs] += V + V.T if t.sym else V
            else:
                M[rs, cs] += V
                M[cs, rs] += V.T
        return M

    def normalized(self, assignment) -> np.ndarray:
        """The matrix whose largest eigenvalue must be below ``-margin``."""
        M = self.evaluate(assignment)
        return M if self.sense == "neg" else -M


@dataclass(frozen=True, eq=False)
class ScalarConstraint:
    """``sum_v <coef_v, X_v> + const > margin``."""

    name: str
    coeffs: tuple[tuple[str, np.ndarray], ...]
    const: float = 0.0

    def evaluate(self, assignment) -> float:
        return float(sum(np.sum(c * assignment[v]) for v, c in self.coeffs) + self.const)


@dataclass(frozen=True, eq=False)
class LmiProblem:
    variables: tuple[MatrixVariable, ...]
    constraints: tuple[LmiConstraint, ...]
    scalar_constraints: tuple[ScalarConstraint, ...] = ()
    objective: tuple[tuple[str, np.ndarray], ...] = ()
    margin: float = DEFAULT_MARGIN
    meta: dict = field(default_factory=dict)

    def variable(self, name: str) -> MatrixVariable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def constraint(self, name: str) -> LmiConstraint:
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(name)

    def objective_value(self, assignment) -> float:
        return float(sum(np.sum(c * assignment[v]) for v, c in self.objective))

    def zero_assignment(self) -> dict[str, np.ndarray]:
        return {v.name: np.zeros(v.shape) for v in self.variables}

    def random_assignment(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        return {v.name: v.from_coords(rng.standard_normal(v.n_coords)) for v in self.variables}

    def check_assignment(self, assignment) -> dict[str, np.ndarray]:
        out = {}
        for v in self.variables:
            if v.name not in assignment:
                raise ShapeMismatch(f"assignment is missing variable {v.name}")
            X = np.atleast_2d(np.asarray(assignment[v.name], dtype=float))
            if X.shape != v.shape:
                raise ShapeMismatch(f"{v.name} has shape {X.shape}, expected {v.shape}")
            out[v.name] = X
        return out

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "margin": self.margin,
            "variables": [{"name": v.name, "shape": list(v.shape), "structure": v.structure}
                          for v in self.variables],
            "constraints": [{"name": c.name, "sense": c.sense, "blocks": list(c.blocks),
                             "terms": [t.to_dict() for t in c.terms]} for c in self.constraints],
            "scalar_constraints": [{"name": s.name, "const": s.const,
                                    "coeffs": {v: np.asarray(c).tolist() for v, c in s.coeffs}}
                                   for s in self.scalar_constraints],
            "objective": {v: np.asarray(c).tolist() for v, c in self.objective},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


@dataclass(frozen=True)
class LmiResidual:
    values: dict[str, float]
    margin: float
    tol: float

    @property
    def feasible(self) -> bool:
        return all(v < -self.margin + self.tol for v in self.values.values())

    @property
    def worst(self) -> tuple[str, float]:
        name = max(self.values, key=lambda k: self.values[k])
        return name, self.values[name]

    @property
    def violated(self) -> list[str]:
        return [k for k, v in self.values.items() if not v < -self.margin + self.tol]


def evaluate_residual(problem: LmiProblem, assignment, tol: float = 1e-6) -> LmiResidual:
    """Largest eigenvalue of every sign-normalised constraint.

    Scalar constraints report ``-(expression)`` so that all entries share the
    rule "feasible iff value < -margin + tol".
    """
    a = problem.check_assignment(assignment)
    values = {}
    for c in problem.constraints:
        values[c.name] = float(np.linalg.eigvalsh(c.normalized(a)).max())
    for s in problem.scalar_constraints:
        values[s.name] = -s.evaluate(a)
    return LmiResidual(values, problem.margin, tol)


# -- problem assembly -------------------------------------------------------

class _Builder:
    def __init__(self, margin: float):
        self.variables: list[MatrixVariable] = []
        self.constraints: list[LmiConstraint] = []
        self.scalars: list[ScalarConstraint] = []
        self.objective: list[tuple[str, np.ndarray]] = []
        self.margin = margin

    def var(self, name, shape, structure=RECTANGULAR):
        if any(v.name == name for v in self.variables):
            raise ValueError(f"duplicate variable name {name}")
        self.variables.append(MatrixVariable(name, tuple(shape), structure))
        return name

    def scalar_positive(self, name, var, coef=1.0, const=0.0):
        self.scalars.append(ScalarConstraint(name, ((var, np.array([[coef]])),), const))

    def positive_definite(self, var, n, lower=0.0):
        I = np.eye(n)
        terms = [Term(0, 0, var, I, I)]
        if lower:
            terms.append(Term(0, 0, None, -lower * I))
        self.constraints.append(LmiConstraint(f"{var}>0" if not lower else f"{var}>{lower:g}I",
                                              (n,), tuple(terms), "pos"))

    def build(self, **meta) -> LmiProblem:
        return LmiProblem(tuple(self.variables), tuple(self.constraints), tuple(self.scalars),
                          tuple(self.objective), self.margin, meta)


def _observer_blocks(sys: UncertainSystem, beta: float, gamma, zeta, S: np.ndarray,
                     gain=None, gamma_matrix: str | None = None) -> LmiConstraint:
    """The 8x8 block inequality shared by all three problem families.

    ``gamma``/``zeta`` are either a variable name or a fixed float.
    ``gamma_matrix`` names an n x n variable used in place of ``gamma I``.
    With ``gain`` given, ``G`` is replaced by ``P1 @ gain``.
    """
    n, p, q, k, m = sys.dims
    A, B, C, D, M2, N1, N2, H = sys.A, sys.B, sys.C, sys.D, sys.M2, sys.N1, sys.N2, sys.H
    I, Ik, Iq = np.eye(n), np.eye(k), np.eye(q)
    # e-part: (0) HtH - Q, (1) gamma, (2) P1 S, (3) G M2 | x-part: (4) R, (5) gamma, (6) P2 S | (7) w
    blocks = (n, n, n, k, n, n, n, q)
    t = [
        Term(0, 0, None, H.T @ H),
        Term(0, 0, "P1", I, A, sym=True),
        Term(0, 0, "P1", beta * I, I, sym=True),
        Term(0, 2, "P1", I, S),
        Term(1, 1, None, -I),
        Term(2, 2, None, -I),
        Term(3, 3, None, -Ik),
        Term(4, 4, "P2", I, A, sym=True),
        Term(4, 4, None, 2 * N1.T @ N1 + N2.T @ N2),
        Term(4, 6, "P2", I, S),
        Term(4, 7, "P2", I, B),
        Term(5, 5, None, -I),
        Term(6, 6, None, -I),
    ]
    if gain is None:
        t += [Term(0, 0, "G", -I, C, sym=True),
              Term(0, 3, "G", I, M2),
              Term(0, 7, "P1", I, B),
              Term(0, 7, "G", -I, D)]
    else:
        L = np.atleast_2d(np.asarray(gain, dtype=float)).reshape(n, p)
        t += [Term(0, 0, "P1", -I, L @ C, sym=True),
              Term(0, 3, "P1", I, L @ M2),
              Term(0, 7, "P1", I, B - L @ D)]
    # upper-right block holds Gamma^T so the Schur complement adds Gamma^T Gamma
    for row, col in ((0, 1), (4, 5)):
        if gamma_matrix is not None:
            t.append(Term(row, col, gamma_matrix, I, I, transpose=True))
        elif isinstance(gamma, str):
            t.append(Term(row, col, gamma, I))
        else:
            t.append(Term(row, col, None, float(gamma) * I))
    if isinstance(zeta, str):
        t.append(Term(7, 7, zeta, -Iq))
    else:
        t.append(Term(7, 7, None, -float(zeta) * Iq))
    return LmiConstraint("observer", blocks, tuple(t), "neg")


def uncertainty_sqrt(sys: UncertainSystem) -> np.ndarray:
    """``(I + M1 M1^T)^(1/2)``."""
    n = sys.dims.n
    return sym_sqrt(np.eye(n) + sys.M1 @ sys.M1.T)


def _common(sys, beta, theta, margin, gain):
    if not beta > 0:
        raise ValueError(f"decay rate beta must be positive, got {beta}")
    if theta is not None and theta < 0:
        raise ValueError("theta must be nonnegative")
    n, p = sys.dims.n, sys.dims.p
    b = _Builder(margin)
    b.var("P1", (n, n), SYMMETRIC)
    b.var("P2", (n, n), SYMMETRIC)
    if gain is None:
        b.var("G", (n, p), RECTANGULAR)
    return b, uncertainty_sqrt(sys)


def _spd(b, n, theta):
    b.positive_definite("P1", n, theta or 0.0)
    b.positive_definite("P2", n)


def build_theorem1(sys: UncertainSystem, beta: float, gamma: float | None = None,
                   mu: float | None = None, *, theta: float | None = None,
                   margin: float = DEFAULT_MARGIN, gain=None, validate: bool = True) -> LmiProblem:
    """Admissible-Lipschitz problem.

    ``gamma=None`` makes gamma a variable (maximised); ``mu=None`` makes
    ``zeta = mu**2`` a variable. With gamma fixed and zeta free, zeta is
    minimised; with both fixed the problem is a pure feasibility problem.
    """
    if validate:
        validate_system(sys)
    if gamma is not None and not gamma > 0:
        raise ValueError("fixed gamma must be positive")
    if mu is not None and not mu > 0:
        raise ValueError("fixed mu must be positive")
    b, S = _common(sys, beta, theta, margin, gain)
    n = sys.dims.n
    g = b.var("gamma", (1, 1), SCALAR) if gamma is None else gamma
    z = b.var("zeta", (1, 1), SCALAR) if mu is None else mu ** 2
    b.constraints.append(_observer_blocks(sys, beta, g, z, S, gain))
    _spd(b, n, theta)
    if gamma is None:
        b.scalar_positive("gamma>0", "gamma")
        b.objective.append(("gamma", np.array([[-1.0]])))
    if mu is None:
        b.scalar_positive("zeta>0", "zeta")
        if gamma is not None:
            b.objective.append(("zeta", np.array([[1.0]])))
    return b.build(kind="theorem1", beta=beta, gamma=gamma, mu=mu, theta=theta,
                   gain=None if gain is None else np.atleast_2d(np.asarray(gain, dtype=float)).reshape(n, -1).tolist())


def build_theorem2(sys: UncertainSystem, beta: float, lam: float, *, theta: float | None = None,
                   margin: float = DEFAULT_MARGIN, validate: bool = True) -> LmiProblem:
    """Pareto scalarisation ``min lam*(-gamma) + (1-lam)*zeta``."""
    if not 0.0 <= lam <= 1.0:
        raise LambdaOutOfRange(f"lambda must lie in [0, 1], got {lam}")
    if validate:
        validate_system(sys)
    b, S = _common(sys, beta, theta, margin, None)
    n = sys.dims.n
    b.var("gamma", (1, 1), SCALAR)
    b.var("zeta", (1, 1), SCALAR)
    b.constraints.append(_observer_blocks(sys, beta, "gamma", "zeta", S))
    _spd(b, n, theta)
    b.scalar_positive("gamma>0", "gamma")
    b.scalar_positive("zeta>0", "zeta")
    if lam:
        b.objective.append(("gamma", np.array([[-lam]])))
    if lam != 1.0:
        b.objective.append(("zeta", np.array([[1.0 - lam]])))
    return b.build(kind="theorem2", beta=beta, lam=lam, theta=theta)


def build_corollary1(sys: UncertainSystem, beta: float, weights, mu: float | None = None, *,
                     theta: float | None = None, margin: float = DEFAULT_MARGIN,
                     scalar_gamma: bool = False, validate: bool = True) -> LmiProblem:
    """Element-wise admissible Lipschitz matrix: ``max omega`` s.t. ``c_ij Gamma_ij > omega``.

    ``scalar_gamma=True`` restricts ``Gamma`` to ``gamma I`` (only the
    diagonal weights are then used); this is the consistency check against
    :func:`build_theorem1`.
    """
    n = sys.dims.n
    c = np.asarray(weights, dtype=float) * np.ones((n, n))
    if c.shape != (n, n):
        raise ShapeMismatch(f"weights must be {n}x{n}")
    if not np.all(c > 0):
        raise NonpositiveWeight("all weights c_ij must be positive")
    if validate:
        validate_system(sys)
    b, S = _common(sys, beta, theta, margin, None)
    z = b.var("zeta", (1, 1), SCALAR) if mu is None else mu ** 2
    b.var("omega", (1, 1), SCALAR)
    if scalar_gamma:
        b.var("gamma", (1, 1), SCALAR)
        b.constraints.append(_observer_blocks(sys, beta, "gamma", z, S))
        for i in range(n):
            b.scalars.append(ScalarConstraint(
                f"c{i + 1}{i + 1}*gamma>omega",
                (("gamma", np.array([[c[i, i]]])), ("omega", np.array([[-1.0]])))))
        b.scalar_positive("gamma>0", "gamma")
    else:
        b.var("Gamma", (n, n), ENTRYWISE_POSITIVE)
        b.constraints.append(_observer_blocks(sys, beta, None, z, S, gamma_matrix="Gamma"))
        for i in range(n):
            for j in range(n):
                E = np.zeros((n, n))
                E[i, j] = c[i, j]
                b.scalars.append(ScalarConstraint(
                    f"c{i + 1}{j + 1}*Gamma{i + 1}{j + 1}>omega",
                    (("Gamma", E), ("omega", np.array([[-1.0]])))))
                E1 = np.zeros((n, n))
                E1[i, j] = 1.0
                b.scalars.append(ScalarConstraint(f"Gamma{i + 1}{j + 1}>0", (("Gamma", E1),)))
    _spd(b, n, theta)
    b.scalar_positive("omega>0", "omega")
    if mu is None:
        b.scalar_positive("zeta>0", "zeta")
    b.objective.append(("omega", np.array([[-1.0]])))
    return b.build(kind="corollary1", beta=beta, mu=mu, theta=theta, weights=c.tolist(),
                   scalar_gamma=scalar_gamma)
