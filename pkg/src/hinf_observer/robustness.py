"""Guaranteed margins against additive nonlinear uncertainty.

Norm-wise: an observer certified for Lipschitz constant ``gamma_star``
tolerates any additive ``dphi`` whose Lipschitz constant is at most
``gamma_star - gamma`` (equivalently a Jacobian norm bound).

Element-wise: with a matrix Lipschitz optimum ``Gamma_star``, any perturbed
matrix constant with ``|Gamma_delta| <= n**(-3/4) * Gamma_star`` is
tolerated, which gives per-entry intervals for the perturbation.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import NonvanishingOrigin, PreconditionViolated, ShapeMismatch
from .system_model import (Box, UncertainSystem, estimate_matrix_lipschitz, max_ratio,
                           sample_pairs)


@dataclass(frozen=True)
class NormMargin:
    gamma_actual: float
    gamma_star: float
    delta_gamma: float

    @property
    def guaranteed(self) -> bool:
        return self.delta_gamma >= 0

    @property
    def jacobian_norm_bound(self) -> float:
        """Admissible spectral norm of the Jacobian of the perturbation."""
        return self.delta_gamma

    def to_dict(self) -> dict:
        return {"type": "norm", "gamma_actual": self.gamma_actual, "gamma_star": self.gamma_star,
                "delta_gamma": self.delta_gamma, "jacobian_norm_bound": self.jacobian_norm_bound,
                "guaranteed": self.guaranteed,
                "note": "" if self.guaranteed else "no guaranteed margin"}


def norm_margin(gamma_actual: float, gamma_star: float) -> NormMargin:
    if gamma_actual < 0 or gamma_star < 0:
        raise ValueError("Lipschitz constants must be nonnegative")
    return NormMargin(float(gamma_actual), float(gamma_star), float(gamma_star) - float(gamma_actual))


@dataclass(frozen=True)
class HadamardCheck:
    holds: bool
    min_eigenvalue: float
    witness: np.ndarray  # U U^T o nI - T T^T

    def __bool__(self):
        return self.holds


def hadamard_bound_holds(T, U, tol: float = 1e-10) -> HadamardCheck:
    """Check ``T T^T <= (U U^T) o (n I)`` for ``|T| <= U`` entrywise."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if T.shape != U.shape or T.shape[0] != T.shape[1]:
        raise ShapeMismatch(f"T and U must be equal square shapes, got {T.shape} and {U.shape}")
    if np.any(np.abs(T) > U):
        i, j = np.argwhere(np.abs(T) > U)[0]
        raise PreconditionViolated(f"|t_{i + 1}{j + 1}| = {abs(T[i, j]):.6g} > u = {U[i, j]:.6g}")
    n = T.shape[0]
    W = (U @ U.T) * (n * np.eye(n)) - T @ T.T
    lam = float(np.linalg.eigvalsh((W + W.T) / 2).min())
    return HadamardCheck(lam >= -tol, lam, W)


@dataclass(frozen=True)
class ElementwiseMargin:
    Gamma_actual: np.ndarray
    Gamma_star: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    trials: int = 0
    worst_ratio: float = 0.0  # max sigma(Gamma_delta) / sigma(Gamma_star) over trials

    @property
    def scale(self) -> float:
        return self.Gamma_star.shape[0] ** -0.75

    def admits(self, Gamma_delta) -> bool:
        """Whether ``|Gamma_delta| <= n^(-3/4) Gamma_star`` entrywise."""
        return bool(np.all(np.abs(Gamma_delta) <= self.scale * self.Gamma_star * (1 + 1e-12)))

    def to_dict(self) -> dict:
        return {"type": "elementwise", "Gamma_actual": self.Gamma_actual.tolist(),
                "Gamma_star": self.Gamma_star.tolist(), "lower": self.lo.tolist(),
                "upper": self.hi.tolist(), "trials": self.trials, "worst_ratio": self.worst_ratio}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "gamma", "gamma_star", "lower", "upper"])
        n = self.lo.shape[0]
        for i in range(n):
            for j in range(n):
                w.writerow([i + 1, j + 1] + [format(float(v), ".17g") for v in
                           (self.Gamma_actual[i, j], self.Gamma_star[i, j], self.lo[i, j], self.hi[i, j])])
        return buf.getvalue()


def sample_admissible(Gamma_star: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random ``Gamma_delta`` with ``|Gamma_delta| <= n^(-3/4) Gamma_star``.

    A quarter of the draws sit on the boundary (all entries at their bound,
    random signs), where the inequality is tightest.
    """
    n = Gamma_star.shape[0]
    bound = n ** -0.75 * Gamma_star
    signs = rng.choice([-1.0, 1.0], size=bound.shape)
    if rng.random() < 0.25:
        return signs * bound
    return signs * bound * rng.random(bound.shape)


def elementwise_margin(Gamma_actual, Gamma_star, trials: int = 200, seed: int = 0) -> ElementwiseMargin:
    G = np.atleast_2d(np.asarray(Gamma_actual, dtype=float))
    Gs = np.atleast_2d(np.asarray(Gamma_star, dtype=float))
    if G.shape != Gs.shape or G.shape[0] != G.shape[1]:
        raise ShapeMismatch(f"Gamma {G.shape} and Gamma_star {Gs.shape} must be equal square shapes")
    if np.any(Gs < 0):
        raise ValueError("Gamma_star must be entrywise nonnegative")
    s = G.shape[0] ** -0.75
    lo = -s * Gs - G
    hi = s * Gs - G
    rng = np.random.default_rng(seed)
    top = np.linalg.norm(Gs, 2)
    worst = 0.0
    for _ in range(trials):
        Gd = sample_admissible(Gs, rng)
        sd = np.linalg.norm(Gd, 2)
        if sd > top + 1e-10:
            raise AssertionError(f"sigma_max(Gamma_delta) = {sd} exceeds sigma_max(Gamma_star) = {top}")
        if top > 0:
            worst = max(worst, sd / top)
    return ElementwiseMargin(G, Gs, lo, hi, trials, worst)


@dataclass(frozen=True)
class Certification:
    certified: bool
    estimate: float | np.ndarray
    bound: float | np.ndarray
    violating_pair: tuple | None = None

    def __bool__(self):
        return self.certified

    def to_dict(self) -> dict:
        d = {"certified": self.certified, "estimate": np.asarray(self.estimate).tolist(),
             "bound": np.asarray(self.bound).tolist()}
        if self.violating_pair is not None:
            d["violating_pair"] = [np.asarray(x).tolist() for x in self.violating_pair]
        return d


def verify_uncertain_nonlinearity(sys: UncertainSystem, delta_phi, margin, region=None,
                                  samples: int = 10_000, seed: int = 0) -> Certification:
    """Is the additive perturbation ``delta_phi`` covered by ``margin``?

    Norm margins compare the sampled Lipschitz ratio of ``delta_phi`` with
    ``delta_gamma``. Element-wise margins estimate a matrix Lipschitz
    constant of ``phi + delta_phi`` and require it to sit inside
    ``n^(-3/4) Gamma_star`` entrywise.
    """
    n = sys.dims.n
    box = Box.coerce(region if region is not None else sys.region, n)
    u = sys.u_nominal
    if np.linalg.norm(np.asarray(delta_phi(np.zeros(n), u), dtype=float)) > 1e-9:
        raise NonvanishingOrigin("delta_phi(0, u) must vanish")
    rng = np.random.default_rng(seed)
    if isinstance(margin, NormMargin):
        x1, x2 = sample_pairs(box, samples, rng)
        est, pair = max_ratio(delta_phi, x1, x2, u)
        ok = est <= margin.delta_gamma * (1 + 1e-9) and margin.delta_gamma >= 0
        return Certification(bool(ok), est, margin.delta_gamma, None if ok else pair)
    if isinstance(margin, ElementwiseMargin):
        def perturbed(x, uu):
            return np.asarray(sys.phi(x, uu)) + np.asarray(delta_phi(x, uu))
        Gd = estimate_matrix_lipschitz(sys.with_phi(perturbed), box, samples, seed)
        bound = margin.scale * margin.Gamma_star
        ok = margin.admits(Gd)
        pair = None
        if not ok:
            i, j = np.argwhere(np.abs(Gd) > bound * (1 + 1e-12))[0]
            pair = ((int(i) + 1, int(j) + 1), float(Gd[i, j]), float(bound[i, j]))
        return Certification(ok, Gd, bound, pair)
    raise TypeError(f"unsupported margin type {type(margin).__name__}")
