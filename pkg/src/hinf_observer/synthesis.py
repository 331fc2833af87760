"""Observer synthesis drivers and parameter sweeps."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import lmi
from .errors import Infeasible, NumericalFailure, ObserverError
from .sdp import OPTIMAL, SolveOptions, SolveReport, lower, solve
from .system_model import UncertainSystem, validate_system

DEFAULT_LAMBDA_GRID = tuple(np.round(np.linspace(0.0, 1.0, 101), 12))
DEFAULT_BETA_GRID = tuple(np.round(np.arange(0.0, 1.2 + 1e-9, 0.05), 12))


@dataclass(frozen=True)
class SynthesisOptions:
    beta: float = 0.35
    lam: float = 0.95
    theta: float | None = None
    margin: float = lmi.DEFAULT_MARGIN
    solver: SolveOptions = field(default_factory=SolveOptions)

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0.0 <= self.lam <= 1.0:
            raise lmi.LambdaOutOfRange(f"lambda must lie in [0, 1], got {self.lam}")
        if self.theta is not None and self.theta < 0:
            raise ValueError("theta must be nonnegative")

    def replace(self, **kw) -> "SynthesisOptions":
        d = dict(beta=self.beta, lam=self.lam, theta=self.theta, margin=self.margin,
                 solver=self.solver)
        d.update(kw)
        return SynthesisOptions(**d)


@dataclass(frozen=True)
class MatrixLipschitz:
    Gamma: np.ndarray | None
    Gamma_star: np.ndarray
    omega_star: float | None = None


@dataclass(eq=False)
class SynthesisResult:
    kind: str
    P1: np.ndarray
    P2: np.ndarray
    G: np.ndarray
    L: np.ndarray
    gamma_star: float
    mu_star: float
    sigma_max_L: float
    report: SolveReport
    residual: lmi.LmiResidual
    beta: float
    lam: float | None = None
    Gamma_star: np.ndarray | None = None
    omega_star: float | None = None

    @property
    def zeta_star(self) -> float:
        return self.mu_star ** 2

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind, "status": self.report.status, "beta": self.beta, "lambda": self.lam,
            "gamma_star": self.gamma_star, "mu_star": self.mu_star, "zeta_star": self.zeta_star,
            "sigma_max_L": self.sigma_max_L,
            "L": matrix_to_json(self.L), "P1": matrix_to_json(self.P1),
            "P2": matrix_to_json(self.P2), "G": matrix_to_json(self.G),
            "residuals": self.residual.values, "feasible": self.residual.feasible,
            "solver": self.report.to_dict(),
        }
        if self.Gamma_star is not None:
            d["Gamma_star"] = matrix_to_json(self.Gamma_star)
            d["omega_star"] = self.omega_star
        return d


def matrix_to_json(M) -> dict:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return {"rows": M.shape[0], "cols": M.shape[1], "data": M.ravel().tolist()}


def matrix_from_json(d) -> np.ndarray:
    if isinstance(d, dict):
        return np.array(d["data"], dtype=float).reshape(d["rows"], d["cols"])
    return np.atleast_2d(np.asarray(d, dtype=float))


def _solve(problem: lmi.LmiProblem, opts: SynthesisOptions, sys: UncertainSystem,
           check: bool = True) -> SolveReport:
    report = solve(lower(problem), opts.solver, check=False)
    if check and report.status != OPTIMAL:
        try:
            report.raise_for_status()
        except Infeasible as exc:
            eig = np.linalg.eigvals(sys.A)
            if np.any(eig.real >= 0):
                raise Infeasible(
                    f"{exc}; the x-part block needs A^T P2 + P2 A < 0, but A has an eigenvalue "
                    f"with real part {eig.real.max():.4g}", report, "observer (x-part)") from None
            raise
    return report


def _assemble(kind, problem, report, opts, gamma=None, mu=None, lam=None) -> SynthesisResult:
    a = report.assignment
    P1, P2 = a["P1"], a["P2"]
    if "G" in a:
        G = a["G"]
        L = np.linalg.solve(P1, G)
    else:
        L = np.atleast_2d(np.asarray(problem.meta["gain"], dtype=float))
        G = P1 @ L
    g = float(a["gamma"][0, 0]) if "gamma" in a else gamma
    z = float(a["zeta"][0, 0]) if "zeta" in a else (mu ** 2 if mu is not None else None)
    res = lmi.evaluate_residual(problem, a)
    return SynthesisResult(kind, P1, P2, G, L, g, math.sqrt(z) if z is not None else float("nan"),
                           float(np.linalg.norm(L, 2)), report, res, opts.beta, lam)


def max_lipschitz(sys: UncertainSystem, options: SynthesisOptions, mu: float) -> SynthesisResult:
    """Largest admissible Lipschitz constant at fixed decay rate and attenuation ``mu``."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    p = lmi.build_theorem1(sys, options.beta, None, mu, theta=options.theta, margin=options.margin)
    rep = _solve(p, options, sys)
    return _assemble("maxgamma", p, rep, options, mu=mu)


def check_feasibility(sys: UncertainSystem, options: SynthesisOptions, gamma: float, mu: float,
                      gain=None) -> SynthesisResult:
    """Find any observer certifying ``gamma``, ``mu`` and the decay rate.

    With ``gain`` given, the observer gain is fixed and only ``P1``, ``P2``
    are searched for.
    """
    if not (gamma > 0 and mu > 0):
        raise ValueError("gamma and mu must be positive")
    p = lmi.build_theorem1(sys, options.beta, gamma, mu, theta=options.theta,
                           margin=options.margin, gain=gain)
    rep = _solve(p, options, sys)
    return _assemble("feasibility", p, rep, options, gamma=gamma, mu=mu)


def pareto_point(sys: UncertainSystem, options: SynthesisOptions) -> SynthesisResult:
    p = lmi.build_theorem2(sys, options.beta, options.lam, theta=options.theta,
                           margin=options.margin)
    rep = _solve(p, options, sys)
    return _assemble("pareto", p, rep, options, lam=options.lam)


def elementwise_max(sys: UncertainSystem, options: SynthesisOptions, weights, mu: float,
                    scalar_gamma: bool = False) -> tuple[SynthesisResult, MatrixLipschitz]:
    """Maximise the weighted smallest entry of a matrix Lipschitz constant."""
    p = lmi.build_corollary1(sys, options.beta, weights, mu, theta=options.theta,
                             margin=options.margin, scalar_gamma=scalar_gamma)
    rep = _solve(p, options, sys)
    a = rep.assignment
    n = sys.dims.n
    Gs = a["gamma"][0, 0] * np.eye(n) if scalar_gamma else a["Gamma"]
    omega = float(a["omega"][0, 0])
    res = _assemble("elementwise", p, rep, options, gamma=float(np.linalg.norm(Gs, 2)), mu=mu)
    res.Gamma_star = Gs
    res.omega_star = omega
    return res, MatrixLipschitz(sys.Gamma_actual, Gs, omega)


# -- sweeps -----------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    beta: float
    lam: float
    gamma_star: float
    mu_star: float
    sigma_max_L: float
    status: str

    @property
    def feasible(self) -> bool:
        return self.status == OPTIMAL

    def row(self) -> list[str]:
        return [_fmt(self.beta), _fmt(self.lam), _fmt(self.gamma_star), _fmt(self.mu_star),
                _fmt(self.sigma_max_L), self.status]


CSV_COLUMNS = ["beta", "lambda", "gamma_star", "mu_star", "sigma_max_L", "status"]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _sweep_point(sys, opts: SynthesisOptions) -> SweepPoint:
    try:
        p = lmi.build_theorem2(sys, opts.beta, opts.lam, theta=opts.theta, margin=opts.margin,
                               validate=False)
        rep = solve(lower(p), opts.solver, check=False)
    except ObserverError as exc:  # build errors are per-point data too
        return SweepPoint(opts.beta, opts.lam, math.nan, math.nan, math.nan, f"error: {exc}")
    if rep.status != OPTIMAL:
        status = "infeasible" if rep.status == "infeasible" else rep.status
        return SweepPoint(opts.beta, opts.lam, math.nan, math.nan, math.nan, status)
    r = _assemble("pareto", p, rep, opts, lam=opts.lam)
    return SweepPoint(opts.beta, opts.lam, r.gamma_star, r.mu_star, r.sigma_max_L, OPTIMAL)


def _run_grid(sys, option_list: list[SynthesisOptions], workers: int | None) -> list[SweepPoint]:
    if workers and workers > 1 and len(option_list) > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(lambda o: _sweep_point(sys, o), option_list))
    return [_sweep_point(sys, o) for o in option_list]


@dataclass(frozen=True)
class ParetoCurve:
    beta: float
    points: tuple[SweepPoint, ...]

    def __len__(self):
        return len(self.points)

    @property
    def feasible_points(self) -> list[SweepPoint]:
        return [p for p in self.points if p.feasible]

    def monotonicity_violation(self) -> float:
        """Largest decrease of gamma* or mu* between consecutive feasible points (by lambda)."""
        pts = sorted(self.feasible_points, key=lambda p: p.lam)
        worst = 0.0
        for a, b in zip(pts, pts[1:]):
            worst = max(worst, a.gamma_star - b.gamma_star, a.mu_star - b.mu_star)
        return worst

    def is_monotone(self, tol: float = 1e-4) -> bool:
        return self.monotonicity_violation() <= tol

    def at(self, lam: float) -> SweepPoint:
        return min(self.points, key=lambda p: abs(p.lam - lam))

    def to_csv(self) -> str:
        return _to_csv(self.points)


@dataclass(frozen=True)
class Surface:
    betas: tuple[float, ...]
    lambdas: tuple[float, ...]
    cells: tuple[tuple[SweepPoint, ...], ...]  # indexed [beta][lambda]

    def field(self, name: str) -> np.ndarray:
        return np.array([[getattr(c, name) for c in row] for row in self.cells], dtype=float)

    def column(self, beta: float) -> tuple[SweepPoint, ...]:
        i = int(np.argmin(np.abs(np.asarray(self.betas) - beta)))
        return self.cells[i]

    def to_csv(self) -> str:
        return _to_csv([c for row in self.cells for c in row])


def _to_csv(points: Iterable[SweepPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for p in points:
        w.writerow(p.row())
    return buf.getvalue()


def pareto_sweep(sys: UncertainSystem, beta: float, lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
                 options: SynthesisOptions | None = None, workers: int | None = None) -> ParetoCurve:
    """One Pareto solve per lambda; infeasible points are kept as gaps."""
    validate_system(sys)
    base = (options or SynthesisOptions()).replace(beta=beta)
    for lam in lambda_grid:
        if not 0.0 <= lam <= 1.0:
            raise lmi.LambdaOutOfRange(f"lambda {lam} outside [0, 1]")
    pts = _run_grid(sys, [base.replace(lam=float(l)) for l in lambda_grid], workers)
    return ParetoCurve(beta, tuple(pts))


def surface_sweep(sys: UncertainSystem, beta_grid: Sequence[float] = DEFAULT_BETA_GRID,
                  lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
                  options: SynthesisOptions | None = None, workers: int | None = None) -> Surface:
    """Pareto points over a (beta, lambda) grid.

    ``beta = 0`` is not a valid decay rate; such cells are reported with
    status ``"invalid-beta"`` rather than raising.
    """
    validate_system(sys)
    base = options or SynthesisOptions()
    opts, slots = [], []
    rows: list[list[SweepPoint | None]] = []
    for i, b in enumerate(beta_grid):
        row: list[SweepPoint | None] = []
        for j, lam in enumerate(lambda_grid):
            if not b > 0:
                row.append(SweepPoint(float(b), float(lam), math.nan, math.nan, math.nan, "invalid-beta"))
            else:
                row.append(None)
                opts.append(base.replace(beta=float(b), lam=float(lam)))
                slots.append((i, j))
        rows.append(row)
    for (i, j), pt in zip(slots, _run_grid(sys, opts, workers)):
        rows[i][j] = pt
    return Surface(tuple(float(b) for b in beta_grid), tuple(float(l) for l in lambda_grid),
                   tuple(tuple(r) for r in rows))


__all__ = [
    "SynthesisOptions", "SynthesisResult", "MatrixLipschitz", "ParetoCurve", "Surface",
    "SweepPoint", "max_lipschitz", "check_feasibility", "pareto_point", "elementwise_max",
    "pareto_sweep", "surface_sweep", "matrix_to_json", "matrix_from_json", "Infeasible",
    "NumericalFailure",
]
