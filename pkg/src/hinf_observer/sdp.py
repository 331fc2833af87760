"""Standard-form lowering of :class:`~hinf_observer.lmi.LmiProblem` and the solve contract.

Standard form over the stacked coordinate vector ``x``::

    minimize   c^T x
    subject to F0_b + sum_i x_i F_{b,i} <= -eps I      for every block b
               g_r^T x + h_r            <= -eps        for every scalar row r
               |x_i| <= radius                         (optional)

Symmetric matrix variables contribute one coordinate per upper-triangular
entry. The reference backend hands this form to CVXOPT's conic solver;
anything implementing ``solve(sdp, options) -> SolveReport`` can replace it.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible, NumericalFailure
from .lmi import LmiProblem, MatrixVariable

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical-failure"
ITERATION_LIMIT = "iteration-limit"

FEASIBILITY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class SdpBlock:
    name: str
    F0: np.ndarray
    F: np.ndarray  # (n_coords, size, size)

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.F0 + np.tensordot(x, self.F, axes=1)


@dataclass(frozen=True, eq=False)
class StandardSdp:
    c: np.ndarray
    blocks: tuple[SdpBlock, ...]
    lin_names: tuple[str, ...]
    lin_G: np.ndarray  # (rows, n_coords)
    lin_h: np.ndarray
    layout: tuple[tuple[MatrixVariable, int], ...]  # (variable, offset)
    margin: float

    @property
    def n_coords(self) -> int:
        return int(self.c.size)

    def assemble(self, x) -> dict[str, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return {v.name: v.from_coords(x[off:off + v.n_coords]) for v, off in self.layout}

    def flatten(self, assignment) -> np.ndarray:
        x = np.zeros(self.n_coords)
        for v, off in self.layout:
            x[off:off + v.n_coords] = v.to_coords(assignment[v.name])
        return x

    def residuals(self, x) -> dict[str, float]:
        """Same quantities as :func:`~hinf_observer.lmi.evaluate_residual`."""
        out = {b.name: float(np.linalg.eigvalsh(b.value(x)).max()) for b in self.blocks}
        lin = self.lin_G @ x + self.lin_h
        out.update(dict(zip(self.lin_names, lin.tolist())))
        return out

    def to_dict(self) -> dict:
        return {
            "margin": self.margin,
            "c": self.c.tolist(),
            "layout": [{"name": v.name, "offset": off, "n_coords": v.n_coords,
                        "structure": v.structure, "shape": list(v.shape)} for v, off in self.layout],
            "blocks": [{"name": b.name, "size": int(b.F0.shape[0]), "F0": b.F0.tolist(),
                        "F": b.F.tolist()} for b in self.blocks],
            "linear": {"names": list(self.lin_names), "G": self.lin_G.tolist(),
                       "h": self.lin_h.tolist()},
        }


def lower(problem: LmiProblem) -> StandardSdp:
    layout, off = [], 0
    for v in problem.variables:
        layout.append((v, off))
        off += v.n_coords
    n_coords = off

    zero = problem.zero_assignment()
    basis = []  # one assignment per coordinate
    for v, _ in layout:
        for E in v.basis():
            a = dict(zero)
            a[v.name] = E
            basis.append((v.name, a))

    blocks = []
    for con in problem.constraints:
        F0 = con.normalized(zero)
        F = np.zeros((n_coords,) + F0.shape)
        for i, (name, a) in enumerate(basis):
            if name in con.variables:
                F[i] = con.normalized(a) - F0
        blocks.append(SdpBlock(con.name, F0, F))

    names, G, h = [], [], []
    for s in problem.scalar_constraints:
        h0 = -s.evaluate(zero)
        names.append(s.name)
        h.append(h0)
        G.append([-s.evaluate(a) - h0 for _, a in basis])
    lin_G = np.array(G, dtype=float).reshape(len(names), n_coords)

    c = np.array([problem.objective_value(a) for _, a in basis]) if basis else np.zeros(0)
    return StandardSdp(c, tuple(blocks), tuple(names), lin_G, np.array(h, dtype=float),
                       tuple(layout), problem.margin)


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 200
    tolerance: float = 1e-8
    feasibility_radius: float | None = None


@dataclass(eq=False)
class SolveReport:
    status: str
    assignment: dict[str, np.ndarray] | None
    objective: float | None
    iterations: int
    wall_time: float
    feasibility_radius: float | None
    reason: str = ""
    backend_status: str = ""
    backend_objective: float | None = None
    residuals: dict[str, float] = field(default_factory=dict)

    @property
    def worst(self) -> tuple[str, float] | None:
        if not self.residuals:
            return None
        k = max(self.residuals, key=self.residuals.get)
        return k, self.residuals[k]

    def raise_for_status(self) -> "SolveReport":
        if self.status == OPTIMAL:
            return self
        worst = self.worst
        where = f"; worst constraint {worst[0]} at {worst[1]:.3g}" if worst else ""
        if self.status == INFEASIBLE:
            raise Infeasible(f"LMI problem infeasible ({self.reason}){where}", self,
                             worst[0] if worst else None)
        raise NumericalFailure(f"solver returned {self.status} ({self.reason}){where}", self)

    def to_dict(self) -> dict:
        return {"status": self.status, "objective": self.objective, "iterations": self.iterations,
                "wall_time": self.wall_time, "feasibility_radius": self.feasibility_radius,
                "reason": self.reason, "backend_status": self.backend_status,
                "residuals": self.residuals}


def _svec_cols(F: np.ndarray) -> list:
    # CVXOPT expects column-major full matrices; it reads the lower triangle
    return [F[i].ravel(order="F").tolist() for i in range(F.shape[0])]


def solve(sdp: StandardSdp, options: SolveOptions | None = None, check: bool = True) -> SolveReport:
    """Solve with the CVXOPT reference backend.

    With ``check=True`` a non-optimal outcome raises :class:`Infeasible` or
    :class:`NumericalFailure`; sweep drivers pass ``check=False`` and read
    the status instead.
    """
    from cvxopt import matrix, solvers

    opts = options or SolveOptions()
    n = sdp.n_coords
    eps = sdp.margin
    t0 = time.perf_counter()

    Gl_rows = [row for row in sdp.lin_G]
    hl = [-h - eps for h in sdp.lin_h]
    if opts.feasibility_radius is not None:
        r = float(opts.feasibility_radius)
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            Gl_rows += [e, -e]
            hl += [r, r]
    kw = {}
    if Gl_rows:
        kw["Gl"] = matrix(np.array(Gl_rows, dtype=float).reshape(len(Gl_rows), n))
        kw["hl"] = matrix(np.array(hl, dtype=float))
    if sdp.blocks:
        kw["Gs"] = [matrix(np.array(_svec_cols(b.F), dtype=float).T.reshape(-1, n))
                    if n else None for b in sdp.blocks]
        kw["hs"] = [matrix(-b.F0 - eps * np.eye(b.F0.shape[0])) for b in sdp.blocks]
    cvx_opts = {"show_progress": False, "maxiters": int(opts.max_iters),
                "abstol": opts.tolerance, "reltol": opts.tolerance,
                "feastol": opts.tolerance}
    try:
        sol = solvers.sdp(matrix(sdp.c.astype(float)), options=cvx_opts, **kw)
    except (ArithmeticError, ValueError) as exc:
        report = SolveReport(NUMERICAL_FAILURE, None, None, 0, time.perf_counter() - t0,
                             opts.feasibility_radius, reason=str(exc), backend_status="exception")
        if check:
            report.raise_for_status()
        return report

    wall = time.perf_counter() - t0
    iters = int(sol.get("iterations") or 0)
    bstatus = sol["status"]
    x = np.array(sol["x"]).ravel() if sol.get("x") is not None else None
    report = SolveReport(NUMERICAL_FAILURE, None, None, iters, wall, opts.feasibility_radius,
                         backend_status=bstatus,
                         backend_objective=sol.get("primal objective"))

    if x is not None and np.all(np.isfinite(x)):
        report.residuals = sdp.residuals(x)
        feasible = max(report.residuals.values(), default=-np.inf) < -eps + FEASIBILITY_TOL
    else:
        feasible = False

    if bstatus == "primal infeasible":
        report.status, report.reason = INFEASIBLE, "dual improving ray (infeasibility certificate)"
    elif bstatus == "dual infeasible":
        report.status, report.reason = NUMERICAL_FAILURE, "objective unbounded below"
    elif feasible and (bstatus == "optimal" or _gap_ok(sol)):
        report.status = OPTIMAL
        report.reason = "converged" if bstatus == "optimal" else "converged to reduced accuracy"
    elif bstatus == "optimal":
        report.status, report.reason = NUMERICAL_FAILURE, "backend optimum fails residual check"
    elif iters >= opts.max_iters:
        report.status, report.reason = ITERATION_LIMIT, f"stopped after {iters} iterations"
    elif (sol.get("residual as primal infeasibility certificate") or np.inf) < 1e-4:
        report.status, report.reason = INFEASIBLE, "approximate infeasibility certificate"
    else:
        report.status, report.reason = INFEASIBLE, "residual stalled above tolerance"

    if report.status == OPTIMAL:
        report.assignment = sdp.assemble(x)
        report.objective = float(sdp.c @ x)
    if check:
        report.raise_for_status()
    return report


def _gap_ok(sol) -> bool:
    gap = sol.get("relative gap")
    return gap is not None and gap < 1e-5
