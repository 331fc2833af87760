"""Command-line front end.

Exit codes: 0 success, 1 error (diagnostic on stderr), 2 LMI infeasible.
Standard output carries JSON only.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import problem_file, robustness, simulation, synthesis
from .errors import Infeasible, ObserverError
from .lmi import build_corollary1, build_theorem1, build_theorem2
from .synthesis import matrix_from_json
from .system_model import validate_system

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class StageError(Exception):
    def __init__(self, stage: str, exc: BaseException):
        self.stage = stage
        self.exc = exc
        super().__init__(f"{stage}: {exc}")


def _stage(name, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except (Infeasible, StageError):
        raise
    except Exception as exc:  # noqa: BLE001 - reported with the stage name
        raise StageError(name, exc) from exc


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _workers() -> int | None:
    v = os.environ.get("HINF_OBSERVER_THREADS")
    return int(v) if v else None


def parse_grid(spec: str) -> list[float]:
    """``"a:b:count"`` (inclusive linspace) or a comma-separated list."""
    spec = spec.strip()
    if not spec:
        return []
    if ":" in spec:
        a, b, c = spec.split(":")
        return [float(v) for v in np.round(np.linspace(float(a), float(b), int(c)), 12)]
    return [float(v) for v in spec.split(",")]


# -- commands -----------------------------------------------------------------

def cmd_synth(args) -> int:
    prob = _stage("load", problem_file.load, args.file)
    ov = prob.option_values
    opts = prob.options
    if args.beta is not None:
        opts = opts.replace(beta=args.beta)
    if args.lam is not None:
        opts = opts.replace(lam=args.lam)
    if args.theta is not None:
        opts = opts.replace(theta=args.theta)
    gamma = args.gamma if args.gamma is not None else ov.get("gamma")
    mu = args.mu if args.mu is not None else ov.get("mu")
    sys_ = prob.system
    _stage("validate", validate_system, sys_)

    if args.dump_lmi:
        def dump():
            if args.mode == "pareto":
                p = build_theorem2(sys_, opts.beta, opts.lam, theta=opts.theta, margin=opts.margin)
            elif args.mode == "elementwise":
                p = build_corollary1(sys_, opts.beta, _weights(args, ov, sys_), mu,
                                     theta=opts.theta, margin=opts.margin)
            else:
                p = build_theorem1(sys_, opts.beta, gamma if args.mode == "feasibility" else None,
                                   mu, theta=opts.theta, margin=opts.margin)
            Path(args.dump_lmi).write_text(p.to_json(indent=1))
        _stage("build", dump)

    try:
        if args.mode == "pareto":
            res = _stage("solve", synthesis.pareto_point, sys_, opts)
        elif args.mode == "maxgamma":
            if mu is None:
                raise StageError("arguments", ValueError("--mode maxgamma needs --mu"))
            res = _stage("solve", synthesis.max_lipschitz, sys_, opts, mu)
        elif args.mode == "feasibility":
            if gamma is None or mu is None:
                raise StageError("arguments", ValueError("--mode feasibility needs --gamma and --mu"))
            gain = None
            if args.gain is not None:
                gain = np.asarray(parse_grid(args.gain), dtype=float)
            elif args.gain_from:
                gain = _stage("load", problem_file.load_result, args.gain_from)["L"]
            res = _stage("solve", synthesis.check_feasibility, sys_, opts, gamma, mu, gain)
        else:
            if mu is None:
                raise StageError("arguments", ValueError("--mode elementwise needs --mu"))
            res, _ = _stage("solve", synthesis.elementwise_max, sys_, opts,
                            _weights(args, ov, sys_), mu)
    except Infeasible as exc:
        out = {"status": "infeasible", "mode": args.mode, "message": str(exc)}
        if exc.blocking:
            out["blocking_constraint"] = exc.blocking
        if exc.report is not None:
            out["solver"] = exc.report.to_dict()
        _emit(out)
        return EXIT_INFEASIBLE
    d = res.to_dict()
    d["mode"] = args.mode
    if args.out:
        Path(args.out).write_text(json.dumps(d, indent=2) + "\n")
    _emit(d)
    return EXIT_OK


def _weights(args, ov, sys_):
    if args.weights:
        w = json.loads(args.weights)
        return matrix_from_json(w) if isinstance(w, dict) else np.asarray(w, dtype=float)
    if "weights" in ov:
        return matrix_from_json(ov["weights"])
    return np.ones((sys_.dims.n, sys_.dims.n))


def cmd_sweep(args) -> int:
    prob = _stage("load", problem_file.load, args.file)
    lams = _stage("arguments", parse_grid, args.lambda_grid)
    betas = _stage("arguments", parse_grid, args.beta_grid) if args.beta_grid else [prob.options.beta]
    surf = _stage("solve", synthesis.surface_sweep, prob.system, betas, lams, prob.options,
                  _workers())
    text = surf.to_csv()
    _stage("write", Path(args.out).write_text, text)
    cells = [c for row in surf.cells for c in row]
    _emit({"out": args.out, "rows": len(cells),
           "feasible": sum(c.feasible for c in cells),
           "infeasible": sum(c.status == "infeasible" for c in cells)})
    return EXIT_OK


def cmd_simulate(args) -> int:
    prob = _stage("load", problem_file.load, args.file)
    result = _stage("load", problem_file.load_result, args.gain_from)
    L = result["L"]
    beta = result.get("beta") or prob.options.beta
    sc = _stage("scenario", prob.scenario, L)
    trace = _stage("simulate", simulation.integrate, sc)
    _stage("write", Path(args.out).write_text, trace.to_csv())

    summary = {"out": args.out, "t_final": sc.t_final, "dt": sc.dt,
               "e0_norm": float(np.linalg.norm(trace.e[0])),
               "e_final_norm": float(np.linalg.norm(trace.e[-1]))}
    nominal = _stage("simulate", prob.scenario, L, disturbance={"kind": "zero"},
                     uncertainty={"kind": "zero"})
    nominal_trace = _stage("simulate", simulation.integrate, nominal)
    dc = simulation.decay_check(nominal_trace, beta, result["P1"])
    summary["decay_check"] = {"beta": beta, "passed": dc.passed, "worst_ratio": dc.worst_ratio,
                              "worst_time": dc.worst_time}
    if not sc.disturbance_free:
        n = prob.system.dims.n
        zero_ic = _stage("simulate", prob.scenario, L, x0=[0.0] * n, xhat0=[0.0] * n)
        gain = simulation.l2_gain_estimate([_stage("simulate", simulation.integrate, zero_ic)])
        mu_star = result.get("mu_star")
        summary["l2_gain"] = {"estimate": gain, "mu_star": mu_star,
                              "within_bound": bool(mu_star is not None and gain <= mu_star),
                              "note": "finite-horizon trapezoidal estimate from zero initial state"}
    _emit(summary)
    return EXIT_OK


def cmd_margins(args) -> int:
    result = _stage("load", problem_file.load_result, args.result)
    prob = _stage("load", problem_file.load, args.file)
    sys_ = prob.system
    gamma_actual = args.gamma_actual if args.gamma_actual is not None else sys_.gamma_actual
    out = {"norm": robustness.norm_margin(gamma_actual, result["gamma_star"]).to_dict()}
    if result.get("Gamma_star") is not None and sys_.Gamma_actual is not None:
        em = _stage("margins", robustness.elementwise_margin, sys_.Gamma_actual, result["Gamma_star"])
        out["elementwise"] = em.to_dict()
        if args.interval_csv:
            _stage("write", Path(args.interval_csv).write_text, em.to_csv())
            out["elementwise"]["csv"] = args.interval_csv
    _emit(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hinf-observer", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="synthesise an observer gain")
    s.add_argument("file")
    s.add_argument("--mode", choices=["maxgamma", "feasibility", "pareto", "elementwise"],
                   default="pareto")
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--beta", type=float)
    s.add_argument("--theta", type=float)
    s.add_argument("--gamma", type=float, help="fixed Lipschitz constant (feasibility)")
    s.add_argument("--mu", type=float, help="fixed attenuation level")
    s.add_argument("--weights", help="JSON matrix of element-wise weights")
    s.add_argument("--gain", help="fixed observer gain, comma separated (feasibility)")
    s.add_argument("--gain-from", help="result JSON whose L is held fixed (feasibility)")
    s.add_argument("--out", help="also write the result JSON here")
    s.add_argument("--dump-lmi", help="write the assembled LMI problem as JSON")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("sweep", help="Pareto curve / (beta, lambda) surface to CSV")
    s.add_argument("file")
    s.add_argument("--lambda-grid", default="0:1:101")
    s.add_argument("--beta-grid", help="default: the file's beta")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("simulate", help="simulate plant and observer, write a CSV trace")
    s.add_argument("file")
    s.add_argument("--gain-from", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("margins", help="norm-wise and element-wise uncertainty margins")
    s.add_argument("result")
    s.add_argument("file")
    s.add_argument("--gamma-actual", type=float)
    s.add_argument("--interval-csv")
    s.set_defaults(func=cmd_margins)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        inner = exc.exc
        if isinstance(inner, jsonschema.ValidationError):
            where = "/".join(str(p) for p in inner.absolute_path) or "<root>"
            msg = f"schema violation at {where}: {inner.message}"
        else:
            msg = f"{type(inner).__name__}: {inner}"
        print(f"error [{exc.stage}]: {msg}", file=sys.stderr)
        return EXIT_ERROR
    except ObserverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
