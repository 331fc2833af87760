"""Reading problem files and synthesis results from JSON."""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import nonlinearities
from .sdp import SolveOptions
from .simulation import Scenario, disturbance
from .synthesis import SynthesisOptions, matrix_from_json
from .system_model import Box, UncertainSystem, UncertaintyRealization


def schema() -> dict:
    return json.loads(resources.files("hinf_observer").joinpath("data/problem.schema.json").read_text())


def example_path() -> Path:
    return Path(str(resources.files("hinf_observer").joinpath("data/paper_example.json")))


@dataclass
class ProblemFile:
    raw: dict[str, Any]
    system: UncertainSystem
    options: SynthesisOptions

    @property
    def option_values(self) -> dict[str, Any]:
        return self.raw.get("options", {})

    def scenario(self, L, **overrides) -> Scenario:
        sc = dict(self.raw.get("scenario", {}))
        sc.update(overrides)
        return scenario_from_dict(self.system, L, sc)


def _system(d: dict) -> UncertainSystem:
    mats = {k: matrix_from_json(d[k]) for k in ("A", "B", "C", "D", "M1", "N1", "M2", "N2", "H")}
    n = mats["A"].shape[0]
    region = None
    if "region" in d:
        region = Box.coerce((d["region"]["lo"], d["region"]["hi"]), n)
    return UncertainSystem(
        **mats,
        phi=nonlinearities.from_dict(d["phi"], n),
        gamma_actual=d["gamma_actual"],
        Gamma_actual=matrix_from_json(d["Gamma_actual"]) if "Gamma_actual" in d else None,
        region=region,
        u_nominal=np.asarray(d.get("u_nominal", []), dtype=float),
    )


def _options(d: dict) -> SynthesisOptions:
    solver = SolveOptions(**d.get("solver", {}))
    kw = {"solver": solver}
    for src, dst in (("beta", "beta"), ("lambda", "lam"), ("theta", "theta"), ("margin", "margin")):
        if src in d:
            kw[dst] = d[src]
    return SynthesisOptions(**kw)


def parse(doc: dict) -> ProblemFile:
    jsonschema.validate(doc, schema())
    return ProblemFile(doc, _system(doc["system"]), _options(doc.get("options", {})))


def load(path: str | Path) -> ProblemFile:
    with open(path) as fh:
        return parse(json.load(fh))


def _uncertainty(d: dict | None, k: int) -> UncertaintyRealization:
    if not d or d["kind"] == "zero":
        return UncertaintyRealization.zero(k)
    F0 = matrix_from_json(d["F0"])
    if d["kind"] == "constant":
        return UncertaintyRealization.constant(F0)
    return UncertaintyRealization.sinusoidal(F0, d.get("omega", 2.0))


def scenario_from_dict(sys: UncertainSystem, L, d: dict) -> Scenario:
    n, p, q, k, _ = sys.dims
    dist = dict(d.get("disturbance") or {"kind": "zero"})
    w = disturbance(dist.pop("kind"), q, **dist)
    F = _uncertainty(d.get("uncertainty"), k)
    F.check(np.linspace(0.0, d.get("t_final", 20.0), 257))
    dphi = nonlinearities.from_dict(d["delta_phi"], n) if d.get("delta_phi") else None
    return Scenario(sys, L, d.get("x0", np.zeros(n)), d.get("xhat0", np.zeros(n)), w=w, F=F,
                    delta_phi=dphi, delta_phi_in_observer=d.get("delta_phi_in_observer", True),
                    t_final=d.get("t_final", 20.0), dt=d.get("dt", 1e-3))


def load_result(path: str | Path) -> dict[str, Any]:
    """Synthesis result JSON with matrices decoded to arrays."""
    with open(path) as fh:
        d = json.load(fh)
    for key in ("L", "P1", "P2", "G", "Gamma_star"):
        if key in d and d[key] is not None:
            d[key] = matrix_from_json(d[key])
    return d
