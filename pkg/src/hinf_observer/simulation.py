"""Fixed-step simulation of the uncertain plant together with the observer.

Plant:     xdot    = (A + M1 F N1) x + phi(x, u) + B w
           y       = (C + M2 F N2) x + D w
Observer:  xhatdot = A xhat + phi(xhat, u) + L (y - C xhat)

An optional additive perturbation ``delta_phi`` changes the plant's
nonlinearity. By default the observer is built on the same (perturbed)
nonlinearity, which is the setting in which a margin certifies that the
gain ``L`` still works; set ``delta_phi_in_observer=False`` to model an
observer that only knows the nominal ``phi``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonFiniteState, PreconditionViolated, ZeroDisturbance
from .system_model import UncertainSystem, UncertaintyRealization

Signal = Callable[[float], np.ndarray]


# -- disturbance library ------------------------------------------------------

def _tag(f, kind):
    f.kind = kind
    return f


def zero_signal(q: int) -> Signal:
    z = np.zeros(q)
    return _tag(lambda t: z, "zero")


def unit_pulse(q: int, start: float = 1.0, width: float = 1.0) -> Signal:
    one, z = np.ones(q), np.zeros(q)
    return _tag(lambda t: one if start <= t < start + width else z, "pulse")


def sinusoid(q: int, omega: float = 1.0, amplitude: float = 1.0, phase: float = 0.0) -> Signal:
    v = amplitude * np.ones(q)
    return _tag(lambda t: v * np.sin(omega * t + phase), "sin")


def band_limited_noise(q: int, seed: int, cutoff: float = 5.0, n_components: int = 24,
                       decay: float | None = None) -> Signal:
    """Seeded sum of random sinusoids below ``cutoff`` rad/s.

    ``decay`` multiplies by ``exp(-decay t)`` so the signal has finite energy
    on long horizons.
    """
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(0.0, cutoff, size=(n_components, q))
    phases = rng.uniform(0, 2 * np.pi, size=(n_components, q))
    amps = rng.standard_normal((n_components, q)) / np.sqrt(n_components)

    def w(t):
        s = np.sum(amps * np.sin(freqs * t + phases), axis=0)
        return s * np.exp(-decay * t) if decay else s
    return _tag(w, "noise")


DISTURBANCES = ("zero", "pulse", "sin", "noise")


def disturbance(kind: str, q: int, seed: int = 0, **kw) -> Signal:
    if kind == "zero":
        return zero_signal(q)
    if kind == "pulse":
        return unit_pulse(q, **kw)
    if kind == "sin":
        return sinusoid(q, **kw)
    if kind == "noise":
        return band_limited_noise(q, seed, **kw)
    raise ValueError(f"unknown disturbance kind {kind!r}")


# -- scenario and trace -------------------------------------------------------

@dataclass(eq=False)
class Scenario:
    sys: UncertainSystem
    L: np.ndarray
    x0: np.ndarray
    xhat0: np.ndarray
    w: Signal | None = None
    F: UncertaintyRealization | None = None
    delta_phi: Callable | None = None
    delta_phi_in_observer: bool = True
    t_final: float = 20.0
    dt: float = 1e-3

    def __post_init__(self):
        n, p, q, k, _ = self.sys.dims
        self.L = np.atleast_2d(np.asarray(self.L, dtype=float)).reshape(n, p)
        self.x0 = np.asarray(self.x0, dtype=float).reshape(n)
        self.xhat0 = np.asarray(self.xhat0, dtype=float).reshape(n)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_final >= self.dt:
            raise ValueError("t_final must be at least dt")
        if self.w is None:
            self.w = zero_signal(q)
        if self.F is None:
            self.F = UncertaintyRealization.zero(k)

    @property
    def disturbance_free(self) -> bool:
        return getattr(self.w, "kind", None) == "zero"

    @property
    def uncertainty_free(self) -> bool:
        return self.F.is_zero


@dataclass(eq=False)
class SimulationTrace:
    t: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    w: np.ndarray
    F: np.ndarray
    H: np.ndarray
    disturbance_free: bool = False
    uncertainty_free: bool = False
    perturbed: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def e(self) -> np.ndarray:
        return self.x - self.xhat

    @property
    def z(self) -> np.ndarray:
        return self.e @ self.H.T

    def to_csv(self) -> str:
        n, m, q = self.x.shape[1], self.H.shape[0], self.w.shape[1]
        cols = (["t"] + [f"x_{i + 1}" for i in range(n)] + [f"xhat_{i + 1}" for i in range(n)]
                + [f"z_{i + 1}" for i in range(m)] + [f"w_{i + 1}" for i in range(q)])
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(cols)
        data = np.column_stack([self.t, self.x, self.xhat, self.z, self.w])
        for row in data:
            wr.writerow([format(v, ".17g") for v in row])
        return buf.getvalue()


def integrate(scenario: Scenario) -> SimulationTrace:
    """Classical fourth-order Runge-Kutta on the coupled ``(x, xhat)`` state."""
    s = scenario
    sys = s.sys
    n = sys.dims.n
    A, B, C, D, L = sys.A, sys.B, sys.C, sys.D, s.L
    M1, N1, M2, N2 = sys.M1, sys.N1, sys.M2, sys.N2
    phi, dphi, u = sys.phi, s.delta_phi, sys.u_nominal
    w_of, F_of = s.w, s.F
    nominal_F = s.uncertainty_free
    ALC = A - L @ C

    def rhs(t, x, xh):
        w = w_of(t)
        px = phi(x, u)
        ph = phi(xh, u)
        if dphi is not None:
            px = px + dphi(x, u)
            if s.delta_phi_in_observer:
                ph = ph + dphi(xh, u)
        if nominal_F:
            dx = A @ x + px + B @ w
            y = C @ x + D @ w
        else:
            F = F_of(t)
            dx = (A + M1 @ F @ N1) @ x + px + B @ w
            y = (C + M2 @ F @ N2) @ x + D @ w
        dxh = ALC @ xh + ph + L @ y
        return dx, dxh

    steps = int(round(s.t_final / s.dt))
    h = s.dt
    t = np.arange(steps + 1) * h
    X = np.empty((steps + 1, n))
    XH = np.empty((steps + 1, n))
    x, xh = s.x0.copy(), s.xhat0.copy()
    X[0], XH[0] = x, xh
    with np.errstate(over="ignore", invalid="ignore"):
        _rk4_loop(rhs, t, h, x, xh, X, XH, steps)
    W = np.array([w_of(ti) for ti in t]).reshape(steps + 1, -1)
    Fs = np.zeros((1,) + (sys.dims.k,) * 2) if nominal_F else np.array([F_of(ti) for ti in t])
    return SimulationTrace(t, X, XH, W, Fs, sys.H, s.disturbance_free, nominal_F,
                           dphi is not None)


def _rk4_loop(rhs, t, h, x, xh, X, XH, steps):
    for i in range(steps):
        ti = t[i]
        k1x, k1h = rhs(ti, x, xh)
        k2x, k2h = rhs(ti + h / 2, x + h / 2 * k1x, xh + h / 2 * k1h)
        k3x, k3h = rhs(ti + h / 2, x + h / 2 * k2x, xh + h / 2 * k2h)
        k4x, k4h = rhs(ti + h, x + h * k3x, xh + h * k3h)
        x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        xh = xh + h / 6 * (k1h + 2 * k2h + 2 * k3h + k4h)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xh))):
            raise NonFiniteState(float(t[i + 1]))
        X[i + 1], XH[i + 1] = x, xh


# -- checks -------------------------------------------------------------------

@dataclass(frozen=True)
class DecayCheck:
    passed: bool
    worst_ratio: float
    worst_time: float

    def __bool__(self):
        return self.passed


def decay_check(trace: SimulationTrace, beta: float, P1, rtol: float = 1e-6) -> DecayCheck:
    """``|e(t)| <= sqrt(cond(P1)) exp(-beta t) |e(0)|`` on the whole grid.

    Only meaningful without disturbance and without parametric uncertainty;
    a matched nonlinear perturbation (shared by plant and observer) is
    allowed since it only changes the system's nonlinearity.
    """
    if not (trace.disturbance_free and trace.uncertainty_free):
        raise PreconditionViolated("decay check needs a trace with w = 0 and F = 0")
    P1 = np.atleast_2d(np.asarray(P1, dtype=float))
    ev = np.linalg.eigvalsh((P1 + P1.T) / 2)
    kappa = ev.max() / ev.min()
    en = np.linalg.norm(trace.e, axis=1)
    e0 = en[0]
    if e0 == 0:
        bad = en > 0
        if np.any(bad):
            i = int(np.argmax(bad))
            return DecayCheck(False, np.inf, float(trace.t[i]))
        return DecayCheck(True, 0.0, 0.0)
    envelope = np.sqrt(kappa) * np.exp(-beta * trace.t) * e0
    ratio = en / envelope
    i = int(np.argmax(ratio))
    return DecayCheck(bool(ratio[i] <= 1 + rtol), float(ratio[i]), float(trace.t[i]))


def l2_norm(t: np.ndarray, v: np.ndarray) -> float:
    return float(np.sqrt(np.trapezoid(np.sum(v * v, axis=1), t)))


def l2_gain_estimate(traces: Sequence[SimulationTrace]) -> float:
    """Largest ``|z|_L2 / |w|_L2`` over the traces (trapezoidal rule, finite horizon)."""
    best = 0.0
    for tr in traces:
        if np.linalg.norm(tr.e[0]) > 0:
            raise PreconditionViolated("L2 gain estimate needs e(0) = 0")
        wn = l2_norm(tr.t, tr.w)
        if wn == 0:
            raise ZeroDisturbance("trace has zero disturbance energy")
        best = max(best, l2_norm(tr.t, tr.z) / wn)
    return best


def scenario_suite(sys: UncertainSystem, L, count: int, seed: int = 0, t_final: float = 20.0,
                   dt: float = 1e-3) -> list[Scenario]:
    """Zero-initial-state scenarios cycling through the non-zero disturbances
    with random admissible ``F(t) = sin(omega t) F0``."""
    rng = np.random.default_rng(seed)
    n, p, q, k, _ = sys.dims
    kinds = [k_ for k_ in DISTURBANCES if k_ != "zero"]
    out = []
    for i in range(count):
        kind = kinds[i % len(kinds)]
        if kind == "sin":
            w = sinusoid(q, omega=float(rng.uniform(0.2, 3.0)))
        elif kind == "pulse":
            w = unit_pulse(q, start=float(rng.uniform(0.0, 3.0)), width=float(rng.uniform(0.5, 3.0)))
        else:
            w = band_limited_noise(q, int(rng.integers(2**31)))
        F = UncertaintyRealization.random(k, rng)
        out.append(Scenario(sys, L, np.zeros(n), np.zeros(n), w=w, F=F, t_final=t_final, dt=dt))
    return out
