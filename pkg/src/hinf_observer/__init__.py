"""Robust H-infinity observer synthesis for Lipschitz nonlinear systems with
norm-bounded parametric uncertainty, via LMIs solved as SDPs."""
from .errors import (DimensionMismatch, EmptyRegion, Infeasible, LambdaOutOfRange,
                     NonFiniteState, NonpositiveWeight, NonvanishingOrigin, NotPositiveDefinite,
                     NumericalFailure, ObserverError, PreconditionViolated, ShapeMismatch,
                     ZeroDisturbance)
from .lmi import (LmiProblem, LmiResidual, build_corollary1, build_theorem1, build_theorem2,
                  evaluate_residual, sym_sqrt)
from .robustness import (ElementwiseMargin, NormMargin, elementwise_margin, hadamard_bound_holds,
                         norm_margin, verify_uncertain_nonlinearity)
from .sdp import SolveOptions, SolveReport, StandardSdp, lower, solve
from .simulation import Scenario, SimulationTrace, decay_check, integrate, l2_gain_estimate
from .synthesis import (ParetoCurve, Surface, SynthesisOptions, SynthesisResult, check_feasibility,
                        elementwise_max, max_lipschitz, pareto_point, pareto_sweep, surface_sweep)
from .system_model import (Box, UncertainSystem, UncertaintyRealization, estimate_lipschitz,
                           estimate_matrix_lipschitz, example_system, validate_system)

__version__ = "0.1.0"
