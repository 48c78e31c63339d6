"""Generalized dichotomies, bounded solutions and topological equivalence of difference systems."""

from .bounded import BoundedSolution, bounded_linear, bounded_nonlinear
from .conjugacy import (
    ConjugacyEngine,
    HolderParams,
    VerificationReport,
    continuity_modulus,
    gamma,
    gronwall_bound,
    holder_params,
    verify_equivalence,
    verify_flow_identity,
)
from .dichotomy import (
    DichotomyCertificate,
    GreenKernel,
    alpha_rejection_scan,
    check_divergence,
    check_h2_h3,
    green,
    green_majorant,
    h4_h5_tail,
    n_operator,
    stepanov_norm,
    verify_ed,
    verify_gdd,
)
from .linsys import LinearSystem, Perturbation, Window, propagate, solution_residual, trajectory
from .scenarios import Scenario, make_scenario, oracle_bounded, oracle_scalar_fixed_point, saturating

__version__ = "0.1.0"
