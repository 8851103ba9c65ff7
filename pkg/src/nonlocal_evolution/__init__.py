"""Certificates and solvers for nonlocal Cauchy problems ``u' = A(t)u + Phi(u)``, ``u(0) = F(u)``."""

from .analysis import Certification, certify
from .certificates import (
    CertificateReport,
    KamkeFunction,
    ReportEntry,
    TubeRadius,
    build_H,
    check_c7_c8,
    check_c9,
    check_c13,
    check_system,
    kamke_decay,
)
from .evolution import CoefficientFamily, build_evolution, cocycle_defect, propagator
from .expr import Expr, parse
from .grid import TimeGrid, Trajectory
from .nonlinearity import GrowthEnvelope, Nonlinearity
from .nonlocal_map import NonlocalMap, apply_F, build_resolvent, support
from .numerics import NormKind, check_radius_trio, inv, op_norm, spectral_radius
from .problem import ConfigError, ProblemSpec, SolverConfig, load_problem
from .solver import SolveResult, apply_N1, apply_N2, picard_solve, residual

__version__ = "0.1.0"
