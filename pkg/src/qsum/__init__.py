"""q-Borel-Laplace summation toolkit for q-difference-Mahler problems."""

from .qcore import CoveringPoint, GrowthEnvelope, QParams

__version__ = "0.1.0"

from .fourier import FourierFn, FourierSpace, enorm, make_space
from .geometry import (
    ForcingTerm,
    MahlerTerm,
    ProblemSpec,
    SectorConfig,
    pm_lower_bound_report,
    select_sector,
    validate_spec,
)
from .series import TruncatedSeries, borel_exponent
from .solver import (
    BorelSolution,
    assemble_U_hat,
    assemble_u_hat,
    solve_fixed_point,
)
from .transforms import (
    ContinuedOmega,
    deceleration_integral,
    gq_sum,
    q_borel_analytic,
    q_laplace,
    theorem2_residual,
)

__all__ = [
    "BorelSolution",
    "ContinuedOmega",
    "CoveringPoint",
    "ForcingTerm",
    "FourierFn",
    "FourierSpace",
    "GrowthEnvelope",
    "MahlerTerm",
    "ProblemSpec",
    "QParams",
    "SectorConfig",
    "TruncatedSeries",
    "assemble_U_hat",
    "assemble_u_hat",
    "borel_exponent",
    "deceleration_integral",
    "enorm",
    "gq_sum",
    "make_space",
    "pm_lower_bound_report",
    "q_borel_analytic",
    "q_laplace",
    "select_sector",
    "solve_fixed_point",
    "theorem2_residual",
    "validate_spec",
    "__version__",
]
