"""Quadratically regularized optimal transport and its small-eps limit.

The main entry points are re-exported here; see the submodules for the rest.
"""

__version__ = "0.1.0"

from .analytic import AnalyticPair, bregman_divergence, check_pair, make_family  # noqa: E402
from .asymptotics import RateReport, sandwich, sweep, theoretical_limit  # noqa: E402
from .barenblatt import (  # noqa: E402
    build_frame,
    constants,
    corollary_profile_v,
    gamma_eps,
    glass_coupling,
)
from .discrete_ot import w2_exact_small, w2_from_map, w2_quantile_1d  # noqa: E402
from .kernels import BACKEND  # noqa: E402
from .measures import BoxDomain, GridMeasure, build_grid_measure, integrate  # noqa: E402
from .pme import BarenblattProfile  # noqa: E402
from .qot import Coupling, DualPotentials, dual_objective, primal_objective, solve  # noqa: E402

__all__ = [
    "AnalyticPair", "BACKEND", "BarenblattProfile", "BoxDomain", "Coupling",
    "DualPotentials", "GridMeasure", "RateReport", "bregman_divergence",
    "build_frame", "build_grid_measure", "check_pair", "constants",
    "corollary_profile_v", "dual_objective", "gamma_eps", "glass_coupling",
    "integrate", "make_family", "primal_objective", "sandwich", "solve", "sweep",
    "theoretical_limit", "w2_exact_small", "w2_from_map", "w2_quantile_1d",
]
