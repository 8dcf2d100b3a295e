"""Meshless local radial point interpolation pricing of options under
stochastic volatility with (correlated) jumps."""

from .models import JumpLaw, ModelKind, ModelSpec, ParameterError, Payoff, Right, Style
from .transform import NodeGrid, StretchParams, forward_map, inverse_map
from .rbf import WendlandKernel, build_shape_functions, interpolate, kernel_eval
from .solver import Discretization, PriceSurface, TimeGrid, build_system, price_surface
from .validation import heston_european, mc_price, parameter_sets, reference_registry, benchmark_cases
from .estimator import LRPIPricer

__all__ = [
    "JumpLaw", "ModelKind", "ModelSpec", "ParameterError", "Payoff", "Right", "Style",
    "NodeGrid", "StretchParams", "forward_map", "inverse_map",
    "WendlandKernel", "build_shape_functions", "interpolate", "kernel_eval",
    "Discretization", "PriceSurface", "TimeGrid", "build_system", "price_surface",
    "heston_european", "mc_price", "parameter_sets", "reference_registry", "benchmark_cases",
    "LRPIPricer",
]

__version__ = "0.1.0"
