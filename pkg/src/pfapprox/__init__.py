"""Adaptive linear and rational approximations of the AC power flow equations.

The package computes linear, conservative linear, rational, and conservative
rational approximations of power flow quantities over an operating range,
guided by second-order sensitivity analysis and importance sampling, and
demonstrates them inside a simplified optimal power flow.
"""

from .netmodel import AdmittanceMatrix, NetworkCase, build_ybus, parse_matpower
from .pfcore import PowerFlowSolution, Quantity, nominal_injections, solve_newton
from .regress import ApproximationModel, Direction, fit_cla, fit_la, fit_rational
from .sampling import OperatingRange, SampleSet, draw_uniform, evaluate_samples

__all__ = [
    "AdmittanceMatrix",
    "ApproximationModel",
    "Direction",
    "NetworkCase",
    "OperatingRange",
    "PowerFlowSolution",
    "Quantity",
    "SampleSet",
    "build_ybus",
    "draw_uniform",
    "evaluate_samples",
    "fit_cla",
    "fit_la",
    "fit_rational",
    "nominal_injections",
    "parse_matpower",
    "solve_newton",
]

__version__ = "0.1.0"
