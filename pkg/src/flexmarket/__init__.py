"""Personalized flexibility prices for an aggregator and its prosumers."""

from .best_response import aggregator_cost, best_response, best_response_vec, prosumer_utility
from .convex_solver import Allocation, solve, verify_kkt
from .errors import InfeasibleCap, InfeasibleProsumer, MarketError, SizeLimit
from .market_model import (
    DeviceKind,
    DeviceSpec,
    Direction,
    MarketInstance,
    PriceBook,
    Prosumer,
    check_assumption1,
    load_instance,
    save_instance,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "DeviceKind",
    "DeviceSpec",
    "Direction",
    "InfeasibleCap",
    "InfeasibleProsumer",
    "MarketError",
    "MarketInstance",
    "PriceBook",
    "Prosumer",
    "SizeLimit",
    "aggregator_cost",
    "best_response",
    "best_response_vec",
    "check_assumption1",
    "load_instance",
    "prosumer_utility",
    "save_instance",
    "solve",
    "verify_kkt",
]
