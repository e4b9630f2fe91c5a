"""Prosumer reaction to a personalized price, and the two objectives."""

from __future__ import annotations

import numpy as np

from .market_model import MarketInstance, Prosumer

__all__ = ["aggregator_cost", "best_response", "best_response_vec", "prosumer_utility"]


def best_response(x: float, pro: Prosumer) -> float:
    """Flexibility that maximizes the prosumer's utility at price ``x``.

    Piecewise linear in ``x``: zero below ``b``, ``(x - b)/a`` on the closed
    interval ``[b, a*m + b]`` and ``m`` above it.
    """
    if x < pro.b:
        return 0.0
    if x > pro.a * pro.m + pro.b:
        return pro.m
    # clip guards the ulp-level drift of (x - b)/a at the interval ends
    return min(max((x - pro.b) / pro.a, 0.0), pro.m)


def best_response_vec(x, a, b, m) -> np.ndarray:
    """Vectorized :func:`best_response` over arrays of prices and prosumers."""
    x, a, b, m = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, a, b, m)))
    y = np.clip((x - b) / a, 0.0, m)
    y = np.where(x < b, 0.0, y)
    return np.where(x > a * m + b, m, y)


def prosumer_utility(x: float, y: float, pro: Prosumer) -> float:
    """Prosumer profit ``x*y - a/2*y**2 - b*y``.

    ``y`` need not be the best response, but must lie in ``[0, m]``.
    """
    if not 0.0 <= y <= pro.m:
        raise ValueError(f"flexibility {y!r} outside [0, {pro.m!r}]")
    return x * y - 0.5 * pro.a * y * y - pro.b * y


def aggregator_cost(x, y, inst: MarketInstance) -> float:
    """Aggregator cost: payments to prosumers plus the TSO bill for the remainder."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (inst.n,) or y.shape != (inst.n,):
        raise ValueError(
            f"price/flexibility vectors must have length {inst.n}, got {x.shape} and {y.shape}"
        )
    return float(np.dot(x, y) + inst.p * (inst.f - np.sum(y)))
