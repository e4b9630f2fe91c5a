"""Exact solver for the convex-equivalent pricing problem.

Substituting the middle piece of the best response, ``x = a*y + b``, turns
the aggregator's problem into the separable convex QP::

    min   sum_i a_i*y_i**2 + (b_i - p)*y_i + p*f
    s.t.  max(0, -b_i/a_i) <= y_i <= m_i
          sum_i y_i <= f              (only when the cap is enabled)

whose minimizer is also a global minimizer of the original bilevel problem.
The QP has a single coupling constraint, so it is solved exactly by sorting
the breakpoints of the dual function (a continuous quadratic knapsack).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .best_response import aggregator_cost, best_response_vec
from .errors import InfeasibleCap, InfeasibleProsumer
from .market_model import MarketInstance

__all__ = [
    "Allocation",
    "KktReport",
    "ReducedQp",
    "price_intervals",
    "recover_prices",
    "reduce",
    "solve",
    "solve_capped_separable_qp",
    "solve_separable",
    "verify_kkt",
]

KKT_TOL = 1e-9
# slack allowed on sum(lower) <= cap before declaring the cap infeasible
CAP_RTOL = 1e-12
ACTIVE_ATOL = 1e-12


@dataclass(frozen=True)
class ReducedQp:
    q: np.ndarray
    r: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    cap: Optional[float]
    const: float

    @property
    def n(self) -> int:
        return len(self.q)

    def objective(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return float(np.sum(self.q * y * y + self.r * y) + self.const)


def reduce(inst: MarketInstance) -> ReducedQp:
    """Coefficients of the QP in ``y`` obtained by eliminating the prices."""
    a, b, m = inst.a, inst.b, inst.m
    lower = np.maximum(0.0, -b / a) if inst.n else np.zeros(0)
    bad = np.flatnonzero(lower > m)
    if bad.size:
        i = int(bad[0])
        raise InfeasibleProsumer(i, float(lower[i]), float(m[i]))
    return ReducedQp(
        q=a.copy(),
        r=b - inst.p,
        lower=lower,
        upper=m.copy(),
        cap=inst.f if inst.cap_enabled else None,
        const=inst.p * inst.f,
    )


def _flex_at(mu, q, r, lo, hi):
    return np.clip(-(r + mu) / (2.0 * q), lo, hi)


def solve_separable(q, r, lo, hi, cap=None):
    """Minimize ``sum(q*y**2 + r*y)`` over a box with ``sum(y) <= cap``.

    Parameters
    ----------
    q : array
        Strictly positive quadratic coefficients.
    r : array
        Linear coefficients.
    lo, hi : array
        Box bounds, ``lo <= hi`` elementwise.
    cap : float or None
        Right-hand side of the coupling constraint; ``None`` drops it.

    Returns
    -------
    y : array
        The unique minimizer.
    mu : float
        Multiplier of the coupling constraint; the smallest one when the
        coupling sum is flat at ``cap`` over an interval of multipliers.

    Raises
    ------
    InfeasibleCap
        If ``sum(lo) > cap``.
    """
    q, r, lo, hi = (np.asarray(v, dtype=float) for v in (q, r, lo, hi))
    y = _flex_at(0.0, q, r, lo, hi)
    if cap is None or y.sum() <= cap:
        return y, 0.0

    lo_sum = lo.sum()
    if lo_sum > cap + CAP_RTOL * max(1.0, abs(cap)):
        raise InfeasibleCap(float(lo_sum), float(cap))

    # y_i(mu) leaves its upper bound at -r - 2q*hi and reaches its lower
    # bound at -r - 2q*lo; the coupling sum is linear between breakpoints.
    bp = np.concatenate((-r - 2.0 * q * hi, -r - 2.0 * q * lo))
    bp = np.unique(np.concatenate(([0.0], bp[bp > 0.0])))
    if lo_sum >= cap:
        # every movable coordinate sits at its lower bound; pinned ones
        # (lo == hi) do not constrain the multiplier
        movable = lo < hi
        mu = float(np.max(-r[movable] - 2.0 * q[movable] * lo[movable])) if movable.any() else 0.0
        return lo.copy(), max(mu, 0.0)

    def total(mu):
        return _flex_at(mu, q, r, lo, hi).sum()

    # invariant: total(bp[left]) > cap >= total(bp[right])
    left, right = 0, len(bp) - 1
    while right - left > 1:
        mid = (left + right) // 2
        if total(bp[mid]) > cap:
            left = mid
        else:
            right = mid
    mu_lo, mu_hi = bp[left], bp[right]
    t = -(r + 0.5 * (mu_lo + mu_hi)) / (2.0 * q)
    if total(mu_hi) == cap or not np.any((t > lo) & (t < hi)):
        # no coordinate is free when rounding collapses a segment; the jump
        # is then below float resolution and mu_hi is as good as any
        mu = mu_hi
    else:
        free = (t > lo) & (t < hi)
        fixed = np.where(t <= lo, lo, hi)[~free].sum()
        inv = 1.0 / (2.0 * q[free])
        mu = (np.sum(-r[free] * inv) + fixed - cap) / np.sum(inv)
        mu = min(max(mu, mu_lo), mu_hi)
    return _flex_at(mu, q, r, lo, hi), float(mu)


def solve_capped_separable_qp(qp: ReducedQp):
    """Return ``(y, mu)`` for a reduced QP; see :func:`solve_separable`."""
    return solve_separable(qp.q, qp.r, qp.lower, qp.upper, qp.cap)


def recover_prices(y, inst: MarketInstance) -> np.ndarray:
    """Prices ``x = a*y + b`` that induce ``y``.

    A prosumer with ``b > 0`` that provides nothing is indifferent to any
    price in ``[0, b]``; the canonical price 0 is returned for it.
    """
    y = np.asarray(y, dtype=float)
    x = inst.a * y + inst.b
    x = np.where((y == 0.0) & (inst.b > 0.0), 0.0, x)
    return np.maximum(x, 0.0)


def price_intervals(x, y, inst: MarketInstance) -> np.ndarray:
    """Per-prosumer interval of optimal prices, shape ``(n, 2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.column_stack((x, x))
    degen = (y == 0.0) & (inst.b > 0.0)
    out[degen, 0] = 0.0
    out[degen, 1] = inst.b[degen]
    return out


class KktReport(NamedTuple):
    stationarity: float
    primal: float
    dual: float
    complementarity: float
    residual: float
    passed: bool


@dataclass(frozen=True)
class Allocation:
    """Optimal prices and flexibilities for one instance."""

    x: np.ndarray
    y: np.ndarray
    mu: float
    objective: float
    cap_binding: bool
    kkt_residual: float
    price_intervals: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {
            "x": [float(v) for v in self.x],
            "y": [float(v) for v in self.y],
            "mu": float(self.mu),
            "objective": float(self.objective),
            "cap_binding": bool(self.cap_binding),
            "kkt_residual": float(self.kkt_residual),
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent) + "\n"


def verify_kkt(alloc: Allocation, inst: MarketInstance, tol: float = KKT_TOL) -> KktReport:
    """Max-norm residuals of the reduced QP's optimality conditions.

    The primal part also covers bound violations, ``x >= 0`` and
    consistency of ``y`` with the prosumers' best response to ``x``.
    """
    x = np.asarray(alloc.x, dtype=float)
    y = np.asarray(alloc.y, dtype=float)
    mu = float(alloc.mu)
    if inst.n == 0:
        primal = max(0.0, -inst.f) if inst.cap_enabled else 0.0
        return KktReport(0.0, primal, max(0.0, -mu), 0.0, primal, primal <= tol)

    a, b, m = inst.a, inst.b, inst.m
    lower = np.maximum(0.0, -b / a)
    upper = m
    g = 2.0 * a * y + (b - inst.p) + (mu if inst.cap_enabled else 0.0)
    at_lo = y <= lower + ACTIVE_ATOL
    at_hi = y >= upper - ACTIVE_ATOL
    stat = np.abs(g)
    stat = np.where(at_lo, np.maximum(0.0, -g), stat)
    stat = np.where(at_hi, np.maximum(0.0, g), stat)
    stat = np.where(at_lo & at_hi, 0.0, stat)
    stationarity = float(stat.max())

    primal_terms = [
        np.max(lower - y),
        np.max(y - upper),
        np.max(-x),
        np.max(np.abs(y - best_response_vec(x, a, b, m))),
    ]
    if inst.cap_enabled:
        primal_terms.append(y.sum() - inst.f)
    primal = max(0.0, *(float(t) for t in primal_terms))

    dual = max(0.0, -mu) if inst.cap_enabled else abs(mu)
    comp = float(abs(mu * (inst.f - y.sum()))) if inst.cap_enabled else 0.0
    residual = max(stationarity, primal, dual, comp)
    return KktReport(stationarity, primal, dual, comp, residual, bool(residual <= tol))


def solve(inst: MarketInstance) -> Allocation:
    """Globally optimal personalized prices and flexibilities.

    Raises
    ------
    InfeasibleProsumer
        Some prosumer's free flexibility exceeds its maximum.
    InfeasibleCap
        Total free flexibility exceeds ``f`` with the cap enabled.
    """
    qp = reduce(inst)
    y, mu = solve_capped_separable_qp(qp)
    x = recover_prices(y, inst)
    # report what the prosumers actually do at these prices
    y = best_response_vec(x, inst.a, inst.b, inst.m) if inst.n else y
    objective = aggregator_cost(x, y, inst)
    partial = Allocation(x, y, mu, objective, bool(inst.cap_enabled and mu > 0.0), 0.0)
    report = verify_kkt(partial, inst)
    return Allocation(
        x=x,
        y=y,
        mu=mu,
        objective=objective,
        cap_binding=partial.cap_binding,
        kkt_residual=report.residual,
        price_intervals=price_intervals(x, y, inst),
    )
