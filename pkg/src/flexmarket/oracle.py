"""Ground-truth solvers for small instances.

Two independent routes to the bilevel optimum, used to certify the convex
solver:

* exhaustive enumeration of the ``3**n`` piece combinations of the best
  response map, each restricted problem solved by bisection on the
  coupling multiplier;
* a dense grid over the price vector, mapping each grid point through the
  prosumers' best responses.

Neither route calls into :mod:`flexmarket.convex_solver`.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .best_response import aggregator_cost, best_response_vec
from .errors import InfeasibleCap, MarketError, SizeLimit
from .market_model import MarketInstance, check_assumption1

__all__ = [
    "Candidate",
    "Piece",
    "brute_force_optimum",
    "grid_search_bilevel",
    "solve_piece_restricted",
]

BISECTION_ITERS = 64
BRUTE_FORCE_LIMIT = 12
GRID_LIMIT = 3
_CHUNK = 3**10
_FEAS_RTOL = 1e-12
_TIE_RTOL = 1e-12


class Piece(enum.IntEnum):
    LOWER = 0   # x < b: no flexibility
    MIDDLE = 1  # b <= x <= a*m + b: y = (x - b)/a
    UPPER = 2   # x > a*m + b: y = m


@dataclass(frozen=True)
class Candidate:
    x: np.ndarray
    y: np.ndarray
    objective: float
    assignment: Optional[tuple] = None


def _restricted_batch(inst: MarketInstance, assign: np.ndarray):
    """Solve the piece-restricted problems for a batch of assignments.

    Upper pieces are taken at the closure price ``a*m + b`` (the infimum of
    ``x*m`` over the open piece). Returns ``(objective, x, y)`` with
    ``objective = inf`` for inadmissible or infeasible rows.
    """
    a, b, m, p, f = inst.a, inst.b, inst.m, inst.p, inst.f
    low, mid, up = assign == Piece.LOWER, assign == Piece.MIDDLE, assign == Piece.UPPER

    lower = np.maximum(0.0, -b / a)
    bad = (low & ~(b > 0.0)) | (mid & ~(lower <= m))
    ok = ~bad.any(axis=1)

    fixed = np.where(up, m, 0.0)
    lo = np.where(mid, lower, 0.0)
    hi = np.where(mid, m, 0.0)
    target = (p - b) / (2.0 * a)
    inv2a = 1.0 / (2.0 * a)

    def flex(mu):
        return np.where(mid, np.clip(target - mu[:, None] * inv2a, lo, hi), 0.0)

    mu = np.zeros(len(assign))
    if inst.cap_enabled:
        room = f - fixed.sum(axis=1)
        tol = _FEAS_RTOL * max(1.0, f)
        ok &= lo.sum(axis=1) <= room + tol
        binding = ok & (flex(mu).sum(axis=1) > room)
        if binding.any():
            # mu_top pushes every middle coordinate down to its lower bound
            mu_top = max(0.0, float(np.max(p - b - 2.0 * a * lower)))
            left = np.zeros(len(assign))
            right = np.full(len(assign), mu_top)
            for _ in range(BISECTION_ITERS):
                centre = 0.5 * (left + right)
                over = flex(centre).sum(axis=1) > room
                left = np.where(over, centre, left)
                right = np.where(over, right, centre)
            mu = np.where(binding, right, 0.0)

    y = flex(mu) + fixed
    x = np.where(mid, a * y + b, np.where(up, np.maximum(0.0, a * m + b), 0.0))
    obj = np.sum(x * y, axis=1) + p * (f - y.sum(axis=1))
    obj = np.where(ok, obj, np.inf)
    return obj, x, y


def solve_piece_restricted(inst: MarketInstance, pa: Sequence[int]) -> Optional[Candidate]:
    """Infimum of the aggregator cost with every prosumer held on one piece.

    Returns ``None`` when the assignment is inadmissible (a Lower piece for
    a prosumer with ``b <= 0``, an empty Middle piece) or the fixed
    flexibilities leave no room under the cap.
    """
    pa = tuple(Piece(v) for v in pa)
    if len(pa) != inst.n:
        raise ValueError(f"assignment has length {len(pa)}, instance has {inst.n} prosumers")
    obj, x, y = _restricted_batch(inst, np.array([pa], dtype=int).reshape(1, inst.n))
    if not np.isfinite(obj[0]):
        return None
    return Candidate(x[0], y[0], float(obj[0]), pa)


def brute_force_optimum(inst: MarketInstance, limit: int = BRUTE_FORCE_LIMIT) -> Candidate:
    """Best piece-restricted candidate over all ``3**n`` assignments.

    Ties (within a relative 1e-12) go to the lexicographically smallest
    assignment, ordering pieces Lower < Middle < Upper.
    """
    n = inst.n
    if n > limit:
        raise SizeLimit(f"brute force limited to n <= {limit}, got n = {n}")

    best_obj, best = np.inf, None
    combos = itertools.product(range(3), repeat=n)
    while True:
        chunk = list(itertools.islice(combos, _CHUNK))
        if not chunk:
            break
        assign = np.array(chunk, dtype=int).reshape(len(chunk), n)
        obj, x, y = _restricted_batch(inst, assign)
        k = int(np.argmin(obj))
        if not np.isfinite(obj[k]):
            continue
        # first index within tolerance of the chunk minimum
        k = int(np.flatnonzero(obj <= obj[k] + _TIE_RTOL * max(1.0, abs(obj[k])))[0])
        if best is None or obj[k] < best_obj - _TIE_RTOL * max(1.0, abs(best_obj)):
            best_obj = obj[k]
            best = Candidate(x[k], y[k], float(obj[k]), tuple(Piece(v) for v in assign[k]))

    if best is None:
        check = check_assumption1(inst)
        if not check.holds:
            raise InfeasibleCap(check.free_flex, inst.f)
        raise MarketError("no admissible piece assignment")
    return best


def grid_search_bilevel(inst: MarketInstance, steps: int) -> Candidate:
    """Cheapest feasible point of a uniform price grid.

    Every coordinate ranges over ``[0, max(a*m + b) + p]`` with ``steps``
    points; grid points whose responses overshoot the cap are discarded.
    The result is an upper bound on the optimum that tightens as ``steps``
    grows.
    """
    n = inst.n
    if n > GRID_LIMIT:
        raise SizeLimit(f"grid search limited to n <= {GRID_LIMIT}, got n = {n}")
    if steps < 2:
        raise ValueError("steps must be at least 2")
    if n == 0:
        return Candidate(np.zeros(0), np.zeros(0), inst.p * inst.f, ())

    a, b, m, p, f = inst.a, inst.b, inst.m, inst.p, inst.f
    top = max(0.0, float(np.max(a * m + b))) + p
    xs = np.linspace(0.0, top, steps)
    ys = [best_response_vec(xs, a[i], b[i], m[i]) for i in range(n)]
    pays = [xs * yi for yi in ys]

    best_obj, best_idx = np.inf, None
    for i0 in range(steps):
        tot_y = ys[0][i0]
        tot_pay = pays[0][i0]
        for i in range(1, n):
            shape = [1] * (n - 1)
            shape[i - 1] = steps
            tot_y = tot_y + ys[i].reshape(shape)
            tot_pay = tot_pay + pays[i].reshape(shape)
        cost = np.asarray(tot_pay + p * (f - tot_y), dtype=float)
        if inst.cap_enabled:
            cost = np.where(np.asarray(tot_y) <= f, cost, np.inf)
        k = int(np.argmin(cost))
        c = cost.flat[k]
        if c < best_obj:
            best_obj = c
            best_idx = (i0,) + np.unravel_index(k, cost.shape) if n > 1 else (i0,)

    if best_idx is None:
        raise InfeasibleCap(check_assumption1(inst).free_flex, f)
    x = xs[list(best_idx)]
    y = np.array([ys[i][best_idx[i]] for i in range(n)])
    return Candidate(x, y, aggregator_cost(x, y, inst))
