"""Single-level KKT reformulation and the big-M mixed-integer competitor.

Replacing each prosumer's problem by its KKT conditions gives an MPEC;
linearizing the complementarity pairs with binaries ``z_i``, ``w_i`` and a
constant ``M`` gives a mixed-integer QP in ``(y, l1, l2, z, w)``::

    min  sum_i a_i*y_i**2 + (b_i - p)*y_i + m_i*l2_i + p*f
    s.t. sum_i y_i <= f
         a_i*y_i + b_i - l1_i + l2_i >= 0          (x_i >= 0)
         0 <= y_i <= M*z_i,      0 <= m_i - y_i <= M*w_i
         0 <= l1_i <= M*(1-z_i), 0 <= l2_i <= M*(1-w_i)

:func:`solve_mip_bb` solves that model by a small depth-first
branch-and-bound. Its answer is only as good as ``M``: an ``M`` below the
optimal flexibilities cuts the optimum off.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .convex_solver import solve_separable
from .errors import InfeasibleCap
from .lp_format import Constraint, MipModel, Variable, export_lp, parse_lp
from .market_model import MarketInstance

__all__ = [
    "KktSystem",
    "MipModel",
    "MipSolution",
    "build_big_m_mip",
    "build_kkt_system",
    "choose_big_m",
    "export_lp",
    "parse_lp",
    "solve_mip_bb",
]

DEFAULT_MAX_NODES = 200_000
_GAP_RTOL = 1e-9


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    complementarity: float
    primal: float
    sign: float

    @property
    def residual(self) -> float:
        return max(self.stationarity, self.complementarity, self.primal, self.sign)


@dataclass(frozen=True)
class KktSystem:
    """KKT conditions of every prosumer plus the aggregator's constraints."""

    inst: MarketInstance

    def stationarity(self, x, y, lam1, lam2) -> np.ndarray:
        i = self.inst
        return np.asarray(x) - i.a * np.asarray(y) - i.b + np.asarray(lam1) - np.asarray(lam2)

    def consistent_duals(self, x, y):
        """Multipliers of ``0 <= y <= m`` that make the stationarity row vanish."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gap = self.inst.a * y + self.inst.b - x   # = lam1 - lam2
        at_zero = y <= 0.0
        at_cap = y >= self.inst.m
        lam1 = np.where(at_zero, np.maximum(gap, 0.0), 0.0)
        lam2 = np.where(at_cap, np.maximum(-gap, 0.0), 0.0)
        return lam1, lam2

    def evaluate(self, x, y, lam1, lam2) -> KktReport:
        inst = self.inst
        x, y, lam1, lam2 = (np.asarray(v, dtype=float) for v in (x, y, lam1, lam2))
        if inst.n == 0:
            cap = max(0.0, -inst.f) if inst.cap_enabled else 0.0
            return KktReport(0.0, 0.0, cap, 0.0)
        stat = float(np.max(np.abs(self.stationarity(x, y, lam1, lam2))))
        comp = float(max(np.max(np.abs(y * lam1)), np.max(np.abs((inst.m - y) * lam2))))
        primal = max(0.0, float(np.max(-y)), float(np.max(y - inst.m)))
        if inst.cap_enabled:
            primal = max(primal, float(y.sum() - inst.f))
        sign = max(0.0, float(np.max(-x)), float(np.max(-lam1)), float(np.max(-lam2)))
        return KktReport(stat, comp, primal, sign)


def build_kkt_system(inst: MarketInstance) -> KktSystem:
    return KktSystem(inst)


def choose_big_m(inst: MarketInstance) -> float:
    """Heuristic big-M: ten times the largest flexibility, price or imbalance.

    Not guaranteed adequate in general; it covers every ``y``, ``l1`` and
    ``l2`` of a prosumer-feasible instance.
    """
    cands = [inst.f]
    if inst.n:
        cands.append(float(np.max(inst.m)))
        cands.append(float(np.max(inst.a * inst.m + np.abs(inst.b) + inst.p)))
    else:
        cands.append(inst.p)
    big_m = 10.0 * max(cands)
    return big_m if big_m > 0 else 1.0


def _names(i: int):
    k = i + 1
    return f"y{k}", f"l1_{k}", f"l2_{k}", f"z{k}", f"w{k}"


def build_big_m_mip(inst: MarketInstance, big_m: float, name: str = "flexmarket") -> MipModel:
    """Big-M mixed-integer QP of the KKT reformulation."""
    if not big_m > 0:
        raise ValueError("big-M must be positive")
    M = float(big_m)
    n = inst.n
    names = [_names(i) for i in range(n)]
    variables = []
    for col in range(5):
        for i in range(n):
            v = names[i][col]
            if col == 0:
                variables.append(Variable(v, 0.0, float(inst.m[i])))
            elif col in (1, 2):
                variables.append(Variable(v, 0.0, math.inf))
            else:
                variables.append(Variable(v, 0.0, 1.0, binary=True))

    linear = {}
    quadratic = {}
    for i, pr in enumerate(inst.prosumers):
        y, l1, l2, z, w = names[i]
        linear[y] = pr.b - inst.p
        linear[l2] = pr.m
        quadratic[(y, y)] = pr.a

    rows = []
    if inst.cap_enabled:
        rows.append(Constraint("cap", {names[i][0]: 1.0 for i in range(n)}, "<=", inst.f))
    for i, pr in enumerate(inst.prosumers):
        y, l1, l2, z, w = names[i]
        k = i + 1
        rows.append(Constraint(f"stat{k}", {y: pr.a, l1: -1.0, l2: 1.0}, ">=", -pr.b))
        rows.append(Constraint(f"yz{k}", {y: 1.0, z: -M}, "<=", 0.0))
        rows.append(Constraint(f"yw{k}", {y: -1.0, w: -M}, "<=", -pr.m))
        rows.append(Constraint(f"lz{k}", {l1: 1.0, z: M}, "<=", M))
        rows.append(Constraint(f"lw{k}", {l2: 1.0, w: M}, "<=", M))

    return MipModel(
        name=name,
        variables=variables,
        linear=linear,
        quadratic=quadratic,
        constant=inst.p * inst.f,
        constraints=rows,
        big_m=M,
        meta={"n": str(n)},
    )


# -- branch and bound ----------------------------------------------------------


@dataclass(frozen=True)
class MipSolution:
    """Outcome of :func:`solve_mip_bb`.

    ``status`` is one of ``"optimal"``, ``"infeasible"``, ``"node_limit"``
    and ``"time_limit"``. Under a limit the incumbent (possibly ``None``) is
    returned together with the best remaining bound.
    """

    status: str
    objective: float
    x: Optional[np.ndarray]
    y: Optional[np.ndarray]
    lam1: Optional[np.ndarray]
    lam2: Optional[np.ndarray]
    z: Optional[np.ndarray]
    w: Optional[np.ndarray]
    nodes: int
    bound: float

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def has_incumbent(self) -> bool:
        return self.y is not None


class _Structure:
    """Per-prosumer data recovered from the coefficients of a big-M model."""

    def __init__(self, model: MipModel):
        n = sum(1 for v in model.variables if v.binary) // 2
        self.n = n
        a, b, m, q, r, c2 = (np.zeros(n) for _ in range(6))
        mz, mw, m1, m2 = (np.zeros(n) for _ in range(4))
        rows = {c.name: c for c in model.constraints}
        cols = {v.name: v for v in model.variables}
        for i in range(n):
            y, l1, l2, z, w = _names(i)
            k = i + 1
            stat = rows[f"stat{k}"]
            if stat.coeffs.get(l1) != -1.0 or stat.coeffs.get(l2) != 1.0 or stat.sense != ">=":
                raise ValueError(f"row stat{k} is not a KKT stationarity row")
            a[i] = stat.coeffs[y]
            b[i] = -stat.rhs
            m[i] = cols[y].ub
            q[i] = model.quadratic.get((y, y), 0.0)
            r[i] = model.linear.get(y, 0.0)
            c2[i] = model.linear.get(l2, 0.0)
            if model.linear.get(l1, 0.0) != 0.0 or c2[i] < 0 or q[i] <= 0:
                raise ValueError(f"objective of prosumer {k} is not of big-M KKT form")
            mz[i] = -rows[f"yz{k}"].coeffs[z]
            mw[i] = -rows[f"yw{k}"].coeffs[w]
            m1[i] = rows[f"lz{k}"].coeffs[z]
            m2[i] = rows[f"lw{k}"].coeffs[w]
        self.a, self.b, self.m, self.q, self.r, self.c2 = a, b, m, q, r, c2
        self.mz, self.mw, self.m1, self.m2 = mz, mw, m1, m2
        self.cap = rows["cap"].rhs if "cap" in rows else None
        self.constant = model.constant
        self._leaves()

    def _leaves(self):
        """Feasible ``y`` interval and extra cost for each fixed ``(z_i, w_i)``.

        Row ``k = 2*z + w``. With ``l1 = 0`` (never worse), ``w = 1`` forces
        ``l2 = 0`` and hence ``y >= -b/a``; ``w = 0`` pins ``y = m`` and costs
        ``m * l2`` with the smallest admissible ``l2``.
        """
        a, b, m = self.a, self.b, self.m
        n = self.n
        lo = np.empty((4, n))
        hi = np.empty((4, n))
        extra = np.zeros((4, n))
        feas = np.empty((4, n), dtype=bool)
        for z in (0, 1):
            for w in (0, 1):
                k = 2 * z + w
                y_lo = np.maximum(0.0, m - self.mw * w)
                y_hi = np.minimum(m, self.mz * z)
                ok = np.ones(n, dtype=bool)
                if w == 1:
                    y_lo = np.maximum(y_lo, -b / a)
                else:
                    y_lo = np.maximum(y_lo, m)
                    y_hi = np.minimum(y_hi, m)
                    lam2 = np.maximum(0.0, -(a * m + b))
                    ok &= lam2 <= self.m2
                    extra[k] = self.c2 * lam2
                ok &= y_lo <= y_hi
                lo[k], hi[k], feas[k] = y_lo, y_hi, ok
        self.leaf_lo, self.leaf_hi, self.leaf_extra, self.leaf_ok = lo, hi, extra, feas

    def relax(self, zs, ws):
        """Interval hull and cheapest extra cost over the completions of a node."""
        zk = np.array([0, 0, 1, 1])[:, None]
        wk = np.array([0, 1, 0, 1])[:, None]
        mask = self.leaf_ok & ((zs < 0) | (zk == zs)) & ((ws < 0) | (wk == ws))
        if not mask.any(axis=0).all():
            return None
        lo = np.where(mask, self.leaf_lo, np.inf).min(axis=0)
        hi = np.where(mask, self.leaf_hi, -np.inf).max(axis=0)
        extra = np.where(mask, self.leaf_extra, np.inf).min(axis=0)
        return lo, hi, extra

    def bound(self, zs, ws):
        rel = self.relax(zs, ws)
        if rel is None:
            return None
        lo, hi, extra = rel
        try:
            y, _ = solve_separable(self.q, self.r, lo, hi, self.cap)
        except InfeasibleCap:
            return None
        value = float(np.sum(self.q * y * y + self.r * y) + extra.sum() + self.constant)
        return value, y

    def round_leaf(self, y):
        """Per-prosumer leaf whose ``y`` interval lies closest to ``y``."""
        gap = np.maximum(np.maximum(self.leaf_lo - y, y - self.leaf_hi), 0.0)
        gap = np.where(self.leaf_ok, gap, np.inf)
        # lexsort keys: last is primary
        k = np.array([np.lexsort((np.arange(4), self.leaf_extra[:, i], gap[:, i]))[0]
                      for i in range(self.n)], dtype=int)
        return k // 2, k % 2

    def leaf_solution(self, zs, ws, y):
        a, b = self.a, self.b
        lam2 = np.where(ws == 0, np.maximum(0.0, -(a * y + b)), 0.0)
        # l1 only lowers the price; take it as large as z and x >= 0 allow
        lam1 = np.minimum(np.maximum(0.0, a * y + b + lam2), self.m1 * (1 - zs))
        x = a * y + b - lam1 + lam2
        return x, lam1, lam2


def solve_mip_bb(
    model: MipModel,
    max_nodes: int = DEFAULT_MAX_NODES,
    time_limit: Optional[float] = None,
    heuristic: bool = True,
) -> MipSolution:
    """Depth-first branch-and-bound over the binaries of a big-M model.

    Branches on ``z_1..z_n`` and then ``w_1..w_n``. Each node is bounded by
    the separable QP over the interval hull of its completions, which is
    exact once all binaries are fixed. The better child is explored first,
    ``0`` before ``1`` on ties.

    With ``heuristic`` on, the root relaxation is rounded to the nearest
    leaf to seed the incumbent, so a node or time limit usually still
    returns a feasible point. The search does not count this as a node.
    """
    st = _Structure(model)
    n = st.n
    start = time.perf_counter()
    depth_max = 2 * n

    incumbent = math.inf
    best = None
    nodes = 0
    root_z = np.full(n, -1)
    root_w = np.full(n, -1)
    root = st.bound(root_z, root_w)
    stack = [] if root is None else [(root[0], 0, root_z, root_w, root[1])]
    if heuristic and root is not None and n:
        hz, hw = st.round_leaf(root[1])
        leaf = st.bound(hz, hw)
        if leaf is not None:
            incumbent, best = leaf[0], (hz, hw, leaf[1])
    status = "optimal"

    while stack:
        if nodes >= max_nodes:
            status = "node_limit"
            break
        if time_limit is not None and time.perf_counter() - start > time_limit:
            status = "time_limit"
            break
        value, depth, zs, ws, y = stack.pop()
        if value >= incumbent - _GAP_RTOL * max(1.0, abs(incumbent)):
            continue
        nodes += 1
        if depth == depth_max:
            incumbent = value
            best = (zs, ws, y)
            continue
        children = []
        for bit in (0, 1):
            cz, cw = zs.copy(), ws.copy()
            if depth < n:
                cz[depth] = bit
            else:
                cw[depth - n] = bit
            res = st.bound(cz, cw)
            if res is not None:
                children.append((res[0], bit, cz, cw, res[1]))
        # push the worse child first so the better one is popped next
        children.sort(key=lambda c: (c[0], c[1]), reverse=True)
        for value_c, _, cz, cw, cy in children:
            stack.append((value_c, depth + 1, cz, cw, cy))

    remaining = min((s[0] for s in stack), default=math.inf)
    if status == "optimal" and best is None:
        status = "infeasible"
    bound = min(incumbent, remaining) if status != "optimal" else incumbent

    if best is None:
        return MipSolution(status, math.inf, None, None, None, None, None, None, nodes, bound)
    zs, ws, y = best
    x, lam1, lam2 = st.leaf_solution(zs, ws, y)
    return MipSolution(status, incumbent, x, y, lam1, lam2, zs.astype(int), ws.astype(int), nodes, bound)

