from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexmarket.convex_solver import solve
from flexmarket.lp_format import export_lp, parse_lp
from flexmarket.market_model import MarketInstance
from flexmarket.mpec_mip import (
    build_big_m_mip,
    build_kkt_system,
    choose_big_m,
    solve_mip_bb,
)

from instances import EXAMPLE_ONE, instances

DATA = Path(__file__).parent / "data"
TOY = MarketInstance.from_arrays([1], [-1], [2], p=1, f=1)


def rel_gap(u, v):
    return abs(u - v) / max(1.0, abs(v))


class TestKktSystem:
    def test_stationarity_at_example_one(self):
        sys_ = build_kkt_system(EXAMPLE_ONE)
        assert sys_.stationarity([6, 6], [4, 4], [0, 0], [0, 0]).tolist() == [0, 0]

    def test_complementarity_at_bounds(self):
        inst = MarketInstance.from_arrays([1, 1], [2, 2], [6, 6], p=10, f=30)
        sys_ = build_kkt_system(inst)
        # y = 0 with any lam1 >= 0, y = m with any lam2 >= 0
        rep = sys_.evaluate([1.5, 9.0], [0.0, 6.0], [0.5, 0.0], [0.0, 1.0])
        assert rep.complementarity == 0 and rep.stationarity == 0 and rep.sign == 0

    def test_violation_reported(self):
        rep = build_kkt_system(EXAMPLE_ONE).evaluate([6, 6], [4, 4], [1, 0], [0, 0])
        assert rep.complementarity == 4 and rep.stationarity == 1

    @settings(max_examples=200)
    @given(instances(max_n=8))
    def test_convex_allocation_satisfies_kkt(self, inst):
        alloc = solve(inst)
        sys_ = build_kkt_system(inst)
        lam1, lam2 = sys_.consistent_duals(alloc.x, alloc.y)
        assert sys_.evaluate(alloc.x, alloc.y, lam1, lam2).residual <= 1e-9


class TestModel:
    def test_sizes_single(self):
        model = build_big_m_mip(TOY, 40.0)
        assert (model.n_continuous, model.n_binary, len(model.constraints)) == (3, 2, 6)

    @given(instances(max_n=6, cap=True))
    def test_sizes(self, inst):
        model = build_big_m_mip(inst, choose_big_m(inst))
        n = inst.n
        assert (model.n_continuous, model.n_binary, len(model.constraints)) == (3 * n, 2 * n, 5 * n + 1)

    def test_rejects_nonpositive_m(self):
        with pytest.raises(ValueError):
            build_big_m_mip(EXAMPLE_ONE, 0.0)

    def test_objective_coefficients(self):
        model = build_big_m_mip(EXAMPLE_ONE, 300.0)
        assert model.linear == {"y1": -8.0, "l2_1": 6.0, "y2": -8.0, "l2_2": 6.0}
        assert model.quadratic == {("y1", "y1"): 1.0, ("y2", "y2"): 1.0}
        assert model.constant == 300.0


class TestChooseBigM:
    def test_example_one(self):
        assert choose_big_m(EXAMPLE_ONE) == 300

    def test_zero_flexibility(self):
        inst = MarketInstance.from_arrays([1, 1], [0, 0], [0, 0], p=2.5, f=0)
        assert choose_big_m(inst) == 25

    def test_small(self):
        assert choose_big_m(TOY) == 40


class TestExport:
    def test_golden_toy(self):
        text = export_lp(build_big_m_mip(TOY, choose_big_m(TOY), name="toy_n1"))
        assert text == (DATA / "toy_n1.lp").read_text()

    def test_binaries_section(self):
        text = export_lp(build_big_m_mip(TOY, 40.0))
        lines = text.splitlines()
        assert lines[lines.index("Binaries") + 1].split() == ["z1", "w1"]

    def test_header_records_m(self):
        assert "\\ big-M = 3.0" in export_lp(build_big_m_mip(EXAMPLE_ONE, 3.0))

    @settings(max_examples=100)
    @given(instances(max_n=14), st.floats(1e-3, 1e4))
    def test_roundtrip(self, inst, big_m):
        model = build_big_m_mip(inst, big_m, name="rt")
        text = export_lp(model)
        back = parse_lp(text)
        assert back == model
        assert export_lp(back) == text

    def test_parser_rejects_garbage(self):
        with pytest.raises(ValueError):
            parse_lp("y1 + y2\n")


class TestBranchAndBound:
    def test_example_one(self):
        sol = solve_mip_bb(build_big_m_mip(EXAMPLE_ONE, 300.0))
        assert sol.optimal and sol.objective == 268
        assert sol.y.tolist() == [4, 4] and sol.x.tolist() == [6, 6]
        assert sol.z.tolist() == [1, 1] and sol.w.tolist() == [1, 1]

    def test_large_m(self):
        assert solve_mip_bb(build_big_m_mip(EXAMPLE_ONE, 1000.0)).objective == 268

    def test_search_without_heuristic(self):
        sol = solve_mip_bb(build_big_m_mip(EXAMPLE_ONE, 300.0), heuristic=False)
        assert sol.optimal and sol.objective == 268 and sol.nodes > 1

    def test_inadequate_m_excludes_optimum(self):
        sol = solve_mip_bb(build_big_m_mip(EXAMPLE_ONE, 3.0))
        assert sol.optimal and sol.objective > 268

    def test_node_limit(self):
        model = build_big_m_mip(EXAMPLE_ONE, 300.0)
        sol = solve_mip_bb(model, max_nodes=1, heuristic=False)
        assert sol.status == "node_limit" and not sol.has_incumbent
        assert sol.bound <= 268
        # the rounding heuristic supplies an incumbent no better than optimal
        sol = solve_mip_bb(model, max_nodes=1)
        assert sol.has_incumbent and sol.objective >= 268

    def test_time_limit(self):
        rng = np.random.default_rng(0)
        n = 12
        inst = MarketInstance.from_arrays(rng.uniform(1, 2, n), rng.uniform(0, 1, n), np.full(n, 3.0), 5, 9)
        sol = solve_mip_bb(build_big_m_mip(inst, 200.0), time_limit=0.0, heuristic=False)
        assert sol.status == "time_limit"

    def test_idle_prosumer_leaf(self):
        # with m = 0 the leaf z = w = 0 is the only one where y is pinned twice
        inst = MarketInstance.from_arrays([1, 1], [2, 2], [6, 0], p=10, f=30)
        sol = solve_mip_bb(build_big_m_mip(inst, choose_big_m(inst)), heuristic=False)
        assert sol.optimal and sol.objective == pytest.approx(solve(inst).objective)

    def test_infeasible(self):
        inst = MarketInstance.from_arrays([1, 1], [-1, -2], [5, 5], p=1, f=2)
        sol = solve_mip_bb(build_big_m_mip(inst, 100.0))
        assert sol.status == "infeasible" and not sol.has_incumbent

    def test_reads_exported_file(self):
        sol = solve_mip_bb(parse_lp((DATA / "toy_n1.lp").read_text()))
        assert sol.optimal and sol.objective == solve(TOY).objective

    @settings(max_examples=150, deadline=None)
    @given(instances(max_n=6), st.booleans())
    def test_matches_convex_with_heuristic_m(self, inst, heuristic):
        ref = solve(inst).objective
        sol = solve_mip_bb(build_big_m_mip(inst, choose_big_m(inst)), heuristic=heuristic)
        assert sol.optimal and rel_gap(sol.objective, ref) <= 1e-6

    @settings(max_examples=150, deadline=None)
    @given(instances(min_n=1, max_n=6), st.floats(1e-3, 1.0))
    def test_small_m_never_beats_convex(self, inst, scale):
        ref = solve(inst).objective
        sol = solve_mip_bb(build_big_m_mip(inst, scale * choose_big_m(inst) / 10))
        if sol.has_incumbent:
            assert sol.objective >= ref - 1e-9 * max(1.0, abs(ref))
