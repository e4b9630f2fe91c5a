import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexmarket.best_response import aggregator_cost, best_response_vec
from flexmarket.convex_solver import solve
from flexmarket.errors import InfeasibleCap, SizeLimit
from flexmarket.market_model import MarketInstance
from flexmarket.oracle import (
    Piece,
    brute_force_optimum,
    grid_search_bilevel,
    solve_piece_restricted,
)

from instances import EXAMPLE_ONE, SINGLE, instances

L, M, U = Piece.LOWER, Piece.MIDDLE, Piece.UPPER


def close(u, v, rtol=1e-8):
    return abs(u - v) <= rtol * max(1.0, abs(u), abs(v))


class TestRestricted:
    def test_middle_middle(self):
        cand = solve_piece_restricted(EXAMPLE_ONE, (M, M))
        assert cand.objective == 268 and cand.y.tolist() == [4, 4]

    def test_upper_upper_takes_closure_price(self):
        cand = solve_piece_restricted(EXAMPLE_ONE, (U, U))
        assert cand.y.tolist() == [6, 6] and cand.x.tolist() == [8, 8]
        assert cand.objective == 276

    def test_lower_lower(self):
        cand = solve_piece_restricted(EXAMPLE_ONE, (L, L))
        assert cand.y.tolist() == [0, 0] and cand.objective == 300

    def test_lower_needs_positive_offset(self):
        inst = MarketInstance.from_arrays([1, 1], [-1, 2], [4, 4], p=3, f=8)
        assert solve_piece_restricted(inst, (L, M)) is None
        assert solve_piece_restricted(inst, (M, L)) is not None

    def test_fixed_flexibility_over_cap(self):
        assert solve_piece_restricted(EXAMPLE_ONE.replace(f=10), (U, U)) is None

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            solve_piece_restricted(EXAMPLE_ONE, (M,))

    @given(instances(min_n=1, max_n=4), st.data())
    def test_candidates_lie_on_response_graph(self, inst, data):
        pa = data.draw(st.lists(st.sampled_from(list(Piece)), min_size=inst.n, max_size=inst.n))
        cand = solve_piece_restricted(inst, pa)
        if cand is None:
            return
        assert np.all(cand.x >= 0)
        y_br = best_response_vec(cand.x, inst.a, inst.b, inst.m)
        assert np.allclose(cand.y, y_br, rtol=0, atol=1e-9 * max(1.0, float(inst.m.max())))
        assert close(cand.objective, aggregator_cost(cand.x, cand.y, inst), 1e-12)
        if inst.cap_enabled:
            assert cand.y.sum() <= inst.f + 1e-9 * max(1.0, inst.f)


class TestBruteForce:
    def test_example_one(self):
        cand = brute_force_optimum(EXAMPLE_ONE)
        assert cand.objective == 268 and cand.assignment == (M, M)

    def test_degenerate_cap_tie_goes_to_lower(self):
        inst = MarketInstance.from_arrays([1], [2], [5], p=4, f=0)
        cand = brute_force_optimum(inst)
        assert cand.objective == 0 and cand.assignment == (L,)

    def test_assumption_violation_surfaces(self):
        inst = MarketInstance.from_arrays([1, 1], [-1, -2], [5, 5], p=1, f=2)
        with pytest.raises(InfeasibleCap):
            brute_force_optimum(inst)

    def test_size_limit(self):
        inst = MarketInstance.from_arrays(np.ones(4), np.ones(4), np.ones(4), 1, 1)
        with pytest.raises(SizeLimit):
            brute_force_optimum(inst, limit=3)

    def test_chunked_enumeration_matches(self):
        # 3**11 assignments span more than one chunk
        rng = np.random.default_rng(3)
        a = rng.uniform(0.5, 2, 11)
        b = rng.uniform(-0.5, 3, 11)
        m = np.maximum(rng.uniform(0, 4, 11), -b / a + 0.5)
        inst = MarketInstance.from_arrays(a, b, m, p=5, f=6)
        assert close(brute_force_optimum(inst).objective, solve(inst).objective)

    @settings(max_examples=200)
    @given(instances(max_n=5))
    def test_agrees_with_convex_solver(self, inst):
        assert close(brute_force_optimum(inst).objective, solve(inst).objective)


class TestGrid:
    def test_example_one(self):
        cand = grid_search_bilevel(EXAMPLE_ONE, 401)
        assert 268 <= cand.objective <= 268.5

    def test_zero_imbalance(self):
        inst = MarketInstance.from_arrays([1], [1], [3], p=2, f=0)
        assert grid_search_bilevel(inst, 11).objective == 0

    def test_single_prosumer(self):
        assert abs(grid_search_bilevel(SINGLE, 2001).objective - 0.555) <= 1e-3

    def test_limits(self):
        inst = MarketInstance.from_arrays(np.ones(4), np.ones(4), np.ones(4), 1, 1)
        with pytest.raises(SizeLimit):
            grid_search_bilevel(inst, 5)
        with pytest.raises(ValueError):
            grid_search_bilevel(EXAMPLE_ONE, 1)

    @settings(max_examples=60, deadline=None)
    @given(instances(min_n=1, max_n=3), st.integers(2, 30))
    def test_nested_grids_bound_optimum_from_above(self, inst, steps):
        opt = solve(inst).objective
        coarse = grid_search_bilevel(inst, steps).objective
        fine = grid_search_bilevel(inst, 2 * steps - 1).objective
        tol = 1e-9 * max(1.0, abs(opt))
        assert fine <= coarse + tol
        assert fine >= opt - tol
