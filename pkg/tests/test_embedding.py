import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hermite_spaces.embedding import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    EmbeddingParams,
    lower_bound_balls,
    lower_bound_tiles,
    necessity_probe,
    random_sequence,
    singleton_log_ratios,
    sufficiency_probe,
    verdict_from_log_maxima,
    verdict_from_log_minima,
)
from hermite_spaces.errors import ValidationError
from hermite_spaces.frames import FrameSequence
from hermite_spaces.norms import SpaceParams, TileMasses, sequence_norm
from hermite_spaces.tiles import build_grid, position_to_alpha
from hermite_spaces.weights import Weight


@pytest.fixture(scope="module")
def grid():
    return build_grid(1, J=4)


@pytest.fixture(scope="module")
def small_grid():
    return build_grid(1, J=3)


def standard(scale="b"):
    return EmbeddingParams.parse("a=1,p=1,q=1", "a=0.5,p=2,q=2", 1.0, scale)


class TestVerdicts:
    @pytest.mark.parametrize(
        "logs,expected",
        [
            ([0.0, -0.1, -0.5], PASS),
            ([0.0, -1.0, -1.0 - 0.99 * math.log(2)], PASS),
            ([0.0, -1.0, -1.0 - math.log(3)], INCONCLUSIVE),
            ([0.0, -1.0, -1.0 - 1.01 * math.log(4)], FAIL),
            ([0.0, -math.inf], FAIL),
            ([0.0], INCONCLUSIVE),
        ],
    )
    def test_minima(self, logs, expected):
        assert verdict_from_log_minima(logs) == expected

    def test_maxima_mirror(self):
        assert verdict_from_log_maxima([0.0, 5.0]) == FAIL
        assert verdict_from_log_maxima([1.0, 1.2]) == PASS


class TestParams:
    def test_standard_is_admissible(self):
        p = standard()
        assert p.source.kind == p.target.kind == "besov"
        assert p.exponent == pytest.approx(-0.5)

    def test_aggregates_errors(self):
        with pytest.raises(ValidationError) as e:
            EmbeddingParams.parse("a=0.5,p=2,q=2", "a=1,p=1,q=1", 1.0, "b")
        msg = str(e.value)
        assert "alpha1 <= alpha2" in msg and "q2 <= q1" in msg and "p2 <= p1" in msg

    def test_balance_relation(self):
        with pytest.raises(ValidationError, match="gamma"):
            EmbeddingParams.parse("a=1,p=1,q=1", "a=0.6,p=2,q=2", 1.0)

    def test_f_scale_ignores_q_order(self):
        p = EmbeddingParams.parse("a=1,p=1,q=3", "a=0.5,p=2,q=1", 1.0, "f")
        assert p.target.kind == "triebel"

    @pytest.mark.parametrize("gamma", [0.0, -1.0, math.inf])
    def test_bad_gamma(self, gamma):
        with pytest.raises(ValidationError):
            EmbeddingParams.parse("a=1,p=1,q=1", "a=1,p=1,q=1", gamma)

    def test_bad_scale(self):
        with pytest.raises(ValidationError):
            EmbeddingParams.parse("a=1,p=1,q=1", "a=1,p=1,q=1", 1.0, "x")


class TestLowerBounds:
    @pytest.mark.parametrize(
        "w,gamma,expected",
        [
            (Weight.constant(), 1.0, PASS),
            (Weight.power_law(0.5), 1.5, PASS),
            (Weight.gaussian(1.0), 1.0, PASS),
            (Weight.gaussian(-1.0), 1.0, FAIL),
        ],
        ids=["one", "power", "growth", "decay"],
    )
    def test_tiles_and_balls_agree(self, grid, w, gamma, expected):
        t = lower_bound_tiles(w, grid, gamma)
        b = lower_bound_balls(w, gamma, grid)
        assert t.verdict == b.verdict == expected
        if expected == FAIL:
            assert t.witness["ratio"] == t.minimum and b.witness["ratio"] == b.minimum

    def test_tile_scan_matches_direct_masses(self, small_grid):
        w = Weight.power_law(0.5)
        rep = lower_bound_tiles(w, small_grid, 1.5)
        for j in range(small_grid.J + 1):
            N = small_grid.axis(j).N
            vals = [w.mass(small_grid.tile(j, position_to_alpha(np.array([i]), N))) * 2 ** (1.5 * j) for i in range(2 * N)]
            assert rep.per_level[j] == pytest.approx(min(vals), rel=1e-12)

    def test_cumulative_is_nonincreasing(self, grid):
        rep = lower_bound_tiles(Weight.gaussian(-0.3), grid, 1.0)
        assert np.all(np.diff(rep.cumulative) <= 0)

    def test_constant_ball_ratio(self, small_grid):
        # w = 1: w(B(x, r)) / r = 2; box edges x +- r lose digits when |x| >> r
        rep = lower_bound_balls(Weight.constant(), 1.0, small_grid)
        assert all(v == pytest.approx(2.0, rel=1e-9) for v in rep.per_level.values())

    def test_depth_out_of_range(self, small_grid):
        with pytest.raises(ValidationError):
            lower_bound_tiles(Weight.constant(), small_grid, 1.0, J=9)


class TestNecessity:
    @settings(max_examples=40, deadline=None)
    @given(
        a2=st.floats(0.0, 2.0),
        p2=st.floats(0.5, 4.0),
        p1_over=st.floats(1.0, 3.0),
        gamma=st.floats(0.2, 3.0),
        j=st.integers(0, 3),
    )
    def test_singleton_formula(self, a2, p2, p1_over, gamma, j):
        grid = build_grid(1, J=3)
        p1 = p2 * p1_over
        a1 = a2 - gamma / p2 + gamma / p1
        params = EmbeddingParams(SpaceParams(a2, p2, 1.0), SpaceParams(a1, p1, 2.0), gamma)
        w = Weight.power_law(0.5)
        logs = singleton_log_ratios(params, TileMasses(w, grid), j)
        N = grid.axis(j).N
        mass = np.array([w.mass(grid.tile(j, position_to_alpha(np.array([i]), N))) for i in range(2 * N)])
        expected = (1 / p1 - 1 / p2) * (np.log(mass) + j * gamma * math.log(2))
        np.testing.assert_allclose(logs, expected, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("kind", ["b", "f"])
    @pytest.mark.parametrize("j,alpha", [(1, 2), (3, -20)])
    def test_singleton_matches_sequence_norms(self, small_grid, kind, j, alpha):
        params = standard(kind)
        w = Weight.gaussian(-0.5)
        s = FrameSequence.zeros(1, 3, small_grid.delta_star)
        s.levels[j][small_grid.flat_index(j, alpha)] = 1.0
        ratio = sequence_norm(s, params.target, w, small_grid).value / sequence_norm(s, params.source, w, small_grid).value
        logs = singleton_log_ratios(params, TileMasses(w, small_grid), j)
        assert math.log(ratio) == pytest.approx(logs[small_grid.flat_index(j, alpha)], abs=1e-12)

    def test_equal_p_gives_ratio_one(self, small_grid):
        params = EmbeddingParams.parse("a=1,p=2,q=1", "a=1,p=2,q=2", 1.0)
        rep = necessity_probe(params, Weight.gaussian(-1.0), small_grid)
        assert all(v == pytest.approx(1.0, abs=1e-14) for v in rep.per_level.values())
        assert rep.verdict == PASS

    @pytest.mark.parametrize("w,expected", [(Weight.constant(), PASS), (Weight.gaussian(-1.0), FAIL)], ids=["one", "decay"])
    def test_verdicts(self, grid, w, expected):
        assert necessity_probe(standard(), w, grid).verdict == expected

    def test_growth_beyond_factor_four(self, grid):
        rep = necessity_probe(standard(), Weight.gaussian(-1.0), grid)
        assert rep.log_per_level[4] - rep.log_per_level[3] >= math.log(4)
        assert rep.witness["level"] == 4


class TestSufficiency:
    def test_deterministic(self, small_grid):
        a = sufficiency_probe(standard(), Weight.constant(), small_grid, 20, seed=3)
        b = sufficiency_probe(standard(), Weight.constant(), small_grid, 20, seed=3)
        np.testing.assert_array_equal(a.ratios, b.ratios)

    def test_prefix_stable(self, small_grid):
        a = sufficiency_probe(standard(), Weight.constant(), small_grid, 10, seed=1)
        b = sufficiency_probe(standard(), Weight.constant(), small_grid, 20, seed=1)
        np.testing.assert_array_equal(a.ratios, b.ratios[:10])

    @pytest.mark.parametrize("w", [Weight.constant(), Weight.gaussian(-0.5)], ids=["one", "decay"])
    def test_bounded_by_singleton_max(self, small_grid, w):
        # termwise domination by the singleton max, then l^2 <= l^1
        nec = necessity_probe(standard(), w, small_grid)
        suf = sufficiency_probe(standard(), w, small_grid, 50, seed=0)
        assert suf.maximum <= nec.maximum * (1 + 1e-12)

    def test_histogram_counts(self, small_grid):
        rep = sufficiency_probe(standard(), Weight.constant(), small_grid, 30, seed=0, bins=5)
        assert sum(rep.histogram["counts"]) == 30 and len(rep.histogram["log10_edges"]) == 6

    def test_random_sequence_nonzero_and_capped(self, small_grid):
        rng = np.random.default_rng(0)
        for _ in range(20):
            s = random_sequence(rng, small_grid, 3, cap=5)
            assert any(np.any(s.level(j)) for j in range(4))
            assert all(np.count_nonzero(s.level(j)) <= 5 for j in range(4))

    def test_rejects_zero_trials(self, small_grid):
        with pytest.raises(ValidationError):
            sufficiency_probe(standard(), Weight.constant(), small_grid, 0)
