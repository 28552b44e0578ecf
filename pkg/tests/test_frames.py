import json
import math

import numpy as np
import pytest
from numpy.polynomial.hermite import hermgauss

from hermite_spaces.errors import ConstraintError, ValidationError
from hermite_spaces.frames import (
    FrameSequence,
    analysis_levels,
    analyze,
    cubature_integrate,
    needlet_eval,
    needlet_expansion,
    peetre_probe,
    plancherel_polya_probe,
    reconstruction_error,
    synthesize,
)
from hermite_spaces.hermite_core import HermiteExpansion, hermite_table, random_expansions
from hermite_spaces.multipliers import build_partition_system, build_tight_system, dual_system, support_index_set
from hermite_spaces.tiles import build_grid, level_size, position_to_alpha
from hermite_spaces.weights import Weight


@pytest.fixture(scope="module")
def phi():
    return build_partition_system()


@pytest.fixture(scope="module")
def psi(phi):
    return dual_system(phi)


@pytest.fixture(scope="module")
def tight():
    return build_tight_system()


@pytest.fixture(scope="module")
def grid():
    return build_grid(1, J=5)


@pytest.fixture(scope="module")
def grid2():
    return build_grid(2, J=3)


def basis(N, k):
    c = np.zeros(N + 1)
    c[k] = 1.0
    return HermiteExpansion(1, N, c)


def expansion_values(f, x):
    return hermite_table(f.N, x) @ f.coeffs


class TestCubature:
    def test_h0_h0(self, grid):
        h0 = lambda x: expansion_values(basis(0, 0), x[:, 0])
        assert cubature_integrate(grid, 0, h0, h0) == pytest.approx(1.0, abs=1e-10)

    def test_h0_h1(self, grid):
        h0 = lambda x: expansion_values(basis(0, 0), x[:, 0])
        h1 = lambda x: expansion_values(basis(1, 1), x[:, 0])
        assert abs(cubature_integrate(grid, 0, h0, h1)) < 1e-10

    @pytest.mark.parametrize("j", [0, 1, 2, 3])
    def test_random_against_gauss_hermite(self, grid, j):
        deg = 2 * level_size(j) - 1
        f = random_expansions(1, deg, 1, seed=j)[0]
        fv = lambda x: expansion_values(f, x[:, 0])
        t, w = hermgauss(deg + 10)
        oracle = np.sum(w * np.exp(t * t) * expansion_values(f, t) ** 2)
        assert cubature_integrate(grid, j, fv, fv) == pytest.approx(oracle, rel=1e-9)

    def test_degree_limit_is_sharp(self, grid):
        # h_{2N}^2 has degree 4N > 4N - 1 and the nodes are zeros of h_{2N}
        N = level_size(1)
        hk = lambda x: expansion_values(basis(2 * N, 2 * N), x[:, 0])
        assert abs(cubature_integrate(grid, 1, hk, hk)) < 1e-12

    def test_node_value_arrays(self, grid):
        vals = np.ones(grid.tile_count(2))
        assert cubature_integrate(grid, 2, vals, vals) == pytest.approx(np.sum(grid.taus(2)))

    def test_size_mismatch(self, grid):
        with pytest.raises(ValidationError):
            cubature_integrate(grid, 1, np.ones(3), np.ones(3))

    def test_two_dimensional(self, grid2):
        f = random_expansions(2, 9, 1, seed=4)[0]
        from hermite_spaces.hermite_core import design_matrix

        vals = design_matrix(2, 9, grid2.nodes(1)) @ f.coeffs
        assert cubature_integrate(grid2, 1, vals, vals) == pytest.approx(f.norm() ** 2, rel=1e-12)


class TestNeedlets:
    def test_level0_vanishes(self, phi, grid):
        # the only eigenvalue in the level-0 band sits on its edge, where phi_0 = 0
        assert not np.any(phi.multipliers(0, 1, 4))
        x = np.linspace(-3, 3, 7)
        np.testing.assert_array_equal(needlet_eval(phi, grid, 0, 1, x), 0.0)

    @pytest.mark.parametrize("j", [3, 4, 5])
    @pytest.mark.parametrize("rel", [0.0, 0.3, 0.6])
    def test_peak_and_decay(self, phi, grid, j, rel):
        # bulk tiles only: near the turning point sqrt(2) 2^j the node is no longer the peak
        nodes = np.array([float(grid.tile(j, a).node[0]) for a in range(1, grid.axis(j).N + 1)])
        alpha = int(np.argmin(np.abs(nodes - rel * 2.0**j))) + 1
        xr = nodes[alpha - 1]
        peak = abs(needlet_eval(phi, grid, j, alpha, [xr])[0])
        d = 5 * 2.0**-j
        ray = xr + np.concatenate((np.linspace(d, 8, 400), -np.linspace(d, 8, 400)))
        assert np.all(np.abs(needlet_eval(phi, grid, j, alpha, ray)) <= peak)

    @pytest.mark.parametrize("j,alpha", [(1, 2), (2, -3), (3, 40)])
    def test_coefficients_against_gauss_hermite(self, phi, grid, j, alpha):
        tile = grid.tile(j, alpha)
        ks = support_index_set(phi, j, 1)
        K = int(ks[-1])
        t, w = hermgauss(K + 20)
        vals = needlet_eval(phi, grid, j, alpha, t)
        H = hermite_table(K, t)
        got = (w * np.exp(t * t) * vals) @ H
        m = phi.multipliers(j, 1, K)
        expected = math.sqrt(tile.tau) * m * hermite_table(K, tile.node)[0]
        np.testing.assert_allclose(got, expected, atol=1e-10)

    def test_expansion_matches_eval(self, phi, grid):
        f = needlet_expansion(phi, grid, 2, 5)
        x = np.linspace(-4, 4, 31)
        np.testing.assert_allclose(expansion_values(f, x), needlet_eval(phi, grid, 2, 5, x), atol=1e-13)


class TestAnalyze:
    def test_levels(self):
        assert list(analysis_levels(3)) == [0, 1, 2, 3, 4, 5]

    def test_zero(self, phi, grid):
        s = analyze(phi, grid, HermiteExpansion.zeros(1, 10), 2)
        assert s.is_zero() and s.J == 4

    def test_h0_only_level_one(self, phi, grid):
        s = analyze(phi, grid, basis(0, 0), 1)
        for j in s.levels:
            if phi.phi(j, np.array([1.0]))[0] == 0.0:
                assert not np.any(s.level(j))
        assert np.any(s.level(1))

    def test_linearity(self, phi, grid):
        f, g = random_expansions(1, 50, 2, seed=8)
        a, b = 1.7, -0.4
        lhs = analyze(phi, grid, f * a + g * b, 3)
        rhs = analyze(phi, grid, f, 3) * a + analyze(phi, grid, g, 3) * b
        scale = max(np.max(np.abs(v)) for v in lhs.levels.values())
        assert lhs.max_abs_diff(rhs) <= 1e-13 * scale

    def test_degree_overflow(self, phi, grid):
        with pytest.raises(ValidationError):
            analyze(phi, grid, basis(17, 17), 2)

    def test_trailing_zeros_allowed(self, phi, grid):
        f = HermiteExpansion(1, 40, np.concatenate(([1.0], np.zeros(40))))
        assert not analyze(phi, grid, f, 1).is_zero()

    def test_grid_too_small(self, phi):
        with pytest.raises(ValidationError):
            analyze(phi, build_grid(1, J=3), basis(4, 4), 2)

    def test_coefficient_formula(self, phi, grid):
        f = random_expansions(1, 16, 1, seed=1)[0]
        s = analyze(phi, grid, f, 2)
        tile = grid.tile(3, -4)
        pos = np.ravel_multi_index((level_size(3) - 4,), grid.shape(3))
        assert pos == grid.flat_index(3, (-4,))
        m = phi.multipliers(3, 1, 16)
        expected = math.sqrt(tile.tau) * np.sum(m * f.coeffs * hermite_table(16, tile.node)[0])
        assert s.level(3)[pos] == pytest.approx(expected, rel=1e-13)


class TestSynthesize:
    def test_zero(self, psi, grid):
        g = synthesize(psi, grid, FrameSequence.zeros(1, 3))
        assert not np.any(g.coeffs)

    def test_singleton_is_needlet(self, psi, grid):
        s = FrameSequence.zeros(1, 3)
        i = grid.flat_index(2, (6,))
        s.levels[2][i] = 1.0
        g = synthesize(psi, grid, s)
        ref = needlet_expansion(psi, grid, 2, 6)
        N = max(g.N, ref.N)
        np.testing.assert_allclose(g.padded(N).coeffs, ref.padded(N).coeffs, atol=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_reconstruction_partition(self, phi, psi, grid, seed):
        f = random_expansions(1, 64, 1, seed=seed)[0]
        assert reconstruction_error(phi, psi, grid, f, 3) < 1e-8

    def test_reconstruction_tight_complex(self, tight, grid):
        f = random_expansions(1, 64, 1, seed=9, complex_=True)[0]
        assert reconstruction_error(tight, tight, grid, f, 3) < 1e-8

    def test_reconstruction_two_dimensional(self, phi, psi, grid2):
        f = random_expansions(2, 4, 1, seed=3)[0]
        assert reconstruction_error(phi, psi, grid2, f, 1) < 1e-8

    @pytest.mark.parametrize("k", [0, 1, 2, 3])
    def test_vanishing_composition(self, phi, psi, grid, k):
        rng = np.random.default_rng(k)
        s = FrameSequence(1, 5, {k: rng.normal(size=grid.tile_count(k))})
        g = synthesize(psi, grid, s)
        J = 3  # psi_k lives below degree 4^k / 2 + 1 <= 4^3
        back = analyze(phi, grid, g, J)
        for j in back.levels:
            if abs(j - k) >= 3:
                assert not np.any(back.level(j))

    def test_incompatible_grid(self, psi, grid2):
        with pytest.raises(ValidationError):
            synthesize(psi, grid2, FrameSequence.zeros(1, 2))


class TestFrameSequence:
    def test_json_round_trip(self, phi, grid):
        f = random_expansions(1, 16, 1, seed=6, complex_=True)[0]
        s = analyze(phi, grid, f, 2)
        back = FrameSequence.from_json_dict(json.loads(json.dumps(s.to_json_dict())))
        assert back.max_abs_diff(s) == 0.0 and back.is_complex

    def test_json_lists_nonzero_only(self):
        s = FrameSequence.zeros(1, 2)
        s.levels[1][3] = 2.0
        d = s.to_json_dict()
        assert len(d["entries"]) == 1
        assert d["entries"][0] == {"j": 1, "node": [int(position_to_alpha(np.array([3]), level_size(1))[0])], "re": 2.0, "im": 0.0}

    @pytest.mark.parametrize(
        "entries",
        [
            [{"j": 0, "node": [0], "re": 1.0}],
            [{"j": 0, "node": [6], "re": 1.0}],
            [{"j": 3, "node": [1], "re": 1.0}],
            [{"j": 0, "node": [1], "re": 1.0, "extra": 0}],
            [{"j": 0, "node": [1], "re": 1.0}, {"j": 0, "node": [1], "re": 2.0}],
            [{"j": 0, "node": [1, 1], "re": 1.0}],
        ],
    )
    def test_json_strict(self, entries):
        with pytest.raises(ValidationError):
            FrameSequence.from_json_dict({"J": 2, "n": 1, "entries": entries})

    def test_json_unknown_field(self):
        with pytest.raises(ValidationError):
            FrameSequence.from_json_dict({"J": 1, "entries": [], "foo": 1})

    def test_level_validation(self):
        with pytest.raises(ValidationError):
            FrameSequence(1, 1, {2: np.zeros(level_size(2) * 2)})
        with pytest.raises(ValidationError):
            FrameSequence(1, 1, {0: np.zeros(3)})

    def test_entry_lookup(self):
        s = FrameSequence.zeros(1, 1)
        i = np.ravel_multi_index((level_size(1) - 1 + 2,), s.shape(1))
        s.levels[1][i] = 5.0
        assert s.entry(1, (2,)) == 5.0


class TestPlancherelPolya:
    def test_h0_positive(self, grid):
        assert plancherel_polya_probe(grid, basis(0, 0), 0, 2.0, Weight.constant()) > 0

    def test_homogeneity(self, grid):
        g = random_expansions(1, 16, 1, seed=2)[0]
        w = Weight.power_law(0.5)
        a = plancherel_polya_probe(grid, g, 2, 1.5, w)
        assert plancherel_polya_probe(grid, g * 2.0, 2, 1.5, w) == pytest.approx(a, rel=1e-12)

    def test_band(self, grid):
        ratios = []
        for j in (1, 2, 3):
            for g in random_expansions(1, 4**j, 50 if j < 3 else 20, seed=j):
                ratios.append(plancherel_polya_probe(grid, g, j, 2.0, Weight.constant()))
        assert max(ratios) / min(ratios) < 10
        assert min(ratios) >= 1.0  # tile maxima dominate the L^2 mass

    def test_band_limit_enforced(self, grid):
        with pytest.raises(ValidationError):
            plancherel_polya_probe(grid, basis(5, 5), 1, 2.0, Weight.constant())

    def test_zero(self, grid):
        assert plancherel_polya_probe(grid, HermiteExpansion.zeros(1, 4), 1, 2.0, Weight.constant()) == 0.0


class TestPeetre:
    sigma, s, theta = 3.5, 1.0, 1.0

    def test_singleton(self, grid):
        a = np.zeros(grid.tile_count(2))
        i = grid.flat_index(2, (3,))
        a[i] = 2.0
        node = grid.nodes(2)[i]
        rep = peetre_probe(grid, 2, a, self.sigma, self.s, self.theta, points=node[None, :])
        assert math.isfinite(rep.max_ratio) and rep.max_ratio > 0

    def test_homogeneity(self, grid):
        a = np.random.default_rng(0).lognormal(size=grid.tile_count(2))
        r1 = peetre_probe(grid, 2, a, self.sigma, self.s, self.theta).max_ratio
        r2 = peetre_probe(grid, 2, 2 * a, self.sigma, self.s, self.theta).max_ratio
        assert r2 == pytest.approx(r1, rel=1e-12)

    @pytest.mark.parametrize("sigma,s,theta", [(2.0, 1.0, 1.0), (1.9, 0.5, 0.0), (3.0, 0.0, 1.0)])
    def test_constraint(self, grid, sigma, s, theta):
        with pytest.raises(ConstraintError):
            peetre_probe(grid, 2, np.ones(grid.tile_count(2)), sigma, s, theta)

    def test_c_tilde_range(self, grid):
        with pytest.raises(ConstraintError):
            peetre_probe(grid, 2, np.ones(grid.tile_count(2)), self.sigma, self.s, self.theta, c_tilde=10.0)

    def test_zero_sequence(self, grid):
        assert peetre_probe(grid, 1, np.zeros(grid.tile_count(1)), self.sigma, self.s, self.theta).max_ratio == 0.0

    @pytest.mark.slow
    def test_level_independent(self, grid):
        out = {}
        for j in (2, 3):
            rng = np.random.default_rng(j)
            out[j] = max(
                peetre_probe(grid, j, rng.lognormal(size=grid.tile_count(j)), self.sigma, self.s, self.theta).max_ratio
                for _ in range(20)
            )
        assert max(out.values()) / min(out.values()) < 5
