import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hermite_spaces.errors import ConstraintError, ValidationError
from hermite_spaces.weights import (
    Ball,
    CubeSpec,
    GridFunction,
    Weight,
    ahp_certificate,
    critical_radius,
    dyadic_cube_family,
    estimate_r_w,
    fefferman_stein_probe,
    maximal,
    psi_factor,
    sample_cubes,
    slow_growth_fit,
)

FAMILIES = {
    "one": Weight.constant(),
    "const3": Weight.constant(3.0),
    "sqrt": Weight.power_law(0.5),
    "inv_sqrt": Weight.power_law(-0.5),
    "decay": Weight.gaussian(-1.0),
    "growth": Weight.gaussian(0.5),
    "table": Weight.table([-2.0, 0.0, 1.5], [1.0, 0.25, 2.0]),
}


def mp_interval(w, a, b):
    """Mass of a 1-D weight by mpmath, split at the origin."""
    mpmath.mp.dps = 30
    f = lambda x: mpmath.mpf(float(w(float(x)))) if w.family == "table" else _mp_density(w, x)
    pts = [a, b] if not (a < 0 < b) else [a, 0, b]
    if w.family == "table":
        xs = [x for x in w.param("x") if a < x < b]
        pts = sorted(set(pts) | set(xs))
    return float(mpmath.quad(f, pts))


def _mp_density(w, x):
    if w.family == "constant":
        return mpmath.mpf(w.param("c"))
    if w.family == "power":
        return abs(x) ** w.param("eps")
    return mpmath.exp(w.param("eps") * x * x)


class TestGeometry:
    def test_critical_radius_origin(self):
        assert critical_radius(np.zeros(2)) == 1.0

    def test_critical_radius_sup_norm(self):
        assert critical_radius(np.array([3.0, -4.0])) == pytest.approx(0.2, abs=0)

    def test_critical_radius_scalar(self):
        assert critical_radius(-1.0) == 0.5

    def test_psi_theta_zero(self):
        assert psi_factor(CubeSpec((7.0, -2.0), 3.0), 0.0) == 1.0

    def test_psi_example(self):
        assert psi_factor(CubeSpec(0.0, 0.5), 2.0) == 4.0

    def test_psi_negative_theta(self):
        with pytest.raises(ValidationError):
            psi_factor(CubeSpec(0.0, 1.0), -1.0)

    @given(
        c=st.floats(-50, 50),
        r=st.floats(1e-3, 20),
        t1=st.floats(0, 10),
        t2=st.floats(0, 10),
    )
    def test_psi_monotone_in_theta(self, c, r, t1, t2):
        Q = CubeSpec(c, r)
        lo, hi = sorted((t1, t2))
        assert psi_factor(Q, lo) <= psi_factor(Q, hi)

    @pytest.mark.parametrize("r", [0.0, -1.0, math.nan])
    def test_cube_validation(self, r):
        with pytest.raises(ValidationError):
            CubeSpec(0.0, r)

    def test_slow_growth_fit(self):
        C, kappa, table = slow_growth_fit(pairs=10_000, seed=0)
        assert 1 <= kappa <= 10 and math.isfinite(C)
        # a fresh sample obeys the fitted inequality up to sampling slack
        C2, _, table2 = slow_growth_fit(pairs=10_000, seed=1, kappas=[kappa])
        assert table2[kappa] <= 1.5 * C

    def test_slow_growth_constants_decrease_with_kappa(self):
        _, _, table = slow_growth_fit(pairs=2000, seed=3)
        vals = [table[k] for k in sorted(table)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


class TestWeightConstruction:
    @pytest.mark.parametrize("eps", [-1.0, -3.0])
    def test_power_integrability(self, eps):
        with pytest.raises(ValidationError):
            Weight.power_law(eps)

    def test_unknown_family(self):
        with pytest.raises(ValidationError):
            Weight("cauchy", (("eps", 1.0),))

    def test_unknown_param(self):
        with pytest.raises(ValidationError):
            Weight("power", (("eps", 1.0), ("c", 2.0)))

    @pytest.mark.parametrize(
        "x,w",
        [([0.0], [1.0]), ([0.0, 1.0], [1.0]), ([1.0, 0.0], [1.0, 1.0]), ([0.0, 1.0], [1.0, -1.0])],
    )
    def test_table_validation(self, x, w):
        with pytest.raises(ValidationError):
            Weight.table(x, w)

    def test_nonpositive_constant(self):
        with pytest.raises(ValidationError):
            Weight.constant(0.0)

    def test_table_is_one_dimensional(self):
        with pytest.raises(ValidationError):
            FAMILIES["table"].mass((np.zeros(2), np.ones(2)))

    @pytest.mark.parametrize("name", sorted(FAMILIES))
    def test_json_round_trip(self, name):
        w = FAMILIES[name]
        back = Weight.from_json_dict(json.loads(json.dumps(w.to_json_dict())))
        assert back == w

    def test_json_carries_r_w(self):
        w = Weight.from_json_dict({"family": "constant", "params": {"c": 1}, "r_w": 1.0})
        assert w.r_w == 1.0 and w.to_json_dict()["r_w"] == 1.0

    @pytest.mark.parametrize(
        "data",
        [
            {"params": {}},
            {"family": "constant", "params": {}, "extra": 1},
            {"family": "constant", "params": []},
            {"family": "constant", "params": {}, "r_w": 0.5},
        ],
    )
    def test_json_rejects(self, data):
        with pytest.raises(ValidationError):
            Weight.from_json_dict(data)

    def test_table_constant_extension(self):
        w = FAMILIES["table"]
        np.testing.assert_allclose(w(np.array([-10.0, 10.0])), [1.0, 2.0])

    def test_power_of_weight(self):
        w = Weight.power_law(0.5).power(-2.0)
        assert w.param("eps") == -1.0
        np.testing.assert_allclose(w(np.array([4.0, 8.0])), [0.25, 0.125])


class TestMass:
    def test_constant_ball(self):
        assert Weight.constant().mass(Ball(0.3, 0.7)) == pytest.approx(1.4, rel=1e-15)

    @pytest.mark.parametrize("r", [0.1, 1.0, 3.0])
    def test_gaussian_cube(self, r):
        assert Weight.gaussian(-1.0).mass(CubeSpec(0.0, r)) == pytest.approx(math.sqrt(math.pi) * math.erf(r), rel=1e-14)

    def test_sqrt_unit_interval(self):
        assert Weight.power_law(0.5).mass((np.array([0.0]), np.array([1.0]))) == pytest.approx(2 / 3, rel=1e-15)

    @pytest.mark.parametrize("name", sorted(FAMILIES))
    @pytest.mark.parametrize("a,b", [(-1.3, 0.4), (0.2, 2.9), (-3.0, -0.5)])
    def test_intervals_against_mpmath(self, name, a, b):
        w = FAMILIES[name]
        assert w.mass((np.array([a]), np.array([b]))) == pytest.approx(mp_interval(w, a, b), rel=1e-12)

    @pytest.mark.parametrize("eps", [-1.0, 0.7])
    def test_far_gaussian_log_mass(self, eps):
        a, b = 30.0, 30.5
        mpmath.mp.dps = 40
        # the integrand varies by e^30 across the interval, so subdivide
        exact = mpmath.log(mpmath.quad(lambda x: mpmath.exp(eps * x * x), mpmath.linspace(a, b, 41)))
        got = Weight.gaussian(eps).log_mass_boxes([[a]], [[b]])[0]
        assert got == pytest.approx(float(exact), rel=1e-13)

    def test_power_2d_box(self):
        mpmath.mp.dps = 20
        exact = mpmath.quad(lambda x, y: mpmath.sqrt(x * x + y * y) ** 0.5, [0.1, 0.5], [-0.2, 0.7])
        got = Weight.power_law(0.5).mass((np.array([0.1, -0.2]), np.array([0.5, 0.7])))
        assert got == pytest.approx(float(exact), rel=1e-9)

    def test_gaussian_2d_box_is_product(self):
        w = Weight.gaussian(-1.0)
        got = w.mass((np.array([-1.0, 0.0]), np.array([2.0, 1.0])))
        exact = 0.25 * math.pi * (math.erf(2.0) + math.erf(1.0)) * math.erf(1.0)
        assert got == pytest.approx(exact, rel=1e-14)

    def test_constant_disc(self):
        assert Weight.constant(2.0).mass(Ball((1.0, 1.0), 0.5)) == pytest.approx(2 * math.pi * 0.25, rel=1e-14)

    def test_gaussian_disc(self):
        # int_{|x|<r} exp(-|x|^2) = pi (1 - exp(-r^2))
        got = Weight.gaussian(-1.0).mass(Ball((0.0, 0.0), 1.2))
        assert got == pytest.approx(math.pi * (1 - math.exp(-1.44)), rel=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(
        name=st.sampled_from(sorted(FAMILIES)),
        a=st.floats(-5, 5),
        length=st.floats(0.01, 6),
        frac=st.floats(0.05, 0.95),
    )
    def test_additivity(self, name, a, length, frac):
        w = FAMILIES[name]
        b = a + length
        m = a + frac * length
        whole = w.mass((np.array([a]), np.array([b])))
        parts = w.mass((np.array([a]), np.array([m]))) + w.mass((np.array([m]), np.array([b])))
        assert parts == pytest.approx(whole, rel=1e-10)

    def test_additivity_2d(self):
        w = Weight.power_law(0.5)
        whole = w.mass((np.array([-0.5, -0.5]), np.array([0.5, 0.5])))
        quarter = w.mass((np.array([0.0, 0.0]), np.array([0.5, 0.5])))
        assert whole == pytest.approx(4 * quarter, rel=1e-9)

    def test_bad_box(self):
        with pytest.raises(ValidationError):
            Weight.constant().log_mass_boxes([[1.0]], [[0.0]])


class TestCertificate:
    @pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
    def test_unit_weight_eta_zero(self, p):
        assert ahp_certificate(Weight.constant(), p, 0.0).max_ratio == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("p", [1.0, 2.0])
    def test_unit_weight_positive_eta(self, p):
        assert ahp_certificate(Weight.constant(), p, 1.0).max_ratio <= 1.0

    @pytest.mark.parametrize("name", ["one", "sqrt", "decay", "growth", "table"])
    def test_nonincreasing_in_eta(self, name):
        w = FAMILIES[name]
        vals = [ahp_certificate(w, 2.0, eta, m=3, M=3).log_max_ratio for eta in (0.0, 1.0, 2.0, 4.0, 8.0)]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("eta", [0.0, 2.0, 4.0, 8.0])
    def test_gaussian_growth_grows_with_scan(self, eta):
        # exponential mass growth outpaces the polynomial factor Psi_eta
        logs = [ahp_certificate(Weight.gaussian(1.0), 2.0, eta, M=M).log_max_ratio for M in (2, 3, 4)]
        assert logs[0] < logs[1] < logs[2]
        assert logs[2] - logs[1] > 100

    def test_abs_x_not_in_a2(self):
        # 1/|x| is not integrable near 0
        rep = ahp_certificate(Weight.power_law(1.0), 2.0, 0.0)
        assert rep.counterexample and rep.max_ratio == math.inf

    def test_abs_x_in_a3(self):
        vals = [ahp_certificate(Weight.power_law(1.0), 3.0, 0.0, m=m).max_ratio for m in (4, 6, 8)]
        assert all(math.isfinite(v) for v in vals)
        assert max(vals) <= 1.01 * min(vals)

    def test_sqrt_in_a2(self):
        rep = ahp_certificate(Weight.power_law(0.5), 2.0, 0.0)
        assert not rep.counterexample and rep.max_ratio < 2.0

    def test_p1_zero_infimum(self):
        assert ahp_certificate(Weight.power_law(0.5), 1.0, 0.0).counterexample

    def test_report_json(self):
        rep = ahp_certificate(Weight.gaussian(-0.5), 2.0, 1.0, m=2, M=2)
        d = rep.to_json_dict()
        assert d["cubes"] == rep.cubes and d["argmax"]["r"] > 0

    @pytest.mark.parametrize("p,eta", [(0.5, 0.0), (2.0, -1.0)])
    def test_validation(self, p, eta):
        with pytest.raises(ValidationError):
            ahp_certificate(Weight.constant(), p, eta)

    def test_sample_cubes_cover_scales(self):
        ks = [k for k, _, _ in sample_cubes(1, 2, 1)]
        assert ks == [-2, -1, 0, 1]

    def test_estimate_r_w(self):
        assert estimate_r_w(Weight.constant(), 0.0) == 1.0
        # |x| sits in A_p exactly for p > 2
        assert estimate_r_w(Weight.power_law(1.0), 0.0) == 3.0


def indicator01():
    return GridFunction((np.array([0.0, 1.0]),), np.array([1.0]))


class TestMaximal:
    def test_constant_one(self):
        g = GridFunction((np.linspace(-4, 4, 17),), np.ones(16))
        vals = maximal(g, 1.0, 0.0, np.array([-1.3, 0.0, 2.2]))
        np.testing.assert_allclose(vals, 1.0, rtol=1e-14)

    @pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
    def test_theta_decreases(self, s):
        rng = np.random.default_rng(1)
        g = GridFunction((np.linspace(-3, 3, 13),), rng.lognormal(0, 1, 12))
        x = np.array([-2.0, 0.1, 1.7])
        assert np.all(maximal(g, s, 1.5, x) <= maximal(g, s, 0.0, x) + 1e-15)

    def test_indicator_explicit_family(self):
        cubes = [CubeSpec(0.5, 1.5), CubeSpec(2.0, 0.5), CubeSpec(1.5, 0.5)]
        assert maximal(indicator01(), 1.0, 0.0, 2.0, cubes=cubes) == pytest.approx(1 / 3, rel=1e-14)

    def test_indicator_lattice_family(self):
        # closed lattice cube [1, 2] is excluded; [0, 2] has average 1/2
        assert maximal(indicator01(), 1.0, 0.0, 2.0) == pytest.approx(0.5, rel=1e-14)

    def test_enlarging_family_never_decreases(self):
        rng = np.random.default_rng(2)
        g = GridFunction((np.linspace(-2, 2, 9),), rng.lognormal(0, 1, 8))
        small = [CubeSpec(0.3, 0.5)]
        large = small + [CubeSpec(0.0, 1.0), CubeSpec(0.5, 0.25)]
        assert maximal(g, 1.0, 0.5, 0.3, cubes=large) >= maximal(g, 1.0, 0.5, 0.3, cubes=small)

    def test_cell_dominance(self):
        rng = np.random.default_rng(3)
        vals = rng.lognormal(0, 1, 10)
        g = GridFunction((np.linspace(0, 5, 11),), vals)
        M = maximal(g, 1.0, 0.0, g.centers)
        assert np.all(M >= vals * (1 - 1e-12))

    def test_family_contains_point(self):
        x = np.array([0.3, -1.2])
        c, r = dyadic_cube_family(x, 0.25, 3)
        assert np.all(np.max(np.abs(c - x), axis=1) <= r + 1e-15)

    def test_two_dimensional_constant(self):
        e = np.linspace(-2, 2, 9)
        g = GridFunction((e, e), np.ones((8, 8)))
        assert maximal(g, 1.0, 0.0, np.array([0.1, 0.2])) == pytest.approx(1.0, rel=1e-13)

    @pytest.mark.parametrize("s,theta", [(0.0, 0.0), (1.0, -1.0)])
    def test_validation(self, s, theta):
        with pytest.raises(ValidationError):
            maximal(indicator01(), s, theta, 0.5)

    def test_grid_validation(self):
        with pytest.raises(ValidationError):
            GridFunction((np.array([0.0, 1.0, 1.0]),), np.ones(2))


class TestFeffermanStein:
    edges = np.linspace(-4, 4, 33)

    def family(self, seed, count=3):
        rng = np.random.default_rng(seed)
        return [GridFunction((self.edges,), rng.lognormal(0, 1, 32)) for _ in range(count)]

    def test_single_function_ratio_at_least_one(self):
        w = Weight("constant", (("c", 1.0),), r_w=1.0)
        assert fefferman_stein_probe(self.family(0, 1), 2.0, 2.0, 1.0, 0.0, w) >= 1.0

    def test_scaling_invariance(self):
        w = Weight("gaussian", (("eps", -0.5),), r_w=1.0)
        fam = self.family(1)
        scaled = [GridFunction(g.edges, 3.0 * g.values) for g in fam]
        a = fefferman_stein_probe(fam, 2.0, 1.5, 1.0, 0.5, w)
        assert fefferman_stein_probe(scaled, 2.0, 1.5, 1.0, 0.5, w) == pytest.approx(a, rel=1e-12)

    def test_stable_over_random_families(self):
        w = Weight("gaussian", (("eps", -0.5),), r_w=1.0)
        ratios = [fefferman_stein_probe(self.family(s), 2.0, 2.0, 1.0, 0.5, w) for s in range(20)]
        assert max(ratios) / min(ratios) < 5.0

    def test_constraint(self):
        w = Weight("constant", (("c", 1.0),), r_w=2.0)
        with pytest.raises(ConstraintError):
            fefferman_stein_probe(self.family(0), 2.0, 2.0, 1.0, 0.0, w)  # s must be < p / r_w = 1

    def test_r_w_required(self):
        with pytest.raises(ConstraintError):
            fefferman_stein_probe(self.family(0), 2.0, 2.0, 0.5, 0.0, Weight.constant())

    def test_shared_grid(self):
        w = Weight("constant", (("c", 1.0),), r_w=1.0)
        other = GridFunction((np.linspace(-1, 1, 5),), np.ones(4))
        with pytest.raises(ValidationError):
            fefferman_stein_probe(self.family(0, 1) + [other], 2.0, 2.0, 1.0, 0.0, w)
