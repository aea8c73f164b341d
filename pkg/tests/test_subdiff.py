import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from lcx.errors import DomainError, PreconditionError
from lcx.function_model import Grid, SampledFunction, affine, gallery, random_piecewise_linear, sample
from lcx.subdiff import (
    SubgradientCandidate, affine_two_sided_test, calmness_modulus, check_maximality,
    check_subgradient, cone_subgradient, subdifferentiability_oracle, superdifferential_dual,
)

seeds = st.integers(0, 2**32 - 1)
Cand = SubgradientCandidate


def _random(seed, n=41):
    rng = np.random.default_rng(seed)
    return random_piecewise_linear(rng, Grid.line(-1, 1, n), int(rng.integers(2, 8)))


class TestCandidate:
    def test_vanishes_at_origin(self):
        g = Grid.line(-1, 1, 5)
        for c in (Cand.cone((0.5,), 1.0, 2.0), Cand.affine((0.5,), 1.0, [3.0])):
            assert c.offsets(g)[g.node_index(0.5)] == 0.0

    def test_grid_form_must_vanish(self):
        g = Grid.line(-1, 1, 5)
        with pytest.raises(PreconditionError):
            Cand("grid", (0.0,), 0.0, grid=g, table=np.ones(5))

    def test_support(self):
        g = Grid.line(-1, 1, 5)
        c = Cand.cone((1.0,), 1.0, 2.0)
        assert np.allclose(c.support(g), 1.0 - 2.0 * np.abs(g.axis(0) - 1.0))

    def test_json_round_trip(self):
        g = Grid.line(-1, 1, 5)
        for c in (Cand.cone((0.0,), 0.0, 1.0), Cand.affine((0.0, 0.0), 1.0, [1.0, -2.0]),
                  Cand.from_support(g, (0.5,), np.linspace(0, 1, 5) - 0.75 + 0.75)):
            d = Cand.from_json(c.to_json())
            assert d.to_json() == c.to_json()

    def test_concavity(self):
        g = Grid.line(-1, 1, 5)
        assert Cand.cone((0.0,), 0.0, 1.0).is_concave()
        assert not Cand.cone((0.0,), 0.0, -1.0).is_concave()
        t = Cand.from_support(g, (0.0,), g.axis(0) ** 2)
        assert not t.is_concave()


class TestCalmness:
    def test_square_at_one(self):
        f = sample(gallery("square"), Grid.line(-2, 2, 401))
        assert calmness_modulus(f, 1.0) == pytest.approx(1.99, abs=1e-12)

    def test_abs_at_zero(self):
        assert calmness_modulus(sample(gallery("abs_1d"), Grid.line(-2, 2, 41)), 0.0) == 0.0

    def test_neg_sqrt_abs(self):
        for n, want in ((201, 10.0), (401, math.sqrt(200))):
            f = sample(gallery("neg_sqrt_abs"), Grid.line(-1, 1, n))
            assert calmness_modulus(f, 0.0) == pytest.approx(want, rel=1e-12)

    def test_point_not_index(self):
        # an integer point is a coordinate, never a node index
        f = sample(gallery("square"), Grid.line(-1, 1, 201))
        assert calmness_modulus(f, 1) == calmness_modulus(f, 1.0)

    def test_infinite_value(self):
        f = SampledFunction(Grid.line(0, 1, 3), [0.0, math.inf, 1.0])
        with pytest.raises(DomainError):
            calmness_modulus(f, 0.5)

    @given(seeds)
    def test_brute_force(self, seed):
        f = _random(seed, 31)
        j = seed % 31
        want = oracles.calmness(f.grid.points, f.values, j, 2)
        assert calmness_modulus(f, f.grid.node(j)) == pytest.approx(want, rel=1e-12, abs=1e-15)

    @given(seeds)
    def test_refinement_monotone(self, seed):
        g = Grid.line(-1, 1, 11)
        rng = np.random.default_rng(seed)
        knots = np.sort(rng.uniform(-1, 1, 4))
        vals = rng.normal(size=4)
        fn = lambda p: np.interp(p[:, 0], knots, vals)
        from lcx.function_model import custom
        f = custom("pwl", fn)
        x = float(g.node(int(rng.integers(g.size)))[0])
        prev = -1.0
        for _ in range(4):
            m = calmness_modulus(sample(f, g), x)
            assert m >= prev
            prev, g = m, g.refine(2)


class TestOracle:
    def test_square_subdifferentiable(self):
        c = subdifferentiability_oracle(gallery("square"), 1.0)
        assert c.verdict == "subdifferentiable"
        assert c.modulus == pytest.approx(2.0, rel=0.02)
        assert c.support_check.ok

    def test_neg_sqrt_abs_diverging(self):
        c = subdifferentiability_oracle(gallery("neg_sqrt_abs"), 0.0, 5)
        assert c.verdict == "diverging"
        assert np.allclose(c.modulus_sequence, [10, 14.142135623730951, 20, 28.284271247461902, 40],
                           rtol=1e-9)

    def test_abs_diff_2d_l1(self):
        c = subdifferentiability_oracle(gallery("abs_diff_2d"), (0.0, 0.0), 4, norm=1)
        assert c.verdict == "subdifferentiable" and c.modulus == pytest.approx(1.0)

    def test_needs_two_levels(self):
        with pytest.raises(PreconditionError):
            subdifferentiability_oracle(gallery("square"), 0.0, 1)


class TestCheckSubgradient:
    def test_cone_on_square(self):
        f = sample(gallery("square"), Grid.line(-2, 2, 401))
        c = cone_subgradient(f, 1.0)
        assert c.coef == pytest.approx(1.99, abs=1e-12)
        assert check_subgradient(f, c, tol=0.0)

    def test_cone_on_abs(self):
        f = sample(gallery("abs_1d"), Grid.line(-2, 2, 41))
        c = cone_subgradient(f, 0.0)
        assert c.coef == 0.0 and check_subgradient(f, c, tol=0.0)

    def test_cone_2d(self):
        f = sample(gallery("abs_diff_2d"), Grid.square(-1, 1, 21, norm=1))
        c = cone_subgradient(f, (0.0, 0.0))
        assert c.coef == pytest.approx(1.0) and check_subgradient(f, c)

    @pytest.mark.parametrize("alpha,ok", [(0.5, True), (1.0, True), (-1.0, True), (1.5, False)])
    def test_alpha_family(self, alpha, ok):
        f = sample(gallery("abs_diff_2d"), Grid.square(-1, 1, 41, norm=1))
        g = f.grid
        table = alpha * g.points[:, 0] - np.abs(g.points[:, 1])
        c = Cand("grid", (0.0, 0.0), 0.0, grid=g, table=table)
        chk = check_subgradient(f, c)
        assert chk.ok == ok
        if not ok:
            # slack |x| - alpha*x does not depend on y; the x-axis is violated for x > 0
            assert g.node(chk.worst_node)[0] == 1.0
            z = g.node_index((0.5, 0.0))
            assert f.values[z] < alpha * 0.5

    def test_zero_at_global_min(self):
        f = sample(gallery("square"), Grid.line(-1, 1, 21))
        assert check_subgradient(f, Cand.affine((0.0,), 0.0, [0.0]), tol=0.0)

    def test_inf_nodes_unconstrained(self):
        f = SampledFunction(Grid.line(-1, 1, 3), [math.inf, 0.0, 1.0])
        assert check_subgradient(f, Cand.affine((0.0,), 0.0, [1.0]))

    @given(seeds)
    def test_cone_support_property(self, seed):
        f = _random(seed)
        j = seed % f.grid.size
        c = cone_subgradient(f, f.grid.node(j))
        h = c.support(f.grid)
        assert np.all(h <= f.values) and h[j] == f.values[j]

    @given(seeds, st.sampled_from([0.25, 0.5, 0.75]))
    def test_convex_combination(self, seed, t):
        f = _random(seed)
        x = f.grid.node(seed % f.grid.size)
        fx = f.at(x)
        c1 = cone_subgradient(f, x)
        c2 = Cand.cone(x, fx, c1.coef * 1.5 + 0.1)
        c3 = Cand.from_support(f.grid, x, t * c1.support(f.grid) + (1 - t) * c2.support(f.grid))
        assert check_subgradient(f, c2) and check_subgradient(f, c3)


class TestMaximality:
    g = Grid.line(-2, 2, 401)

    def test_affine_maximal(self):
        f = sample(gallery("square"), self.g)
        cert = check_maximality(f, Cand.affine((1.0,), 1.0, [2.0]), K=2.0)
        assert cert.maximal

    def test_cone_improvable(self):
        f = sample(gallery("square"), self.g)
        cert = check_maximality(f, Cand.cone((1.0,), 1.0, 2.0), K=2.0)
        assert cert.status == "improvable"
        x = self.g.axis(0)
        imp = cert.improvement.values
        assert np.all(imp >= 1 - 2 * np.abs(x - 1) - cert.tol_feas)

    def test_abs_cone_self_consistent(self):
        f = sample(gallery("abs_1d"), self.g)
        c = Cand.cone((1.0,), 1.0, 1.0)
        cert = check_maximality(f, c)
        if cert.improvement is not None:
            assert cert.improvement.check(f, cert.tol_feas).ok
            assert np.all(cert.improvement.values >= c.support(self.g) - cert.tol_feas)

    def test_not_a_subgradient(self):
        f = sample(gallery("square"), self.g)
        with pytest.raises(PreconditionError):
            check_maximality(f, Cand.affine((1.0,), 1.0, [3.0]))


class TestDual:
    def test_alpha_supergradients(self):
        f = sample(gallery("abs_diff_2d"), Grid.square(-1, 1, 41, norm=1))
        g = f.grid
        for alpha in np.linspace(-1, 1, 11):
            table = np.abs(g.points[:, 0]) - alpha * g.points[:, 1]
            c = Cand("grid", (0.0, 0.0), 0.0, grid=g, table=table)
            assert superdifferential_dual(check_subgradient, f, c)

    def test_square_super_cone(self):
        f = sample(gallery("square"), Grid.line(-1, 1, 201))
        c = superdifferential_dual(cone_subgradient, f, 0.0)
        want = oracles.calmness(f.grid.points, -f.values, 100, 2)
        assert want == pytest.approx(1.0) and c.coef == pytest.approx(-want, abs=1e-12)
        assert np.all(c.support(f.grid) >= f.values)

    def test_neg_square_super_cone_mirrors_calmness(self):
        f = sample(gallery("square"), Grid.line(-2, 2, 401)).negate()
        c = superdifferential_dual(cone_subgradient, f, 1.0)
        assert c.coef == pytest.approx(-1.99, abs=1e-12)

    def test_constant(self):
        f = SampledFunction(Grid.line(-1, 1, 11), np.full(11, 2.0))
        zero = Cand.affine((0.0,), 2.0, [0.0])
        assert check_subgradient(f, zero, 0.0)
        assert superdifferential_dual(check_subgradient, f, zero, 0.0)

    @given(seeds)
    def test_involution(self, seed):
        f = _random(seed)
        x = f.grid.node(seed % f.grid.size)
        mirrored = lambda fn, p: superdifferential_dual(cone_subgradient, fn, p)
        twice = superdifferential_dual(mirrored, f, x)
        once = cone_subgradient(f, x)
        assert twice.to_json() == once.to_json()


class TestAffineSandwich:
    def test_confirmed(self):
        f = sample(affine(3.0, 1.0), Grid.line(-1, 1, 21))
        r = affine_two_sided_test(f, 0.0, 3.0, 3.0)
        assert r.status == "affine confirmed" and r.max_deviation == 0.0

    def test_square_fails(self):
        f = sample(gallery("square"), Grid.line(-1, 1, 21))
        r = affine_two_sided_test(f, 0.0, 0.0, 0.0)
        assert r.status == "hypothesis not met" and r.lower_ok and not r.upper_ok

    def test_slopes_differ(self):
        f = sample(affine(3.0, 1.0), Grid.line(-1, 1, 21))
        assert affine_two_sided_test(f, 0.0, 3.0, 3.1).status == "hypothesis not met"
        # at the left end the sandwich cannot see the left side
        r = affine_two_sided_test(f, -1.0, 3.0, 3.1)
        assert r.status.startswith("sandwich holds but slopes differ")
