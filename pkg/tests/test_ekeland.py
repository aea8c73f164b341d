import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lcx.ekeland import density_scan, ekeland_refine
from lcx.envelopes import ConeFunction, lipschitz_lower_envelope, validate_minorant
from lcx.errors import PreconditionError
from lcx.function_model import Grid, SampledFunction, gallery, random_piecewise_linear, sample


def _nsa(n=1001):
    return sample(gallery("neg_sqrt_abs"), Grid.line(-1, 1, n))


class TestRefine:
    def test_neg_sqrt_abs(self):
        f = _nsa()
        h = ConeFunction((0.0,), 0.5, -0.5)
        r = ekeland_refine(f, h, 0.0, 0.5, 0.5)
        assert r.iterations <= f.grid.size
        assert abs(r.x_delta[0]) <= 0.5
        assert r.invariants_hold(1e-9)
        assert r.touch_error <= 1e-12 and r.minorant_violation <= 1e-12
        # the support is concave and within its Lipschitz budget
        assert validate_minorant(f, r.support.values, r.support.K, 1e-9).ok

    def test_invariants_explicitly(self):
        f = _nsa(401)
        h = ConeFunction((0.0,), 0.5, -0.5).on(f.grid)
        r = ekeland_refine(f, h, 0.0, 0.5, 0.5)
        g = f.values - h
        c = r.epsilon / r.delta
        j, i0 = r.index, f.index(0.0)
        d = np.abs(f.grid.axis(0) - f.grid.axis(0)[j])
        assert g[j] + c * abs(f.grid.axis(0)[j]) <= g[i0] + 1e-12
        assert np.all(g[j] <= g + c * d + 1e-12)

    def test_abs_constant_minorant(self):
        f = sample(gallery("abs_1d"), Grid.line(-2, 2, 401))
        r = ekeland_refine(f, np.full(401, -1.0), 0.0, 1.0, 1.0)
        assert r.x_delta == (0.0,) and r.iterations == 0 and r.invariants_hold(1e-9)

    def test_defaults(self):
        f = _nsa(201)
        r = ekeland_refine(f, np.full(201, -1.5), 0.0)
        assert r.epsilon == pytest.approx(1.5) and r.delta == pytest.approx(math.sqrt(1.5))

    def test_eps_below_gap(self):
        f = _nsa(201)
        with pytest.raises(PreconditionError):
            ekeland_refine(f, np.full(201, -1.5), 0.0, 0.5, 0.5)

    def test_not_a_minorant(self):
        f = _nsa(201)
        with pytest.raises(PreconditionError):
            ekeland_refine(f, np.zeros(201), 0.5, 1.0, 1.0)

    @given(st.integers(0, 2**32 - 1), st.floats(0.05, 2.0), st.floats(0.05, 2.0))
    def test_invariants_random(self, seed, extra, delta):
        rng = np.random.default_rng(seed)
        g = Grid.line(-1, 1, 101)
        f = random_piecewise_linear(rng, g, 7)
        h = lipschitz_lower_envelope(f, 0.5)
        x = g.node(int(rng.integers(g.size)))
        eps = float(f.at(x) - h.at(x)) + extra
        r = ekeland_refine(f, h, x, eps, delta)
        assert r.invariants_hold(f.tol_feas()) and r.iterations <= g.size


class TestDensity:
    def test_neg_sqrt_abs_radius(self):
        f = _nsa()
        h = f.grid.spacing[0]
        scan = density_scan(f, 0.5, 2 * h, 1.0, stride=10)
        assert scan.covering_radius <= 2 * h + 10 * h + 1e-12
        assert all(r.invariants_hold(1e-9) for r in scan.results)

    def test_square_certifies_in_place(self):
        f = sample(gallery("square"), Grid.line(-1, 1, 101))
        scan = density_scan(f, 0.1, 0.1, 2.0, stride=5)
        assert all(r.x_delta == r.x_bar for r in scan.results)

    def test_skips_infinite_nodes(self):
        g = Grid.line(-1, 1, 51)
        v = sample(gallery("square"), g).values.copy()
        v[[5, 30]] = math.inf
        f = SampledFunction(g, v)
        scan = density_scan(f, 0.1, 0.1, 2.0)
        assert 5 not in scan.scanned and 30 not in scan.scanned
        assert scan.covering_radius == 0.0

    def test_bad_stride(self):
        with pytest.raises(PreconditionError):
            density_scan(_nsa(51), 0.5, 0.5, 1.0, stride=0)
