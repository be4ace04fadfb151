import unittest

import numpy as np

from reeblab.exprs import ExpressionDomainError, parse
from reeblab.geodesics import pullback_metric
from reeblab.scenarios import build_scenario
from reeblab.suspension import (leaf_profile, radial_reparametrisation, reparametrised_radius, suspension_leaf,
                                suspension_map, suspension_velocity)


class TestSuspensionLeaves(unittest.TestCase):

    def test_leaf_is_monotone_between_compact_leaves(self):
        h = suspension_leaf(0.5, 0.25)
        s = np.linspace(-200, 200, 401)
        values = h.func(s)
        self.assertTrue(np.all(np.diff(values) > 0))
        self.assertTrue(np.all((values > 0) & (values < 1)))
        self.assertAlmostEqual(h.func(0.0), 0.5, places=14)

    def test_derivative_is_velocity_along_leaf(self):
        h = suspension_leaf(0.5, 0.25)
        for s in (-3.0, 0.0, 2.5):
            step = 1e-5
            fd = (h.func(s + step) - h.func(s - step)) / (2 * step)
            self.assertAlmostEqual(h.gradient(s)[0], fd, delta=1e-8)
            self.assertAlmostEqual(h.gradient(s)[0], suspension_velocity(h.func(s), 0.25), places=14)

    def test_integer_leaves_are_constant(self):
        for t in (0.0, 1.0):
            h = suspension_leaf(t, 0.25)
            np.testing.assert_array_equal(h.func(np.array([-5.0, 0.0, 7.0])), [t, t, t])
            self.assertEqual(float(h.gradient(3.0)[0]), 0.0)

    def test_leaf_agrees_with_flow_map(self):
        h = suspension_leaf(0.3, 0.25)
        for s in (-4.0, 1.0, 6.0):
            self.assertAlmostEqual(h.func(s), suspension_map(0.3, s, 0.25), delta=1e-10)

    def test_flow_map_identity_and_group_law(self):
        self.assertEqual(suspension_map(0.7, 0.0, 0.25), 0.7)
        one = suspension_map(0.2, 1.0, 0.25)
        two = suspension_map(one, 1.0, 0.25)
        self.assertAlmostEqual(suspension_map(0.2, 2.0, 0.25), two, delta=1e-11)

    def test_argument_outside_tabulated_span(self):
        with self.assertRaises(ExpressionDomainError):
            suspension_leaf(0.5, 0.25).func(1e4)

    def test_leaf_function_inside_expressions(self):
        h = suspension_leaf(0.5, 0.25)
        e = parse("leaf_h(s)^2", ("s",), functions={"leaf_h": h})
        value = h.func(1.0)
        self.assertAlmostEqual(e.evaluate([1.0]), value ** 2, places=14)
        self.assertAlmostEqual(e.gradient([1.0])[0], 2 * value * suspension_velocity(value, 0.25), places=13)


class TestLeafMetric(unittest.TestCase):

    def test_profile_at_origin(self):
        h1, h2 = leaf_profile()
        self.assertAlmostEqual(h1.evaluate([0.0]), 0.5, places=14)
        self.assertAlmostEqual(h2.evaluate([0.0]), 0.0, places=15)

    def test_pullback_of_round_metric_matches_profile(self):
        sc = build_scenario("s3-reeb-leaf")
        g = pullback_metric(sc.maps["psi_c"], sc.metrics["round"])
        h1, h2 = leaf_profile()
        for rho in (0.05, 0.7, 3.0, 20.0):
            m = g.at([rho, 1.0])
            self.assertAlmostEqual(m[0, 0], h1.evaluate([rho]), delta=1e-12)
            self.assertAlmostEqual(m[1, 1], h2.evaluate([rho]), delta=1e-12)
            self.assertAlmostEqual(m[0, 1], 0.0, delta=1e-14)

    def test_reparametrised_profile_is_increasing_and_saturates(self):
        htilde = radial_reparametrisation()
        u = np.linspace(0.0, 50.0, 501)
        values = htilde.func(u)
        self.assertTrue(np.all(np.diff(values) > 0))
        self.assertLessEqual(0.5 - values[-1], 0.02)
        self.assertLess(values[-1], 0.5)

    def test_reparametrised_slope(self):
        htilde = radial_reparametrisation()
        for u in (0.5, 4.0, 30.0):
            step = 1e-5
            fd = (htilde.func(u + step) - htilde.func(u - step)) / (2 * step)
            self.assertAlmostEqual(htilde.gradient(u)[0], fd, delta=1e-7)

    def test_unit_radial_speed(self):
        # d rho~ = sqrt(h1) d rho, so h~(rho~) = h2(rho(rho~))
        _, h2 = leaf_profile()
        rho = reparametrised_radius(2.0)
        self.assertAlmostEqual(radial_reparametrisation().func(2.0), h2.evaluate([rho]), delta=1e-10)

    def test_outside_reparametrised_span(self):
        with self.assertRaises(ExpressionDomainError):
            radial_reparametrisation().func(-1.0)


if __name__ == "__main__":
    unittest.main()
