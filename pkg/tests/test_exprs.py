import math
import unittest

import numpy as np

from reeblab.exprs import (DerivativeUnavailable, Dual, ExpressionDomainError, OpaqueFunction, ParseError, call,
                           constant_value, parse, smoothstep5, smoothstep9, flatstep)

XYZ = ("x", "y", "z")


class TestParser(unittest.TestCase):

    def test_precedence_and_associativity(self):
        e = parse("1 + 2*3^2^0.5", ())
        self.assertAlmostEqual(e.evaluate(np.zeros(0)), 1 + 2 * 3 ** (2 ** 0.5), places=12)
        self.assertEqual(parse("-2^2", ()).evaluate(np.zeros(0)), -4.0)
        self.assertEqual(parse("2**3", ()).evaluate(np.zeros(0)), 8.0)
        self.assertEqual(parse("8/2/2", ()).evaluate(np.zeros(0)), 2.0)

    def test_coordinates_parameters_definitions(self):
        e = parse("r*sin(r) + f", ("r", "theta", "z"), definitions={"f": "-eps*tanh(z)"},
                  parameters={"eps": 0.002})
        value = e.evaluate([1.0, 0.0, 0.5])
        self.assertAlmostEqual(value, math.sin(1.0) - 0.002 * math.tanh(0.5), places=15)

    def test_unknown_identifier_reports_position(self):
        with self.assertRaisesRegex(ParseError, r"Unknown identifier 'w' \(at position 4\)"):
            parse("x + w", XYZ)

    def test_unbalanced_parenthesis(self):
        with self.assertRaises(ParseError):
            parse("sin(x", XYZ)

    def test_arity_mismatch(self):
        with self.assertRaisesRegex(ParseError, "expects 3 argument"):
            parse("smoothstep5(x, 0)", XYZ)

    def test_recursive_definition(self):
        with self.assertRaisesRegex(ParseError, "Recursive definition"):
            parse("a", XYZ, definitions={"a": "b + 1", "b": "a*x"})

    def test_comparison_only_in_guards(self):
        with self.assertRaisesRegex(ParseError, "Comparison outside"):
            parse("x < 1", XYZ)
        e = parse("piecewise(x < 0, -x, x)", XYZ)
        self.assertEqual(e.evaluate([-2.0, 0, 0]), 2.0)

    def test_diff_needs_coordinate(self):
        with self.assertRaisesRegex(ParseError, "coordinate name"):
            parse("diff(x^2, 2)", XYZ)

    def test_printing_reparses(self):
        src = "cos(r)*exp(-z) + r^2/(1 + theta)"
        e = parse(src, ("r", "theta", "z"))
        again = parse(str(e), ("r", "theta", "z"))
        p = [0.7, 0.3, -0.2]
        self.assertEqual(e.evaluate(p), again.evaluate(p))

    def test_constant_value(self):
        self.assertAlmostEqual(constant_value("2*pi - 0.05"), 2 * math.pi - 0.05, places=15)
        self.assertEqual(constant_value(3), 3.0)
        self.assertAlmostEqual(constant_value("delta/2", {"delta": 0.1}), 0.05, places=15)


class TestEvaluation(unittest.TestCase):

    def test_batch_matches_pointwise(self):
        e = parse("sin(x)*y + z^3", XYZ)
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1, 1, size=(3, 50))
        batch = e.evaluate(pts)
        for k in range(50):
            self.assertAlmostEqual(batch[k], e.evaluate(pts[:, k]), places=14)

    def test_log_domain_error_names_node_and_point(self):
        e = parse("log(x)", XYZ)
        with self.assertRaisesRegex(ExpressionDomainError, "log") as ctx:
            e.evaluate([-1.0, 0.0, 0.0])
        self.assertEqual(ctx.exception.point, [-1.0, 0.0, 0.0])

    def test_division_by_zero(self):
        with self.assertRaises(ExpressionDomainError):
            parse("1/x", XYZ).evaluate([0.0, 1.0, 1.0])

    def test_fractional_power_of_negative(self):
        with self.assertRaises(ExpressionDomainError):
            parse("x^0.5", XYZ).evaluate([-1.0, 0.0, 0.0])

    def test_piecewise_batch_is_finite(self):
        e = parse("piecewise(x <= 0, 0, log(x))", XYZ)
        pts = np.array([[-1.0, 0.0, math.e], [0, 0, 0], [0, 0, 0]])
        np.testing.assert_allclose(e.evaluate(pts), [0.0, 0.0, 1.0])


class TestDerivatives(unittest.TestCase):

    def test_gradient_of_polynomial(self):
        e = parse("x^2*y + 3*z", XYZ)
        g = e.gradient([2.0, 5.0, 1.0])
        np.testing.assert_allclose(g, [20.0, 4.0, 3.0])

    def test_dual_seed_direction(self):
        e = parse("sin(x)*exp(y)", XYZ)
        out = e.eval_dual([0.3, 0.1, 0.0], [1.0, 1.0, 0.0])
        expected = math.cos(0.3) * math.exp(0.1) + math.sin(0.3) * math.exp(0.1)
        self.assertAlmostEqual(out.partials[0], expected, places=14)

    def test_gradient_matches_finite_differences(self):
        e = parse("tanh(x*y) + atan(z)/(1 + x^2) + sqrt(1 + y^2)", XYZ)
        rng = np.random.default_rng(7)
        h = 1e-6
        for _ in range(20):
            p = rng.uniform(-1, 1, 3)
            g = e.gradient(p)
            for i in range(3):
                step = np.zeros(3)
                step[i] = h
                fd = (e.evaluate(p + step) - e.evaluate(p - step)) / (2 * h)
                self.assertAlmostEqual(g[i], fd, delta=1e-7)

    def test_diff_node_is_exact_second_derivative(self):
        e = parse("diff(diff(sin(x)*y^3, x), y)", XYZ)
        p = [0.4, 1.3, 0.0]
        self.assertAlmostEqual(e.evaluate(p), math.cos(0.4) * 3 * 1.3 ** 2, places=13)

    def test_mixed_partials_commute(self):
        f = parse("exp(x*y)*cos(z*x)", XYZ)
        fxy = f.derivative("x").derivative("y")
        fyx = f.derivative("y").derivative("x")
        p = [0.2, -0.7, 1.1]
        self.assertAlmostEqual(fxy.evaluate(p), fyx.evaluate(p), places=12)

    def test_derivative_of_constant_is_zero(self):
        self.assertTrue(parse("3 + pi", XYZ).derivative("x").is_zero)

    def test_sqrt_at_zero_not_differentiable(self):
        with self.assertRaises(ExpressionDomainError):
            parse("sqrt(x)", XYZ).gradient([0.0, 0.0, 0.0])

    def test_nested_duals(self):
        x = Dual(Dual(2.0, (1.0,)), (Dual(1.0, (0.0,)),))
        y = x * x * x
        # d2/dx2 x^3 at 2 = 12
        self.assertAlmostEqual(y.partials[0].partials[0], 12.0)

    def test_zero_exponent_at_zero(self):
        y = Dual(0.0, (1.0, 2.0)) ** 0
        self.assertEqual(y.value, 1.0)
        self.assertEqual(y.partials, (0.0, 0.0))
        value, grad = parse("x^0 + y", XYZ).value_and_gradient([0.0, 1.0, 0.0])
        self.assertEqual(value, 2.0)
        np.testing.assert_array_equal(grad, [0.0, 1.0, 0.0])


class TestSteps(unittest.TestCase):

    def test_step_end_values(self):
        for step in (smoothstep5, smoothstep9, flatstep):
            self.assertAlmostEqual(float(step(np.array(0.0), 0.0, 1.0)), 0.0, places=12)
            self.assertAlmostEqual(float(step(np.array(1.0), 0.0, 1.0)), 1.0, places=12)
            self.assertAlmostEqual(float(step(np.array(0.5), 0.0, 1.0)), 0.5, places=12)

    def test_steps_are_monotone(self):
        xs = np.linspace(0, 1, 201)
        for step in (smoothstep5, smoothstep9, flatstep):
            self.assertTrue(np.all(np.diff(step(xs, 0.0, 1.0)) >= 0))

    def test_smoothstep5_flat_at_ends(self):
        e = parse("smoothstep5(x, 0.02, 0.1)", XYZ)
        d1 = e.derivative("x")
        d2 = d1.derivative("x")
        for p in ([0.02, 0, 0], [0.1, 0, 0], [0.01, 0, 0]):
            self.assertAlmostEqual(d1.evaluate(p), 0.0, places=12)
            self.assertAlmostEqual(d2.evaluate(p), 0.0, places=9)

    def test_step_requires_ordered_bounds(self):
        with self.assertRaisesRegex(ExpressionDomainError, "a < b"):
            parse("smoothstep5(x, 1, 0)", XYZ).evaluate([0.5, 0, 0])


class TestOpaque(unittest.TestCase):

    def setUp(self):
        self.square = OpaqueFunction("sq", 1, lambda s: np.asarray(s) ** 2, lambda s: (2 * np.asarray(s),))

    def test_value_and_first_derivative(self):
        e = parse("sq(x) + y", XYZ, functions={"sq": self.square})
        self.assertAlmostEqual(e.evaluate([3.0, 1.0, 0.0]), 10.0)
        np.testing.assert_allclose(e.gradient([3.0, 1.0, 0.0]), [6.0, 1.0, 0.0])

    def test_second_derivative_unavailable(self):
        e = parse("diff(sq(x), x)", XYZ, functions={"sq": self.square})
        with self.assertRaises(DerivativeUnavailable):
            e.gradient([1.0, 0.0, 0.0])

    def test_call_builds_expressions(self):
        x = parse("x", XYZ)
        e = call("cos", x) * 2
        self.assertAlmostEqual(e.evaluate([0.0, 0, 0]), 2.0)
        with self.assertRaises(ParseError):
            call("smoothstep5", x)


if __name__ == "__main__":
    unittest.main()
