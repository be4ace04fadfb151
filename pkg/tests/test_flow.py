import math
import os
import tempfile
import unittest

import numpy as np

from reeblab.contact import DomainError
from reeblab.flow import (EmptySampleError, NoReturn, OrbitSearchOptions, Section, certify_monotone,
                          find_closed_orbits, integrate, return_map, seed_points, write_trajectory_csv)
from reeblab.forms import Chart, VectorField
from reeblab.scenarios import build_scenario

PHASE = Chart("phase", ("q", "p"), ((-10, 10), (-10, 10)))
OSCILLATOR = VectorField.from_strings(PHASE, ["p", "-q"], name="oscillator")
R3 = Chart("R3", ("x", "y", "z"), ((-1, 1), (-1, 1), (-1, 1)))
UP = VectorField.from_strings(R3, ["0", "0", "1"], name="up")


class TestIntegrate(unittest.TestCase):

    def test_oscillator_accuracy_improves_with_tolerance(self):
        errors = []
        for tol in (1e-6, 1e-8, 1e-10):
            traj = integrate(OSCILLATOR, [1.0, 0.0], 10.0, tol)
            exact = np.array([math.cos(10.0), -math.sin(10.0)])
            errors.append(np.linalg.norm(traj.end - exact))
        self.assertLess(errors[2], errors[0])
        self.assertLess(errors[2], 1e-8)

    def test_convergence_order_with_fixed_steps(self):
        # tol = 1 leaves the step size to max_step
        steps = np.array([0.4, 0.2, 0.1, 0.05])
        exact = np.array([math.cos(10.0), -math.sin(10.0)])
        errors = [np.linalg.norm(integrate(OSCILLATOR, [1.0, 0.0], 10.0, 1.0, max_step=h).end - exact)
                  for h in steps]
        self.assertTrue(np.all(np.diff(errors) < 0))
        order = np.polyfit(np.log(steps), np.log(errors), 1)[0]
        self.assertGreaterEqual(order, 4.0)

    def test_energy_conservation(self):
        traj = integrate(OSCILLATOR, [1.0, 0.0], 100.0, 1e-10)
        ts, states = traj.sample(400)
        energy = 0.5 * (states[0] ** 2 + states[1] ** 2)
        self.assertLess(np.max(np.abs(energy - 0.5)), 1e-7)

    def test_dense_output_between_steps(self):
        traj = integrate(OSCILLATOR, [1.0, 0.0], 5.0, 1e-10)
        ts = np.linspace(0.0, 5.0, 101)
        np.testing.assert_allclose(traj(ts)[0], np.cos(ts), atol=1e-7)

    def test_backward_time(self):
        traj = integrate(OSCILLATOR, [1.0, 0.0], -1.0, 1e-10)
        np.testing.assert_allclose(traj.end, [math.cos(1.0), math.sin(1.0)], atol=1e-8)

    def test_time_reversal(self):
        forward = integrate(OSCILLATOR, [1.0, 0.5], 7.0, 1e-10)
        back = integrate(OSCILLATOR, forward.end, -7.0, 1e-10)
        np.testing.assert_allclose(back.end, [1.0, 0.5], atol=1e-8)

    def test_domain_exit_face(self):
        traj = integrate(UP, [0.0, 0.0, 0.0], 5.0, 1e-10)
        self.assertEqual(traj.status, "domain-exit")
        self.assertEqual(traj.exit_face, "z=1")
        self.assertAlmostEqual(traj.t_end, 1.0, delta=1e-9)

    def test_start_outside_domain(self):
        with self.assertRaises(DomainError):
            integrate(UP, [0.0, 0.0, 2.0], 1.0)

    def test_zero_time(self):
        traj = integrate(UP, [0.0, 0.0, 0.0], 0.0)
        np.testing.assert_array_equal(traj.end, [0.0, 0.0, 0.0])

    def test_csv_export(self):
        traj = integrate(OSCILLATOR, [1.0, 0.0], 1.0, 1e-10)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_trajectory_csv(traj, os.path.join(tmp, "t.csv"), num=5)
            with open(path, "rb") as fh:
                lines = fh.read().split(b"\r\n")
        self.assertEqual(lines[0], b"t,q,p")
        self.assertEqual([float(v) for v in lines[1].split(b",")], [0.0, 1.0, 0.0])
        self.assertEqual(len(lines), 7)  # header, five rows, trailing empty


class TestReturnMap(unittest.TestCase):

    def setUp(self):
        self.plane = Chart("plane", ("x", "y"), ((-2, 2), (-2, 2)))
        self.rotation = VectorField.from_strings(self.plane, ["-y", "x"], name="rotation")

    def test_first_return_of_rotation(self):
        section = Section.coordinate(self.plane, "y", 0.0, direction=1)
        result = return_map(self.rotation, section, [1.0, 0.0], 20.0)
        self.assertAlmostEqual(result.time, 2 * math.pi, delta=1e-8)
        np.testing.assert_allclose(result.point, [1.0, 0.0], atol=1e-8)

    def test_first_return_on_overtwisted_leaf_pushes_radius_out(self):
        cs = build_scenario("ot-r3").contact
        x = cs.reeb_field()
        section = Section.coordinate(cs.chart, "theta", 0.0, direction=1)
        returned = 0
        for start in ([2.03, 0.0, -0.5], [2.03, 0.0, 0.0], [2.03, 0.0, 0.5], [1.0, 0.0, -4.0]):
            with self.subTest(start=start):
                try:
                    result = return_map(x, section, start, 50.0)
                except NoReturn as err:
                    self.assertEqual(err.reason, "domain-exit")
                    continue
                returned += 1
                self.assertGreater(result.point[0], start[0] + 1e-4)
                self.assertAlmostEqual(math.sin(result.point[1]), 0.0, delta=1e-8)
        self.assertGreaterEqual(returned, 1)

    def test_no_return_before_exit(self):
        section = Section.coordinate(R3, "z", 0.0, direction=1)
        with self.assertRaises(NoReturn):
            return_map(UP, section, [0.0, 0.0, 0.0], 10.0)

    def test_periodic_coordinate_section(self):
        torus = Chart("torus", ("a", "b"), ((0, 2 * math.pi), (0, 2 * math.pi)), (2 * math.pi, 2 * math.pi))
        drift = VectorField.from_strings(torus, ["1", "0.5"], name="linear")
        section = Section.coordinate(torus, "a", 0.0, direction=1)
        result = return_map(drift, section, [0.0, 0.0], 20.0)
        self.assertAlmostEqual(result.time, 2 * math.pi, delta=1e-8)
        self.assertAlmostEqual(result.point[1], math.pi, delta=1e-8)


class TestClosedOrbits(unittest.TestCase):

    def test_equator_orbit_on_compact_leaf(self):
        sc = build_scenario("sharp-s2t2", {"t": 0})
        x = sc.field("reeb:alpha")
        orbits = find_closed_orbits(x, np.array([[math.pi], [0.0], [0.0]]), sc.search_options(t_max=10.0))
        self.assertEqual(len(orbits), 1)
        orbit = orbits[0]
        self.assertAlmostEqual(orbit.period, 2 * math.pi, delta=1e-6)
        self.assertLessEqual(orbit.residual, 1e-9)
        self.assertAlmostEqual(orbit.point[0], math.pi, delta=1e-6)
        self.assertEqual(orbit.parameters, {})

    def test_flat_torus_geodesics_are_deduplicated(self):
        sc = build_scenario("flat-torus-unit-cotangent")
        x = sc.field("cogeodesic:g")
        seeds = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.5], [0.0, 0.0, 0.0]])
        orbits = find_closed_orbits(x, seeds, sc.search_options(t_max=10.0), parameters=sc.parameters)
        self.assertEqual(len(orbits), 2)
        for orbit in orbits:
            self.assertAlmostEqual(orbit.period, 2 * math.pi, delta=1e-8)
            self.assertEqual(orbit.parameters, {"psi0": 0.0})
        self.assertLess(orbits[0].point[1], orbits[1].point[1])

    def test_irrational_direction_has_no_orbit(self):
        sc = build_scenario("flat-torus-unit-cotangent")
        x = sc.field("cogeodesic:g")
        seeds = np.array([[0.0], [0.0], [math.atan(math.sqrt(2))]])
        opts = OrbitSearchOptions(t_max=30.0, frozen=("psi",))
        self.assertEqual(find_closed_orbits(x, seeds, opts), [])

    def test_rational_and_irrational_directions_on_flat_torus(self):
        sc = build_scenario("flat-torus-unit-cotangent")
        x = sc.field("cogeodesic:g")
        opts = sc.search_options(t_max=20.0)
        rational = [0.0, math.pi / 2, math.pi / 4, math.atan(0.5)]
        seeds = np.array([[0.0] * 4, [0.0] * 4, rational])
        periods = [orbit.period for orbit in find_closed_orbits(x, seeds, opts)]
        np.testing.assert_allclose(periods, 2 * math.pi * np.sqrt([1, 1, 2, 5]), atol=1e-8)
        # angles 2pi(k + 1/sqrt(2))/64 never point along a lattice vector
        irrational = 2 * math.pi * (np.arange(64) + 1 / math.sqrt(2)) / 64
        seeds = np.vstack([np.zeros(64), np.zeros(64), irrational])
        self.assertEqual(find_closed_orbits(x, seeds, opts), [])

    def test_orbit_exits_domain(self):
        opts = OrbitSearchOptions(t_max=5.0)
        self.assertEqual(find_closed_orbits(UP, np.zeros((3, 1)), opts), [])

    def test_seed_points(self):
        grid = seed_points(R3, [(-0.5, 0.5)] * 3, [3, 3, 2])
        self.assertEqual(grid.shape, (3, 18))
        sobol = seed_points(R3, [(-0.5, 0.5)] * 3, [4, 4, 2], mode="sobol")
        self.assertEqual(sobol.shape, (3, 32))
        self.assertTrue(np.all(np.abs(sobol) <= 0.5))


class TestCertificates(unittest.TestCase):

    def test_monotone_height(self):
        pts = R3.sample_grid(5)
        report = certify_monotone(UP, R3.parse("z + 0.1*x"), pts, eps_cert=0.5, name="height")
        self.assertEqual(report.verdict, "PASS")
        self.assertAlmostEqual(report.margin, 1.0)
        self.assertEqual(report.samples, 125)

    def test_failing_certificate_reports_argmin(self):
        pts = R3.sample_grid(5)
        report = certify_monotone(UP, R3.parse("z*x"), pts, name="saddle")
        self.assertEqual(report.verdict, "FAIL")
        self.assertAlmostEqual(report.margin, -1.0)
        self.assertAlmostEqual(report.argmin[0], -1.0)

    def test_parallel_matches_serial(self):
        pts = R3.sample_grid(9)
        w = R3.parse("sin(z) + x*y")
        serial = certify_monotone(UP, w, pts, chunk=100)
        parallel = certify_monotone(UP, w, pts, jobs=3, chunk=100)
        self.assertEqual(serial.margin, parallel.margin)
        self.assertEqual(serial.argmin, parallel.argmin)

    def test_empty_region(self):
        with self.assertRaises(EmptySampleError):
            certify_monotone(UP, R3.parse("z"), np.zeros((3, 0)))


if __name__ == "__main__":
    unittest.main()
