import contextlib
import io
import json
import os
import tempfile
import unittest
from unittest import mock

import numpy as np

from reeblab.cli import UsageError, dispatch, main, parse_grid, parse_overrides, parse_point, resolve_jobs
from reeblab.plots import FigureWriter, write_csv
from reeblab.scenarios import builtin_config


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


class TestArguments(unittest.TestCase):

    def test_parse_point(self):
        self.assertEqual(parse_point("1,0,0.5"), [1.0, 0.0, 0.5])
        self.assertAlmostEqual(parse_point("pi,0")[0], np.pi, places=15)
        with self.assertRaises(UsageError):
            parse_point("1,foo")

    def test_parse_grid(self):
        self.assertEqual(parse_grid("4x4x1"), [4, 4, 1])
        for bad in ("4x", "0x3"):
            with self.assertRaises(UsageError):
                parse_grid(bad)

    def test_parse_overrides(self):
        self.assertEqual(parse_overrides(["eps=0.001", "t=1"]), {"eps": 0.001, "t": 1.0})
        with self.assertRaises(UsageError):
            parse_overrides(["eps"])

    def test_jobs_flag_wins_over_environment(self):
        with mock.patch.dict(os.environ, {"REEB_LAB_JOBS": "4"}):
            self.assertEqual(resolve_jobs(None), 4)
            self.assertEqual(resolve_jobs(2), 2)
        with mock.patch.dict(os.environ, {"REEB_LAB_JOBS": "many"}):
            with self.assertRaises(UsageError):
                resolve_jobs(None)
        with mock.patch.dict(os.environ, {}, clear=True):
            self.assertEqual(resolve_jobs(None), 1)


class TestCommands(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def report(self):
        with open(os.path.join(self.out, "report.json"), encoding="utf-8") as fh:
            return json.load(fh)

    def test_list(self):
        code, stdout, _ = run("list", "--out", self.out)
        self.assertEqual(code, 0)
        self.assertIn("ot-r3", stdout)
        self.assertEqual(len(self.report()["checks"][0]["result"]), 7)

    def test_verify_contact(self):
        code, stdout, _ = run("verify-contact", "tight-r3", "--grid", "6", "--out", self.out)
        self.assertEqual(code, 0)
        report = self.report()
        self.assertEqual(report["verdict"], "PASS")
        self.assertEqual(report["command"], "verify-contact")
        self.assertTrue(stdout.strip().endswith("PASS"))

    def test_reeb_vector(self):
        code, stdout, _ = run("reeb", "ot-r3", "--at", "1,0,0.5", "--out", self.out)
        self.assertEqual(code, 0)
        vector = self.report()["checks"][0]["result"]["vector"]
        self.assertEqual(len(vector), 3)
        self.assertGreaterEqual(vector[0], 0.0)

    def test_parameter_override_recorded(self):
        run("reeb", "ot-r3", "--at", "1,0,0.5", "--set", "eps=0.001", "--out", self.out)
        report = self.report()
        self.assertEqual(report["overrides"], {"eps": 0.001})
        self.assertEqual(report["parameters"]["eps"], 0.001)

    def test_usage_errors(self):
        code, _, err = run("reeb", "ot-r3", "--at", "1,0", "--form", "nope", "--out", self.out)
        self.assertEqual(code, 2)
        self.assertIn("no contact form", err)
        self.assertEqual(run("reeb", "unknown-scenario", "--at", "0", "--out", self.out)[0], 2)
        self.assertEqual(run("reeb", "ot-r3", "--at", "1,0,0", "--set", "eps=9", "--out", self.out)[0], 2)
        self.assertEqual(run("no-such-command")[0], 2)

    def test_flow_writes_artifacts(self):
        code, _, _ = run("flow", "tight-r3", "--from", "0,0,0", "--time", "5", "--out", self.out)
        self.assertEqual(code, 0)
        report = self.report()
        result = report["checks"][0]["result"]
        self.assertEqual(result["status"], "domain-exit")
        self.assertIn("trajectory.csv", report["artifacts"])
        self.assertIn("trajectory-coords.svg", report["artifacts"])
        for name in report["artifacts"]:
            self.assertTrue(os.path.exists(os.path.join(self.out, name)))

    def test_energy_of_disc(self):
        code, _, _ = run("energy", "ot-r3", "--map", "disc", "--out", self.out)
        self.assertEqual(code, 0)
        result = self.report()["checks"][0]["result"]
        self.assertAlmostEqual(result["horizontal_energy"], np.pi ** 2, delta=1e-6)
        self.assertEqual(result["inner_boundary_energy"], 0.0)
        self.assertEqual(self.report()["verdict"], "PASS")

    def test_energy_of_map_from_file(self):
        cfg = builtin_config("ot-r3")
        doc = {"schema": cfg["schema"], "id": "disc-map",
               "charts": [c for c in cfg["charts"] if c["name"] in ("cyl", "disc")],
               "maps": [m for m in cfg["maps"] if m["name"] == "disc"]}
        path = os.path.join(self.out, "disc.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
        code, _, _ = run("energy", "ot-r3", "--map", path, "--out", self.out)
        self.assertEqual(code, 0)
        result = self.report()["checks"][0]["result"]
        self.assertAlmostEqual(result["horizontal_energy"], np.pi ** 2, delta=1e-6)

    def test_energy_map_file_needs_one_map(self):
        cfg = builtin_config("ot-r3")
        path = os.path.join(self.out, "maps.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"schema": cfg["schema"], "id": "maps",
                       "charts": [c for c in cfg["charts"] if c["name"] != "cart"], "maps": cfg["maps"]}, fh)
        code, _, err = run("energy", "ot-r3", "--map", path, "--out", self.out)
        self.assertEqual(code, 2)
        self.assertIn("exactly one map", err)

    def test_point_outside_chart_is_usage_error(self):
        code, _, err = run("reeb", "tight-r3", "--at", "5,0,0", "--out", self.out)
        self.assertEqual(code, 2)
        self.assertIn("error", err)
        code, _, _ = run("flow", "tight-r3", "--from", "0,0,3", "--time", "1", "--out", self.out)
        self.assertEqual(code, 2)

    def test_compare_cogeodesic(self):
        code, _, _ = run("compare-cogeodesic", "flat-torus-unit-cotangent", "--at", "1,2", "--psi", "0.3",
                         "--time", "10", "--out", self.out)
        self.assertEqual(code, 0)
        self.assertEqual(self.report()["verdict"], "PASS")

    def test_geodesic_speed_is_conserved(self):
        code, _, _ = run("geodesics", "t3-linear", "--metric", "leaf_g", "--from", "0,0,0.3,0.1", "--time", "5",
                         "--out", self.out)
        self.assertEqual(code, 0)
        result = self.report()["checks"][0]["result"]
        self.assertEqual(result["status"], "complete")
        self.assertLess(result["speed_drift"], 1e-8)

    def test_orbit_search_on_flat_torus(self):
        code, stdout, _ = run("orbits", "flat-torus-unit-cotangent", "--grid", "2x2x1", "--tmax", "10",
                              "--out", self.out)
        self.assertEqual(code, 0)
        self.assertIn("ORBITS-FOUND", stdout)
        with open(os.path.join(self.out, "orbits.json"), encoding="utf-8") as fh:
            orbits = json.load(fh)
        self.assertEqual(orbits["coords"], ["x", "y", "psi"])
        self.assertEqual(len(orbits["orbits"]), 2)

    def test_no_orbit_on_linear_foliation_leaf(self):
        code, stdout, _ = run("orbits", "t3-linear", "--grid", "3x3x2", "--tmax", "10", "--out", self.out)
        self.assertEqual(code, 0)
        self.assertIn("NO-ORBIT-FOUND", stdout)
        result = self.report()["checks"][0]["result"]
        self.assertEqual(result["orbits"], [])
        self.assertEqual(result["seeds"], 18)

    def test_unexpected_orbit_outcome_fails(self):
        # the flat torus expects orbits; an irrational direction finds none
        code, _, _ = run("orbits", "flat-torus-unit-cotangent", "--set", "psi0=atan(sqrt(2))", "--grid", "1x1x1",
                         "--tmax", "10", "--out", self.out)
        self.assertEqual(code, 1)
        self.assertEqual(self.report()["verdict"], "FAIL")

    def test_leaf_flag_requires_foliated_scenario(self):
        self.assertEqual(run("orbits", "ot-r3", "--leaf", "0", "--out", self.out)[0], 2)

    def test_report_is_reproducible(self):
        argv = ["reeb", "s2xr", "--at", "1,0,0", "--out", self.out]
        first = dispatch(argv).to_dict()
        second = dispatch(argv).to_dict()
        for report in (first, second):
            del report["started"], report["wall_time"]
        self.assertEqual(first, second)


class TestFigures(unittest.TestCase):

    def test_svg_and_csv_siblings(self):
        with tempfile.TemporaryDirectory() as tmp:
            writer = FigureWriter(tmp)
            t = np.linspace(0, 1, 5)
            paths = writer.series("radius", t, {"r": t ** 2}, title="r(t)")
            self.assertTrue(paths["svg"].endswith("radius.svg"))
            with open(paths["csv"], "rb") as fh:
                lines = fh.read().split(b"\r\n")
            self.assertEqual(lines[0], b"t,r")
            self.assertEqual(lines[3], b"0.5,0.25")
            with open(paths["svg"], encoding="utf-8") as fh:
                first_svg = fh.read()
            writer.series("radius", t, {"r": t ** 2}, title="r(t)")
            with open(paths["svg"], encoding="utf-8") as fh:
                self.assertEqual(fh.read(), first_svg)
            self.assertEqual(len(writer.written), 4)

    def test_margin_chart(self):
        with tempfile.TemporaryDirectory() as tmp:
            paths = FigureWriter(tmp).margins("certs", ["a", "b"], [1.0, -1e-3], [0.0, 0.0])
            self.assertTrue(os.path.exists(paths["svg"]))

    def test_csv_precision(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_csv(os.path.join(tmp, "x.csv"), ["x"], [[1 / 3]])
            with open(path, "rb") as fh:
                self.assertEqual(fh.read(), b"x\r\n0.33333333333333331\r\n")


if __name__ == "__main__":
    unittest.main()
