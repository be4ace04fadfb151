import json
import math
import os
import tempfile
import unittest

import numpy as np

from reeblab.scenarios import (SCHEMA, ConfigError, ScenarioError, build_scenario, builtin_config, builtin_ids,
                               load_config, resolve, scenario_from_config)


class TestCatalogue(unittest.TestCase):

    def test_every_builtin_round_trips(self):
        for sid in builtin_ids():
            with self.subTest(sid=sid):
                sc = build_scenario(sid)
                again = scenario_from_config(json.loads(sc.to_json()), f"<copy:{sid}>")
                self.assertEqual(sc.to_json(), again.to_json())
                self.assertEqual(sc.parameters, again.parameters)
                if sc.contact is not None:
                    p = sc.contact.chart.sample_grid(3)[:, 13]
                    np.testing.assert_allclose(sc.contact.reeb_at(p).vector, again.contact.reeb_at(p).vector,
                                               rtol=0, atol=0)

    def test_documents_carry_schema(self):
        for sid in builtin_ids():
            self.assertEqual(builtin_config(sid)["schema"], SCHEMA)

    def test_unknown_scenario(self):
        with self.assertRaises(ScenarioError):
            build_scenario("no-such-thing")
        with self.assertRaises(ScenarioError):
            resolve("no-such-thing")

    def test_override_outside_range(self):
        with self.assertRaisesRegex(ScenarioError, "outside"):
            build_scenario("ot-r3", {"eps": 0.5})

    def test_unknown_override(self):
        with self.assertRaises(ScenarioError):
            build_scenario("ot-r3", {"nu": 1.0})

    def test_override_changes_form(self):
        sc = build_scenario("ot-r3", {"eps": 0.0})
        self.assertEqual(sc.parameters["eps"], 0.0)
        sample = sc.contact.reeb_at([1.0, 0.0, 0.5])
        self.assertAlmostEqual(sample.vector[0], 0.0, places=15)

    def test_compact_suspension_leaf_has_unperturbed_form(self):
        sc = build_scenario("sharp-s2t2", {"t": 0})
        self.assertTrue(sc.leaf["compact"])
        coeff = sc.forms["alpha"].coefficient((1,))
        for z in (0.3, 1.0, 2.0, 4.5):
            self.assertAlmostEqual(coeff.evaluate([z, 0.0, 1.0]), z * (z - 2 * math.pi) * math.sin(z), places=13)

    def test_noncompact_suspension_leaf(self):
        sc = build_scenario("sharp-s2t2", {"t": 0.5})
        self.assertFalse(sc.leaf["compact"])
        self.assertEqual(sc.search.expect, "none")
        self.assertTrue(sc.certificates)


class TestConfigErrors(unittest.TestCase):

    def test_wrong_schema(self):
        config = builtin_config("tight-r3")
        config["schema"] = "reeb-lab/scenario/v0"
        with self.assertRaises(ConfigError) as ctx:
            scenario_from_config(config, "bad.json")
        self.assertEqual(ctx.exception.field, "schema")

    def test_parse_error_names_field(self):
        config = builtin_config("tight-r3")
        config["forms"][0]["coefficients"]["dz"] = "cos(x"
        with self.assertRaises(ConfigError) as ctx:
            scenario_from_config(config, "bad.json")
        self.assertEqual(ctx.exception.field, "forms[0].coefficients")
        self.assertIn("bad.json", str(ctx.exception))

    def test_unknown_chart_reference(self):
        config = builtin_config("tight-r3")
        config["forms"][0]["chart"] = "nowhere"
        with self.assertRaises(ConfigError) as ctx:
            scenario_from_config(config)
        self.assertEqual(ctx.exception.field, "forms[0].chart")

    def test_missing_charts(self):
        config = builtin_config("tight-r3")
        del config["charts"]
        with self.assertRaises(ConfigError):
            scenario_from_config(config)

    def test_load_from_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "tight.json")
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(builtin_config("tight-r3"), fh)
            sc = resolve(path)
            self.assertEqual(sc.id, "tight-r3")
            self.assertEqual(sc.source, path)

    def test_invalid_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "broken.json")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write('{"schema": ')
            with self.assertRaises(ConfigError):
                load_config(path)


class TestCertificatesAndFixtures(unittest.TestCase):

    def assertAllPass(self, reports):
        for report in reports:
            self.assertEqual(report.verdict, "PASS", f"{report.name}: margin {report.margin:.3e}")

    def test_tight_certificate(self):
        reports = build_scenario("tight-r3").run_certificates()
        self.assertEqual(len(reports), 1)
        self.assertAlmostEqual(reports[0].margin, 1.0, places=14)
        self.assertAllPass(reports)

    def test_overtwisted_certificates(self):
        reports = build_scenario("ot-r3").run_certificates(jobs=2)
        self.assertEqual([r.name for r in reports], ["r-nondecreasing", "r-increasing-outside",
                                                      "z-increasing-collar", "z-increasing-core"])
        self.assertAllPass(reports)

    def test_band_certificates(self):
        self.assertAllPass(build_scenario("s2xr").run_certificates())

    def test_certificate_fails_without_perturbation(self):
        reports = {r.name: r for r in build_scenario("ot-r3", {"eps": 0.0}).run_certificates()}
        self.assertEqual(reports["r-increasing-outside"].verdict, "FAIL")

    def test_core_region_predicate(self):
        sc = build_scenario("ot-r3")
        core = [c for c in sc.certificates if c.name == "z-increasing-core"][0]
        pts = core.points()
        self.assertTrue(np.all(pts[0] ** 2 + pts[1] ** 2 <= 0.05 ** 2 + 1e-15))

    def test_fixtures(self):
        for sid, overrides in (("sharp-s2t2", {"t": 0}), ("flat-torus-unit-cotangent", None)):
            with self.subTest(sid=sid):
                results = build_scenario(sid, overrides).verify_fixtures()
                self.assertEqual(len(results), 1)
                self.assertEqual(results[0].verdict, "PASS")

    def test_search_seeds(self):
        sc = build_scenario("flat-torus-unit-cotangent")
        seeds = sc.search_seeds()
        self.assertEqual(seeds.shape, (3, 16))
        self.assertTrue(np.all(seeds[2] == 0.0))
        self.assertEqual(sc.search_options().frozen, ("psi",))


class TestOrbitSearches(unittest.TestCase):
    # scenario searches default to tmax 200
    T_MAX = 20.0

    def test_no_closed_orbits_where_none_expected(self):
        cases = [("ot-r3", None), ("s2xr", None), ("sharp-s2t2", {"t": 0.5}), ("s3-reeb-leaf", {"c": 0.0}),
                 ("t3-linear", None)]
        for sid, overrides in cases:
            with self.subTest(sid=sid):
                sc = build_scenario(sid, overrides)
                self.assertEqual(sc.search.expect, "none")
                self.assertGreaterEqual(sc.search_seeds().shape[1], 200)
                self.assertEqual(sc.find_orbits(t_max=self.T_MAX, jobs=2), [])


if __name__ == "__main__":
    unittest.main()
