import unittest

from reeblab.tracer import RunTracer


class Outcome:

    def __init__(self, verdict, value):
        self.verdict = verdict
        self.value = value

    def to_dict(self):
        return {"value": self.value}


class TestRunTracer(unittest.TestCase):

    def setUp(self):
        self.tracer = RunTracer()

    def test_capture_copies_data(self):
        payload = {"margin": [1.0]}
        self.tracer.capture(payload, "first", "PASS")
        payload["margin"].append(2.0)
        data, meta = self.tracer.get_snapshot()
        self.assertEqual(data, {"margin": [1.0]})
        self.assertEqual(meta["step"], 0)
        self.assertEqual(meta["function"], "test_capture_copies_data")

    def test_unknown_verdict(self):
        with self.assertRaises(ValueError):
            self.tracer.capture({}, "bad", "MAYBE")

    def test_verdicts_skip_informational_entries(self):
        self.tracer.capture({}, "info")
        self.tracer.capture({}, "check", "FAIL")
        self.assertEqual(self.tracer.verdicts(), ["FAIL"])

    def test_checks_have_no_timestamps(self):
        self.tracer.capture({"x": 1}, "only", "PASS", extra="kept out")
        self.assertEqual(self.tracer.checks(),
                         [{"step": 0, "description": "only", "verdict": "PASS", "result": {"x": 1}}])

    def test_get_snapshot_out_of_range(self):
        self.assertEqual(self.tracer.get_snapshot(), (None, {}))
        self.tracer.capture(1, "one")
        self.assertEqual(self.tracer.get_snapshot(5), (None, {}))
        self.assertEqual(self.tracer.get_snapshot(0)[0], 1)

    def test_reset(self):
        self.tracer.capture(1, "one")
        self.tracer.reset()
        self.assertEqual(self.tracer.checks(), [])
        self.tracer.capture(2, "two")
        self.assertEqual(self.tracer.get_snapshot()[1]["step"], 0)

    def test_auto_trace(self):
        @self.tracer.auto_trace("decorated check")
        def run():
            return Outcome("NO-ORBIT-FOUND", 3)

        result = run()
        self.assertEqual(result.value, 3)
        data, meta = self.tracer.get_snapshot()
        self.assertEqual(data, {"value": 3})
        self.assertEqual(meta["verdict"], "NO-ORBIT-FOUND")
        self.assertEqual(meta["function"], "run")

    def test_untracked_callers(self):
        tracer = RunTracer(track_callers=False)
        tracer.capture({}, "quiet")
        self.assertNotIn("function", tracer.get_snapshot()[1])


if __name__ == "__main__":
    unittest.main()
