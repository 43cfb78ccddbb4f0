"""End-to-end checks of the blockpf executable: exit codes and outputs."""

import json
import os
import subprocess
import sys
import tempfile
import unittest

CLI = sys.argv.pop(1)
DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")
MODEL = os.path.join(DATA, "minimal_model.json")


def run(*args):
    return subprocess.run([CLI, *args], capture_output=True, text=True)


class Cli(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.dir, name)

    def test_simulate_and_filter(self):
        traj = self.path("traj.json")
        r = run("simulate", "--model", MODEL, "-n", "5", "--seed", "4", "-o", traj)
        self.assertEqual(r.returncode, 0, r.stderr)
        doc = json.load(open(traj))
        self.assertEqual(len(doc["states"]), 6)
        self.assertEqual(len(doc["observations"]), 5)
        for kind in ("exact", "exact_block", "bootstrap", "block"):
            out = self.path(kind + ".json")
            r = run("filter", "--model", MODEL, "--observations", traj, "--kind", kind, "-N", "500", "-o", out,
                    "--ensemble-out", self.path(kind + ".bin"))
            self.assertEqual(r.returncode, 0, r.stderr)
            marg = json.load(open(out))["marginals"]
            self.assertEqual(len(marg), 3)
            for m in marg:
                self.assertAlmostEqual(sum(m), 1.0, places=12)

    def test_same_seed_same_bytes(self):
        a, b = self.path("a.json"), self.path("b.json")
        run("simulate", "--model", MODEL, "-n", "8", "--seed", "9", "-o", a)
        run("simulate", "--model", MODEL, "-n", "8", "--seed", "9", "-o", b)
        self.assertEqual(open(a, "rb").read(), open(b, "rb").read())

    def test_missing_file_and_bad_usage(self):
        self.assertEqual(run("simulate", "--model", self.path("nope.json")).returncode, 2)
        self.assertEqual(run("experiment", "no_such_scenario").returncode, 2)
        self.assertEqual(run("experiment", "bias_decay", "--set", "bogus=1").returncode, 2)
        self.assertEqual(run().returncode, 2)

    def test_dry_run(self):
        out = self.path("results")
        r = run("experiment", "variance_scaling", "--dry-run", "--set", "trials=3", "-o", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertEqual(json.loads(r.stdout)["trials"], 3)
        self.assertFalse(os.path.exists(out))

    def test_experiment_outputs_and_assertion_gate(self):
        out = self.path("results")
        r = run("experiment", "bias_decay", "-o", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        csv = open(os.path.join(out, "bias_decay.csv")).read()
        self.assertTrue(csv.startswith("scenario,parameters,metric,value,stderr,seed_lineage"))
        meta = json.load(open(os.path.join(out, "bias_decay.meta.json")))
        self.assertTrue(meta["all_passed"])
        r = run("experiment", "filter_stability", "--set", "tolerance.threshold=1e-300", "-o", out)
        self.assertEqual(r.returncode, 3)

    def test_variance_scaling_default(self):
        r = run("experiment", "variance_scaling", "-o", self.path("vs"))
        self.assertEqual(r.returncode, 0, r.stderr)

    def test_validate(self):
        r = run("validate")
        self.assertEqual(r.returncode, 0, r.stdout + r.stderr)
        r = run("-v", "validate", "--model", MODEL)
        self.assertEqual(r.returncode, 0, r.stdout + r.stderr)
        self.assertGreaterEqual(r.stdout.count("PASS "), 3)
        r = run("validate", "--model", os.path.join(DATA, "corrupt_model.json"))
        self.assertEqual(r.returncode, 2)
        self.assertIn("trans[1] row 2", r.stderr)

    def test_dobrushin(self):
        r = run("dobrushin", "--rho", os.path.join(DATA, "field_a.json"), "--rho-tilde",
                os.path.join(DATA, "field_b.json"), "-J", "0", "2", "--exact")
        self.assertEqual(r.returncode, 0, r.stderr)
        doc = json.loads(r.stdout)
        self.assertGreaterEqual(doc["bound"] + 1e-12, doc["exact_local_distance"])


if __name__ == "__main__":
    unittest.main()
