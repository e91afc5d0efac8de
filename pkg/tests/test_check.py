import os
import unittest

from pathlib import Path

import greensel.check as check

from greensel.energy import EnergySource
from greensel.report import ReportRow


base_path = Path(__file__).parent
files_dir = os.path.join(base_path, "files")


def row(classifier, fraction, overhead, accuracy, time_ms, energy_uwh, source=EnergySource.MODELED):
    return ReportRow(
        classifier=classifier, fraction_of_g=fraction, overhead_ms=overhead, accuracy=accuracy,
        time_ms=time_ms, energy_uwh=energy_uwh, energy_source=source,
    )


def reproduced_rows(**changes) -> list[ReportRow]:
    rows = {
        "Decision Tree": row("Decision Tree", 1.0, 0.0, 0.71, 0.13, 0.13),
        "Neural Network": row("Neural Network", 0.0, 0.0, 0.97, 37.44, 40.80),
        "Cascading": row("Cascading", 0.66, 0.21, 0.93, 29.48, 14.0),
        "Routing": row("Routing", 0.60, 0.18, 0.89, 33.13, 16.5),
    }
    for name, update in changes.items():
        key = name.replace("_", " ").title()
        rows[key] = rows[key].model_copy(update=update)
    return list(rows.values())


class TestNumericalFunctions(unittest.TestCase):
    def test_percent_reduction(self):
        self.assertAlmostEqual(check.percent_reduction(32.12, 40.80), 21.274509803921568)
        self.assertEqual(check.percent_reduction(1.0, 0.0), 0.0)

    def test_lower_keys(self):
        self.assertEqual(check.lower_keys({"Routing": 1}), {"routing": 1})


class TestAcceptanceCheck(unittest.TestCase):
    def test_reproduced_report_passes(self):
        """Tests if a report following the published trends has no messages"""

        self.assertEqual(check.AcceptanceCheck(reproduced_rows()).check_all(), [])

    def test_check_accuracy_fail(self):
        """Tests if a tree that is too good and a cascade above the network are flagged"""

        rows = reproduced_rows(
            decision_tree={"accuracy": 0.9},
            cascading={"accuracy": 0.99},
        )
        messages = check.AcceptanceCheck(rows).check_accuracy()

        self.assertEqual(len(messages), 2)
        self.assertTrue(messages[0].startswith("Decision Tree accuracy"))
        self.assertIn("not strictly between", messages[1])

    def test_check_fraction_fail(self):
        messages = check.AcceptanceCheck(reproduced_rows(routing={"fraction_of_g": 0.2})).check_fraction_of_g()

        self.assertEqual(len(messages), 1)
        self.assertIn("Routing fraction of G", messages[0])

    def test_check_energy_savings_fail(self):
        messages = check.AcceptanceCheck(reproduced_rows(cascading={"energy_uwh": 39.0})).check_energy_savings()

        self.assertEqual(len(messages), 1)
        self.assertIn("less than 10.0%", messages[0])

    def test_mixed_energy_sources(self):
        """Tests if energies from different meters are never compared"""

        rows = reproduced_rows(routing={"energy_source": EnergySource.WALLCLOCK_PROXY})
        messages = check.AcceptanceCheck(rows).check_energy_savings()

        self.assertEqual(len(messages), 1)
        self.assertIn("not comparable", messages[0])

    def test_check_overhead_fail(self):
        messages = check.AcceptanceCheck(reproduced_rows(cascading={"overhead_ms": 5.0})).check_overhead()

        self.assertEqual(len(messages), 1)
        self.assertIn("Cascading overhead", messages[0])

    def test_frozen_clock_skips_overhead(self):
        rows = reproduced_rows(cascading={"time_ms": 0.0}, routing={"time_ms": 0.0})

        with self.assertLogs("greensel.check", level="INFO"):
            self.assertEqual(check.AcceptanceCheck(rows).check_overhead(), [])

    def test_missing_row(self):
        rows = [r for r in reproduced_rows() if r.classifier != "Routing"]
        messages = check.AcceptanceCheck(rows).check_fraction_of_g()

        self.assertEqual(messages, ["Report has no 'routing' row"])

    def test_custom_reference(self):
        reference = os.path.join(files_dir, "reference_strict.yaml")
        messages = check.AcceptanceCheck(reproduced_rows(), reference).check_all()

        self.assertEqual(len(messages), 1)
        self.assertIn("Neural Network accuracy", messages[0])


if __name__ == "__main__":
    unittest.main()
