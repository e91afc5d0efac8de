import math
import os
import tempfile
import unittest

from unittest.mock import patch

from hypothesis import given
from hypothesis import strategies as st
from pydantic import ValidationError

import greensel.energy as energy


def fake_clock(*ticks):
    values = iter(ticks)
    return lambda: next(values)


def section(meter: energy.EnergyMeter) -> energy.EnergySample:
    meter.begin()
    return meter.end()


class TestConversions(unittest.TestCase):
    def test_microjoules_to_microwatt_hours(self):
        self.assertEqual(energy.uj_to_uwh(3_600_000), 1000.0)
        self.assertEqual(energy.uwh_to_uj(1.0), 3600.0)

    @given(st.integers(min_value=0, max_value=2**50))
    def test_unit_round_trip(self, microjoules):
        """Tests if converting to µWh and back is lossless within one ulp"""

        restored = energy.uwh_to_uj(energy.uj_to_uwh(microjoules))
        self.assertLessEqual(abs(restored - microjoules), math.ulp(microjoules))

    def test_counter_delta(self):
        self.assertEqual(energy.counter_delta(100, 250), 150)

    def test_counter_wraparound(self):
        """Tests if a counter that wrapped past its range is corrected once"""

        maximum = 262143328850
        self.assertEqual(energy.counter_delta(maximum - 100, 200, maximum), 300)

    def test_counter_backwards_without_range(self):
        with self.assertRaises(energy.MeterError):
            energy.counter_delta(500, 100)

    def test_proxy_energy(self):
        """Tests if 37.44 ms at 10 W is 104 µWh"""

        self.assertAlmostEqual(energy.proxy_energy_uwh(37.44, 10.0), 104.0)
        self.assertEqual(energy.proxy_energy_uwh(0.0, 10.0), 0.0)

    def test_carbon(self):
        sample = energy.EnergySample(energy_uwh=40.80, duration_ms=0.0, source=energy.EnergySource.MODELED)

        self.assertAlmostEqual(energy.to_carbon(sample, 400), 1.632e-5, places=12)
        self.assertEqual(energy.to_carbon(sample, 0), 0.0)
        self.assertAlmostEqual(energy.to_carbon(sample, 800), 2 * energy.to_carbon(sample, 400))

    def test_negative_carbon_intensity(self):
        sample = energy.EnergySample(energy_uwh=1.0, duration_ms=0.0, source=energy.EnergySource.MODELED)
        with self.assertRaises(ValueError):
            energy.to_carbon(sample, -1)


class TestCostModel(unittest.TestCase):
    def test_from_totals(self):
        costs = energy.CostModel.from_totals([0.13, 40.80], 359, router_total=0.13)

        self.assertAlmostEqual(costs.per_model_cost[1] * 359, 40.80)
        self.assertAlmostEqual(costs.router_cost, 0.13 / 359)
        self.assertEqual(costs.k, 2)

    def test_invalid_costs(self):
        with self.assertRaises(ValidationError):
            energy.CostModel(per_model_cost=(1.0, float("inf")))
        with self.assertRaises(ValidationError):
            energy.CostModel(per_model_cost=())


class TestModeledMeter(unittest.TestCase):
    def setUp(self):
        self.costs = energy.CostModel(per_model_cost=(1.0, 100.0), router_cost=0.5)

    def test_modeled_measure(self):
        """Tests if costs (1, 100) and counts (360, 126) give 12960 units"""

        sample = energy.modeled_measure(energy.CostModel(per_model_cost=(1.0, 100.0)), [360, 126])

        self.assertEqual(sample.energy_uwh, 12960.0)
        self.assertEqual(sample.source, energy.EnergySource.MODELED)

    def test_zero_invocations(self):
        self.assertEqual(energy.modeled_measure(self.costs, [0, 0]).energy_uwh, 0.0)

    def test_router_invocations_are_charged(self):
        sample = energy.modeled_measure(self.costs, {1: 2}, router_invocations=4)
        self.assertEqual(sample.energy_uwh, 4.0)

    def test_unknown_model_index(self):
        with self.assertRaises(ValueError):
            energy.modeled_measure(self.costs, {3: 1})

    def test_meter_section(self):
        meter = energy.ModeledMeter(self.costs, clock=fake_clock(1.0, 1.5))
        meter.begin()
        meter.record_model_invocation(1, 360)
        meter.record_model_invocation(2, 126)
        meter.record_router_invocation(2)
        sample = meter.end()

        self.assertEqual(sample.energy_uwh, 12961.0)
        self.assertEqual(sample.duration_ms, 500.0)

    def test_recording_order_does_not_matter(self):
        """Tests if permuting recorded invocations yields identical totals"""

        forward, backward = energy.ModeledMeter(self.costs), energy.ModeledMeter(self.costs)
        calls = [(1, 3), (2, 1), (1, 7), (2, 4)]

        with forward.measure() as first:
            for index, count in calls:
                forward.record_model_invocation(index, count)
        with backward.measure() as second:
            for index, count in reversed(calls):
                backward.record_model_invocation(index, count)

        self.assertEqual(first.sample.energy_uwh, second.sample.energy_uwh)

    def test_sections_are_independent(self):
        meter = energy.ModeledMeter(self.costs)
        with meter.measure():
            meter.record_model_invocation(2, 5)
        with meter.measure() as second:
            meter.record_model_invocation(1, 1)

        self.assertEqual(second.sample.energy_uwh, 1.0)

    def test_misuse(self):
        meter = energy.ModeledMeter(self.costs)
        with self.assertRaises(energy.MeterError):
            meter.end()
        meter.begin()
        with self.assertRaises(energy.MeterError):
            meter.begin()


class TestProxyMeter(unittest.TestCase):
    def test_proxy_measure(self):
        """Tests if a 37.44 ms section at 10 W is estimated as 104 µWh"""

        sample = energy.proxy_measure(lambda: None, power_watts=10.0, clock=fake_clock(2.0, 2.03744))

        self.assertAlmostEqual(sample.energy_uwh, 104.0)
        self.assertEqual(sample.source, energy.EnergySource.WALLCLOCK_PROXY)

    def test_sections_add_linearly(self):
        meter = energy.ProxyMeter(10.0, clock=fake_clock(0.0, 0.01, 0.01, 0.03, 0.0, 0.03))
        first, second, whole = section(meter), section(meter), section(meter)

        self.assertAlmostEqual(first.energy_uwh + second.energy_uwh, whole.energy_uwh)

    def test_power_from_environment(self):
        with patch.dict(os.environ, {energy.PROXY_WATTS_ENV: "25"}):
            self.assertEqual(energy.ProxyMeter().power_watts, 25.0)

    def test_negative_power(self):
        with self.assertRaises(ValueError):
            energy.ProxyMeter(-1.0)


class TestOsCounterMeter(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.counter = os.path.join(self.directory.name, "energy_uj")
        self.write(1_000_000)

    def tearDown(self):
        self.directory.cleanup()

    def write(self, value, name="energy_uj"):
        with open(os.path.join(self.directory.name, name), "w") as f:
            f.write(f"{value}\n")

    def test_counter_section(self):
        meter = energy.OsCounterMeter(self.counter)
        meter.begin()
        self.write(4_600_000)
        sample = meter.end()

        self.assertAlmostEqual(sample.energy_uwh, 1000.0)
        self.assertEqual(sample.source, energy.EnergySource.OS_COUNTER)

    def test_counter_wraps(self):
        self.write(1000, name="max_energy_range_uj")
        self.write(900)
        meter = energy.OsCounterMeter(self.counter)
        meter.begin()
        self.write(100)
        sample = meter.end()

        self.assertAlmostEqual(sample.energy_uwh, energy.uj_to_uwh(200))

    def test_oscounter_measure(self):
        """Tests if the counter increase during the section is returned in µWh"""

        sample = energy.oscounter_measure(lambda: self.write(1_007_200), self.counter)

        self.assertAlmostEqual(sample.energy_uwh, 2.0)
        self.assertEqual(sample.source, energy.EnergySource.OS_COUNTER)

    def test_failed_section_is_dropped(self):
        """Tests if an error inside a section is raised without reading the counter again"""

        meter = energy.OsCounterMeter(self.counter)
        with self.assertRaises(KeyError):
            with meter.measure():
                os.remove(self.counter)
                raise KeyError("section")

        self.assertFalse(meter.active)
        self.write(1_000_000)
        self.assertEqual(section(meter).energy_uwh, 0.0)

    def test_missing_counter(self):
        with self.assertRaises(energy.MeterUnavailableError):
            energy.OsCounterMeter(os.path.join(self.directory.name, "missing"))

    def test_malformed_counter(self):
        self.write("not a number")
        with self.assertRaises(energy.MeterUnavailableError):
            energy.OsCounterMeter(self.counter)

    def test_counter_path_from_environment(self):
        with patch.dict(os.environ, {energy.COUNTER_ENV: self.counter}):
            self.assertEqual(str(energy.OsCounterMeter().path), self.counter)


class TestSelectMeter(unittest.TestCase):
    def test_auto_falls_back_to_proxy(self):
        """Tests if auto selection logs a warning and uses the proxy without a counter"""

        with self.assertLogs("greensel.energy", level="WARNING"):
            meter = energy.select_meter("auto", counter_path="/nonexistent/energy_uj", power_watts=5.0)

        self.assertIsInstance(meter, energy.ProxyMeter)
        self.assertEqual(meter.power_watts, 5.0)

    def test_explicit_counter_does_not_fall_back(self):
        with self.assertRaises(energy.MeterUnavailableError):
            energy.select_meter("oscounter", counter_path="/nonexistent/energy_uj")

    def test_auto_prefers_counter(self):
        with tempfile.TemporaryDirectory() as directory:
            counter = os.path.join(directory, "energy_uj")
            with open(counter, "w") as f:
                f.write("42\n")
            self.assertIsInstance(energy.select_meter("auto", counter_path=counter), energy.OsCounterMeter)

    def test_modeled_needs_costs(self):
        with self.assertRaises(ValueError):
            energy.select_meter("modeled")

    def test_unknown_meter(self):
        with self.assertRaises(ValueError):
            energy.select_meter("rapl")


if __name__ == "__main__":
    unittest.main()
