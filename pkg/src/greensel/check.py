import logging
import os

from pathlib import Path
from typing import Sequence

import yaml

from greensel.report import ReportRow


logger = logging.getLogger(__name__)

REFERENCE_FILE = os.path.join(Path(__file__).parent, "reference", "table1.yaml")
NETWORK_ROW = "neural network"
TREE_ROW = "decision tree"


def lower_keys(dictionary: dict) -> dict:
    """Converts all keys in a dictionary to lowercase"""
    return {k.lower(): v for k, v in dictionary.items()}


def percent_reduction(value: float, baseline: float) -> float:
    return 100.0 * (baseline - value) / baseline if baseline > 0 else 0.0


class AcceptanceCheck:
    """Checks a digits report against the published trends

    Every check appends a human readable message per failure; an empty
    message list means the report reproduces the published behaviour.
    """

    def __init__(self, rows: Sequence[ReportRow], reference_file: Path | str = REFERENCE_FILE):
        """Initializes the AcceptanceCheck object

        Args:
            rows: The report rows of a run, keyed by classifier name
            reference_file: Yaml file holding published values and tolerances
        """

        self.rows = {row.classifier.lower(): row for row in rows}
        with open(reference_file, "r") as f:
            self.reference = lower_keys(yaml.safe_load(f))
        self.messages: list[str] = []

    def _row(self, name: str) -> ReportRow | None:
        row = self.rows.get(name)
        if row is None:
            self.messages.append(f"Report has no {name!r} row")
        return row

    def check_accuracy(self) -> list[str]:
        """Checks each row's accuracy against its target band or minimum"""

        for name, spec in self.reference.items():
            rules = spec.get("accuracy")
            if rules is None:
                continue
            row = self._row(name)
            if row is None:
                continue

            if "target" in rules and abs(row.accuracy - rules["target"]) > rules["tolerance"]:
                self.messages.append(
                    f"{row.classifier} accuracy {row.accuracy:.3f} outside "
                    f"{rules['target']} ± {rules['tolerance']}"
                )
            if "minimum" in rules and row.accuracy < rules["minimum"]:
                self.messages.append(
                    f"{row.classifier} accuracy {row.accuracy:.3f} below {rules['minimum']}"
                )
            if rules.get("between_baselines"):
                tree, net = self.rows.get(TREE_ROW), self.rows.get(NETWORK_ROW)
                if tree and net and not tree.accuracy < row.accuracy < net.accuracy:
                    self.messages.append(
                        f"{row.classifier} accuracy {row.accuracy:.3f} not strictly between "
                        f"tree {tree.accuracy:.3f} and network {net.accuracy:.3f}"
                    )

        return self.messages

    def check_fraction_of_g(self) -> list[str]:
        for name, spec in self.reference.items():
            rules = spec.get("fraction_of_g")
            if rules is None:
                continue
            row = self._row(name)
            if row is not None and abs(row.fraction_of_g - rules["target"]) > rules["tolerance"]:
                self.messages.append(
                    f"{row.classifier} fraction of G {row.fraction_of_g:.3f} outside "
                    f"{rules['target']} ± {rules['tolerance']}"
                )

        return self.messages

    def check_energy_savings(self) -> list[str]:
        """Checks the energy reduction of selection rows against the network row"""

        net = self._row(NETWORK_ROW)
        if net is None:
            return self.messages

        for name, spec in self.reference.items():
            rules = spec.get("energy_reduction")
            if rules is None:
                continue
            row = self._row(name)
            if row is None:
                continue

            if row.energy_source != net.energy_source:
                self.messages.append(
                    f"{row.classifier} energy ({row.energy_source.value}) is not comparable "
                    f"with the network energy ({net.energy_source.value})"
                )
                continue

            reduction = percent_reduction(row.energy_uwh, net.energy_uwh)
            if reduction < rules["minimum"]:
                self.messages.append(
                    f"{row.classifier} saves {reduction:.2f}% energy against the network, "
                    f"less than {rules['minimum']}%"
                )

        return self.messages

    def check_overhead(self) -> list[str]:
        """Checks the selection overhead share of each selection row's total time"""

        for name, spec in self.reference.items():
            rules = spec.get("overhead_share")
            if rules is None:
                continue
            row = self._row(name)
            if row is None:
                continue

            if row.time_ms == 0.0:
                logger.info("%s was timed with a frozen clock; overhead not checked", row.classifier)
                continue

            share = row.overhead_ms / row.time_ms
            if share >= rules["maximum"]:
                self.messages.append(
                    f"{row.classifier} overhead {row.overhead_ms:.3f} ms is {100 * share:.1f}% "
                    f"of {row.time_ms:.3f} ms, not below {100 * rules['maximum']:.0f}%"
                )

        return self.messages

    def check_all(self) -> list[str]:
        self.check_accuracy()
        self.check_fraction_of_g()
        self.check_energy_savings()
        self.check_overhead()
        return self.messages
