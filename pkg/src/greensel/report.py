import csv
import io
import json

from typing import Literal, Sequence

from pydantic import BaseModel, ConfigDict, Field, model_validator
from rich.console import Console
from rich.table import Table

from greensel.core import RunMetrics
from greensel.energy import EnergySample, EnergySource, to_carbon


REPORT_FIELDS = (
    "classifier",
    "fraction_of_g",
    "overhead_ms",
    "accuracy",
    "time_ms",
    "energy_uwh",
    "energy_source",
)
SWEEP_FIELDS = ("epsilon", "accuracy", "energy_uwh", "fraction_of_g", "energy_source")
DECIMALS = 2

ReportFormat = Literal["table", "csv", "json"]


class ReportRow(BaseModel):
    """One classifier's line in the comparison table"""

    model_config = ConfigDict(frozen=True)

    classifier: str
    fraction_of_g: float = Field(..., ge=0.0, le=1.0)
    overhead_ms: float = Field(..., ge=0.0)
    accuracy: float = Field(..., ge=0.0, le=1.0)
    time_ms: float = Field(..., ge=0.0)
    energy_uwh: float = Field(..., ge=0.0)
    energy_source: EnergySource
    baseline: bool = Field(False, exclude=True)

    @model_validator(mode="after")
    def check_baseline(self) -> "ReportRow":
        if self.baseline:
            if self.fraction_of_g not in (0.0, 1.0):
                raise ValueError(f"Baseline {self.classifier} must have fraction_of_g 0 or 1")
            if self.overhead_ms != 0.0:
                raise ValueError(f"Baseline {self.classifier} has no selection overhead")
        return self

    @classmethod
    def from_metrics(cls, classifier: str, metrics: RunMetrics, baseline: bool = False) -> "ReportRow":
        return cls(
            classifier=classifier,
            fraction_of_g=metrics.fraction_per_model[0],
            overhead_ms=0.0 if baseline else metrics.selection_overhead_ms,
            accuracy=metrics.accuracy,
            time_ms=metrics.total_time_ms,
            energy_uwh=metrics.total_energy_uwh,
            energy_source=EnergySource(metrics.energy_source),
            baseline=baseline,
        )

    def carbon_g(self, intensity: float) -> float:
        sample = EnergySample(energy_uwh=self.energy_uwh, duration_ms=self.time_ms, source=self.energy_source)
        return to_carbon(sample, intensity)

    def rounded(self) -> dict:
        """Field values as printed: numbers rounded to the report's fixed decimals"""

        values = self.model_dump(mode="json")
        return {
            key: round(value, DECIMALS) if isinstance(value, float) else value
            for key, value in values.items()
        }


class SweepRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    epsilon: float
    accuracy: float
    energy_uwh: float
    fraction_of_g: float
    energy_source: EnergySource


def _fixed(value: float) -> str:
    return f"{value:.{DECIMALS}f}"


def _csv(field_names: Sequence[str], rows: Sequence[BaseModel]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(field_names)
    for row in rows:
        values = row.model_dump(mode="json")
        writer.writerow(
            [_fixed(values[name]) if isinstance(values[name], float) else values[name] for name in field_names]
        )
    return buffer.getvalue()


def _render(table: Table) -> str:
    console = Console(file=io.StringIO(), width=120, color_system=None, force_terminal=False)
    console.print(table)
    return console.file.getvalue()


def emit_report(
    rows: Sequence[ReportRow],
    format: ReportFormat = "table",
    carbon_intensity: float | None = None,
) -> str:
    """Renders report rows as a table, csv or json

    Numbers are printed with two decimals. csv always has the seven report
    columns; table and json gain a ``carbon_g`` column when a carbon
    intensity (gCO2e/kWh) is given.
    """

    if not rows:
        raise ValueError("Cannot emit an empty report")

    if format == "csv":
        return _csv(REPORT_FIELDS, rows)

    if format == "json":
        documents = []
        for row in rows:
            document = row.rounded()
            if carbon_intensity is not None:
                document["carbon_g"] = row.carbon_g(carbon_intensity)
            documents.append(document)
        return json.dumps(documents, indent=2) + "\n"

    if format != "table":
        raise ValueError(f"Unknown report format: {format}")

    table = Table(title="Performance and energy consumption of classifiers")
    table.add_column("Classifier")
    table.add_column("Fraction of G", justify="right")
    table.add_column("Overhead (ms)", justify="right")
    table.add_column("Accuracy", justify="right")
    table.add_column("Time (ms)", justify="right")
    table.add_column("Energy (µWh)", justify="right")
    table.add_column("Energy source")
    if carbon_intensity is not None:
        table.add_column("Carbon (g CO2e)", justify="right")

    for row in rows:
        cells = [
            row.classifier,
            _fixed(row.fraction_of_g),
            _fixed(row.overhead_ms),
            _fixed(row.accuracy),
            _fixed(row.time_ms),
            _fixed(row.energy_uwh),
            row.energy_source.value,
        ]
        if carbon_intensity is not None:
            cells.append(f"{row.carbon_g(carbon_intensity):.3e}")
        table.add_row(*cells)

    table.caption = "Overhead is selection time only; energy overhead is not reported separately"
    return _render(table)


def rows_from_json(text: str) -> list[ReportRow]:
    return [ReportRow(**{key: value for key, value in row.items() if key in REPORT_FIELDS}) for row in json.loads(text)]


def emit_sweep(rows: Sequence[SweepRow]) -> str:
    """Plot-ready csv of an epsilon sweep"""

    if not rows:
        raise ValueError("Cannot emit an empty sweep")
    return _csv(SWEEP_FIELDS, rows)


def relative_to(rows: Sequence[ReportRow], baseline: str = "Neural Network") -> list[dict]:
    """Accuracy retention and time/energy reductions of each row against a baseline row

    Percentages are relative to the baseline value, e.g. an energy reduction
    of 21.27 means the row used 21.27% less energy.
    """

    reference = next((row for row in rows if row.classifier == baseline), None)
    if reference is None:
        raise ValueError(f"No row named {baseline!r} in the report")

    def percent_saved(value: float, base: float) -> float:
        return 100.0 * (base - value) / base if base else 0.0

    return [
        {
            "classifier": row.classifier,
            "accuracy_retention": 100.0 * row.accuracy / reference.accuracy if reference.accuracy else 0.0,
            "accuracy_drop": reference.accuracy - row.accuracy,
            "time_reduction": percent_saved(row.time_ms, reference.time_ms),
            "energy_reduction": percent_saved(row.energy_uwh, reference.energy_uwh),
        }
        for row in rows
    ]
