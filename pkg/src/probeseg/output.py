"""
Output formatters for the command line (human-readable tables or JSON)
"""

import json
import math
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from typing import Any

import numpy as np
from rich.console import Console
from rich.table import Table

from probeseg.actsel import ActionProposal
from probeseg.evaluation import METRIC_NAMES, AggregateReport, MetricsReport, format_percent
from probeseg.membank import BankStats
from probeseg.metrics import bbox_of
from probeseg.microworld import MASS_CLASS_NAMES


def json_safe(data: Any) -> Any:
    """Plain Python values for JSON: numpy scalars and arrays unwrapped, NaN/inf as None."""
    if isinstance(data, np.ndarray):
        data = data.tolist()
    elif isinstance(data, np.generic):
        data = data.item()
    if isinstance(data, float) and not math.isfinite(data):
        return None
    if isinstance(data, dict):
        return {k: json_safe(v) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [json_safe(v) for v in data]
    return data


class OutputFormatter:
    """Format output in different modes"""

    def __init__(self, mode: str = "human"):
        """
        Initialize formatter

        Args:
            mode: Output mode (human, json)
        """
        self.mode = mode.lower()
        self.console = Console()
        self.silent = False

    def set_silent(self, silent: bool) -> None:
        self.silent = silent

    @contextmanager
    def capture_silent(self, enabled: bool = True) -> Iterator[None]:
        """
        Temporarily toggle silent mode and restore the previous state afterwards.
        """
        previous = self.silent
        try:
            self.silent = enabled
            yield
        finally:
            self.silent = previous

    def output_report(self, report: MetricsReport, title: str = "Evaluation") -> None:
        if self.silent:
            return
        if self.mode == "json":
            self._output_json(report.to_dict())
            return
        table = Table(title=title)
        for name in METRIC_NAMES:
            table.add_column(name, style="cyan", justify="right")
        table.add_row(*[format_percent(report.metric(name)) for name in METRIC_NAMES])
        self.console.print(table)
        self.console.print(
            f"{report.locations} locations, {report.detections} detections, "
            f"{report.instances} reachable instances"
        )
        self._output_confusion(report)

    def _output_confusion(self, report: MetricsReport) -> None:
        table = Table(title="Mass confusion (rows: ground truth)")
        table.add_column("", style="bold")
        for name in MASS_CLASS_NAMES:
            table.add_column(name, justify="right")
        table.add_column("n", style="yellow", justify="right")
        for name, row, counts in zip(MASS_CLASS_NAMES, report.confusion, report.counts):
            table.add_row(name, *[f"{v:.2f}" for v in row], str(sum(counts)))
        self.console.print(table)

    def output_aggregate(self, aggregate: AggregateReport) -> None:
        if self.silent:
            return
        if self.mode == "json":
            self._output_json(aggregate.to_dict())
            return
        table = Table(title=f"Evaluation over {aggregate.runs} checkpoints")
        table.add_column("Metric", style="cyan")
        table.add_column("Mean", style="green", justify="right")
        table.add_column("Std", style="magenta", justify="right")
        for name in METRIC_NAMES:
            mean, std = aggregate.mean[name], aggregate.std[name]
            table.add_row(name, format_percent(mean), format_percent(std))
        self.console.print(table)

    def output_bank_stats(self, stats: BankStats, source: str = "") -> None:
        if self.silent:
            return
        if self.mode == "json":
            self._output_json({"source": source, **stats.to_dict()})
            return
        self.console.print(f"\n[bold]Memory bank:[/bold] {source}")
        self.console.print(
            f"{stats.size}/{stats.capacity} entries, {stats.inserted} inserted, "
            f"{stats.fresh} fresh, mean priority {stats.mean_priority:.4f}"
        )
        table = Table(title="Priority histogram (scored entries)")
        table.add_column("Range", style="cyan")
        table.add_column("Entries", style="yellow", justify="right")
        for i, count in enumerate(stats.histogram):
            lo, hi = stats.bin_edges[i], stats.bin_edges[i + 1]
            table.add_row(f"{lo:.3f} - {hi:.3f}", str(count))
        self.console.print(table)
        if stats.age_quartiles:
            quartiles = ", ".join(f"{q:.0f}" for q in stats.age_quartiles)
            self.console.print(f"Age quartiles (insertions ago): {quartiles}")

    def output_proposals(self, proposals: Sequence[ActionProposal]) -> None:
        rows = [proposal_to_dict(p) for p in proposals]
        if self.silent:
            return
        if self.mode == "json":
            self._output_json(rows)
            return
        if not rows:
            self.console.print("[yellow]No proposals above threshold[/yellow]")
            return
        table = Table(title="Object proposals")
        table.add_column("#", style="bold")
        table.add_column("Point", style="cyan")
        table.add_column("Confidence", style="green", justify="right")
        table.add_column("Mass", style="magenta")
        table.add_column("Pixels", style="yellow", justify="right")
        table.add_column("BBox", style="blue")
        for i, row in enumerate(rows):
            table.add_row(
                str(i),
                f"{row['point'][0]},{row['point'][1]}",
                f"{row['confidence']:.3f}",
                row["mass"],
                str(row["pixels"]),
                ",".join(str(v) for v in row["bbox"]) if row["bbox"] else "-",
            )
        self.console.print(table)

    def output_error(self, message: str, code: str = "") -> None:
        """Output error message"""
        if self.silent:
            return
        if self.mode == "json":
            self._output_json({"error": {"code": code, "message": message}})
        else:
            prefix = f"{code}: " if code else ""
            self.console.print(f"[bold red]Error:[/bold red] {prefix}{message}")

    def output_success(self, message: str) -> None:
        """Output success message"""
        if self.silent:
            return
        if self.mode == "json":
            self._output_json({"status": "success", "message": message})
        else:
            self.console.print(f"[bold green]✓[/bold green] {message}")

    def output_info(self, message: str) -> None:
        """Output info message"""
        if self.silent:
            return
        if self.mode == "json":
            self._output_json({"status": "info", "message": message})
        else:
            self.console.print(message)

    def output_data(self, data: Any) -> None:
        """Output a structured result (JSON mode) or its pretty form"""
        if self.silent:
            return
        if self.mode == "json":
            self._output_json(data)
        else:
            self.console.print(data)

    def _output_json(self, data: Any) -> None:
        print(json.dumps(json_safe(data), indent=2))


def proposal_to_dict(p: ActionProposal) -> dict[str, Any]:
    box = bbox_of(p.mask)
    return {
        "point": [int(p.point[0]), int(p.point[1])],
        "input_point": [int(v) for v in p.input_point],
        "score": p.score,
        "confidence": p.confidence,
        "force_class": p.force_class,
        "mass": MASS_CLASS_NAMES[p.force_class],
        "pixels": int(p.mask.sum()),
        "bbox": list(box) if box else None,
        "degenerate": p.degenerate,
    }
