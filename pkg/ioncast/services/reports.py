"""
Report writers: one CSV per table plus an RMSE-vs-lead SVG chart.

Files written by ``write_report``:

    rmse_by_lead.csv   lead_steps, lead_hours, rmse_model, rmse_persistence
    rmse_by_band.csv   lead_steps, lead_hours, band, rmse_model, rmse_persistence
    events.csv         event, start, end, g_level, starts, rmse
    g_levels.csv       g_level, events, starts, rmse
    hexbin.csv         truth, prediction, lead_steps
    rmse_by_lead.svg   model and persistence curves (optional)
"""
from __future__ import annotations

import csv
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
from matplotlib.figure import Figure

from ioncast.logging_config import get_logger
from ioncast.services.evaluation import MetricReport
from ioncast.timeutil import format_time

logger = get_logger(__name__)


def _cell(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return "" if not np.isfinite(value) else f"{float(value):.6g}"
    return value


def write_table(path: Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    """CSV with a header row; missing or non-finite cells are left empty."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(column, "")) for column in columns])
    return path


def lead_rows(report: MetricReport) -> list[dict[str, Any]]:
    rows = []
    for i, lead in enumerate(report.leads):
        rows.append(
            {
                "lead_steps": int(lead),
                "lead_hours": float(report.lead_hours[i]),
                "rmse_model": float(report.rmse_by_lead[i]),
                "rmse_persistence": float(report.persistence_by_lead[i])
                if report.persistence_by_lead is not None
                else float("nan"),
            }
        )
    return rows


def band_rows(report: MetricReport) -> list[dict[str, Any]]:
    rows = []
    for band, values in report.rmse_by_band.items():
        reference = report.persistence_by_band.get(band) if report.persistence_by_band else None
        for i, lead in enumerate(report.leads):
            rows.append(
                {
                    "lead_steps": int(lead),
                    "lead_hours": float(report.lead_hours[i]),
                    "band": band,
                    "rmse_model": float(values[i]),
                    "rmse_persistence": float(reference[i]) if reference is not None else float("nan"),
                }
            )
    return rows


def event_rows(report: MetricReport) -> list[dict[str, Any]]:
    return [
        {
            "event": score.index,
            "start": format_time(score.event.start),
            "end": format_time(score.event.end),
            "g_level": f"G{score.event.g_level}",
            "starts": score.starts,
            "rmse": score.rmse,
        }
        for score in report.events
    ]


def level_rows(report: MetricReport) -> list[dict[str, Any]]:
    return [
        {"g_level": f"G{level}", "events": int(v["events"]), "starts": int(v["starts"]), "rmse": v["rmse"]}
        for level, v in report.by_level().items()
    ]


def write_rmse_svg(report: MetricReport, path: Path, title: str = "RMSE by lead time") -> Path:
    """Line chart of model (and persistence) RMSE against lead hours."""
    fig = Figure(figsize=(6.0, 4.0))
    ax = fig.add_subplot(1, 1, 1)
    hours = report.lead_hours
    ax.plot(hours, report.rmse_by_lead, label="model", color="tab:blue")
    if report.persistence_by_lead is not None:
        ax.plot(hours, report.persistence_by_lead, label="persistence", color="tab:gray", linestyle="--")
    ax.set_xlabel("Lead time (hours)")
    ax.set_ylabel("RMSE (TECU)")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(loc="upper left")
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg")
    return path


def write_report(report: MetricReport, out_dir: Path, svg: bool = True) -> dict[str, Path]:
    """Write every table of an evaluation; returns name -> path."""
    paths = {
        "rmse_by_lead": write_table(
            out_dir / "rmse_by_lead.csv",
            ["lead_steps", "lead_hours", "rmse_model", "rmse_persistence"],
            lead_rows(report),
        ),
        "rmse_by_band": write_table(
            out_dir / "rmse_by_band.csv",
            ["lead_steps", "lead_hours", "band", "rmse_model", "rmse_persistence"],
            band_rows(report),
        ),
        "events": write_table(
            out_dir / "events.csv", ["event", "start", "end", "g_level", "starts", "rmse"], event_rows(report)
        ),
        "g_levels": write_table(out_dir / "g_levels.csv", ["g_level", "events", "starts", "rmse"], level_rows(report)),
        "hexbin": write_table(
            out_dir / "hexbin.csv",
            ["truth", "prediction", "lead_steps"],
            ({"truth": float(t), "prediction": float(p), "lead_steps": int(k)} for t, p, k in report.hexbin),
        ),
    }
    if svg:
        paths["svg"] = write_rmse_svg(report, out_dir / "rmse_by_lead.svg")
    logger.info("report_written", directory=str(out_dir), files=len(paths))
    return paths
