"""Report emission: JSON documents, flat CSV tables, per-run files.

With timestamps suppressed, every writer here is a pure function of its
inputs, which is what makes rerun-and-diff a meaningful check: identical
config plus identical seeds must reproduce identical bytes.
"""

from __future__ import annotations

import csv
import datetime
import json
from pathlib import Path

from .training import RunReport


def ensure_dir(path: str | Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _stamp() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def write_json(path: Path, payload: dict, timestamp: bool) -> None:
    doc = dict(payload)
    if timestamp:
        doc["generated_at"] = _stamp()
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])


def report_payload(report: RunReport, timestamp: bool) -> dict:
    doc = report.to_dict()
    if not timestamp:
        # Wall time is a timestamp in disguise; it can never be identical
        # across reruns, so the determinism flag zeroes it.
        doc["wall_seconds"] = 0.0
    return doc


def write_run_reports(
    out_dir: Path, tagged: list[tuple[str, RunReport]], timestamp: bool
) -> None:
    """One JSON per run under out_dir/runs/, named by tag and seed."""
    runs_dir = ensure_dir(out_dir / "runs")
    for tag, report in tagged:
        path = runs_dir / f"{tag}_seed{report.seed}.json"
        write_json(path, report_payload(report, timestamp), timestamp)


def run_rows(tag: str, reports: list[RunReport]) -> list[list]:
    """Flat CSV rows (one per run) for a tagged report group."""
    rows = []
    for r in reports:
        adapter = r.config.get("adapter", {})
        activation = adapter.get("activation", {})
        rows.append(
            [
                tag,
                r.seed,
                adapter.get("kind"),
                activation.get("kind", "identity") if adapter.get("kind") == "loran" else "identity",
                adapter.get("rank"),
                adapter.get("alpha"),
                r.metric_name,
                r.final_metric,
                r.diverged,
                r.diverged_epoch,
            ]
        )
    return rows


RUN_CSV_HEADER = [
    "tag",
    "seed",
    "adapter_kind",
    "activation",
    "rank",
    "alpha",
    "metric_name",
    "final_metric",
    "diverged",
    "diverged_epoch",
]


def loss_rows(tag: str, reports: list[RunReport]) -> list[list]:
    rows = []
    for r in reports:
        for epoch, loss in enumerate(r.epoch_losses):
            rows.append([tag, r.seed, epoch, loss])
    return rows


LOSS_CSV_HEADER = ["tag", "seed", "epoch", "loss"]
