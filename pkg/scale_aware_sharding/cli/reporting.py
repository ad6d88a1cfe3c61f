"""
Report writers.

Reports hold one record per (scenario, strategy). The columns are listed in
RECORD_FIELDS and documented in the README. Records never contain wall clock
timings, so a report is a pure function of its scenarios.

For Copyright information, please see LICENCE.
"""

import csv
import json
from typing import IO, Iterable, List

from scale_aware_sharding.simulation import ComparisonReport, IterationTrace
from scale_aware_sharding.utilities.units import format_bytes

RATIO_FIELDS = (
    "speedup",
    "gather_speedup",
    "sync_speedup",
    "traffic_reduction",
    "memory_ratio",
)
"Baseline over candidate ratios; the baseline is the first strategy."

RECORD_FIELDS = (
    "scenario",
    "name",
    "strategy",
    "n",
    "p",
    "s",
    "total_seconds",
    "fwd_gather_seconds",
    "fwd_compute_seconds",
    "bwd_gather_seconds",
    "bwd_compute_seconds",
    "micro_sync_seconds",
    "boundary_sync_seconds",
    "intra_node_bytes",
    "inter_node_bytes",
    "inter_node_gather_bytes",
    "gather_bytes",
    "sync_bytes",
    "peak_model_state_bytes_per_device",
    "batched_events",
    "sequences_per_second",
    "flops_per_device",
) + RATIO_FIELDS


def scenario_records(scenario: str, report: ComparisonReport) -> List[dict]:
    "Flatten a comparison into report records."
    values = report.as_dict()
    records = []
    for name, trace in report.traces.items():
        record = {"scenario": scenario, **trace.as_record(), "name": name}
        for ratio in RATIO_FIELDS:
            record[ratio] = values.get(f"{name}.{ratio}", 1.0)

        records.append({key: record[key] for key in RECORD_FIELDS})

    return records


def trace_records(scenario: str, traces: Iterable[IterationTrace]) -> List[dict]:
    "Records of traces simulated on their own, without a baseline."
    records = []
    for trace in traces:
        record = {"scenario": scenario, **trace.as_record()}
        record.update(dict.fromkeys(RATIO_FIELDS, 1.0))
        records.append({key: record[key] for key in RECORD_FIELDS})

    return records


def format_table(records: List[dict]) -> str:
    "A human readable table of the main columns."
    header = (
        "scenario",
        "strategy",
        "total s",
        "gather s",
        "sync s",
        "inter-node",
        "memory/device",
        "seq/s",
        "speedup",
    )
    rows = [header]
    for r in records:
        rows.append(
            (
                r["scenario"],
                r["name"],
                f"{r['total_seconds']:.6g}",
                f"{r['fwd_gather_seconds'] + r['bwd_gather_seconds']:.6g}",
                f"{r['micro_sync_seconds'] + r['boundary_sync_seconds']:.6g}",
                format_bytes(r["inter_node_bytes"]),
                format_bytes(r["peak_model_state_bytes_per_device"]),
                f"{r['sequences_per_second']:.6g}",
                f"{r['speedup']:.4g}",
            )
        )

    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for row in rows:
        cells = [row[0].ljust(widths[0]), row[1].ljust(widths[1])]
        cells.extend(cell.rjust(width) for cell, width in zip(row[2:], widths[2:]))
        lines.append("  ".join(cells).rstrip())

    return "\n".join(lines) + "\n"


def write_records(records: List[dict], output_format: str, stream: IO[str]):
    """
    Write records as a table, csv or jsonl.

    Floats are written with their shortest round-tripping representation, so
    re-parsing csv or jsonl output gives back the exact values.
    """
    if output_format == "table":
        stream.write(format_table(records))
    elif output_format == "csv":
        writer = csv.DictWriter(stream, fieldnames=RECORD_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(records)
    elif output_format == "jsonl":
        for record in records:
            stream.write(json.dumps(record) + "\n")
    else:
        raise ValueError(f"unknown report format {output_format!r}")


def read_jsonl(stream: IO[str]) -> List[dict]:
    return [json.loads(line) for line in stream if line.strip()]
