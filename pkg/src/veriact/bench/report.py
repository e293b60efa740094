"""Run reports, sweep tables, and episode archives.

All files are canonical-JSON based so repeated runs with simulated actors
are byte-identical: report documents are dumped with sorted keys and
compact separators, archives are JSON-lines. Measured wall-clock is kept
out of serialized documents unless it was explicitly recorded (remote
actors), precisely to preserve byte determinism for simulated runs.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Optional, Union

REPORT_SCHEMA = "veriact-report-v1"
SWEEP_SCHEMA = "veriact-sweep-v1"
ARCHIVE_SCHEMA = "veriact-episode-v1"


def _dumps(document: dict) -> str:
    return json.dumps(document, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


@dataclass(frozen=True, slots=True)
class CategoryRow:
    name: str
    episodes_per_seed: int
    mean: float
    std: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.mean <= 1.0:
            raise ValueError("success rate must be in [0, 1]")
        if self.std < 0:
            raise ValueError("std must be nonnegative")


@dataclass(frozen=True, slots=True)
class TimestepRow:
    timestep: int
    decisions: int
    mean_chosen_score: float
    llm_calls: int


@dataclass(frozen=True, slots=True)
class RunReport:
    fingerprint: str
    method: str
    n: int
    m: int
    seeds: tuple[int, ...]
    categories: tuple[CategoryRow, ...]
    average: CategoryRow
    timesteps: tuple[TimestepRow, ...]
    statuses: tuple[tuple[str, int], ...]
    total_llm_calls: int
    simulated_wall_clock: float
    measured_wall_clock: Optional[float] = None

    def to_document(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "fingerprint": self.fingerprint,
            "method": self.method,
            "n": self.n,
            "m": self.m,
            "seeds": list(self.seeds),
            "categories": [
                {
                    "name": r.name,
                    "episodes_per_seed": r.episodes_per_seed,
                    "mean": r.mean,
                    "std": r.std,
                }
                for r in self.categories
            ],
            "average": {
                "name": self.average.name,
                "episodes_per_seed": self.average.episodes_per_seed,
                "mean": self.average.mean,
                "std": self.average.std,
            },
            "timesteps": [
                {
                    "timestep": t.timestep,
                    "decisions": t.decisions,
                    "mean_chosen_score": t.mean_chosen_score,
                    "llm_calls": t.llm_calls,
                }
                for t in self.timesteps
            ],
            "statuses": {name: count for name, count in self.statuses},
            "total_llm_calls": self.total_llm_calls,
            "simulated_wall_clock": self.simulated_wall_clock,
            "measured_wall_clock": self.measured_wall_clock,
        }

    @classmethod
    def from_document(cls, doc: dict) -> "RunReport":
        if doc.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"not a run report (schema={doc.get('schema')!r})")

        def row(r: dict) -> CategoryRow:
            return CategoryRow(
                name=r["name"],
                episodes_per_seed=int(r["episodes_per_seed"]),
                mean=float(r["mean"]),
                std=float(r["std"]),
            )

        return cls(
            fingerprint=doc["fingerprint"],
            method=doc["method"],
            n=int(doc["n"]),
            m=int(doc["m"]),
            seeds=tuple(int(s) for s in doc["seeds"]),
            categories=tuple(row(r) for r in doc["categories"]),
            average=row(doc["average"]),
            timesteps=tuple(
                TimestepRow(
                    timestep=int(t["timestep"]),
                    decisions=int(t["decisions"]),
                    mean_chosen_score=float(t["mean_chosen_score"]),
                    llm_calls=int(t["llm_calls"]),
                )
                for t in doc["timesteps"]
            ),
            statuses=tuple(sorted(doc["statuses"].items())),
            total_llm_calls=int(doc["total_llm_calls"]),
            simulated_wall_clock=float(doc["simulated_wall_clock"]),
            measured_wall_clock=(
                None
                if doc.get("measured_wall_clock") is None
                else float(doc["measured_wall_clock"])
            ),
        )


@dataclass(frozen=True, slots=True)
class SweepRow:
    n: int
    m: int
    calls_per_decision: int
    vegas_mean: float
    vegas_std: float
    self_consistency_mean: float
    self_consistency_std: float


@dataclass(frozen=True, slots=True)
class SweepReport:
    fingerprint: str
    seeds: tuple[int, ...]
    rows: tuple[SweepRow, ...]

    def to_document(self) -> dict:
        return {
            "schema": SWEEP_SCHEMA,
            "fingerprint": self.fingerprint,
            "seeds": list(self.seeds),
            "rows": [
                {
                    "n": r.n,
                    "m": r.m,
                    "calls_per_decision": r.calls_per_decision,
                    "vegas_mean": r.vegas_mean,
                    "vegas_std": r.vegas_std,
                    "self_consistency_mean": r.self_consistency_mean,
                    "self_consistency_std": r.self_consistency_std,
                }
                for r in self.rows
            ],
        }

    @classmethod
    def from_document(cls, doc: dict) -> "SweepReport":
        if doc.get("schema") != SWEEP_SCHEMA:
            raise ValueError(f"not a sweep report (schema={doc.get('schema')!r})")
        return cls(
            fingerprint=doc["fingerprint"],
            seeds=tuple(int(s) for s in doc["seeds"]),
            rows=tuple(
                SweepRow(
                    n=int(r["n"]),
                    m=int(r["m"]),
                    calls_per_decision=int(r["calls_per_decision"]),
                    vegas_mean=float(r["vegas_mean"]),
                    vegas_std=float(r["vegas_std"]),
                    self_consistency_mean=float(r["self_consistency_mean"]),
                    self_consistency_std=float(r["self_consistency_std"]),
                )
                for r in doc["rows"]
            ),
        )


Report = Union[RunReport, SweepReport]


def save_report(report: Report, path: Union[str, Path]) -> None:
    Path(path).write_text(_dumps(report.to_document()) + "\n")


def load_report(path: Union[str, Path]) -> Report:
    doc = json.loads(Path(path).read_text())
    schema = doc.get("schema")
    if schema == REPORT_SCHEMA:
        return RunReport.from_document(doc)
    if schema == SWEEP_SCHEMA:
        return SweepReport.from_document(doc)
    raise ValueError(f"unknown report schema {schema!r}")


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def render_report_csv(report: Report) -> str:
    """Flat CSV table: the success table for a run, the curve for a sweep."""
    out = io.StringIO()
    if isinstance(report, RunReport):
        out.write("name,episodes_per_seed,mean,std\n")
        for row in report.categories + (report.average,):
            out.write(
                f"{row.name},{row.episodes_per_seed},{_fmt(row.mean)},{_fmt(row.std)}\n"
            )
    else:
        out.write(
            "n,m,calls_per_decision,vegas_mean,vegas_std,"
            "self_consistency_mean,self_consistency_std\n"
        )
        for row in report.rows:
            out.write(
                f"{row.n},{row.m},{row.calls_per_decision},"
                f"{_fmt(row.vegas_mean)},{_fmt(row.vegas_std)},"
                f"{_fmt(row.self_consistency_mean)},{_fmt(row.self_consistency_std)}\n"
            )
    return out.getvalue()


def render_report(report: Report, fmt: str) -> str:
    if fmt == "json":
        return _dumps(report.to_document()) + "\n"
    if fmt == "csv":
        return render_report_csv(report)
    raise ValueError(f"unknown format {fmt!r}")


# -- Episode archives ---------------------------------------------------------------


def write_archive(records: Iterable[dict], stream: IO[str]) -> int:
    count = 0
    for record in records:
        stream.write(_dumps({"schema": ARCHIVE_SCHEMA, **record}) + "\n")
        count += 1
    return count


def read_archive(stream: IO[str]) -> list[dict]:
    out = []
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        record = json.loads(line)
        if record.get("schema") != ARCHIVE_SCHEMA:
            raise ValueError(f"line {lineno}: unknown archive schema")
        out.append(record)
    return out
