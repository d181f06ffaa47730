"""Error metrics and reporting over a batch of grade predictions.

Beyond RMSE and MAE the module reports tick accuracy: the share of
predictions whose letter, snapped onto the grading ladder, lands within
0, 1, or 2 ladder positions of the actual letter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .scale import LetterScale


@dataclass(frozen=True)
class PredictionRow:
    student_id: str
    course_id: str
    predicted: float
    actual: float
    cold_start: bool = False
    tag: str | None = None

    def __post_init__(self):
        if not math.isfinite(self.predicted):
            raise ValueError(f"non-finite prediction for ({self.student_id}, {self.course_id})")
        if not (0.0 < self.actual <= 4.0):
            raise ValueError(f"actual grade {self.actual} outside (0, 4]")


@dataclass(frozen=True)
class PredictionBatch:
    rows: tuple[PredictionRow, ...]

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def with_tag(self, tag: str) -> "PredictionBatch":
        return PredictionBatch(tuple(r for r in self.rows if r.tag == tag))

    def without_cold_start(self) -> "PredictionBatch":
        return PredictionBatch(tuple(r for r in self.rows if not r.cold_start))

    def tags(self) -> tuple[str, ...]:
        seen = []
        for r in self.rows:
            if r.tag is not None and r.tag not in seen:
                seen.append(r.tag)
        return tuple(sorted(seen))


def rmse(batch: PredictionBatch) -> float:
    if not batch.rows:
        raise ValueError("empty prediction batch")
    sq = sum((r.predicted - r.actual) ** 2 for r in batch.rows)
    return math.sqrt(sq / len(batch.rows))


def mae(batch: PredictionBatch) -> float:
    if not batch.rows:
        raise ValueError("empty prediction batch")
    return float(sum(abs(r.predicted - r.actual) for r in batch.rows) / len(batch.rows))


def tick_accuracy(batch: PredictionBatch, scale: LetterScale) -> tuple[float, float, float]:
    """Percent of rows whose snapped letter is within 0/1/2 ladder ticks.

    The actual grade must sit exactly on a ladder value; predictions are
    snapped to the nearest ladder value first. Returns percentages in
    [0, 100] with pct0 <= pct1 <= pct2.
    """
    if not batch.rows:
        raise ValueError("empty prediction batch")
    hits = [0, 0, 0]
    for r in batch.rows:
        actual_pos = scale.position(scale.points_to_letter(r.actual))
        if abs(scale.letter_to_points(scale.points_to_letter(r.actual)) - r.actual) > 1e-9:
            raise ValueError(f"actual grade {r.actual} is not a ladder value")
        pred_pos = scale.position(scale.points_to_letter(r.predicted))
        dist = abs(pred_pos - actual_pos)
        for w in range(3):
            if dist <= w:
                hits[w] += 1
    return tuple(100.0 * h / len(batch.rows) for h in hits)


@dataclass(frozen=True)
class MetricsReport:
    n_rows: int
    rmse: float
    mae: float
    pct0: float
    pct1: float
    pct2: float
    by_tag: dict | None = None  # tag -> MetricsReport for tagged subsets

    def to_dict(self) -> dict:
        doc = {
            "n_rows": self.n_rows,
            "rmse": self.rmse,
            "mae": self.mae,
            "pct0": self.pct0,
            "pct1": self.pct1,
            "pct2": self.pct2,
        }
        if self.by_tag is not None:
            doc["by_tag"] = {t: r.to_dict() for t, r in self.by_tag.items()}
        return doc


def report(batch: PredictionBatch, scale: LetterScale, group_by_tag: bool = False) -> MetricsReport:
    p0, p1, p2 = tick_accuracy(batch, scale)
    sub = None
    if group_by_tag:
        sub = {}
        for tag in batch.tags():
            sub[tag] = report(batch.with_tag(tag), scale, group_by_tag=False)
    return MetricsReport(len(batch), rmse(batch), mae(batch), p0, p1, p2, sub)


def report_to_json(rep: MetricsReport, seed: int | None = None, extra: dict | None = None) -> str:
    doc = {}
    if seed is not None:
        doc["seed"] = seed
    if extra:
        doc.update(extra)
    doc.update(rep.to_dict())
    return json.dumps(doc, indent=1)


def format_table(reports: dict[str, MetricsReport]) -> str:
    """Fixed-width text table, one row per named report."""
    header = ["method", "n", "rmse", "mae", "pct0", "pct1", "pct2"]
    rows = [
        [
            name,
            str(r.n_rows),
            f"{r.rmse:.4f}",
            f"{r.mae:.4f}",
            f"{r.pct0:.2f}",
            f"{r.pct1:.2f}",
            f"{r.pct2:.2f}",
        ]
        for name, r in reports.items()
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h)
              for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip()]
    for row in rows:
        lines.append("  ".join(row[i].ljust(widths[i]) for i in range(len(header))).rstrip())
    return "\n".join(lines) + "\n"


def batch_to_csv(batch: PredictionBatch, seed: int | None = None) -> str:
    lines = []
    if seed is not None:
        lines.append(f"# seed={seed}")
    lines.append("student_id,course_id,predicted,actual,cold_start,tag")
    for r in batch.rows:
        tag = r.tag if r.tag is not None else ""
        lines.append(
            f"{r.student_id},{r.course_id},{r.predicted!r},{r.actual!r},"
            f"{int(r.cold_start)},{tag}"
        )
    return "\n".join(lines) + "\n"


def batch_from_csv(text: str) -> PredictionBatch:
    rows = []
    header_seen = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise ValueError(f"expected 6 fields per prediction row, got {len(parts)}")
        rows.append(
            PredictionRow(
                student_id=parts[0],
                course_id=parts[1],
                predicted=float(parts[2]),
                actual=float(parts[3]),
                cold_start=bool(int(parts[4])),
                tag=parts[5] or None,
            )
        )
    return PredictionBatch(tuple(rows))
