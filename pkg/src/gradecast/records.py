"""Term-stamped student-course grade records: parsing, validation, splits.

The on-disk format is UTF-8 CSV with header ``student_id,course_id,term,grade``
and an optional trailing ``tag`` column. ``term`` is a non-negative integer
(0 = earliest). ``grade`` is a ladder letter or a decimal in (0, 4], which is
snapped to the nearest letter. Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field, replace

from .errors import ParseError
from .scale import LetterScale

CSV_COLUMNS = ("student_id", "course_id", "term", "grade")


@dataclass(frozen=True)
class GradeRecord:
    """One observed grade: student s took course c in term t."""

    student_id: str
    course_id: str
    term: int
    letter: str
    points: float
    tag: str | None = None


@dataclass(frozen=True)
class RecordSet:
    """A validated corpus of grade records with dense student/course indices.

    Index maps assign 0..n-1 / 0..m-1 by sorted identifier, so the mapping is
    a function of the set of ids alone (stable under record reordering).
    Instances are immutable; build them with :meth:`from_records`.
    """

    records: tuple[GradeRecord, ...]
    student_index: dict[str, int]
    course_index: dict[str, int]
    scale: LetterScale

    @classmethod
    def from_records(cls, records, scale: LetterScale) -> "RecordSet":
        records = tuple(records)
        students = sorted({r.student_id for r in records})
        courses = sorted({r.course_id for r in records})
        rs = cls(
            records=records,
            student_index={s: i for i, s in enumerate(students)},
            course_index={c: j for j, c in enumerate(courses)},
            scale=scale,
        )
        rs.validate()
        return rs

    def validate(self):
        seen = set()
        for r in self.records:
            key = (r.student_id, r.course_id, r.term)
            if key in seen:
                raise ValueError(f"duplicate (student, course, term) triple {key}")
            seen.add(key)
            if r.term < 0:
                raise ValueError(f"negative term index in {key}")
            if r.student_id not in self.student_index or r.course_id not in self.course_index:
                raise ValueError(f"record {key} missing from index maps")
            expected = self.scale.letter_to_points(r.letter)
            if r.points != expected:
                raise ValueError(
                    f"record {key}: points {r.points} do not match ladder value "
                    f"{expected} of {r.letter!r}"
                )
        for index in (self.student_index, self.course_index):
            if sorted(index.values()) != list(range(len(index))):
                raise ValueError("index map values must be dense 0..count-1")

    @property
    def n_students(self) -> int:
        return len(self.student_index)

    @property
    def n_courses(self) -> int:
        return len(self.course_index)

    @property
    def n_terms(self) -> int:
        return max((r.term for r in self.records), default=0) + 1

    @property
    def terms(self) -> tuple[int, ...]:
        """Distinct term indices that actually carry records, ascending."""
        return tuple(sorted({r.term for r in self.records}))

    def records_at(self, term: int) -> tuple[GradeRecord, ...]:
        return tuple(r for r in self.records if r.term == term)

    def grade_mean(self) -> float:
        if not self.records:
            raise ValueError("empty record set has no grade mean")
        return sum(r.points for r in self.records) / len(self.records)


def parse_records(stream, scale: LetterScale) -> RecordSet:
    """Parse the CSV format into a validated RecordSet.

    ``stream`` may be a path, text, bytes, or an open (binary or text) file.
    """
    text = _as_text(stream)
    records = []
    seen = set()
    header_done = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            cells = next(csv.reader([line]))
        except csv.Error as exc:
            raise ParseError(f"unparseable CSV: {exc}", line=lineno) from exc
        cells = [c.strip() for c in cells]
        if not header_done:
            if tuple(c.lower() for c in cells[:4]) != CSV_COLUMNS:
                raise ParseError(
                    f"expected header {','.join(CSV_COLUMNS)}[,tag], got {line!r}", line=lineno
                )
            header_done = True
            continue
        if len(cells) not in (4, 5):
            raise ParseError(f"expected 4 or 5 columns, got {len(cells)}", line=lineno)
        student_id, course_id, term_text, grade_text = cells[:4]
        tag = cells[4] if len(cells) == 5 and cells[4] else None
        if not student_id or not course_id:
            raise ParseError("empty student or course id", line=lineno)
        try:
            term = int(term_text)
        except ValueError:
            raise ParseError(f"term must be an integer, got {term_text!r}", line=lineno) from None
        if term < 0:
            raise ParseError(f"term must be non-negative, got {term}", line=lineno)
        letter = _grade_to_letter(grade_text, scale, lineno)
        key = (student_id, course_id, term)
        if key in seen:
            raise ParseError(f"duplicate (student, course, term) triple {key}", line=lineno)
        seen.add(key)
        records.append(
            GradeRecord(student_id, course_id, term, letter, scale.letter_to_points(letter), tag)
        )
    if not header_done:
        raise ParseError("empty input: no header found")
    if not records:
        raise ParseError("empty input: no data rows")
    return RecordSet.from_records(records, scale)


def _grade_to_letter(grade_text: str, scale: LetterScale, lineno: int) -> str:
    if grade_text in scale.labels:
        return grade_text
    try:
        value = float(grade_text)
    except ValueError:
        raise ParseError(f"unknown letter grade {grade_text!r}", line=lineno) from None
    if not math.isfinite(value) or not (0.0 < value <= 4.0):
        raise ParseError(f"decimal grade must be in (0, 4], got {grade_text}", line=lineno)
    return scale.points_to_letter(value)


def _as_text(stream) -> str:
    if isinstance(stream, (str, os.PathLike)):
        if isinstance(stream, str) and ("\n" in stream or "," in stream or not stream.strip()):
            return stream  # literal CSV content; an empty string is never a path
        with open(stream, "r", encoding="utf-8") as fh:
            return fh.read()
    if isinstance(stream, bytes):
        return stream.decode("utf-8")
    data = stream.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def serialize_records(rs: RecordSet) -> str:
    """Inverse of :func:`parse_records`: grades are written as letters."""
    has_tags = any(r.tag is not None for r in rs.records)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS + (("tag",) if has_tags else ()))
    for r in rs.records:
        row = [r.student_id, r.course_id, str(r.term), r.letter]
        if has_tags:
            row.append(r.tag or "")
        writer.writerow(row)
    return out.getvalue()


def split_by_term(rs: RecordSet, test_term: int) -> tuple[RecordSet, RecordSet]:
    """Train on everything before ``test_term``, test on ``test_term`` itself.

    Both halves keep the parent's index maps, so students or courses that
    first appear in the test term keep their indices (cold-start dyads).
    Records after ``test_term`` are dropped.
    """
    terms = rs.terms
    if test_term not in terms:
        raise ValueError(f"test term {test_term} has no records")
    if test_term == terms[0]:
        raise ValueError(f"test term {test_term} is the earliest term: no training history")
    train = replace(rs, records=tuple(r for r in rs.records if r.term < test_term))
    test = replace(rs, records=tuple(r for r in rs.records if r.term == test_term))
    return train, test
