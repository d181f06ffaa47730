"""Letter-grade ladder and conversions between letters and grade points."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

# Standard US 4.0 scale with A+ folded into A. The bottom rung carries a
# small positive value so a failed course stays distinguishable from a
# course that was never taken (absent entry).
DEFAULT_FAILING_EPSILON = 0.1
_DEFAULT_PASSING = (
    ("A", 4.0),
    ("A-", 3.67),
    ("B+", 3.33),
    ("B", 3.0),
    ("B-", 2.67),
    ("C+", 2.33),
    ("C", 2.0),
    ("C-", 1.67),
    ("D", 1.0),
)


@dataclass(frozen=True)
class LetterScale:
    """Ordered ladder of (letter, grade points) pairs, best grade first.

    One step between adjacent rungs is a "tick". The last rung is the
    failing grade; its value is exposed as :attr:`failing_epsilon` and is
    also the lower clamp bound for predictions.
    """

    ladder: tuple[tuple[str, float], ...]

    def __post_init__(self):
        if len(self.ladder) < 2:
            raise ValueError("ladder needs at least 2 entries")
        seen = set()
        prev = None
        for letter, points in self.ladder:
            if letter in seen:
                raise ValueError(f"duplicate ladder letter {letter!r}")
            seen.add(letter)
            if not (0.0 < points <= 4.0) or not math.isfinite(points):
                raise ValueError(f"grade points for {letter!r} must be in (0, 4], got {points}")
            if prev is not None and points >= prev:
                raise ValueError("ladder grade points must be strictly decreasing")
            prev = points

    @classmethod
    def default(cls, failing_epsilon: float = DEFAULT_FAILING_EPSILON) -> "LetterScale":
        if not (0.0 < failing_epsilon < _DEFAULT_PASSING[-1][1]):
            raise ValueError("failing_epsilon must be positive and below the lowest passing grade")
        return cls(_DEFAULT_PASSING + (("F", failing_epsilon),))

    @classmethod
    def from_csv(cls, source) -> "LetterScale":
        """Load a ladder from CSV rows of ``letter,points``, best grade first."""
        if isinstance(source, (str, os.PathLike)):
            with open(source, "r", encoding="utf-8") as fh:
                text = fh.read()
        else:
            text = source.read()
            if isinstance(text, bytes):
                text = text.decode("utf-8")
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = next(csv.reader([line]))
            if len(cells) != 2:
                raise ValueError(f"ladder row needs 2 columns: {line!r}")
            if cells[0].lower() == "letter":  # optional header
                continue
            rows.append((cells[0].strip(), float(cells[1])))
        return cls(tuple(rows))

    @property
    def failing_epsilon(self) -> float:
        return self.ladder[-1][1]

    @property
    def top_points(self) -> float:
        return self.ladder[0][1]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(letter for letter, _ in self.ladder)

    def letter_to_points(self, letter: str) -> float:
        for lbl, points in self.ladder:
            if lbl == letter:
                return points
        raise KeyError(f"unknown letter grade {letter!r}")

    def points_to_letter(self, points: float) -> str:
        """Closest ladder letter; ties break toward the higher grade."""
        if not math.isfinite(points):
            raise ValueError(f"grade points must be finite, got {points}")
        best, best_dist = None, math.inf
        for lbl, value in self.ladder:  # descending, so strict < keeps the higher grade on ties
            dist = abs(points - value)
            if dist < best_dist:
                best, best_dist = lbl, dist
        return best

    def position(self, letter: str) -> int:
        """Rung index of a letter, 0 = best grade. Used for tick distances."""
        for i, (lbl, _) in enumerate(self.ladder):
            if lbl == letter:
                return i
        raise KeyError(f"unknown letter grade {letter!r}")

    def snap(self, points: float) -> float:
        """Grade points of the closest ladder letter."""
        return self.letter_to_points(self.points_to_letter(points))

    def clamp(self, points: float) -> float:
        """Clamp a raw prediction into [failing_epsilon, top of ladder]."""
        return min(max(points, self.failing_epsilon), self.top_points)
