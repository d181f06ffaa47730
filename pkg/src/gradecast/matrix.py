"""Row-indexed sparse grade matrices (CSR layout).

An absent entry means "not taken"; stored grade points are always > 0, so
zero never appears as data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .records import RecordSet


@dataclass(frozen=True)
class SparseGradeMatrix:
    """n_rows x n_cols sparse matrix of grade points, rows sorted by column."""

    n_rows: int
    n_cols: int
    indptr: np.ndarray  # int64, length n_rows + 1
    cols: np.ndarray  # int64
    values: np.ndarray  # float64, all > 0

    def __post_init__(self):
        if self.indptr.shape != (self.n_rows + 1,) or self.indptr[0] != 0:
            raise ValueError("bad indptr")
        if self.indptr[-1] != len(self.cols) or len(self.cols) != len(self.values):
            raise ValueError("indptr/cols/values lengths disagree")
        if len(self.values) and (self.values <= 0).any():
            raise ValueError("stored grade points must be > 0")
        for i in range(self.n_rows):
            row = self.cols[self.indptr[i] : self.indptr[i + 1]]
            if len(row) and ((row < 0).any() or (row >= self.n_cols).any()):
                raise ValueError("column index out of range")
            if len(row) > 1 and (np.diff(row) <= 0).any():
                raise ValueError("row columns must be strictly increasing")
        for arr in (self.indptr, self.cols, self.values):
            arr.setflags(write=False)

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(column indices, grade points) of row i."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.cols[lo:hi], self.values[lo:hi]

    def row_count(self, i: int) -> int:
        """Number of courses in row i."""
        return int(self.indptr[i + 1] - self.indptr[i])

    def get(self, i: int, j: int) -> float:
        """Entry (i, j), 0.0 when absent."""
        cols, vals = self.row(i)
        k = np.searchsorted(cols, j)
        if k < len(cols) and cols[k] == j:
            return float(vals[k])
        return 0.0

    def toarray(self) -> np.ndarray:
        dense = np.zeros((self.n_rows, self.n_cols))
        for i in range(self.n_rows):
            cols, vals = self.row(i)
            dense[i, cols] = vals
        return dense

    @classmethod
    def from_entries(cls, n_rows, n_cols, entries) -> "SparseGradeMatrix":
        """Build from an iterable of (row, col, value); one value per cell."""
        by_row = [[] for _ in range(n_rows)]
        for i, j, v in entries:
            by_row[i].append((j, v))
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        cols, values = [], []
        for i, row in enumerate(by_row):
            row.sort()
            cols.extend(j for j, _ in row)
            values.extend(v for _, v in row)
            indptr[i + 1] = indptr[i] + len(row)
        return cls(
            n_rows,
            n_cols,
            indptr,
            np.asarray(cols, dtype=np.int64),
            np.asarray(values, dtype=np.float64),
        )


def term_matrix(rs: RecordSet, t: int) -> SparseGradeMatrix:
    """Grades observed exactly in term t, as an n x m sparse matrix."""
    _check_term(rs, t)
    entries = (
        (rs.student_index[r.student_id], rs.course_index[r.course_id], r.points)
        for r in rs.records
        if r.term == t
    )
    return SparseGradeMatrix.from_entries(rs.n_students, rs.n_courses, entries)


def cumulative_matrix(rs: RecordSet, t: int) -> SparseGradeMatrix:
    """Union of term matrices 0..t; a retaken course keeps its latest grade."""
    _check_term(rs, t)
    latest: dict[tuple[int, int], tuple[int, float]] = {}
    for r in rs.records:
        if r.term > t:
            continue
        key = (rs.student_index[r.student_id], rs.course_index[r.course_id])
        if key not in latest or r.term > latest[key][0]:
            latest[key] = (r.term, r.points)
    entries = ((i, j, v) for (i, j), (_, v) in latest.items())
    return SparseGradeMatrix.from_entries(rs.n_students, rs.n_courses, entries)


def _check_term(rs: RecordSet, t: int):
    if not (0 <= t < rs.n_terms):
        raise ValueError(f"term {t} outside range 0..{rs.n_terms - 1}")
