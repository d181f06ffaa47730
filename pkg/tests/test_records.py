"""Tests for record parsing, validation, and term splits."""

import pytest

from gradecast import LetterScale, RecordSet, parse_records, serialize_records, split_by_term
from gradecast.errors import ParseError
from gradecast.records import GradeRecord

SCALE = LetterScale.default()
HEADER = "student_id,course_id,term,grade"


def rec(sid, cid, term, letter, tag=None):
    return GradeRecord(sid, cid, term, letter, SCALE.letter_to_points(letter), tag)


class TestParsing:
    def test_single_row(self):
        rs = parse_records(f"{HEADER}\ns1,CS112,0,A\n", SCALE)
        assert rs.n_students == 1
        assert rs.n_courses == 1
        assert rs.n_terms == 1
        assert rs.records[0].points == 4.0
        assert rs.records[0].letter == "A"

    def test_duplicate_triple_rejected(self):
        text = f"{HEADER}\ns1,CS112,0,A\ns1,CS112,0,B\n"
        with pytest.raises(ParseError, match="duplicate"):
            parse_records(text, SCALE)

    def test_retake_in_later_term_allowed(self):
        rs = parse_records(f"{HEADER}\ns1,CS112,0,C\ns1,CS112,2,B\n", SCALE)
        assert len(rs.records) == 2

    def test_unknown_letter(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_records(f"{HEADER}\ns1,CS112,0,Z\n", SCALE)

    def test_decimal_grade_snaps_to_ladder(self):
        rs = parse_records(f"{HEADER}\ns1,CS112,0,3.7\n", SCALE)
        assert rs.records[0].letter == "A-"
        assert rs.records[0].points == 3.67

    def test_decimal_grade_out_of_range(self):
        with pytest.raises(ParseError, match=r"\(0, 4\]"):
            parse_records(f"{HEADER}\ns1,CS112,0,4.5\n", SCALE)
        with pytest.raises(ParseError):
            parse_records(f"{HEADER}\ns1,CS112,0,0\n", SCALE)

    def test_bad_term(self):
        with pytest.raises(ParseError, match="integer"):
            parse_records(f"{HEADER}\ns1,CS112,one,A\n", SCALE)
        with pytest.raises(ParseError, match="non-negative"):
            parse_records(f"{HEADER}\ns1,CS112,-1,A\n", SCALE)

    def test_empty_ids(self):
        with pytest.raises(ParseError, match="empty"):
            parse_records(f"{HEADER}\n,CS112,0,A\n", SCALE)

    def test_tag_column(self):
        rs = parse_records(f"{HEADER},tag\ns1,CS112,0,A,CS\ns1,PSYC100,0,B,\n", SCALE)
        assert rs.records[0].tag == "CS"
        assert rs.records[1].tag is None

    def test_comments_and_blank_lines_skipped(self):
        rs = parse_records(f"# seed=7\n\n{HEADER}\n# mid comment\ns1,CS112,0,A\n", SCALE)
        assert len(rs.records) == 1

    def test_header_required(self):
        with pytest.raises(ParseError, match="header"):
            parse_records("s1,CS112,0,A\n", SCALE)

    def test_empty_inputs(self):
        with pytest.raises(ParseError):
            parse_records("", SCALE)
        with pytest.raises(ParseError, match="no data rows"):
            parse_records(f"{HEADER}\n", SCALE)

    def test_wrong_column_count(self):
        with pytest.raises(ParseError, match="4 or 5 columns"):
            parse_records(f"{HEADER}\ns1,CS112,0\n", SCALE)

    def test_bytes_and_file_sources(self, tmp_path):
        text = f"{HEADER}\ns1,CS112,0,A\n"
        assert len(parse_records(text.encode(), SCALE).records) == 1
        path = tmp_path / "data.csv"
        path.write_text(text)
        assert len(parse_records(path, SCALE).records) == 1


class TestRecordSet:
    def test_indices_dense_and_sorted_by_id(self):
        rs = RecordSet.from_records(
            [rec("s2", "c9", 0, "A"), rec("s1", "c1", 0, "B")], SCALE
        )
        assert rs.student_index == {"s1": 0, "s2": 1}
        assert rs.course_index == {"c1": 0, "c9": 1}

    def test_index_maps_ignore_record_order(self):
        a = [rec("s1", "c1", 0, "A"), rec("s2", "c2", 1, "B")]
        rs1 = RecordSet.from_records(a, SCALE)
        rs2 = RecordSet.from_records(list(reversed(a)), SCALE)
        assert rs1.student_index == rs2.student_index
        assert rs1.course_index == rs2.course_index

    def test_points_must_match_ladder(self):
        bad = GradeRecord("s1", "c1", 0, "A", 3.9)
        with pytest.raises(ValueError, match="do not match"):
            RecordSet.from_records([bad], SCALE)

    def test_terms_skips_empty_terms(self):
        rs = RecordSet.from_records([rec("s1", "c1", 0, "A"), rec("s1", "c1", 2, "B")], SCALE)
        assert rs.terms == (0, 2)
        assert rs.n_terms == 3

    def test_grade_mean(self):
        rs = RecordSet.from_records([rec("s1", "c1", 0, "C"), rec("s2", "c2", 0, "A")], SCALE)
        assert rs.grade_mean() == pytest.approx(3.0)

    def test_records_at(self):
        rs = RecordSet.from_records([rec("s1", "c1", 0, "A"), rec("s1", "c2", 1, "B")], SCALE)
        assert [r.course_id for r in rs.records_at(1)] == ["c2"]


class TestSerialization:
    def test_round_trip(self):
        rows = [rec("s1", "c1", 0, "A", "CS"), rec("s1", "c2", 1, "B-")]
        rs = RecordSet.from_records(rows, SCALE)
        back = parse_records(serialize_records(rs), SCALE)
        assert back.records == rs.records

    def test_tag_column_only_when_present(self):
        rs = RecordSet.from_records([rec("s1", "c1", 0, "A")], SCALE)
        assert serialize_records(rs).splitlines()[0] == HEADER
        tagged = RecordSet.from_records([rec("s1", "c1", 0, "A", "CS")], SCALE)
        assert serialize_records(tagged).splitlines()[0] == HEADER + ",tag"


class TestSplitByTerm:
    def make(self):
        rows = [rec(f"s{i}", "c1", t, "B") for t in range(5) for i in range(2)]
        rows.append(rec("s9", "c1", 4, "A"))  # appears only in the last term
        return RecordSet.from_records(rows, SCALE)

    def test_partition(self):
        train, test = split_by_term(self.make(), 4)
        assert set(r.term for r in train.records) == {0, 1, 2, 3}
        assert set(r.term for r in test.records) == {4}

    def test_halves_share_index_maps(self):
        rs = self.make()
        train, test = split_by_term(rs, 4)
        assert train.student_index == rs.student_index == test.student_index
        assert train.course_index == rs.course_index

    def test_earliest_term_rejected(self):
        with pytest.raises(ValueError, match="no training history"):
            split_by_term(self.make(), 0)

    def test_term_without_records_rejected(self):
        with pytest.raises(ValueError, match="no records"):
            split_by_term(self.make(), 7)

    def test_cold_start_student_only_in_test(self):
        train, test = split_by_term(self.make(), 4)
        assert "s9" in train.student_index  # index exists, records do not
        assert not any(r.student_id == "s9" for r in train.records)
        assert any(r.student_id == "s9" for r in test.records)

    def test_later_terms_dropped(self):
        train, test = split_by_term(self.make(), 3)
        assert max(r.term for r in train.records) == 2
        assert all(r.term == 3 for r in test.records)
