import io
import json
from pathlib import Path

import pytest

from app.exceptions import BothZeroError, ConfigError, SchemaMismatchError
from app.ingest import (
    EXCLUSION_MULTI_MEMBER,
    Chamber,
    CycleTable,
    DistrictRaceRecord,
    Party,
    group_elections,
    parse_results,
    two_party_share,
    uncontested_summary,
    write_results,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

HEADER = "state,chamber,year,district,dem_votes,rep_votes,dem_incumbent,rep_incumbent,winner,multi_member\n"


def parse_text(text: str):
    return parse_results(io.BytesIO(text.encode("utf-8")))


def record(**overrides) -> DistrictRaceRecord:
    values = {
        "state": "PA",
        "chamber": Chamber.CONGRESS,
        "year": 2012,
        "district_id": "01",
        "dem_votes": 600,
        "rep_votes": 400,
        "winner": Party.D,
    }
    values.update(overrides)
    return DistrictRaceRecord(**values)


class TestParseResults:
    """Тесты разбора CSV с результатами."""

    def test_header_only(self):
        result = parse_text(HEADER)
        assert result.records == []
        assert result.errors == []

    def test_single_row(self):
        result = parse_text(HEADER + "PA,congress,2012,01,152859,191725,false,true,R,false\n")

        assert result.errors == []
        assert result.records == [
            DistrictRaceRecord(
                state="PA",
                chamber=Chamber.CONGRESS,
                year=2012,
                district_id="01",
                dem_votes=152859,
                rep_votes=191725,
                dem_incumbent=False,
                rep_incumbent=True,
                winner=Party.R,
                multi_member=False,
            )
        ]

    def test_non_numeric_votes(self):
        result = parse_text(HEADER + "PA,congress,2012,01,abc,191725,false,true,R,false\n")

        assert result.records == []
        assert result.errors[0].line == 2
        assert result.errors[0].reason == "non-numeric votes"

    def test_missing_votes_are_uncontested(self):
        result = parse_text(HEADER + "PA,congress,2012,01,,191725,false,true,R,false\n")

        assert result.records[0].dem_votes is None
        assert not result.records[0].contested

    def test_errors_do_not_stop_parsing(self):
        text = (
            HEADER
            + "PA,congress,2012,01,100,200,false,true,R,false\n"
            + "PA,congress,20x2,02,100,200,false,true,R,false\n"
            + "PA,senate,2012,03,100,200,false,true,R,false\n"
            + "PA,congress,2012,04,100,200,maybe,true,R,false\n"
            + "PA,congress,2012,05,100,200\n"
            + "PA,congress,2012,06,300,200,false,true,R,false\n"
            + "PA,congress,2012,07,300,200,false,true,D,false\n"
        )
        result = parse_text(text)

        assert [r.district_id for r in result.records] == ["01", "07"]
        assert [e.line for e in result.errors] == [3, 4, 5, 6, 7]
        assert result.errors[0].reason.startswith("invalid year")
        assert "dem_incumbent" in result.errors[2].reason
        assert result.errors[3].reason == "wrong number of fields"
        assert "contradicts" in result.errors[4].reason

    def test_schema_mismatch(self):
        with pytest.raises(SchemaMismatchError) as exc_info:
            parse_text("state,chamber,year,district\nPA,congress,2012,01\n")
        assert "winner" in exc_info.value.missing

    def test_unknown_schema(self):
        with pytest.raises(ValueError):
            parse_results(io.BytesIO(HEADER.encode("utf-8")), schema="v0")

    def test_stream_left_open(self):
        stream = io.BytesIO(HEADER.encode("utf-8"))
        parse_results(stream)
        assert not stream.closed

    def test_tie_resolved_by_winner(self):
        result = parse_text(HEADER + "PA,congress,2012,01,500,500,false,false,D,false\n")
        assert result.records[0].winner is Party.D

    def test_write_and_parse_back(self):
        with (FIXTURES / "results.csv").open("rb") as stream:
            original = parse_results(stream).records

        again = parse_text(write_results(original)).records
        assert again == original


class TestTwoPartyShare:
    """Тесты двухпартийной доли."""

    def test_share(self):
        assert two_party_share(record(dem_votes=60, rep_votes=40)) == 0.6

    def test_uncontested(self):
        assert two_party_share(record(dem_votes=100, rep_votes=None)) is None

    def test_both_zero(self):
        with pytest.raises(BothZeroError):
            two_party_share(record(dem_votes=0, rep_votes=0))


class TestCycleTable:
    """Тесты таблицы циклов."""

    @pytest.mark.parametrize("year, expected", [(2012, "2012"), (2014, "2012"), (2020, "2012"), (2011, "2002"), (1998, "1992")])
    def test_default_decade(self, year, expected):
        assert CycleTable().cycle_for("PA", Chamber.CONGRESS, year) == expected

    def test_split_cycle(self):
        table = CycleTable.load(FIXTURES / "cycles.json")

        assert table.cycle_for("TX", Chamber.CONGRESS, 1994) == "TX1"
        assert table.cycle_for("TX", Chamber.CONGRESS, 1998) == "TX2"
        assert table.cycle_for("TX", Chamber.STATE_LOWER, 1998) == "1992"

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "cycles.json"
        path.write_text("{", encoding="utf-8")
        with pytest.raises(ConfigError):
            CycleTable.load(path)

    def test_inverted_range(self, tmp_path):
        path = tmp_path / "cycles.json"
        payload = {"TX:congress": [{"cycle_id": "X", "first_year": 2000, "last_year": 1990}]}
        path.write_text(json.dumps(payload), encoding="utf-8")
        with pytest.raises(ConfigError):
            CycleTable.load(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            CycleTable.load(tmp_path / "missing.json")


class TestGroupElections:
    """Тесты группировки гонок в выборы."""

    def test_grouping(self):
        records = [
            record(district_id="02"),
            record(district_id="01"),
            record(year=2014),
            record(state="OH"),
            record(chamber=Chamber.STATE_LOWER),
        ]
        groups = group_elections(records)

        assert [g.key.label for g in groups] == [
            "OH_congress_2012",
            "PA_congress_2012",
            "PA_congress_2014",
            "PA_state_lower_2012",
        ]
        assert [r.district_id for r in groups[1].records] == ["01", "02"]
        assert groups[2].key.cycle_id == "2012"

    def test_multi_member_excluded(self):
        groups = group_elections([record(), record(district_id="02", multi_member=True)])
        assert groups[0].exclusion_reason == EXCLUSION_MULTI_MEMBER

    def test_split_cycles(self):
        table = CycleTable.load(FIXTURES / "cycles.json")
        groups = group_elections([record(state="TX", year=1996), record(state="TX", year=1998)], table)

        assert [g.key.cycle_id for g in groups] == ["TX1", "TX2"]


class TestUncontestedSummary:
    """Тесты сводки неконтестных гонок."""

    def test_counts(self):
        records = [
            record(district_id="01", dem_votes=None, winner=Party.D),
            record(district_id="01", year=2014, rep_votes=None, winner=Party.D),
            record(district_id="02", rep_votes=None, winner=Party.D),
            record(district_id="02", year=2014, dem_votes=None, rep_votes=500, winner=Party.R),
            record(district_id="03"),
            record(district_id="03", year=2014, dem_votes=None, rep_votes=500, winner=Party.R),
            record(state="OH", multi_member=True, dem_votes=None),
        ]
        summary = uncontested_summary(group_elections(records))

        assert summary.races == 6
        assert summary.uncontested_races == 5
        assert summary.district_cycles == 3
        assert summary.never_contested == 2
        assert summary.never_contested_split == 1
