"""
Загрузка результатов выборов по округам и группировка в выборы.

Формат входа - CSV в UTF-8 с заголовком:
state, chamber, year, district, dem_votes, rep_votes, dem_incumbent,
rep_incumbent, winner, multi_member. Булевы значения - "true"/"false",
отсутствующие голоса - пустое поле.
"""

import csv
import io
import json
import logging
from collections import defaultdict
from collections.abc import Iterable
from enum import StrEnum
from pathlib import Path
from typing import IO

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.exceptions import BothZeroError, ConfigError, SchemaMismatchError

logger = logging.getLogger(__name__)

SCHEMA_V1 = "district-results-v1"

SCHEMAS: dict[str, tuple[str, ...]] = {
    SCHEMA_V1: (
        "state",
        "chamber",
        "year",
        "district",
        "dem_votes",
        "rep_votes",
        "dem_incumbent",
        "rep_incumbent",
        "winner",
        "multi_member",
    ),
}

EXCLUSION_MULTI_MEMBER = "multi-member district"


class Chamber(StrEnum):
    """Палата: Конгресс США или нижняя палата легислатуры штата."""

    CONGRESS = "congress"
    STATE_LOWER = "state_lower"


class Party(StrEnum):
    """Партия победителя."""

    D = "D"
    R = "R"


class DistrictRaceRecord(BaseModel):
    """Результат одной гонки в округе."""

    model_config = ConfigDict(frozen=True)

    state: str = Field(pattern=r"^[A-Z]{2}$")
    chamber: Chamber
    year: int
    district_id: str = Field(min_length=1)
    dem_votes: int | None = Field(default=None, ge=0)
    rep_votes: int | None = Field(default=None, ge=0)
    dem_incumbent: bool = False
    rep_incumbent: bool = False
    winner: Party
    multi_member: bool = False

    @model_validator(mode="after")
    def _check_winner(self) -> "DistrictRaceRecord":
        if self.dem_votes is None or self.rep_votes is None:
            return self
        if self.dem_votes > self.rep_votes and self.winner is Party.R:
            raise ValueError("winner R contradicts Democratic vote majority")
        if self.rep_votes > self.dem_votes and self.winner is Party.D:
            raise ValueError("winner D contradicts Republican vote majority")
        return self

    @property
    def contested(self) -> bool:
        """Гонка контестная, если известны голоса обоих кандидатов."""
        return self.dem_votes is not None and self.rep_votes is not None


class RowError(BaseModel):
    """Ошибка разбора строки CSV."""

    model_config = ConfigDict(frozen=True)

    line: int
    reason: str


class ParseResult(BaseModel):
    """Разобранные записи и ошибки строк."""

    records: list[DistrictRaceRecord] = Field(default_factory=list)
    errors: list[RowError] = Field(default_factory=list)


class ElectionKey(BaseModel):
    """Ключ выборов: штат, палата, год и цикл редистрикции."""

    model_config = ConfigDict(frozen=True)

    state: str
    chamber: Chamber
    year: int
    cycle_id: str

    @property
    def label(self) -> str:
        """Короткое имя для файлов и логов."""
        return f"{self.state}_{self.chamber}_{self.year}"


class ElectionGroup(BaseModel):
    """Гонки одних выборов; исключённые группы содержат причину."""

    model_config = ConfigDict(frozen=True)

    key: ElectionKey
    records: tuple[DistrictRaceRecord, ...]
    exclusion_reason: str | None = None


class CycleSpan(BaseModel):
    """Цикл редистрикции: идентификатор и диапазон лет включительно."""

    model_config = ConfigDict(frozen=True)

    cycle_id: str
    first_year: int
    last_year: int

    @model_validator(mode="after")
    def _check_range(self) -> "CycleSpan":
        if self.first_year > self.last_year:
            raise ValueError(f"first_year > last_year в цикле {self.cycle_id}")
        return self


class CycleTable(BaseModel):
    """
    Таблица циклов по ключу "<штат>:<палата>".

    Годы, не покрытые таблицей, относятся к десятилетнему циклу,
    начинающемуся в году, оканчивающемся на 2 (1972, 1982, ...).
    """

    model_config = ConfigDict(frozen=True)

    cycles: dict[str, tuple[CycleSpan, ...]] = Field(default_factory=dict)

    @classmethod
    def load(cls, path: Path) -> "CycleTable":
        """
        Загрузка таблицы циклов из JSON.

        Raises:
            ConfigError: Если файл не читается или не соответствует формату
        """
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
            table = cls(cycles=raw)
        except (OSError, json.JSONDecodeError, ValidationError) as e:
            raise ConfigError(f"Некорректная таблица циклов {path}: {e}") from e

        logger.info("Загружена таблица циклов: %s записей", len(table.cycles))
        return table

    def cycle_for(self, state: str, chamber: Chamber | str, year: int) -> str:
        """Идентификатор цикла для штата, палаты и года."""
        for span in self.cycles.get(f"{state}:{chamber}", ()):
            if span.first_year <= year <= span.last_year:
                return span.cycle_id
        return str(year - (year - 2) % 10)


def _parse_bool(value: str, column: str) -> bool:
    normalized = value.strip().lower()
    if normalized == "true":
        return True
    if normalized == "false":
        return False
    raise ValueError(f"invalid boolean in column {column}: {value!r}")


def _parse_votes(value: str) -> int | None:
    stripped = value.strip()
    if not stripped:
        return None
    if not stripped.isdigit():
        raise ValueError("non-numeric votes")
    return int(stripped)


def _parse_row(row: dict[str, str]) -> DistrictRaceRecord:
    try:
        year = int(row["year"])
    except ValueError as e:
        raise ValueError(f"invalid year: {row['year']!r}") from e

    return DistrictRaceRecord(
        state=row["state"].strip().upper(),
        chamber=Chamber(row["chamber"].strip()),
        year=year,
        district_id=row["district"].strip(),
        dem_votes=_parse_votes(row["dem_votes"]),
        rep_votes=_parse_votes(row["rep_votes"]),
        dem_incumbent=_parse_bool(row["dem_incumbent"], "dem_incumbent"),
        rep_incumbent=_parse_bool(row["rep_incumbent"], "rep_incumbent"),
        winner=Party(row["winner"].strip().upper()),
        multi_member=_parse_bool(row["multi_member"], "multi_member"),
    )


def parse_results(stream: IO[bytes], schema: str = SCHEMA_V1) -> ParseResult:
    """
    Потоковый разбор CSV с результатами по округам.

    Некорректные строки не прерывают разбор: они возвращаются как RowError
    с номером строки файла (заголовок - строка 1).

    Args:
        stream: Бинарный поток с CSV в UTF-8
        schema: Идентификатор схемы колонок

    Returns:
        ParseResult: Записи и ошибки строк

    Raises:
        SchemaMismatchError: Если в заголовке нет обязательных колонок
        ValueError: Если схема неизвестна
    """
    if schema not in SCHEMAS:
        raise ValueError(f"Неизвестная схема: {schema}")

    text = io.TextIOWrapper(stream, encoding="utf-8", newline="")
    result = ParseResult()

    try:
        reader = csv.DictReader(text)

        header = reader.fieldnames or []
        missing = [column for column in SCHEMAS[schema] if column not in header]
        if missing:
            raise SchemaMismatchError(missing)

        for row in reader:
            try:
                if None in row.values() or None in row:
                    raise ValueError("wrong number of fields")
                result.records.append(_parse_row(row))
            except ValidationError as e:
                reason = "; ".join(str(error["msg"]) for error in e.errors())
                result.errors.append(RowError(line=reader.line_num, reason=reason))
            except ValueError as e:
                result.errors.append(RowError(line=reader.line_num, reason=str(e)))
    finally:
        text.detach()

    logger.info("Разобрано записей: %s, ошибок строк: %s", len(result.records), len(result.errors))
    for error in result.errors:
        logger.warning("Строка %s: %s", error.line, error.reason)

    return result


def _format_bool(value: bool) -> str:
    return "true" if value else "false"


def write_results(records: Iterable[DistrictRaceRecord]) -> str:
    """Сериализация записей обратно в CSV той же схемы."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SCHEMAS[SCHEMA_V1])

    for record in records:
        writer.writerow(
            [
                record.state,
                record.chamber.value,
                record.year,
                record.district_id,
                "" if record.dem_votes is None else record.dem_votes,
                "" if record.rep_votes is None else record.rep_votes,
                _format_bool(record.dem_incumbent),
                _format_bool(record.rep_incumbent),
                record.winner.value,
                _format_bool(record.multi_member),
            ]
        )

    return buffer.getvalue()


def two_party_share(r: DistrictRaceRecord) -> float | None:
    """
    Двухпартийная доля демократа dem / (dem + rep).

    Returns:
        float | None: Доля в [0, 1] или None для неконтестной гонки (требует импутации)

    Raises:
        BothZeroError: Если у обоих кандидатов ноль голосов
    """
    if r.dem_votes is None or r.rep_votes is None:
        return None

    total = r.dem_votes + r.rep_votes
    if total == 0:
        raise BothZeroError(f"Ноль голосов у обоих кандидатов: {r.state} {r.year} округ {r.district_id}")

    return r.dem_votes / total


def group_elections(
    records: Iterable[DistrictRaceRecord],
    cycle_table: CycleTable | None = None,
) -> list[ElectionGroup]:
    """
    Группировка гонок в выборы по (штат, палата, год).

    Выборы с хотя бы одним многомандатным округом помечаются исключёнными.

    Args:
        records: Записи гонок
        cycle_table: Таблица циклов (по умолчанию десятилетние циклы)

    Returns:
        list[ElectionGroup]: Группы, упорядоченные по ключу
    """
    table = cycle_table or CycleTable()
    buckets: dict[tuple[str, Chamber, int], list[DistrictRaceRecord]] = defaultdict(list)

    for record in records:
        buckets[(record.state, record.chamber, record.year)].append(record)

    groups: list[ElectionGroup] = []
    for (state, chamber, year), members in sorted(buckets.items()):
        key = ElectionKey(state=state, chamber=chamber, year=year, cycle_id=table.cycle_for(state, chamber, year))
        reason = EXCLUSION_MULTI_MEMBER if any(record.multi_member for record in members) else None

        if reason:
            logger.warning("Выборы %s исключены: %s", key.label, reason)

        groups.append(
            ElectionGroup(
                key=key,
                records=tuple(sorted(members, key=lambda record: record.district_id)),
                exclusion_reason=reason,
            )
        )

    logger.info(
        "Сформировано выборов: %s, исключено: %s",
        len(groups),
        sum(1 for group in groups if group.exclusion_reason),
    )
    return groups


class UncontestedSummary(BaseModel):
    """Сводка неконтестных гонок и пар округ-цикл без единой контестной гонки."""

    races: int
    uncontested_races: int
    district_cycles: int
    never_contested: int
    never_contested_split: int


def uncontested_summary(groups: Iterable[ElectionGroup]) -> UncontestedSummary:
    """
    Подсчёт неконтестных гонок по неисключённым выборам.

    never_contested_split - пары округ-цикл без контестных гонок,
    которые в течение цикла выигрывали обе партии.
    """
    races = 0
    uncontested = 0
    contested_by_district: dict[tuple[str, str, str, str], bool] = defaultdict(bool)
    winners_by_district: dict[tuple[str, str, str, str], set[Party]] = defaultdict(set)

    for group in groups:
        if group.exclusion_reason:
            continue
        for record in group.records:
            races += 1
            district = (group.key.state, group.key.chamber.value, group.key.cycle_id, record.district_id)
            winners_by_district[district].add(record.winner)
            contested_by_district[district] = contested_by_district[district] or record.contested
            if not record.contested:
                uncontested += 1

    never = [district for district, contested in contested_by_district.items() if not contested]
    return UncontestedSummary(
        races=races,
        uncontested_races=uncontested,
        district_cycles=len(contested_by_district),
        never_contested=len(never),
        never_contested_split=sum(1 for district in never if len(winners_by_district[district]) > 1),
    )
