"""Таблицы метрик по выборам, экстремальные значения, сводки по циклам и устойчивость знака."""

import csv
import io
import logging
from collections import defaultdict
from collections.abc import Iterable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import stats

from app.exceptions import DeclinationError
from app.impute import ResolvedElection
from app.ingest import Chamber, ElectionKey
from app.metrics import format_metric, make_election, metric_set

logger = logging.getLogger(__name__)

DISPLAY_DIGITS: dict[str, int] = {
    "delta_tilde": 2,
    "declination": 2,
    "delta_n": 1,
}
DEFAULT_DIGITS = 3


def gap_column(tau: float) -> str:
    """Имя колонки τ-gap: gap_0, gap_0.4, gap_1, ..."""
    return f"gap_{tau:g}"


class GroupError(BaseModel):
    """Ошибка обработки одних выборов или разбиения; пакет продолжает работу."""

    model_config = ConfigDict(frozen=True)

    label: str
    stage: str
    reason: str


class ElectionRow(BaseModel):
    """Строка таблицы: ключ выборов, число мест и метрики (None - не определено)."""

    model_config = ConfigDict(frozen=True)

    state: str
    chamber: Chamber
    year: int
    cycle_id: str
    seats: int
    delta_tilde: float | None
    declination: float | None
    delta_n: float | None
    efficiency_gap: float
    tau_gaps: dict[str, float]
    mean_median: float
    seat_share: float
    vote_share: float
    imputed_fraction: float

    @property
    def label(self) -> str:
        return f"{self.state}_{self.chamber}_{self.year}"

    def value(self, metric: str) -> float | None:
        """
        Значение метрики по имени колонки.

        Raises:
            KeyError: Если метрики нет в строке
        """
        if metric in self.tau_gaps:
            return self.tau_gaps[metric]
        if metric.startswith("gap_") or metric not in ElectionRow.model_fields or metric == "tau_gaps":
            raise KeyError(metric)

        value = getattr(self, metric)
        if value is None or isinstance(value, (int, float)):
            return value
        raise KeyError(metric)


class Extremes(BaseModel):
    """Выборы с наибольшим положительным и наибольшим по модулю отрицательным δ̃."""

    positive: list[ElectionRow]
    negative: list[ElectionRow]


class CycleSummary(BaseModel):
    """δ̃ по годам одного цикла редистрикции и устойчивость знака."""

    model_config = ConfigDict(frozen=True)

    state: str
    chamber: Chamber
    cycle_id: str
    values: dict[int, float]
    min_delta_tilde: float
    max_delta_tilde: float
    sign_persistent: bool
    n_defined: int


class HeatmapRow(BaseModel):
    state: str
    chamber: Chamber
    year: int
    delta_tilde: float | None


def election_row(resolved: ResolvedElection, taus: Iterable[float]) -> ElectionRow:
    """
    Строка таблицы для одних выборов с разрешёнными долями.

    Raises:
        DeclinationError: Если доли или τ некорректны
    """
    tau_values = list(taus)
    e = make_election(resolved.shares)
    metrics = metric_set(e, tau_values)
    key: ElectionKey = resolved.key

    return ElectionRow(
        state=key.state,
        chamber=key.chamber,
        year=key.year,
        cycle_id=key.cycle_id,
        seats=e.n_districts,
        delta_tilde=metrics.delta_tilde,
        declination=metrics.declination,
        delta_n=metrics.delta_n,
        efficiency_gap=metrics.efficiency_gap,
        tau_gaps={gap_column(tau): metrics.tau_gaps[float(tau)] for tau in tau_values},
        mean_median=metrics.mean_median,
        seat_share=metrics.seat_share_p,
        vote_share=metrics.vote_share_p,
        imputed_fraction=resolved.imputed_fraction,
    )


def election_table(
    resolved: Iterable[ResolvedElection],
    taus: Iterable[float],
) -> tuple[list[ElectionRow], list[GroupError]]:
    """
    Таблица метрик по выборам.

    Ошибка одних выборов не прерывает обработку: она возвращается
    в списке ошибок.

    Args:
        resolved: Выборы с разрешёнными долями
        taus: Значения τ для колонок τ-gap

    Returns:
        tuple[list[ElectionRow], list[GroupError]]: Строки в порядке (штат, палата, год) и ошибки
    """
    tau_values = list(taus)
    rows: list[ElectionRow] = []
    errors: list[GroupError] = []

    for election in resolved:
        try:
            rows.append(election_row(election, tau_values))
        except DeclinationError as e:
            logger.warning("Выборы %s пропущены: %s", election.key.label, e)
            errors.append(GroupError(label=election.key.label, stage="metrics", reason=str(e)))

    rows.sort(key=lambda row: (row.state, row.chamber.value, row.year))
    logger.info("Таблица метрик: строк %s, ошибок %s", len(rows), len(errors))
    return rows, errors


def sort_rows(rows: Iterable[ElectionRow], metric: str, descending: bool = False) -> list[ElectionRow]:
    """Сортировка по метрике; строки с неопределённым значением - в конце, при равенстве - по (год, штат)."""
    items = list(rows)
    defined = [row for row in items if row.value(metric) is not None]
    undefined = [row for row in items if row.value(metric) is None]

    sign = -1.0 if descending else 1.0
    defined.sort(key=lambda row: (sign * (row.value(metric) or 0.0), row.year, row.state))
    return defined + sorted(undefined, key=lambda row: (row.year, row.state))


def table_header(taus: Iterable[float]) -> list[str]:
    return [
        "state",
        "chamber",
        "year",
        "cycle_id",
        "seats",
        "delta_tilde",
        "declination",
        "delta_n",
        "efficiency_gap",
        *(gap_column(tau) for tau in taus),
        "mean_median",
        "seat_share",
        "vote_share",
        "imputed_fraction",
    ]


def render_rows_csv(rows: Iterable[ElectionRow], taus: Iterable[float]) -> str:
    """
    CSV таблицы метрик с округлением для отображения.

    δ̃ и δ - два знака, δ_N - один знак, остальные метрики - три;
    неопределённые значения - пустые ячейки.
    """
    header = table_header(list(taus))
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)

    for row in rows:
        cells: list[str | int] = [row.state, row.chamber.value, row.year, row.cycle_id, row.seats]
        for column in header[5:]:
            cells.append(format_metric(row.value(column), DISPLAY_DIGITS.get(column, DEFAULT_DIGITS)))
        writer.writerow(cells)

    return buffer.getvalue()


def extremes(rows: Iterable[ElectionRow], limit: int, min_seats: int = 1) -> Extremes:
    """
    Рейтинги выборов по δ̃.

    Положительный список содержит строки с δ̃ > 0 по убыванию, отрицательный -
    строки с δ̃ < 0 по возрастанию; при равенстве порядок по (год, штат).

    Args:
        rows: Строки таблицы
        limit: Максимальная длина каждого списка
        min_seats: Минимальное число мест для участия в рейтинге
    """
    eligible = [row for row in rows if row.delta_tilde is not None and row.seats >= min_seats]
    positive = sorted(
        (row for row in eligible if row.delta_tilde is not None and row.delta_tilde > 0),
        key=lambda row: (-(row.delta_tilde or 0.0), row.year, row.state),
    )
    negative = sorted(
        (row for row in eligible if row.delta_tilde is not None and row.delta_tilde < 0),
        key=lambda row: (row.delta_tilde or 0.0, row.year, row.state),
    )
    return Extremes(positive=positive[:limit], negative=negative[:limit])


def render_extremes_csv(result: Extremes) -> str:
    """CSV рейтингов: список, место, ключ выборов, число мест и δ̃."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["list", "rank", "state", "chamber", "year", "seats", "delta_tilde"])

    for name, ranked in (("positive", result.positive), ("negative", result.negative)):
        for rank, row in enumerate(ranked, start=1):
            writer.writerow(
                [name, rank, row.state, row.chamber.value, row.year, row.seats, format_metric(row.delta_tilde, 2)]
            )

    return buffer.getvalue()


def cycle_summary(rows: Iterable[ElectionRow]) -> list[CycleSummary]:
    """
    Сводки по циклам (штат, палата, цикл).

    Циклы без единого определённого δ̃ в результат не входят. Знак устойчив,
    если все значения строго положительны или все строго отрицательны.
    """
    buckets: dict[tuple[str, Chamber, str], dict[int, float]] = defaultdict(dict)
    for row in rows:
        if row.delta_tilde is not None:
            buckets[(row.state, row.chamber, row.cycle_id)][row.year] = row.delta_tilde

    summaries = []
    for (state, chamber, cycle_id), values in sorted(buckets.items()):
        ordered = dict(sorted(values.items()))
        series = list(ordered.values())
        summaries.append(
            CycleSummary(
                state=state,
                chamber=chamber,
                cycle_id=cycle_id,
                values=ordered,
                min_delta_tilde=min(series),
                max_delta_tilde=max(series),
                sign_persistent=all(value > 0 for value in series) or all(value < 0 for value in series),
                n_defined=len(series),
            )
        )

    return summaries


def persistence_rate(summaries: Iterable[CycleSummary], threshold: float) -> float | None:
    """
    Доля выборов с |δ̃| > threshold, цикл которых сохраняет знак.

    Returns:
        float | None: Доля в [0, 1] или None, если ни одни выборы не превышают порог

    Raises:
        ValueError: Если порог отрицателен
    """
    if threshold < 0:
        raise ValueError(f"Порог должен быть неотрицательным, получено {threshold}")

    exceeding = 0
    persistent = 0
    for summary in summaries:
        for value in summary.values.values():
            if abs(value) > threshold:
                exceeding += 1
                persistent += summary.sign_persistent

    if exceeding == 0:
        logger.info("Нет выборов с |δ̃| > %s: устойчивость не определена", threshold)
        return None
    return persistent / exceeding


def metric_correlation(rows: Iterable[ElectionRow], metric_a: str, metric_b: str) -> float | None:
    """
    Квадрат коэффициента корреляции двух метрик по строкам, где обе определены.

    Returns:
        float | None: r² или None, если точек меньше двух или одна из метрик постоянна
    """
    pairs = [(row.value(metric_a), row.value(metric_b)) for row in rows]
    defined = np.array([(a, b) for a, b in pairs if a is not None and b is not None], dtype=np.float64)

    if len(defined) < 2 or np.ptp(defined[:, 0]) == 0 or np.ptp(defined[:, 1]) == 0:
        return None

    regression = stats.linregress(defined[:, 0], defined[:, 1])
    return float(regression.rvalue**2)


def heatmap_rows(rows: Iterable[ElectionRow]) -> list[HeatmapRow]:
    """Длинный формат (штат, палата, год, δ̃) для тепловых карт по десятилетиям."""
    return [
        HeatmapRow(state=row.state, chamber=row.chamber, year=row.year, delta_tilde=row.delta_tilde)
        for row in sorted(rows, key=lambda row: (row.chamber.value, row.state, row.year))
    ]


def render_heatmap_csv(items: Sequence[HeatmapRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["state", "chamber", "year", "delta_tilde"])
    for item in items:
        writer.writerow([item.state, item.chamber.value, item.year, format_metric(item.delta_tilde, 2)])
    return buffer.getvalue()
