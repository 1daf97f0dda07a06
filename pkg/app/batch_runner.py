"""
Пакетная обработка результатов выборов.

Выполняет:
1. Разбор CSV с результатами по округам
2. Группировку гонок в выборы и назначение циклов
3. Оценку модели импутации для каждого разбиения (палата, цикл)
4. Импутацию неконтестных гонок
5. Расчёт таблицы метрик, рейтингов и сводок по циклам
6. Запись результатов (CSV, JSON, SVG) в выходной каталог
"""

import asyncio
import logging
from collections import defaultdict
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field

from app.diagram import declination_diagram
from app.exceptions import DeclinationError
from app.impute import (
    CrossValidationReport,
    ImputationModel,
    ImputeMode,
    ResolvedElection,
    cross_validate,
    fit,
    observations_from_groups,
    resolve_election,
    sensitivity_shift,
)
from app.ingest import Chamber, CycleTable, ElectionGroup, group_elections, parse_results, uncontested_summary
from app.metrics import make_election
from app.report import (
    GroupError,
    cycle_summary,
    election_table,
    extremes,
    heatmap_rows,
    persistence_rate,
    render_extremes_csv,
    render_heatmap_csv,
    render_rows_csv,
)
from app.report_writer import ReportWriter
from app.settings import Settings, settings

logger = logging.getLogger(__name__)

Partition = tuple[Chamber, str]


class BatchOptions(BaseModel):
    """Параметры пакетного прогона."""

    model_config = ConfigDict(frozen=True)

    input_path: Path
    out_dir: Path
    cycles_path: Path | None = None
    taus: tuple[float, ...] = (0.0, 0.4, 1.0, 2.0)
    impute: ImputeMode = ImputeMode(kind="model")
    seed: int = 0
    svg: bool = False
    shift: float | None = None
    threshold: float = 0.47


class BatchResult(BaseModel):
    """Итог прогона для журнала и кода возврата."""

    records: int
    row_errors: int
    elections: int
    excluded: int
    rows: int
    group_errors: int
    written: list[str]


class PartitionFit(BaseModel):
    partition: str
    model: ImputationModel | None = None
    cv: CrossValidationReport | None = None
    errors: list[GroupError] = Field(default_factory=list)


def _partition_label(partition: Partition) -> str:
    chamber, cycle_id = partition
    return f"{chamber}/{cycle_id}"


def _fit_partition(groups: list[ElectionGroup], partition: Partition, config: Settings, seed: int) -> PartitionFit:
    """Оценка модели и кросс-валидация для одного разбиения (выполняется в потоке)."""
    label = _partition_label(partition)
    result = PartitionFit(partition=label)
    observations = observations_from_groups(groups)

    try:
        result.model = fit(observations, config, seed=seed)
    except DeclinationError as e:
        logger.warning("Модель для %s не оценена: %s", label, e)
        result.errors.append(GroupError(label=label, stage="fit", reason=str(e)))
        return result

    try:
        result.cv = cross_validate(observations, config, rng_seed=seed)
    except DeclinationError as e:
        logger.warning("Кросс-валидация для %s пропущена: %s", label, e)
        result.errors.append(GroupError(label=label, stage="cv", reason=str(e)))

    return result


async def _fit_partitions(
    partitions: dict[Partition, list[ElectionGroup]],
    config: Settings,
    seed: int,
) -> dict[Partition, PartitionFit]:
    semaphore = asyncio.Semaphore(config.MAX_WORKERS)

    async def _run(partition: Partition) -> PartitionFit:
        async with semaphore:
            return await asyncio.to_thread(_fit_partition, partitions[partition], partition, config, seed)

    keys = sorted(partitions)
    fits = await asyncio.gather(*(_run(partition) for partition in keys))
    return dict(zip(keys, fits))


def _resolve_all(
    groups: list[ElectionGroup],
    mode: ImputeMode,
    fits: dict[Partition, PartitionFit],
    config: Settings,
    seed: int,
) -> tuple[list[ResolvedElection], list[GroupError]]:
    resolved: list[ResolvedElection] = []
    errors: list[GroupError] = []

    for group in groups:
        partition_fit = fits.get((group.key.chamber, group.key.cycle_id))
        model = partition_fit.model if partition_fit else None
        try:
            resolved.append(resolve_election(group, mode, model, config, seed))
        except DeclinationError as e:
            logger.warning("Выборы %s не разрешены: %s", group.key.label, e)
            errors.append(GroupError(label=group.key.label, stage="impute", reason=str(e)))

    return resolved, errors


async def run_batch(options: BatchOptions, config: Settings = settings) -> BatchResult:  # pylint: disable=too-many-locals
    """
    Полный пакетный прогон: ingest → impute → metrics → report.

    Ошибки отдельных выборов и разбиений собираются в errors.json;
    исключение пробрасывается только при невозможности обработать вход целиком.

    Args:
        options: Пути, τ, режим импутации и прочие параметры прогона
        config: Настройки

    Returns:
        BatchResult: Счётчики и список записанных файлов

    Raises:
        SchemaMismatchError: Если в заголовке входного CSV нет обязательных колонок
        ConfigError: Если таблица циклов некорректна
        OSError: При ошибках чтения или записи файлов
    """
    logger.info("=" * 80)
    logger.info("Запуск пакетной обработки: %s", options.input_path)
    logger.info("=" * 80)

    with options.input_path.open("rb") as stream:
        parsed = parse_results(stream)

    cycle_table = CycleTable.load(options.cycles_path) if options.cycles_path else CycleTable()
    groups = group_elections(parsed.records, cycle_table)
    included = [group for group in groups if not group.exclusion_reason]

    partitions: dict[Partition, list[ElectionGroup]] = defaultdict(list)
    for group in included:
        partitions[(group.key.chamber, group.key.cycle_id)].append(group)

    fits: dict[Partition, PartitionFit] = {}
    if options.impute.kind == "model":
        logger.info("Оценка моделей импутации для %s разбиений...", len(partitions))
        fits = await _fit_partitions(partitions, config, options.seed)

    resolved, group_errors = _resolve_all(included, options.impute, fits, config, options.seed)
    for partition_fit in fits.values():
        group_errors.extend(partition_fit.errors)

    rows, metric_errors = election_table(resolved, options.taus)
    group_errors.extend(metric_errors)

    summaries = cycle_summary(rows)
    rate = persistence_rate(summaries, options.threshold)
    ranked = extremes(rows, config.EXTREMES_LIMIT, config.MIN_SEATS)

    writer = ReportWriter(options.out_dir)
    outputs: dict[str, Any] = {
        "cycles.json": {
            "threshold": options.threshold,
            "persistence_rate": rate,
            "cycles": [summary.model_dump(mode="json") for summary in summaries],
        },
        "election_table.json": [row.model_dump(mode="json") for row in rows],
        "errors.json": {
            "rows": [error.model_dump(mode="json") for error in parsed.errors],
            "groups": [error.model_dump(mode="json") for error in group_errors],
        },
        "exclusions.json": [
            {"label": group.key.label, "reason": group.exclusion_reason} for group in groups if group.exclusion_reason
        ],
        "model.json": {
            "mode": options.impute.model_dump(mode="json"),
            "models": [fits[key].model.model_dump(mode="json") for key in sorted(fits) if fits[key].model],
        },
        "summary.json": {
            "records": len(parsed.records),
            "row_errors": len(parsed.errors),
            "elections": len(groups),
            "excluded": len(groups) - len(included),
            "rows": len(rows),
            "uncontested": uncontested_summary(groups).model_dump(mode="json"),
        },
    }

    if options.impute.kind == "model":
        outputs["cv.json"] = [fits[key].cv.model_dump(mode="json") for key in sorted(fits) if fits[key].cv]

    if options.shift is not None:
        outputs["sensitivity.json"] = sensitivity_shift(resolved, options.shift).model_dump(mode="json")

    tasks = [
        writer.write_text("election_table.csv", render_rows_csv(rows, options.taus)),
        writer.write_text("extremes.csv", render_extremes_csv(ranked)),
        writer.write_text("heatmap.csv", render_heatmap_csv(heatmap_rows(rows))),
        *(writer.write_json(name, payload) for name, payload in outputs.items()),
    ]

    if options.svg:
        by_label = {election.key.label: election for election in resolved}
        for row in rows:
            if row.declination is None:
                continue
            election = by_label[row.label]
            svg = declination_diagram(make_election(election.shares), title=f"{row.state} {row.chamber} {row.year}")
            tasks.append(writer.write_text(f"svg/{row.label}.svg", svg))

    await asyncio.gather(*tasks)

    result = BatchResult(
        records=len(parsed.records),
        row_errors=len(parsed.errors),
        elections=len(groups),
        excluded=len(groups) - len(included),
        rows=len(rows),
        group_errors=len(group_errors),
        written=sorted(writer.written),
    )

    logger.info("=" * 80)
    logger.info(
        "Пакетная обработка завершена: выборов %s, строк %s, ошибок %s", result.elections, result.rows, result.group_errors
    )
    logger.info("Записано файлов: %s в %s", len(result.written), options.out_dir)
    logger.info("=" * 80)
    return result
