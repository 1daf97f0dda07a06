"""
Командная строка: метрики для одного вектора долей, пакетная обработка и проверка монотонности.

Коды возврата: 0 - успех, 1 - нарушение проверяемого свойства или
непредвиденная ошибка, 2 - ошибка использования или входных данных.
"""

import argparse
import asyncio
import json
import logging
import re
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from app.batch_runner import BatchOptions, run_batch
from app.exceptions import DeclinationError
from app.impute import parse_impute_mode
from app.metrics import make_election, metric_set
from app.settings import Settings, configure_logging, load_settings
from app.theorem_checker import DEFAULT_TAUS, run_theorem_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2

_SEPARATORS = re.compile(r"[,\s]+")


def parse_number_list(text: str) -> list[float]:
    """
    Разбор списка чисел, разделённых запятыми и/или пробельными символами.

    Raises:
        ValueError: Если элемент не является числом
    """
    items = [item for item in _SEPARATORS.split(text.strip()) if item]
    try:
        return [float(item) for item in items]
    except ValueError as e:
        raise ValueError(f"Некорректное число в списке: {text!r}") from e


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"ожидается целое число, получено {text!r}") from e
    if value < 1:
        raise argparse.ArgumentTypeError(f"ожидается положительное число, получено {value}")
    return value


def _taus_argument(text: str) -> list[float]:
    try:
        return parse_number_list(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="declination", description="Метрики асимметрии выборов по округам")
    parser.add_argument("--config", type=Path, default=None, help="JSON-файл с настройками")
    parser.add_argument("--log-level", default=None, help="Уровень логирования (DEBUG, INFO, WARNING, ...)")

    subparsers = parser.add_subparsers(dest="command", required=True)

    metrics = subparsers.add_parser("metrics", help="Метрики для одного вектора долей")
    source = metrics.add_mutually_exclusive_group(required=True)
    source.add_argument("--shares", help="Доли партии P через запятую")
    source.add_argument("--input", type=Path, help="Файл с долями (через запятую или по строкам)")
    metrics.add_argument("--taus", "--tau", dest="taus", type=_taus_argument, default=None, help="Значения τ")

    batch = subparsers.add_parser("batch", help="Пакетная обработка CSV с результатами по округам")
    batch.add_argument("--input", type=Path, required=True, help="CSV с результатами")
    batch.add_argument("--cycles", type=Path, default=None, help="JSON-таблица циклов редистрикции")
    batch.add_argument("--out-dir", type=Path, required=True, help="Выходной каталог")
    batch.add_argument("--taus", "--tau", dest="taus", type=_taus_argument, default=None, help="Значения τ")
    batch.add_argument("--impute", default="model", help="model | uniform[:W] | none")
    batch.add_argument("--seed", type=int, default=None, help="Seed для случайных выборок")
    batch.add_argument("--svg", action="store_true", help="Сохранять SVG-диаграммы")
    batch.add_argument("--shift", type=float, default=None, help="Сдвиг импутированных долей для анализа чувствительности")
    batch.add_argument("--threshold", type=float, default=None, help="Порог |δ̃| для устойчивости знака")

    theorem = subparsers.add_parser("theorem-check", help="Проверка монотонности δ и τ-gap на случайных выборах")
    theorem.add_argument("--trials", type=_positive_int, default=1000, help="Число испытаний")
    theorem.add_argument("--seed", type=int, default=0, help="Seed генератора")
    theorem.add_argument("--taus", "--tau", dest="taus", type=_taus_argument, default=None, help="Значения τ")

    return parser


def _print_json(payload: Any) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))


def cmd_metrics(args: argparse.Namespace, config: Settings) -> int:
    """Печать набора метрик в JSON; неопределённые значения - null."""
    text = args.shares if args.shares is not None else args.input.read_text(encoding="utf-8")
    taus = args.taus if args.taus is not None else config.DEFAULT_TAUS

    e = make_election(parse_number_list(text))
    metrics = metric_set(e, taus)

    payload = metrics.model_dump(mode="json", exclude={"tau_gaps"})
    payload["tau_gaps"] = {f"{tau:g}": value for tau, value in metrics.tau_gaps.items()}
    payload["n_districts"] = e.n_districts
    _print_json(payload)
    return EXIT_OK


def cmd_batch(args: argparse.Namespace, config: Settings) -> int:
    """Пакетная обработка; ошибки отдельных выборов не меняют код возврата."""
    options = BatchOptions(
        input_path=args.input,
        out_dir=args.out_dir,
        cycles_path=args.cycles,
        taus=tuple(args.taus if args.taus is not None else config.DEFAULT_TAUS),
        impute=parse_impute_mode(args.impute, config),
        seed=config.RANDOM_SEED if args.seed is None else args.seed,
        svg=args.svg,
        shift=args.shift,
        threshold=config.PERSISTENCE_THRESHOLD if args.threshold is None else args.threshold,
    )
    if options.threshold < 0:
        raise ValueError(f"Порог должен быть неотрицательным, получено {options.threshold}")

    result = asyncio.run(run_batch(options, config))
    _print_json(result.model_dump(mode="json"))
    return EXIT_OK


def cmd_theorem_check(args: argparse.Namespace, config: Settings) -> int:
    """Прогон проверки; код 1 при любом нарушении или недоборе испытаний."""
    taus = args.taus if args.taus is not None else DEFAULT_TAUS
    report = run_theorem_suite(args.trials, args.seed, taus)

    payload = report.model_dump(mode="json")
    payload["total_violations"] = report.total_violations
    payload["passed"] = report.passed
    _print_json(payload)

    if not report.passed:
        logger.error(
            "Проверка не пройдена: нарушений %s, испытаний %s из %s", report.total_violations, report.trials, report.requested
        )
        return EXIT_VIOLATION
    return EXIT_OK


COMMANDS = {
    "metrics": cmd_metrics,
    "batch": cmd_batch,
    "theorem-check": cmd_theorem_check,
}


def main(argv: Sequence[str] | None = None) -> int:
    """
    Точка входа командной строки.

    Args:
        argv: Аргументы без имени программы (по умолчанию sys.argv[1:])

    Returns:
        int: Код возврата
    """
    args = build_parser().parse_args(argv)

    try:
        config = load_settings(args.config, LOG_LEVEL=args.log_level)
    except DeclinationError as e:
        print(f"Ошибка конфигурации: {e}", file=sys.stderr)
        return EXIT_USAGE

    configure_logging(config.log_level_value)

    try:
        return COMMANDS[args.command](args, config)
    except (DeclinationError, ValueError, OSError) as e:
        logger.debug("Ошибка входных данных", exc_info=True)
        print(f"Ошибка: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # pylint: disable=broad-exception-caught
        logger.error("Критическая ошибка при выполнении команды %s: %s", args.command, e, exc_info=True)
        return EXIT_VIOLATION


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
