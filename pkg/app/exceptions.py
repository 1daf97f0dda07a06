class DeclinationError(Exception):
    """Базовое исключение пакета."""


class ConfigError(DeclinationError):
    """Некорректный файл или значения конфигурации."""


class EmptyElectionError(DeclinationError):
    """Выборы без округов."""

    def __init__(self) -> None:
        super().__init__("Вектор долей голосов пуст")


class InvalidShareError(DeclinationError):
    """Доля голосов вне отрезка [0, 1]."""

    def __init__(self, index: int, value: float) -> None:
        self.index = index
        self.value = value
        super().__init__(f"Доля голосов вне [0, 1]: индекс {index}, значение {value}")


class InvalidTauError(DeclinationError):
    """Отрицательное или нечисловое τ."""

    def __init__(self, tau: float) -> None:
        self.tau = tau
        super().__init__(f"τ должно быть конечным неотрицательным числом, получено {tau}")


class InvalidPlanError(DeclinationError):
    """План переноса голосов нарушает ограничение."""

    def __init__(self, reason: str) -> None:
        self.reason = reason
        super().__init__(reason)


class DegenerateElectionError(DeclinationError):
    """Одна из партий выиграла все округа."""


class UndefinedDeclinationError(DeclinationError):
    """Деклинация не определена (k = 0 или k' = 0)."""


class SchemaMismatchError(DeclinationError):
    """В заголовке CSV отсутствуют обязательные колонки."""

    def __init__(self, missing: list[str]) -> None:
        self.missing = missing
        super().__init__(f"Отсутствуют обязательные колонки: {', '.join(missing)}")


class BothZeroError(DeclinationError):
    """У обоих кандидатов ноль голосов."""


class InsufficientDataError(DeclinationError):
    """Недостаточно контестных гонок для подгонки модели."""


class MissingEffectError(DeclinationError):
    """Для округа нет оценённого эффекта и не задан запасной эффект."""


class EmptyEffectPoolError(DeclinationError):
    """Пул эффектов округов для случайного выбора пуст."""
