import logging
import sys
from pathlib import Path
from typing import Any

from pydantic import Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

from app.exceptions import ConfigError

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class Settings(BaseSettings):
    """Настройки расчёта метрик асимметрии, импутации и отчётов."""

    LOG_LEVEL: str = Field(default="INFO", description="Уровень логирования")

    DEFAULT_TAUS: list[float] = Field(
        default=[0.0, 0.4, 1.0, 2.0],
        description="Значения τ, для которых по умолчанию считается τ-gap",
    )

    UNIFORM_WINNER_SHARE: float = Field(
        default=0.65,
        ge=0.0,
        le=1.0,
        description="Доля голосов победителя в базовой (равномерной) импутации",
    )
    WIN_CLAMP_SHARE: float = Field(
        default=0.505,
        description="Значение, на которое заменяется импутированная доля ≤ 0.5 при победе демократа",
    )
    LOSS_CLAMP_SHARE: float = Field(
        default=0.495,
        description="Значение, на которое заменяется импутированная доля > 0.5 при поражении демократа",
    )
    SHARE_CLIP_LOW: float = Field(default=0.005, description="Нижняя граница импутированной доли")
    SHARE_CLIP_HIGH: float = Field(default=0.995, description="Верхняя граница импутированной доли")

    RIDGE_GRID: list[float] = Field(
        default=[0.01, 0.1, 1.0, 10.0],
        description="Сетка штрафов ridge для подбора по каждому семейству эффектов",
    )
    RIDGE_LAMBDAS: dict[str, float] | None = Field(
        default=None,
        description="Фиксированные штрафы по семействам (state, district, year); отключают подбор по сетке",
    )
    BETA_RIDGE_LAMBDA: float = Field(
        default=1e-6,
        gt=0.0,
        description="Штраф для коэффициентов β (победитель и инкумбенты)",
    )
    VALIDATION_FRACTION: float = Field(
        default=0.2,
        gt=0.0,
        lt=1.0,
        description="Доля контестных гонок в валидационной выборке при подборе штрафов",
    )
    CV_HOLDOUT: int = Field(
        default=100,
        ge=1,
        description="Количество контестных гонок, откладываемых при кросс-валидации",
    )

    PERSISTENCE_THRESHOLD: float = Field(
        default=0.47,
        ge=0.0,
        description="Порог |δ̃| для расчёта устойчивости знака внутри цикла",
    )
    EXTREMES_LIMIT: int = Field(default=10, ge=0, description="Длина списков экстремальных значений δ̃")
    MIN_SEATS: int = Field(default=1, ge=1, description="Минимальное число округов для попадания в рейтинг")

    RANDOM_SEED: int = Field(default=0, description="Seed по умолчанию для всех случайных выборок")
    MAX_WORKERS: int = Field(default=4, ge=1, description="Число параллельных задач при пакетной обработке")

    model_config = SettingsConfigDict(extra="ignore")

    @field_validator("RIDGE_GRID")
    @classmethod
    def _check_grid(cls, value: list[float]) -> list[float]:
        if not value or any(penalty <= 0 for penalty in value):
            raise ValueError("сетка штрафов должна быть непустой и строго положительной")
        return value

    @field_validator("RIDGE_LAMBDAS")
    @classmethod
    def _check_lambdas(cls, value: dict[str, float] | None) -> dict[str, float] | None:
        if value is None:
            return value
        if set(value) != {"state", "district", "year"}:
            raise ValueError("нужны штрафы ровно для семейств state, district, year")
        if any(penalty <= 0 for penalty in value.values()):
            raise ValueError("штрафы должны быть строго положительными")
        return value

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        """Оставляет только явно переданные значения: окружение не читается."""
        return (init_settings,)

    @property
    def log_level_value(self) -> int:
        """Возвращает числовой уровень логирования для logging.basicConfig."""
        return getattr(logging, self.LOG_LEVEL.upper(), logging.INFO)


def load_settings(config_path: Path | None = None, **overrides: Any) -> Settings:
    """
    Загрузка настроек из JSON-файла конфигурации.

    Args:
        config_path: Путь к JSON-файлу (None - значения по умолчанию)
        **overrides: Значения, имеющие приоритет над файлом

    Returns:
        Settings: Проверенные настройки

    Raises:
        ConfigError: Если файл не читается или значения не проходят проверку
    """
    values: dict[str, Any] = {}

    if config_path is not None:
        try:
            raw = config_path.read_text(encoding="utf-8")
            values = Settings.model_validate_json(raw).model_dump(exclude_unset=True)
        except OSError as e:
            raise ConfigError(f"Не удалось прочитать файл конфигурации {config_path}: {e}") from e
        except ValidationError as e:
            raise ConfigError(f"Некорректная конфигурация {config_path}: {e}") from e

    values.update({key: value for key, value in overrides.items() if value is not None})

    try:
        return Settings(**values)
    except ValidationError as e:
        raise ConfigError(f"Некорректные значения настроек: {e}") from e


def configure_logging(level: int | str = logging.INFO) -> None:
    """Настройка корневого логгера; вывод в stderr, чтобы не смешивать логи с JSON-результатами."""
    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        handlers=[
            logging.StreamHandler(sys.stderr),
        ],
        force=True,
    )


settings = Settings()
