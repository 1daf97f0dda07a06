"""
Импутация двухпартийной доли для неконтестных гонок.

Многоуровневая модель доли демократа
    y = 1/2 + σ_штат + φ_округ + γ_год + β1·W^D + β2·W^R + β3·I^D + β4·I^R + ε
оценивается отдельно для каждой пары (палата, цикл) ridge-регрессией:
штраф по семейству эффектов играет роль сжатия случайных эффектов.
"""

import logging
import math
import zlib
from collections import defaultdict
from collections.abc import Iterable, Sequence
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field
from scipy import sparse, stats
from scipy.sparse.linalg import spsolve

from app.exceptions import (
    ConfigError,
    EmptyEffectPoolError,
    InsufficientDataError,
    MissingEffectError,
)
from app.ingest import Chamber, DistrictRaceRecord, ElectionGroup, ElectionKey, Party, two_party_share
from app.metrics import HALF, declination, make_election
from app.settings import Settings, settings

logger = logging.getLogger(__name__)

FAMILIES: tuple[str, ...] = ("state", "district", "year")
BETA_NAMES: tuple[str, ...] = ("beta_win_d", "beta_win_r", "beta_inc_d", "beta_inc_r")
WIN_DIFFERENCE = "beta_win_d_minus_r"


class RaceObservation(BaseModel):
    """Гонка в терминах модели: уровни эффектов, индикаторы и доля (None для неконтестной)."""

    model_config = ConfigDict(frozen=True)

    state: str
    chamber: Chamber
    cycle_id: str
    year: int
    district_id: str
    winner: Party
    dem_incumbent: bool = False
    rep_incumbent: bool = False
    share: float | None = Field(default=None, ge=0.0, le=1.0)

    @property
    def district_key(self) -> str:
        """Ключ эффекта округа: округ внутри цикла штата."""
        return f"{self.state}:{self.district_id}:{self.cycle_id}"

    @property
    def contested(self) -> bool:
        return self.share is not None

    @classmethod
    def from_record(cls, record: DistrictRaceRecord, cycle_id: str) -> "RaceObservation":
        """
        Наблюдение из записи гонки.

        Raises:
            BothZeroError: Если у обоих кандидатов ноль голосов
        """
        return cls(
            state=record.state,
            chamber=record.chamber,
            cycle_id=cycle_id,
            year=record.year,
            district_id=record.district_id,
            winner=record.winner,
            dem_incumbent=record.dem_incumbent,
            rep_incumbent=record.rep_incumbent,
            share=two_party_share(record),
        )


class ImputationModel(BaseModel):
    """Оценённая модель одного разбиения (палата, цикл)."""

    chamber: Chamber
    cycle_id: str
    intercept: float = HALF
    state_effects: dict[str, float]
    district_effects: dict[str, float]
    year_effects: dict[int, float]
    beta_win_d: float
    beta_win_r: float
    beta_inc_d: float
    beta_inc_r: float
    beta_standard_errors: dict[str, float]
    ridge_lambda: dict[str, float]
    residual_sd: float
    n_observations: int
    district_holders: dict[str, list[Party]] = Field(
        default_factory=dict,
        description="Партии, выигрывавшие округ в течение цикла (включая неконтестные гонки)",
    )


class ImputeMode(BaseModel):
    """Способ заполнения неконтестных гонок: модель, равномерная доля победителя или без импутации."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["model", "uniform", "none"]
    winner_share: float | None = Field(default=None, ge=0.0, le=1.0)


class CrossValidationReport(BaseModel):
    """RMSE модели и равномерной базовой импутации на отложенных контестных гонках."""

    chamber: Chamber
    cycle_id: str
    n_train: int
    n_holdout: int
    ridge_lambda: dict[str, float]
    model_rmse: float
    baseline_rmse: float


class ResolvedElection(BaseModel):
    """Выборы с долями по всем округам в порядке district_id и флагами импутации."""

    model_config = ConfigDict(frozen=True)

    key: ElectionKey
    district_ids: tuple[str, ...]
    shares: tuple[float, ...]
    imputed: tuple[bool, ...]

    @property
    def imputed_fraction(self) -> float:
        """Доля округов с импутированной долей."""
        return sum(self.imputed) / len(self.imputed) if self.imputed else 0.0


class SensitivityPoint(BaseModel):
    label: str
    imputed_fraction: float
    delta_change: float


class SensitivityReport(BaseModel):
    """Изменение деклинации при систематическом сдвиге импутированных долей."""

    shift: float
    points: list[SensitivityPoint]
    omitted: int
    slope: float | None
    intercept: float | None
    r_squared: float | None


def parse_impute_mode(text: str, config: Settings = settings) -> ImputeMode:
    """
    Разбор значения --impute: "model", "none", "uniform" или "uniform:W".

    Raises:
        ConfigError: Если значение не распознано
    """
    value = text.strip().lower()
    if value in ("model", "none"):
        return ImputeMode(kind=value)  # type: ignore[arg-type]

    if value == "uniform":
        return ImputeMode(kind="uniform", winner_share=config.UNIFORM_WINNER_SHARE)

    if value.startswith("uniform:"):
        try:
            share = float(value.removeprefix("uniform:"))
        except ValueError as e:
            raise ConfigError(f"Некорректная доля победителя в режиме импутации: {text!r}") from e
        if not 0.0 <= share <= 1.0:
            raise ConfigError(f"Доля победителя вне [0, 1]: {share}")
        return ImputeMode(kind="uniform", winner_share=share)

    raise ConfigError(f"Неизвестный режим импутации: {text!r}")


def observations_from_groups(groups: Iterable[ElectionGroup]) -> list[RaceObservation]:
    """Наблюдения из неисключённых выборов; гонки с нулём голосов у обоих кандидатов пропускаются."""
    observations: list[RaceObservation] = []
    for group in groups:
        if group.exclusion_reason:
            continue
        for record in group.records:
            if record.dem_votes == 0 and record.rep_votes == 0:
                logger.warning("Пропущена гонка без голосов: %s округ %s", group.key.label, record.district_id)
                continue
            observations.append(RaceObservation.from_record(record, group.key.cycle_id))
    return observations


def uniform_baseline(r: RaceObservation, winner_share: float = settings.UNIFORM_WINNER_SHARE) -> float:
    """Равномерная импутация: победитель получает winner_share голосов."""
    return winner_share if r.winner is Party.D else 1.0 - winner_share


def clamp_to_winner(raw: float, winner: Party, config: Settings = settings) -> float:
    """
    Согласование импутированной доли с известным победителем.

    Доля ≤ 0.5 при победе демократа заменяется на WIN_CLAMP_SHARE,
    доля > 0.5 при его поражении - на LOSS_CLAMP_SHARE; результат
    ограничивается отрезком [SHARE_CLIP_LOW, SHARE_CLIP_HIGH].
    """
    value = raw
    if winner is Party.D and value <= HALF:
        value = config.WIN_CLAMP_SHARE
    elif winner is Party.R and value > HALF:
        value = config.LOSS_CLAMP_SHARE
    return float(np.clip(value, config.SHARE_CLIP_LOW, config.SHARE_CLIP_HIGH))


def _levels(observations: Sequence[RaceObservation]) -> dict[str, list[str] | list[int]]:
    return {
        "state": sorted({o.state for o in observations}),
        "district": sorted({o.district_key for o in observations}),
        "year": sorted({o.year for o in observations}),
    }


def _design_matrix(
    observations: Sequence[RaceObservation],
    levels: dict[str, list[str] | list[int]],
) -> sparse.csr_matrix:
    """Разреженная матрица индикаторов: эффекты штатов, округов, лет, затем четыре β."""
    offsets: dict[str, dict[str | int, int]] = {}
    position = 0
    for family in FAMILIES:
        offsets[family] = {level: position + i for i, level in enumerate(levels[family])}
        position += len(levels[family])
    beta_offset = position

    rows: list[int] = []
    cols: list[int] = []
    for i, o in enumerate(observations):
        columns = [
            offsets["state"][o.state],
            offsets["district"][o.district_key],
            offsets["year"][o.year],
            beta_offset if o.winner is Party.D else beta_offset + 1,
        ]
        if o.dem_incumbent:
            columns.append(beta_offset + 2)
        if o.rep_incumbent:
            columns.append(beta_offset + 3)
        rows.extend([i] * len(columns))
        cols.extend(columns)

    return sparse.csr_matrix(
        (np.ones(len(rows)), (rows, cols)),
        shape=(len(observations), beta_offset + len(BETA_NAMES)),
    )


def _holders(observations: Iterable[RaceObservation]) -> dict[str, list[Party]]:
    winners: dict[str, set[Party]] = defaultdict(set)
    for o in observations:
        winners[o.district_key].add(o.winner)
    return {key: sorted(parties) for key, parties in sorted(winners.items())}


def _partition_of(observations: Sequence[RaceObservation]) -> tuple[Chamber, str]:
    partitions = {(o.chamber, o.cycle_id) for o in observations}
    if len(partitions) != 1:
        raise ValueError(f"Наблюдения должны относиться к одному разбиению, найдено: {len(partitions)}")
    return partitions.pop()


def _solve(
    observations: Sequence[RaceObservation],
    lambdas: dict[str, float],
    beta_lambda: float,
) -> ImputationModel:
    contested = [o for o in observations if o.share is not None]
    chamber, cycle_id = _partition_of(observations)
    if not contested:
        raise InsufficientDataError(f"Нет контестных гонок для разбиения {chamber}/{cycle_id}")

    levels = _levels(contested)
    design = _design_matrix(contested, levels)
    target = np.array([o.share for o in contested], dtype=np.float64) - HALF

    penalty = np.concatenate(
        [np.full(len(levels[family]), lambdas[family]) for family in FAMILIES] + [np.full(len(BETA_NAMES), beta_lambda)]
    )
    gram = (design.T @ design).tocsc()
    system = (gram + sparse.diags(penalty)).tocsc()
    coefficients = np.asarray(spsolve(system, design.T @ target), dtype=np.float64)

    residuals = target - design @ coefficients
    residual_sd = float(np.sqrt(np.mean(residuals**2)))

    # Ковариация β для ridge-оценки: σ²·A⁻¹·XᵀX·A⁻¹, нужны только последние столбцы A⁻¹.
    # Последний столбец - контраст β1 − β2: он ортогонален вырожденным направлениям W^D + W^R = 1
    n_columns = design.shape[1]
    beta_offset = n_columns - len(BETA_NAMES)
    unit = np.zeros((n_columns, len(BETA_NAMES) + 1))
    unit[beta_offset:, : len(BETA_NAMES)] = np.eye(len(BETA_NAMES))
    unit[beta_offset, -1] = 1.0
    unit[beta_offset + 1, -1] = -1.0
    inverse_columns = np.asarray(spsolve(system, unit)).reshape(n_columns, len(BETA_NAMES) + 1)
    beta_cov = residual_sd**2 * inverse_columns.T @ (gram @ inverse_columns)
    beta_se = np.sqrt(np.clip(np.diag(beta_cov), 0.0, None))

    effects: dict[str, NDArray[np.float64]] = {}
    position = 0
    for family in FAMILIES:
        effects[family] = coefficients[position : position + len(levels[family])].copy()
        position += len(levels[family])
    betas = coefficients[position:].copy()

    # W^D + W^R = 1 в каждой гонке: среднее семейства переносится в β1 и β2 без изменения прогноза
    for family in FAMILIES:
        mean = float(effects[family].mean())
        effects[family] -= mean
        betas[0] += mean
        betas[1] += mean

    return ImputationModel(
        chamber=chamber,
        cycle_id=cycle_id,
        state_effects={str(level): float(v) for level, v in zip(levels["state"], effects["state"])},
        district_effects={str(level): float(v) for level, v in zip(levels["district"], effects["district"])},
        year_effects={int(level): float(v) for level, v in zip(levels["year"], effects["year"])},
        beta_win_d=float(betas[0]),
        beta_win_r=float(betas[1]),
        beta_inc_d=float(betas[2]),
        beta_inc_r=float(betas[3]),
        beta_standard_errors={name: float(se) for name, se in zip((*BETA_NAMES, WIN_DIFFERENCE), beta_se)},
        ridge_lambda=dict(lambdas),
        residual_sd=residual_sd,
        n_observations=len(contested),
        district_holders=_holders(observations),
    )


def _rmse(predicted: Sequence[float], actual: Sequence[float]) -> float:
    diff = np.asarray(predicted, dtype=np.float64) - np.asarray(actual, dtype=np.float64)
    return float(np.sqrt(np.mean(diff**2)))


def _validation_prediction(model: ImputationModel, o: RaceObservation, config: Settings) -> float:
    effect = model.district_effects.get(o.district_key, 0.0)
    return impute_share(model, o, district_effect=effect, config=config)


def select_lambdas(
    observations: Sequence[RaceObservation],
    config: Settings = settings,
    seed: int | None = None,
) -> dict[str, float]:
    """
    Подбор штрафов по семействам эффектов координатным проходом по сетке.

    Контестные гонки делятся на обучающую и валидационную части (seed);
    для каждого семейства по очереди выбирается значение сетки с минимальной
    RMSE на валидации при фиксированных остальных. Если гонок слишком мало
    для разбиения, возвращается наименьшее значение сетки для всех семейств.

    Returns:
        dict[str, float]: Штрафы для state, district, year
    """
    grid = sorted(config.RIDGE_GRID)
    contested = [o for o in observations if o.share is not None]
    n_validation = int(round(len(contested) * config.VALIDATION_FRACTION))

    if len(contested) < 2 or n_validation == 0 or n_validation == len(contested):
        logger.info("Недостаточно гонок для подбора штрафов (%s), берётся %s", len(contested), grid[0])
        return {family: grid[0] for family in FAMILIES}

    rng = np.random.default_rng(config.RANDOM_SEED if seed is None else seed)
    order = rng.permutation(len(contested))
    validation = [contested[i] for i in order[:n_validation]]
    held = {id(o) for o in validation}
    training = [o for o in observations if id(o) not in held]

    actual = [o.share for o in validation if o.share is not None]
    current = {family: grid[len(grid) // 2] for family in FAMILIES}

    for family in FAMILIES:
        scores: list[tuple[float, float]] = []
        for candidate in grid:
            lambdas = {**current, family: candidate}
            model = _solve(training, lambdas, config.BETA_RIDGE_LAMBDA)
            predicted = [_validation_prediction(model, o, config) for o in validation]
            scores.append((_rmse(predicted, actual), candidate))
        best_rmse, current[family] = min(scores)
        logger.debug("Штраф %s = %s (RMSE %.5f)", family, current[family], best_rmse)

    logger.info("Подобраны штрафы: %s", current)
    return current


def fit(
    observations: Sequence[RaceObservation],
    config: Settings = settings,
    lambdas: dict[str, float] | None = None,
    seed: int | None = None,
) -> ImputationModel:
    """
    Оценка модели по контестным гонкам одного разбиения (палата, цикл).

    Неконтестные наблюдения в регрессии не участвуют, но учитываются
    в списке партий, владевших округом, для запасных эффектов.

    Args:
        observations: Гонки разбиения (контестные и неконтестные)
        config: Настройки
        lambdas: Штрафы по семействам; по умолчанию RIDGE_LAMBDAS или подбор по сетке
        seed: Seed валидационного разбиения при подборе штрафов

    Returns:
        ImputationModel: Центрированные эффекты, β и их стандартные ошибки

    Raises:
        InsufficientDataError: Если в разбиении нет контестных гонок
    """
    if not observations:
        raise InsufficientDataError("Нет наблюдений для оценки модели")
    if not any(o.share is not None for o in observations):
        chamber, cycle_id = _partition_of(observations)
        raise InsufficientDataError(f"Нет контестных гонок для разбиения {chamber}/{cycle_id}")

    chosen = lambdas or config.RIDGE_LAMBDAS or select_lambdas(observations, config, seed)
    model = _solve(observations, chosen, config.BETA_RIDGE_LAMBDA)

    logger.info(
        "Модель %s/%s: гонок %s, округов %s, σ_ε = %.4f",
        model.chamber,
        model.cycle_id,
        model.n_observations,
        len(model.district_effects),
        model.residual_sd,
    )
    return model


def raw_prediction(model: ImputationModel, r: RaceObservation, district_effect: float) -> float:
    """Линейный прогноз модели без согласования с победителем."""
    return (
        model.intercept
        + model.state_effects.get(r.state, 0.0)
        + district_effect
        + model.year_effects.get(r.year, 0.0)
        + (model.beta_win_d if r.winner is Party.D else model.beta_win_r)
        + (model.beta_inc_d if r.dem_incumbent else 0.0)
        + (model.beta_inc_r if r.rep_incumbent else 0.0)
    )


def impute_share(
    model: ImputationModel,
    r: RaceObservation,
    district_effect: float | None = None,
    config: Settings = settings,
) -> float:
    """
    Импутированная доля демократа для гонки.

    Args:
        model: Модель разбиения гонки
        r: Гонка
        district_effect: Эффект округа, если его нет в модели (например, из fallback_district_effect)
        config: Настройки границ

    Returns:
        float: Доля в [SHARE_CLIP_LOW, SHARE_CLIP_HIGH] на стороне победителя

    Raises:
        MissingEffectError: Если эффекта округа нет и он не передан
    """
    effect = model.district_effects.get(r.district_key) if district_effect is None else district_effect
    if effect is None:
        raise MissingEffectError(f"Нет эффекта округа {r.district_key}")

    return clamp_to_winner(raw_prediction(model, r, effect), r.winner, config)


def fallback_district_effect(model: ImputationModel, r: RaceObservation, rng_seed: int) -> float:
    """
    Случайный эффект для округа, не имеющего ни одной контестной гонки в цикле.

    Если округ весь цикл выигрывала одна партия, эффект выбирается из
    эффектов округов, которые весь цикл выигрывала та же партия; иначе
    (или если владельцы неизвестны) - из всех эффектов модели.

    Raises:
        EmptyEffectPoolError: Если пул эффектов пуст
    """
    holders = model.district_holders.get(r.district_key, [])
    if len(holders) == 1:
        pool = [
            effect
            for key, effect in sorted(model.district_effects.items())
            if model.district_holders.get(key) == holders
        ]
    else:
        pool = [effect for _, effect in sorted(model.district_effects.items())]

    if not pool:
        raise EmptyEffectPoolError(f"Пустой пул эффектов для округа {r.district_key} (владельцы {holders})")

    rng = np.random.default_rng([rng_seed, zlib.crc32(r.district_key.encode("utf-8"))])
    effect = pool[int(rng.integers(len(pool)))]
    logger.debug("Запасной эффект для %s: %.4f (пул %s)", r.district_key, effect, len(pool))
    return effect


def cross_validate(
    observations: Sequence[RaceObservation],
    config: Settings = settings,
    rng_seed: int | None = None,
) -> CrossValidationReport:
    """
    Кросс-валидация: CV_HOLDOUT случайных контестных гонок откладываются,
    модель переоценивается, считается RMSE модели и равномерной импутации.

    Raises:
        InsufficientDataError: Если контестных гонок меньше двух
    """
    seed = config.RANDOM_SEED if rng_seed is None else rng_seed
    contested = [o for o in observations if o.share is not None]
    if len(contested) < 2:
        raise InsufficientDataError(f"Для кросс-валидации нужно хотя бы 2 контестные гонки, есть {len(contested)}")

    n_holdout = min(config.CV_HOLDOUT, len(contested) - 1)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(contested))
    holdout = [contested[i] for i in sorted(order[:n_holdout])]
    held = {id(o) for o in holdout}
    training = [o for o in observations if id(o) not in held]

    model = fit(training, config, seed=seed)

    predicted: list[float] = []
    for o in holdout:
        effect = model.district_effects.get(o.district_key)
        if effect is None:
            effect = fallback_district_effect(model, o, seed)
        predicted.append(impute_share(model, o, district_effect=effect, config=config))

    actual = [o.share for o in holdout if o.share is not None]
    baseline = [uniform_baseline(o, config.UNIFORM_WINNER_SHARE) for o in holdout]

    report = CrossValidationReport(
        chamber=model.chamber,
        cycle_id=model.cycle_id,
        n_train=model.n_observations,
        n_holdout=n_holdout,
        ridge_lambda=model.ridge_lambda,
        model_rmse=_rmse(predicted, actual),
        baseline_rmse=_rmse(baseline, actual),
    )
    logger.info(
        "Кросс-валидация %s/%s: RMSE модели %.4f, базовой импутации %.4f",
        report.chamber,
        report.cycle_id,
        report.model_rmse,
        report.baseline_rmse,
    )
    return report


def resolve_election(
    group: ElectionGroup,
    mode: ImputeMode,
    model: ImputationModel | None = None,
    config: Settings = settings,
    seed: int | None = None,
) -> ResolvedElection:
    """
    Доли по всем округам выборов: фактические для контестных гонок, импутированные для остальных.

    Контестная гонка с долей ровно 0.5 и победителем D получает WIN_CLAMP_SHARE.
    В режиме "none" неконтестная гонка получает долю 1 или 0 по победителю.

    Raises:
        BothZeroError: Если в гонке ноль голосов у обоих кандидатов
        InsufficientDataError: Если для режима "model" нет модели
    """
    rng_seed = config.RANDOM_SEED if seed is None else seed
    shares: list[float] = []
    imputed: list[bool] = []

    for record in group.records:
        o = RaceObservation.from_record(record, group.key.cycle_id)

        if o.share is not None:
            share = o.share
            if share == HALF and o.winner is Party.D:
                share = config.WIN_CLAMP_SHARE
            shares.append(share)
            imputed.append(False)
            continue

        if mode.kind == "none":
            shares.append(1.0 if o.winner is Party.D else 0.0)
        elif mode.kind == "uniform":
            winner_share = config.UNIFORM_WINNER_SHARE if mode.winner_share is None else mode.winner_share
            shares.append(uniform_baseline(o, winner_share))
        else:
            if model is None:
                raise InsufficientDataError(f"Нет модели импутации для выборов {group.key.label}")
            effect = model.district_effects.get(o.district_key)
            if effect is None:
                effect = fallback_district_effect(model, o, rng_seed)
            shares.append(impute_share(model, o, district_effect=effect, config=config))
        imputed.append(True)

    return ResolvedElection(
        key=group.key,
        district_ids=tuple(record.district_id for record in group.records),
        shares=tuple(shares),
        imputed=tuple(imputed),
    )


def sensitivity_shift(resolved: Iterable[ResolvedElection], shift: float) -> SensitivityReport:
    """
    Чувствительность деклинации к систематической ошибке импутации.

    Ко всем импутированным долям прибавляется shift (с обрезкой до [0, 1]),
    деклинация пересчитывается; выборы, где одна партия выиграла все места,
    пропускаются. Изменение δ регрессируется на долю импутированных округов.

    Raises:
        ValueError: Если shift не конечен
    """
    if not math.isfinite(shift):
        raise ValueError(f"Сдвиг должен быть конечным числом, получено {shift}")

    points: list[SensitivityPoint] = []
    omitted = 0
    for election in resolved:
        shifted = [
            min(1.0, max(0.0, share + shift)) if flag else share
            for share, flag in zip(election.shares, election.imputed)
        ]
        before = declination(make_election(election.shares))
        after = declination(make_election(shifted))
        if before is None or after is None:
            omitted += 1
            continue

        points.append(
            SensitivityPoint(
                label=election.key.label,
                imputed_fraction=election.imputed_fraction,
                delta_change=after - before,
            )
        )

    slope: float | None = None
    intercept: float | None = None
    r_squared: float | None = None
    x = np.array([point.imputed_fraction for point in points])
    y = np.array([point.delta_change for point in points])

    if len(points) >= 2 and np.ptp(x) > 0:
        regression = stats.linregress(x, y)
        slope, intercept = float(regression.slope), float(regression.intercept)
        if np.ptp(y) > 0:
            r_squared = float(regression.rvalue**2)
    elif len(points) >= 2:
        logger.warning("Все выборы имеют одинаковую долю импутации: регрессия не определена")

    logger.info("Анализ чувствительности: сдвиг %s, выборов %s, пропущено %s, наклон %s", shift, len(points), omitted, slope)
    return SensitivityReport(
        shift=shift,
        points=points,
        omitted=omitted,
        slope=slope,
        intercept=intercept,
        r_squared=r_squared,
    )
