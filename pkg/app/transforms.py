"""
P-упаковка (packing) и P-дробление (cracking) как преобразования выборов.

Голоса партии P переносятся из округа k+1 (первого выигранного P) либо
в проигранные округа 1..k (cracking), либо в выигранные округа k+2..N
(packing); после переноса округ k+1 проигрывается партией P.
Q-преобразования получаются отражением mirror_q.
"""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.exceptions import DegenerateElectionError, InvalidPlanError
from app.metrics import HALF, Election, make_election, split

logger = logging.getLogger(__name__)

CONSERVATION_TOLERANCE = 1e-12
BOUNDARY_MARGIN = 1e-6
HEADROOM_SAFETY = 1e-9


class CrackPlan(BaseModel):
    """План P-дробления: округ-источник k+1, его новая доля и приращения округам 1..k."""

    model_config = ConfigDict(frozen=True)

    source_index: int = Field(ge=1, description="Номер округа k+1 (с единицы)")
    new_source_share: float = Field(ge=0.0)
    allocation: tuple[float, ...]


class PackPlan(BaseModel):
    """План P-упаковки: округ-источник k+1, его новая доля и приращения округам k+2..N."""

    model_config = ConfigDict(frozen=True)

    source_index: int = Field(ge=1, description="Номер округа k+1 (с единицы)")
    new_source_share: float = Field(ge=0.0)
    allocation: tuple[float, ...]


def _check_common(e: Election, plan: CrackPlan | PackPlan, n_recipients: int) -> tuple[int, float]:
    """Общие проверки плана; возвращает k и исходную долю округа k+1."""
    indices = split(e)
    if indices.k_prime == 0:
        raise InvalidPlanError("партия P не выиграла ни одного округа: нет округа k+1")

    if plan.source_index != indices.k + 1:
        raise InvalidPlanError(f"источник должен быть округом k+1 = {indices.k + 1}, указан {plan.source_index}")

    if len(plan.allocation) != n_recipients:
        raise InvalidPlanError(f"ожидается {n_recipients} приращений, получено {len(plan.allocation)}")

    if any(value < 0 for value in plan.allocation):
        raise InvalidPlanError("приращения должны быть неотрицательными")

    source_share = e.shares[indices.k]
    if plan.new_source_share > HALF:
        raise InvalidPlanError("округ-источник должен стать проигранным: новая доля превышает 1/2")

    moved = source_share - plan.new_source_share
    if abs(sum(plan.allocation) - moved) > CONSERVATION_TOLERANCE:
        raise InvalidPlanError(
            f"нарушено сохранение голосов: перенесено {moved}, распределено {sum(plan.allocation)}"
        )

    return indices.k, source_share


def apply_crack(e: Election, plan: CrackPlan) -> Election:
    """
    Применение плана P-дробления.

    Args:
        e: Исходные выборы
        plan: План переноса голосов из округа k+1 в округа 1..k

    Returns:
        Election: Новые выборы (доли пересортированы)

    Raises:
        InvalidPlanError: Если план нарушает одно из ограничений
    """
    k = split(e).k
    _check_common(e, plan, n_recipients=k)

    shares = list(e.shares)
    for i, increment in enumerate(plan.allocation):
        shares[i] += increment
        if shares[i] > HALF:
            raise InvalidPlanError(f"получатель превышает 1/2: округ {i + 1}, доля {shares[i]}")

    shares[k] = plan.new_source_share

    logger.debug("P-дробление: округ %s -> %.6f", plan.source_index, plan.new_source_share)
    return make_election(shares, e.party_p_name, e.party_q_name)


def apply_pack(e: Election, plan: PackPlan) -> Election:
    """
    Применение плана P-упаковки.

    Args:
        e: Исходные выборы
        plan: План переноса голосов из округа k+1 в округа k+2..N

    Returns:
        Election: Новые выборы (доли пересортированы)

    Raises:
        InvalidPlanError: Если план нарушает одно из ограничений
    """
    k = split(e).k
    _check_common(e, plan, n_recipients=e.n_districts - k - 1)

    shares = list(e.shares)
    for offset, increment in enumerate(plan.allocation):
        i = k + 1 + offset
        shares[i] += increment
        if shares[i] > 1.0:
            raise InvalidPlanError(f"доля превышает 1: округ {i + 1}, доля {shares[i]}")

    shares[k] = plan.new_source_share

    logger.debug("P-упаковка: округ %s -> %.6f", plan.source_index, plan.new_source_share)
    return make_election(shares, e.party_p_name, e.party_q_name)


def mirror_q(e: Election) -> Election:
    """Отражение выборов: доли 1 − p_i, партии меняются местами."""
    return make_election((1.0 - share for share in e.shares), e.party_q_name, e.party_p_name)


def apply_q_crack(e: Election, plan: CrackPlan) -> Election:
    """Q-дробление: план строится для mirror_q(e) и результат отражается обратно."""
    return mirror_q(apply_crack(mirror_q(e), plan))


def apply_q_pack(e: Election, plan: PackPlan) -> Election:
    """Q-упаковка: план строится для mirror_q(e) и результат отражается обратно."""
    return mirror_q(apply_pack(mirror_q(e), plan))


def _draw_plan(
    e: Election,
    rng_seed: int,
    floor: float | None,
    recipients: slice,
    ceiling: float,
) -> tuple[int, float, tuple[float, ...]] | None:
    """
    Выбор новой доли округа k+1 и распределение перенесённой массы.

    Масса распределяется пропорционально запасу получателей (ceiling − p_i).
    Если задан floor, новая доля выбирается строго выше него.
    """
    indices = split(e)
    if indices.k == 0 or indices.k_prime == 0:
        raise DegenerateElectionError("Для генерации плана нужны k ≥ 1 и k' ≥ 1")

    shares = e.as_array()
    source_share = float(shares[indices.k])
    headroom = np.clip(ceiling - shares[recipients], 0.0, None)
    total_headroom = float(headroom.sum())

    if total_headroom <= 0.0:
        logger.debug("Получатели насыщены, план невозможен")
        return None

    lower = max(0.0, source_share - total_headroom * (1.0 - HEADROOM_SAFETY))
    upper = HALF - BOUNDARY_MARGIN
    if floor is not None:
        lower = max(lower, floor + BOUNDARY_MARGIN)

    if lower > upper:
        logger.debug("Пустой интервал допустимых долей [%.6f, %.6f]", lower, upper)
        return None

    rng = np.random.default_rng(rng_seed)
    new_source_share = float(rng.uniform(lower, upper))
    moved = source_share - new_source_share
    allocation = tuple(float(value) for value in moved * headroom / total_headroom)

    return indices.k + 1, new_source_share, allocation


def random_crack_plan(e: Election, rng_seed: int, require_theorem_hypotheses: bool = False) -> CrackPlan | None:
    """
    Случайный допустимый план P-дробления.

    Args:
        e: Выборы с k ≥ 1 и k' ≥ 1
        rng_seed: Seed генератора (одинаковый seed - одинаковый план)
        require_theorem_hypotheses: Выбирать p'_{k+1} строго выше ȳ (условие роста деклинации);
            интервал (ȳ, p_k] при этом не исключается

    Returns:
        CrackPlan | None: План или None, если допустимого плана нет

    Raises:
        DegenerateElectionError: Если k = 0 или k' = 0
    """
    indices = split(e)
    floor = indices.y_bar if require_theorem_hypotheses else None
    drawn = _draw_plan(e, rng_seed, floor, slice(0, indices.k), HALF)
    if drawn is None:
        return None

    source_index, new_source_share, allocation = drawn
    return CrackPlan(source_index=source_index, new_source_share=new_source_share, allocation=allocation)


def random_pack_plan(e: Election, rng_seed: int, require_theorem_hypotheses: bool = False) -> PackPlan | None:
    """
    Случайный допустимый план P-упаковки.

    Args:
        e: Выборы с k ≥ 1 и k' ≥ 1
        rng_seed: Seed генератора
        require_theorem_hypotheses: Выбирать p'_{k+1} строго выше p_k

    Returns:
        PackPlan | None: План или None, если некуда переносить голоса

    Raises:
        DegenerateElectionError: Если k = 0 или k' = 0
    """
    indices = split(e)
    floor = e.shares[indices.k - 1] if require_theorem_hypotheses and indices.k > 0 else None
    drawn = _draw_plan(e, rng_seed, floor, slice(indices.k + 1, None), 1.0)
    if drawn is None:
        return None

    source_index, new_source_share, allocation = drawn
    return PackPlan(source_index=source_index, new_source_share=new_source_share, allocation=allocation)
