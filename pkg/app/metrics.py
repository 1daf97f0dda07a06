"""
Метрики асимметрии распределения голосов по округам.

Все функции чистые и работают с каноническим представлением выборов:
вектором долей партии P (двухпартийная доля), отсортированным по неубыванию.
Положительные значения деклинации выгодны партии Q, положительный
efficiency gap означает, что партия P теряет больше голосов.

Доля, равная ровно 1/2, считается поражением партии P.
"""

import logging
import math
from collections.abc import Iterable, Sequence
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

from app.exceptions import EmptyElectionError, InvalidShareError, InvalidTauError, UndefinedDeclinationError

logger = logging.getLogger(__name__)

HALF = 0.5

Point = tuple[float, float]


class Election(BaseModel):
    """Выборы (P, Q, p): названия партий и отсортированный вектор долей партии P."""

    model_config = ConfigDict(frozen=True)

    party_p_name: str = "D"
    party_q_name: str = "R"
    shares: tuple[float, ...] = Field(min_length=1)

    @model_validator(mode="after")
    def _check_shares(self) -> "Election":
        for index, value in enumerate(self.shares):
            if not 0.0 <= value <= 1.0:
                raise InvalidShareError(index, value)
        if any(left > right for left, right in zip(self.shares, self.shares[1:])):
            raise ValueError("доли должны быть отсортированы по неубыванию")
        return self

    @computed_field  # type: ignore[prop-decorator]
    @property
    def n_districts(self) -> int:
        """Число округов N."""
        return len(self.shares)

    def as_array(self) -> NDArray[np.float64]:
        """Доли в виде numpy-массива."""
        return np.asarray(self.shares, dtype=np.float64)


class SplitIndices(BaseModel):
    """Разбиение округов на проигранные (k) и выигранные (k') партией P."""

    model_config = ConfigDict(frozen=True)

    k: int
    k_prime: int
    y_bar: float | None
    z_bar: float | None


class DeclinationGeometry(BaseModel):
    """Точки построения деклинации: центры масс F и H, точка G и концы T, U."""

    model_config = ConfigDict(frozen=True)

    points: tuple[Point, ...]
    f: Point
    g: Point
    h: Point
    t: Point = (0.0, HALF)
    u: Point = (1.0, HALF)
    theta_p: float
    theta_q: float


class MetricSet(BaseModel):
    """Все метрики асимметрии одних выборов. None означает «не определено»."""

    model_config = ConfigDict(frozen=True)

    declination: float | None
    delta_n: float | None
    delta_tilde: float | None
    efficiency_gap: float
    tau_gaps: dict[float, float]
    mean_median: float
    seat_share_p: float
    vote_share_p: float


def make_election(raw_shares: Iterable[float], p_name: str = "D", q_name: str = "R") -> Election:
    """
    Построение выборов из долей голосов партии P в произвольном порядке.

    Args:
        raw_shares: Доли голосов партии P по округам
        p_name: Название партии P
        q_name: Название партии Q

    Returns:
        Election: Выборы с долями, отсортированными по возрастанию

    Raises:
        EmptyElectionError: Если долей нет
        InvalidShareError: Если доля вне [0, 1] (индекс во входном порядке)
    """
    values = [float(value) for value in raw_shares]
    if not values:
        raise EmptyElectionError()

    for index, value in enumerate(values):
        if not 0.0 <= value <= 1.0:
            raise InvalidShareError(index, value)

    return Election(party_p_name=p_name, party_q_name=q_name, shares=tuple(sorted(values)))


def split(e: Election) -> SplitIndices:
    """
    Разбиение по порогу 1/2: p_k ≤ 1/2 < p_{k+1}.

    Returns:
        SplitIndices: k, k' и средние доли ȳ, z̄ (None для пустого блока)
    """
    shares = e.as_array()
    k = int(np.count_nonzero(shares <= HALF))
    k_prime = e.n_districts - k

    y_bar = float(shares[:k].mean()) if k else None
    z_bar = float(shares[k:].mean()) if k_prime else None

    return SplitIndices(k=k, k_prime=k_prime, y_bar=y_bar, z_bar=z_bar)


def _angles(e: Election, indices: SplitIndices) -> tuple[float, float] | None:
    if indices.y_bar is None or indices.z_bar is None:
        return None

    n = e.n_districts
    theta_p = math.atan((2.0 * indices.z_bar - 1.0) / (indices.k_prime / n))
    theta_q = math.atan((1.0 - 2.0 * indices.y_bar) / (indices.k / n))
    return theta_p, theta_q


def declination(e: Election) -> float | None:
    """
    Деклинация δ = 2(θ_P − θ_Q)/π в долях прямого угла.

    Returns:
        float | None: Значение в [-1, 1] или None, если одна партия выиграла все округа
    """
    angles = _angles(e, split(e))
    if angles is None:
        return None

    theta_p, theta_q = angles
    return 2.0 * (theta_p - theta_q) / math.pi


def delta_n(e: Election) -> float | None:
    """Деклинация в «местах»: δ·N/2."""
    value = declination(e)
    return None if value is None else value * e.n_districts / 2.0


def delta_tilde(e: Election) -> float | None:
    """Деклинация, декоррелированная с N: δ·ln(N)/2."""
    value = declination(e)
    return None if value is None else value * math.log(e.n_districts) / 2.0


def efficiency_gap(e: Election) -> float:
    """
    Efficiency gap: средняя по округам разность потерянных голосов партий P и Q.

    Потери P в округе равны p_i − 1/2 при победе и p_i при поражении,
    потери Q дополняют их до 1/2.
    """
    shares = e.as_array()
    waste_p = np.where(shares > HALF, shares - HALF, shares)
    waste_q = HALF - waste_p
    return float(np.mean(waste_p - waste_q))


def _check_tau(tau: float) -> float:
    if not math.isfinite(tau) or tau < 0:
        raise InvalidTauError(tau)
    return float(tau)


def _signed_margins(e: Election) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """a_i = 2p_i − 1 и знаки ε_i (−1 для проигранных P округов)."""
    shares = e.as_array()
    margins = 2.0 * shares - 1.0
    signs = np.where(shares > HALF, 1.0, -1.0)
    return margins, signs


def tau_gap(e: Election, tau: float) -> float:
    """
    τ-gap: 2·[Σ ε_i (ε_i a_i)^(τ+1) / N + 1/2 − k'/N].

    При τ = 0 совпадает с удвоенным efficiency gap. Слагаемое округа с долей
    ровно 1/2 равно нулю при любом знаке.

    Args:
        e: Выборы
        tau: Неотрицательный конечный параметр

    Returns:
        float: Значение в [-2, 2]

    Raises:
        InvalidTauError: Если τ отрицательно или не конечно
    """
    tau = _check_tau(tau)
    margins, signs = _signed_margins(e)

    magnitudes = signs * margins
    terms = signs * np.power(magnitudes, tau + 1.0)

    seat_share = float(np.count_nonzero(signs > 0)) / e.n_districts
    return 2.0 * (float(np.mean(terms)) + HALF - seat_share)


def tau_waste(e: Election, tau: float) -> tuple[float, float]:
    """
    Суммарные τ-потери партий P и Q.

    В каждом округе w_P,τ(i) + w_Q,τ(i) = 1/(τ+1), поэтому сумма по
    выборам равна N/(τ+1), а (w_P − w_Q)/(w_P + w_Q) совпадает с tau_gap.

    Returns:
        tuple[float, float]: (w_P,τ, w_Q,τ)
    """
    tau = _check_tau(tau)
    margins, signs = _signed_margins(e)

    total = 1.0 / (tau + 1.0)
    winner_waste = np.power(signs * margins, tau + 1.0) / (tau + 1.0)
    waste_p = np.where(signs > 0, winner_waste, total - winner_waste)
    waste_q = total - waste_p

    return float(waste_p.sum()), float(waste_q.sum())


def tau_gap_limit(e: Election) -> float:
    """
    Предел τ-gap при τ → ∞: 1 − 2k'/N.

    Точный предел только при 0 < |a_i| < 1 для всех округов; для долей 0 или 1
    формула возвращается без изменений как статистика, зависящая лишь от мест.
    """
    indices = split(e)
    return 1.0 - 2.0 * indices.k_prime / e.n_districts


def odd_moment(values: Sequence[float] | NDArray[np.float64], order: int) -> float:
    """Момент порядка order: среднее values**order."""
    array = np.asarray(values, dtype=np.float64)
    return float(np.mean(array**order))


def mean_median(e: Election) -> float:
    """Разность среднего и медианы долей партии P (для чётного N медиана - среднее двух центральных)."""
    shares = e.as_array()
    return float(np.mean(shares) - np.median(shares))


def seat_share(e: Election) -> float:
    """Доля мест партии P: k'/N."""
    return split(e).k_prime / e.n_districts


def vote_share(e: Election) -> float:
    """Доля голосов партии P p̄ при равной численности округов."""
    return float(np.mean(e.as_array()))


def metric_set(e: Election, taus: Iterable[float]) -> MetricSet:
    """
    Расчёт всех метрик для одних выборов.

    Args:
        e: Выборы
        taus: Значения τ для τ-gap

    Returns:
        MetricSet: Набор метрик; деклинация и её варианты None при победе одной партии во всех округах

    Raises:
        InvalidTauError: Если одно из τ некорректно
    """
    tau_values = [_check_tau(tau) for tau in taus]

    value = declination(e)
    n = e.n_districts

    metrics = MetricSet(
        declination=value,
        delta_n=None if value is None else value * n / 2.0,
        delta_tilde=None if value is None else value * math.log(n) / 2.0,
        efficiency_gap=efficiency_gap(e),
        tau_gaps={tau: tau_gap(e, tau) for tau in tau_values},
        mean_median=mean_median(e),
        seat_share_p=seat_share(e),
        vote_share_p=vote_share(e),
    )

    logger.debug("Метрики для N=%s: δ=%s, EG=%.4f", n, value, metrics.efficiency_gap)
    return metrics


def declination_geometry(e: Election) -> DeclinationGeometry:
    """
    Геометрия деклинации: точки округов, центры масс F и H, точка G.

    Raises:
        UndefinedDeclinationError: Если одна партия выиграла все округа
    """
    indices = split(e)
    angles = _angles(e, indices)
    if angles is None or indices.y_bar is None or indices.z_bar is None:
        raise UndefinedDeclinationError("Деклинация не определена: одна партия выиграла все округа")

    n = e.n_districts
    k, k_prime = indices.k, indices.k_prime
    points = tuple(((i + 1) / n - 1.0 / (2 * n), share) for i, share in enumerate(e.shares))

    return DeclinationGeometry(
        points=points,
        f=(k / (2 * n), indices.y_bar),
        g=(k / n, HALF),
        h=(k / n + k_prime / (2 * n), indices.z_bar),
        theta_p=angles[0],
        theta_q=angles[1],
    )


def format_metric(value: float | None, digits: int) -> str:
    """
    Форматирование значения для отчёта с округлением половины вверх.

    Args:
        value: Значение метрики или None
        digits: Число знаков после запятой

    Returns:
        str: Строка для таблицы; пустая строка для неопределённого значения
    """
    if value is None:
        return ""

    rounded = Decimal(repr(value)).quantize(Decimal(1).scaleb(-digits), rounding=ROUND_HALF_UP)
    if rounded == 0:
        rounded = abs(rounded)
    return str(rounded)
