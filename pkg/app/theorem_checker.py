"""Проверка монотонности деклинации и τ-gap при P-упаковке и P-дроблении на случайных выборах."""

import logging
import math
from collections.abc import Iterable

import numpy as np
from pydantic import BaseModel, Field

from app.metrics import Election, declination, make_election, split, tau_gap
from app.transforms import (
    CrackPlan,
    PackPlan,
    apply_crack,
    apply_pack,
    random_crack_plan,
    random_pack_plan,
)

logger = logging.getLogger(__name__)

DEFAULT_TAUS: tuple[float, ...] = (0.0, 0.4, 1.0, 2.0, 5.0)
MIN_DISTRICTS = 3
MAX_DISTRICTS = 50
SHARE_GAP = 1e-3
MAX_ATTEMPTS_FACTOR = 100
MAX_COUNTEREXAMPLES = 5


class Counterexample(BaseModel):
    """Нарушение свойства: исходные доли, вид преобразования и план в JSON-совместимом виде."""

    property_name: str
    shares: list[float]
    transform: str
    plan: dict[str, object]
    before: float | None
    after: float | None


class TheoremReport(BaseModel):
    """Итог прогона: число испытаний и нарушений по каждому свойству."""

    seed: int
    taus: list[float]
    trials: int
    requested: int | None = None
    cracks: int = 0
    packs: int = 0
    gap_trials: int = 0
    declination_violations: int = 0
    gap_violations: dict[str, int] = Field(default_factory=dict)
    seat_violations: int = 0
    conservation_violations: int = 0
    counterexamples: list[Counterexample] = Field(default_factory=list)

    @property
    def total_violations(self) -> int:
        """Общее число нарушений."""
        return (
            self.declination_violations
            + sum(self.gap_violations.values())
            + self.seat_violations
            + self.conservation_violations
        )

    @property
    def passed(self) -> bool:
        """True, если нарушений нет и выполнены все запрошенные испытания."""
        if self.requested is not None and self.trials < self.requested:
            return False
        return self.total_violations == 0


def random_election(rng: np.random.Generator) -> Election:
    """
    Случайные выборы для проверки: N ∈ [3, 50], доли отделены от 1/2 на 10⁻³,
    хотя бы один проигранный и хотя бы два выигранных партией P округа.
    """
    while True:
        n = int(rng.integers(MIN_DISTRICTS, MAX_DISTRICTS + 1))
        shares = rng.uniform(0.0, 1.0, size=n)
        shares = shares[np.abs(shares - 0.5) > SHARE_GAP]
        if shares.size < MIN_DISTRICTS:
            continue

        losses = int(np.count_nonzero(shares <= 0.5))
        if losses >= 1 and shares.size - losses >= 2:
            return make_election(shares.tolist())


def _draw_plan(e: Election, seed: int, prefer_crack: bool) -> CrackPlan | PackPlan | None:
    generators = (random_crack_plan, random_pack_plan) if prefer_crack else (random_pack_plan, random_crack_plan)
    for generator in generators:
        plan = generator(e, seed, True)
        if plan is not None:
            return plan
    return None


def _tau_label(tau: float) -> str:
    return f"{tau:g}"


def _record(
    report: TheoremReport,
    example: Counterexample,
    property_name: str,
    before: float | None,
    after: float | None,
) -> None:
    logger.warning("Нарушение свойства %s: %s -> %s", property_name, before, after)
    if len(report.counterexamples) < MAX_COUNTEREXAMPLES:
        report.counterexamples.append(
            example.model_copy(update={"property_name": property_name, "before": before, "after": after})
        )


def run_theorem_suite(trials: int, seed: int, taus: Iterable[float] = DEFAULT_TAUS) -> TheoremReport:
    """
    Прогон проверки на trials случайных выборах.

    Для каждых выборов строится случайный план P-дробления (p'_{k+1} > ȳ)
    или P-упаковки (p'_{k+1} > p_k). Для каждого плана проверяются строгий рост
    деклинации, рост k ровно на единицу и сохранение суммы долей; рост τ-gap
    проверяется только для планов с p'_{k+1} > p_k. Если построить trials планов
    не удалось, отчёт не считается пройденным.

    Args:
        trials: Число применённых планов
        seed: Seed генератора
        taus: Значения τ для проверки τ-gap

    Returns:
        TheoremReport: Счётчики и первые контрпримеры
    """
    tau_values = [float(tau) for tau in taus]
    report = TheoremReport(
        seed=seed,
        taus=tau_values,
        trials=0,
        requested=trials,
        gap_violations={_tau_label(tau): 0 for tau in tau_values},
    )
    rng = np.random.default_rng(seed)

    attempts = 0
    while report.trials < trials and attempts < trials * MAX_ATTEMPTS_FACTOR:
        attempts += 1
        e = random_election(rng)
        plan_seed = int(rng.integers(0, 2**32))
        plan = _draw_plan(e, plan_seed, prefer_crack=bool(rng.integers(0, 2)))
        if plan is None:
            continue

        report.trials += 1
        if isinstance(plan, CrackPlan):
            report.cracks += 1
            transformed = apply_crack(e, plan)
            transform = "crack"
        else:
            report.packs += 1
            transformed = apply_pack(e, plan)
            transform = "pack"

        example = Counterexample(
            property_name="",
            shares=list(e.shares),
            transform=transform,
            plan=plan.model_dump(mode="json"),
            before=None,
            after=None,
        )

        before_delta, after_delta = declination(e), declination(transformed)
        if before_delta is None or after_delta is None or not after_delta > before_delta:
            report.declination_violations += 1
            _record(report, example, "declination", before_delta, after_delta)

        if plan.new_source_share > e.shares[split(e).k - 1]:
            report.gap_trials += 1
            for tau in tau_values:
                before_gap, after_gap = tau_gap(e, tau), tau_gap(transformed, tau)
                if not after_gap > before_gap:
                    report.gap_violations[_tau_label(tau)] += 1
                    _record(report, example, f"gap_{_tau_label(tau)}", before_gap, after_gap)

        if split(transformed).k != split(e).k + 1:
            report.seat_violations += 1
            _record(report, example, "seats", float(split(e).k), float(split(transformed).k))

        if not math.isclose(sum(transformed.shares), sum(e.shares), rel_tol=0.0, abs_tol=1e-12):
            report.conservation_violations += 1
            _record(report, example, "conservation", sum(e.shares), sum(transformed.shares))

    if report.trials < trials:
        logger.warning("Выполнено только %s из %s испытаний: не удалось построить план", report.trials, trials)

    logger.info(
        "Проверка завершена: испытаний %s (дробление %s, упаковка %s), нарушений %s",
        report.trials,
        report.cracks,
        report.packs,
        report.total_violations,
    )
    return report
