import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.exceptions import EmptyElectionError, InvalidShareError, InvalidTauError, UndefinedDeclinationError
from app.metrics import (
    declination,
    declination_geometry,
    delta_n,
    delta_tilde,
    efficiency_gap,
    format_metric,
    make_election,
    mean_median,
    metric_set,
    odd_moment,
    seat_share,
    split,
    tau_gap,
    tau_gap_limit,
    tau_waste,
    vote_share,
)

# (δ̃, δ, δ_N, число мест) для наиболее асимметричных планов Конгресса 2012 года
PUBLISHED_ROWS = [
    (0.76, 0.53, 4.8, 18),
    (0.76, 0.55, 4.4, 16),
    (0.58, 0.48, 2.6, 11),
    (0.58, 0.45, 2.9, 13),
    (0.56, 0.43, 3.0, 14),
    (0.49, 0.44, 2.0, 9),
    (0.46, 0.28, 3.8, 27),
    (0.44, 0.24, 4.4, 36),
    (0.42, 0.40, 1.6, 8),
    (0.42, 0.38, 1.7, 9),
    (0.35, 0.28, 1.7, 12),
    (0.32, 0.31, 1.2, 8),
    (0.28, 0.21, 1.5, 14),
    (0.16, 0.09, 1.3, 27),
    (0.12, 0.11, 0.5, 8),
    (-0.08, -0.07, -0.3, 10),
    (-0.16, -0.11, -1.0, 18),
    (-0.19, -0.10, -2.6, 53),
    (-0.30, -0.27, -1.2, 9),
    (-0.55, -0.53, -2.1, 8),
]

EXAMPLE = (0.4, 0.45, 0.75)

away_from_half = st.floats(min_value=0.0, max_value=1.0).filter(lambda value: abs(value - 0.5) > 1e-3)
share_vectors = st.lists(away_from_half, min_size=1, max_size=40)


def random_shares(rng: np.random.Generator, low: float = 0.0, high: float = 1.0) -> list[float]:
    n = int(rng.integers(1, 60))
    shares = rng.uniform(low, high, size=n)
    return shares[np.abs(shares - 0.5) > 1e-3].tolist() or [0.3]


def election_with_declination(value: float, n: int):
    """Выборы с N округами и заданной деклинацией: k = k' = N/2 с точностью до единицы."""
    k = n // 2
    k_prime = n - k
    theta_p = 0.17 * math.pi + value * math.pi / 4
    theta_q = 0.17 * math.pi - value * math.pi / 4
    z_bar = 0.5 + math.tan(theta_p) * (k_prime / n) / 2
    y_bar = 0.5 - math.tan(theta_q) * (k / n) / 2
    return make_election([y_bar] * k + [z_bar] * k_prime)


class TestMakeElection:
    """Тесты построения выборов."""

    def test_sorted(self):
        assert make_election([0.75, 0.25]).shares == (0.25, 0.75)

    def test_already_sorted(self):
        assert make_election(EXAMPLE).shares == EXAMPLE

    def test_invalid_share(self):
        with pytest.raises(InvalidShareError) as exc_info:
            make_election([1.2])
        assert exc_info.value.index == 0
        assert exc_info.value.value == 1.2

    def test_invalid_share_index_in_input_order(self):
        with pytest.raises(InvalidShareError) as exc_info:
            make_election([0.3, 0.6, -0.1])
        assert exc_info.value.index == 2

    def test_empty(self):
        with pytest.raises(EmptyElectionError):
            make_election([])

    def test_party_names(self):
        e = make_election([0.4], p_name="Q1", q_name="P1")
        assert (e.party_p_name, e.party_q_name) == ("Q1", "P1")


class TestSplit:
    """Тесты разбиения по порогу 1/2."""

    def test_symmetric(self):
        indices = split(make_election([0.25, 0.75]))
        assert (indices.k, indices.k_prime, indices.y_bar, indices.z_bar) == (1, 1, 0.25, 0.75)

    def test_half_is_loss(self):
        """Доля ровно 1/2 - поражение партии P."""
        indices = split(make_election([0.5, 0.75]))
        assert (indices.k, indices.k_prime, indices.y_bar) == (1, 1, 0.5)

    def test_example(self):
        indices = split(make_election(EXAMPLE))
        assert (indices.k, indices.k_prime) == (2, 1)
        assert indices.y_bar == pytest.approx(0.425)
        assert indices.z_bar == 0.75

    def test_sweep_has_empty_block(self):
        indices = split(make_election([0.6, 0.7]))
        assert indices.k == 0
        assert indices.y_bar is None


class TestDeclination:
    """Тесты деклинации и её вариантов."""

    def test_symmetric(self):
        assert declination(make_election([0.25, 0.75])) == pytest.approx(0.0, abs=1e-15)

    def test_example(self):
        expected = 2.0 * (math.atan(1.5) - math.atan(0.225)) / math.pi
        assert declination(make_election(EXAMPLE)) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.4848, abs=1e-4)

    def test_sweep_undefined(self):
        e = make_election([0.6, 0.7])
        assert declination(e) is None
        assert delta_n(e) is None
        assert delta_tilde(e) is None

    def test_single_district_undefined(self):
        assert declination(make_election([0.3])) is None

    def test_delta_n_example(self):
        assert delta_n(make_election(EXAMPLE)) == pytest.approx(declination(make_election(EXAMPLE)) * 1.5, abs=1e-15)

    def test_delta_n_symmetric(self):
        assert delta_n(make_election([0.25, 0.75])) == pytest.approx(0.0, abs=1e-15)

    def test_constructed_value(self):
        e = election_with_declination(0.53, 18)
        assert declination(e) == pytest.approx(0.53, abs=1e-12)
        assert delta_n(e) == pytest.approx(4.77, abs=1e-10)
        assert delta_tilde(e) == pytest.approx(0.53 * math.log(18) / 2, abs=1e-12)

    @pytest.mark.parametrize("tilde, value, seats_value, n", PUBLISHED_ROWS)
    def test_published_rows_consistent(self, tilde, value, seats_value, n):
        """
        Опубликованные (δ, N) воспроизводят δ_N и δ̃.

        Допуск для δ_N учитывает округление самой δ до сотых, умноженное на N/2.
        """
        e = election_with_declination(value, n)

        assert delta_tilde(e) == pytest.approx(tilde, abs=0.06)
        assert delta_n(e) == pytest.approx(seats_value, abs=0.05 + 0.005 * n / 2 + 1e-9)

    @settings(max_examples=200, deadline=None, derandomize=True)
    @given(share_vectors)
    def test_range(self, shares):
        value = declination(make_election(shares))
        assert value is None or -1.0 <= value <= 1.0


class TestEfficiencyGap:
    """Тесты efficiency gap и τ-gap."""

    def test_symmetric(self):
        assert efficiency_gap(make_election([0.25, 0.75])) == 0.0

    def test_example(self):
        assert efficiency_gap(make_election(EXAMPLE)) == pytest.approx(0.7 / 3, abs=1e-12)

    def test_uniform_sweep(self):
        assert efficiency_gap(make_election([0.75] * 4)) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("tau", [0.0, 0.4, 1.0, 2.0, 5.0])
    def test_tau_gap_symmetric(self, tau):
        assert tau_gap(make_election([0.25, 0.75]), tau) == pytest.approx(0.0, abs=1e-15)

    def test_tau_gap_zero_example(self):
        assert tau_gap(make_election(EXAMPLE), 0.0) == pytest.approx(1.4 / 3, abs=1e-12)

    def test_tau_gap_two_example(self):
        moment = ((-0.2) ** 3 + (-0.1) ** 3 + 0.5**3) / 3
        assert tau_gap(make_election(EXAMPLE), 2.0) == pytest.approx(2 * (moment + 0.5 - 1 / 3), abs=1e-12)

    @pytest.mark.parametrize("tau", [-0.1, math.inf, math.nan])
    def test_invalid_tau(self, tau):
        with pytest.raises(InvalidTauError):
            tau_gap(make_election(EXAMPLE), tau)

    def test_half_share_contributes_zero(self):
        """Округ с долей ровно 1/2 не вносит вклад в сумму при любом τ."""
        e = make_election([0.5, 0.75])
        expected = 2 * ((0.5**1.4) / 2 + 0.5 - 0.5)
        assert tau_gap(e, 0.4) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.slow
    def test_gap_zero_is_twice_efficiency_gap(self):
        rng = np.random.default_rng(3)
        for _ in range(10_000):
            e = make_election(rng.uniform(0.0, 1.0, size=int(rng.integers(1, 60))).tolist())
            assert abs(tau_gap(e, 0.0) - 2 * efficiency_gap(e)) <= 1e-12

    @pytest.mark.parametrize("tau", [0.0, 2.0, 4.0])
    def test_moment_form(self, tau):
        """τ = 2ℓ: τ-gap совпадает с нечётным моментом a_i."""
        rng = np.random.default_rng(int(tau) + 11)
        for _ in range(1000):
            e = make_election(random_shares(rng))
            margins = 2 * e.as_array() - 1
            expected = 2 * (odd_moment(margins, int(tau) + 1) + 0.5 - split(e).k_prime / e.n_districts)
            assert tau_gap(e, tau) == pytest.approx(expected, abs=1e-12)

    def test_large_tau_limit(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            e = make_election(random_shares(rng, low=0.05, high=0.95))
            assert abs(tau_gap(e, 200.0) - tau_gap_limit(e)) <= 1e-8

    def test_limit_values(self):
        assert tau_gap_limit(make_election(EXAMPLE)) == pytest.approx(1 / 3)
        assert tau_gap_limit(make_election([0.25, 0.75])) == 0.0
        assert tau_gap_limit(make_election([0.2, 0.3, 0.7, 0.9])) == 0.0

    def test_proportional_elections_have_zero_gap(self):
        """Если 2(p̄ − 1/2) = k'/N − 1/2, то Gap₀ = 0; отклонение на 0.01 даёт |Gap₀| ≥ 0.019."""
        rng = np.random.default_rng(17)
        for _ in range(500):
            n = int(rng.integers(4, 40))
            k_prime = int(rng.integers(1, n))
            target_mean = 0.5 + (k_prime / n - 0.5) / 2
            losses = rng.uniform(0.05, 0.45, size=n - k_prime)
            wins = rng.uniform(0.55, 0.95, size=k_prime)
            shares = np.concatenate([losses, wins])
            shares += target_mean - shares.mean()
            if shares.min() < 0 or shares.max() > 1 or (shares <= 0.5).sum() != n - k_prime:
                continue

            e = make_election(shares.tolist())
            assert abs(tau_gap(e, 0.0)) <= 1e-9

            shifted = shares + 0.01
            if shifted.max() <= 1 and (shifted <= 0.5).sum() == n - k_prime:
                assert abs(tau_gap(make_election(shifted.tolist()), 0.0)) >= 0.019

    @settings(max_examples=200, deadline=None, derandomize=True)
    @given(share_vectors, st.sampled_from([0.0, 0.4, 1.0, 2.0, 5.0]))
    def test_gap_range(self, shares, tau):
        assert -2.0 <= tau_gap(make_election(shares), tau) <= 2.0


class TestTauWaste:
    """Тесты τ-потерь."""

    @pytest.mark.parametrize("tau", [0.0, 0.4, 2.0])
    def test_total_and_ratio(self, tau):
        e = make_election([0.2, 0.45, 0.6, 0.85, 0.9])
        waste_p, waste_q = tau_waste(e, tau)

        assert waste_p + waste_q == pytest.approx(e.n_districts / (tau + 1), abs=1e-12)
        assert (waste_p - waste_q) / (waste_p + waste_q) == pytest.approx(tau_gap(e, tau), abs=1e-12)

    def test_zero_tau_matches_efficiency_gap(self):
        e = make_election(EXAMPLE)
        waste_p, waste_q = tau_waste(e, 0.0)
        assert (waste_p - waste_q) / e.n_districts == pytest.approx(2 * efficiency_gap(e), abs=1e-12)


class TestMeanMedian:
    """Тесты разности среднего и медианы."""

    def test_symmetric(self):
        assert mean_median(make_election([0.25, 0.75])) == 0.0

    def test_example(self):
        assert mean_median(make_election(EXAMPLE)) == pytest.approx(1.6 / 3 - 0.45, abs=1e-12)

    def test_mean_half_median_043(self):
        e = make_election([0.3, 0.43, 0.77])
        assert vote_share(e) == pytest.approx(0.5, abs=1e-12)
        assert mean_median(e) == pytest.approx(0.07, abs=1e-12)

    def test_even_median(self):
        assert mean_median(make_election([0.2, 0.4, 0.6, 1.0])) == pytest.approx(0.55 - 0.5, abs=1e-12)


class TestMetricSet:
    """Тесты набора метрик."""

    def test_symmetric(self):
        metrics = metric_set(make_election([0.25, 0.75]), [0.0, 1.0])

        assert metrics.declination == pytest.approx(0.0, abs=1e-15)
        assert metrics.delta_n == pytest.approx(0.0, abs=1e-15)
        assert metrics.efficiency_gap == 0.0
        assert metrics.tau_gaps == {0.0: 0.0, 1.0: 0.0}
        assert metrics.mean_median == 0.0
        assert metrics.seat_share_p == 0.5
        assert metrics.vote_share_p == 0.5

    def test_sweep(self):
        metrics = metric_set(make_election([0.6, 0.7]), [0.0])

        assert metrics.declination is None
        assert metrics.delta_tilde is None
        assert metrics.efficiency_gap == pytest.approx(-0.2)
        assert metrics.mean_median == pytest.approx(0.0, abs=1e-15)

    def test_matches_individual_operations(self):
        e = make_election(EXAMPLE)
        metrics = metric_set(e, [0.0])

        assert metrics.declination == declination(e)
        assert metrics.delta_n == delta_n(e)
        assert metrics.delta_tilde == delta_tilde(e)
        assert metrics.tau_gaps[0.0] == tau_gap(e, 0.0)
        assert metrics.seat_share_p == seat_share(e)

    def test_invalid_tau(self):
        with pytest.raises(InvalidTauError):
            metric_set(make_election(EXAMPLE), [0.0, -1.0])


class TestProperties:
    """Свойства метрик на случайных выборах."""

    @settings(max_examples=200, deadline=None, derandomize=True)
    @given(st.lists(away_from_half, min_size=2, max_size=40), st.randoms(use_true_random=False))
    def test_order_invariance(self, shares, rnd):
        shuffled = list(shares)
        rnd.shuffle(shuffled)
        assert metric_set(make_election(shares), [0.0, 2.0]) == metric_set(make_election(shuffled), [0.0, 2.0])

    def test_party_swap_antisymmetry(self):
        rng = np.random.default_rng(23)
        for _ in range(1000):
            shares = random_shares(rng)
            original = metric_set(make_election(shares), [0.0, 0.4, 1.0, 2.0])
            mirrored = metric_set(make_election([1.0 - share for share in shares]), [0.0, 0.4, 1.0, 2.0])

            assert mirrored.efficiency_gap == pytest.approx(-original.efficiency_gap, abs=1e-12)
            assert mirrored.mean_median == pytest.approx(-original.mean_median, abs=1e-12)
            for tau, value in original.tau_gaps.items():
                assert mirrored.tau_gaps[tau] == pytest.approx(-value, abs=1e-12)
            if original.declination is not None:
                assert mirrored.declination == pytest.approx(-original.declination, abs=1e-12)
                assert mirrored.delta_n == pytest.approx(-original.delta_n, abs=1e-12)
                assert mirrored.delta_tilde == pytest.approx(-original.delta_tilde, abs=1e-12)
            else:
                assert mirrored.declination is None


class TestGeometry:
    """Тесты точек построения деклинации."""

    def test_example_points(self):
        geometry = declination_geometry(make_election(EXAMPLE))

        assert geometry.f == pytest.approx((1 / 3, 0.425))
        assert geometry.g == pytest.approx((2 / 3, 0.5))
        assert geometry.h == pytest.approx((5 / 6, 0.75))
        assert [x for x, _ in geometry.points] == pytest.approx([1 / 6, 0.5, 5 / 6])

    def test_angles_match_declination(self):
        e = make_election(EXAMPLE)
        geometry = declination_geometry(e)
        assert 2 * (geometry.theta_p - geometry.theta_q) / math.pi == pytest.approx(declination(e))

    def test_sweep(self):
        with pytest.raises(UndefinedDeclinationError):
            declination_geometry(make_election([0.6, 0.7]))


class TestFormatMetric:
    """Тесты округления для отчётов."""

    @pytest.mark.parametrize(
        "value, digits, expected",
        [
            (None, 2, ""),
            (4.77, 1, "4.8"),
            (0.765, 2, "0.77"),
            (0.2333333, 3, "0.233"),
            (-0.0004, 3, "0.000"),
            (-1.07, 2, "-1.07"),
            (0.125, 2, "0.13"),
        ],
    )
    def test_values(self, value, digits, expected):
        assert format_metric(value, digits) == expected
