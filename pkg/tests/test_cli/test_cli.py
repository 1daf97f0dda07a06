import json
from pathlib import Path
from unittest.mock import patch

import pytest

from app.cli import build_parser, main, parse_number_list, run
from app.theorem_checker import TheoremReport

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def run_json(capsys, argv: list[str]) -> tuple[int, dict]:
    code = main(argv)
    return code, json.loads(capsys.readouterr().out)


class TestParseNumberList:
    """Тесты разбора списков чисел."""

    def test_commas_and_whitespace(self):
        assert parse_number_list("0.1, 0.2\n0.3 0.4") == [0.1, 0.2, 0.3, 0.4]

    def test_invalid(self):
        with pytest.raises(ValueError):
            parse_number_list("0.1,abc")


class TestMetricsCommand:
    """Тесты команды metrics."""

    def test_symmetric_election(self, capsys):
        code, payload = run_json(capsys, ["metrics", "--shares", "0.25,0.75", "--tau", "0,1"])

        assert code == 0
        assert payload["declination"] == 0.0
        assert payload["efficiency_gap"] == 0.0
        assert payload["tau_gaps"] == {"0": 0.0, "1": 0.0}
        assert payload["mean_median"] == 0.0

    def test_declination_value(self, capsys):
        code, payload = run_json(capsys, ["metrics", "--shares", "0.4,0.45,0.75"])

        assert code == 0
        assert payload["declination"] == pytest.approx(0.4848, abs=1e-4)
        assert set(payload["tau_gaps"]) == {"0", "0.4", "1", "2"}
        assert payload["n_districts"] == 3

    def test_sweep_gives_null(self, capsys):
        _, payload = run_json(capsys, ["metrics", "--shares", "0.6,0.7"])

        assert payload["declination"] is None
        assert payload["delta_n"] is None
        assert payload["delta_tilde"] is None

    def test_input_file(self, capsys, tmp_path):
        source = tmp_path / "shares.txt"
        source.write_text("0.4\n0.45\n0.75\n", encoding="utf-8")

        _, payload = run_json(capsys, ["metrics", "--input", str(source), "--taus", "0"])
        assert payload["tau_gaps"]["0"] == pytest.approx(2 * payload["efficiency_gap"], abs=1e-12)

    def test_invalid_share(self, capsys):
        """Доля вне [0, 1] - код 2 и сообщение в stderr."""
        assert main(["metrics", "--shares", "1.5,0.3"]) == 2
        assert "1.5" in capsys.readouterr().err

    def test_negative_tau(self, capsys):
        assert main(["metrics", "--shares", "0.3,0.7", "--tau", "1,-1"]) == 2

    def test_missing_file(self, capsys, tmp_path):
        assert main(["metrics", "--input", str(tmp_path / "missing.txt")]) == 2

    def test_unexpected_error(self, capsys):
        with patch("app.cli.metric_set", side_effect=RuntimeError("boom")):
            assert main(["metrics", "--shares", "0.3,0.7"]) == 1


class TestTheoremCheckCommand:
    """Тесты команды theorem-check."""

    def test_zero_trials_usage_error(self):
        with pytest.raises(SystemExit) as exc_info:
            build_parser().parse_args(["theorem-check", "--trials", "0"])
        assert exc_info.value.code == 2

    def test_passes_and_deterministic(self, capsys):
        code, first = run_json(capsys, ["theorem-check", "--trials", "50", "--seed", "7"])
        _, second = run_json(capsys, ["theorem-check", "--trials", "50", "--seed", "7"])

        assert code == 0
        assert first["passed"] is True
        assert first["trials"] == 50
        assert first == second

    def test_violation_exit_code(self, capsys):
        report = TheoremReport(seed=1, taus=[0.0], trials=1, declination_violations=1)
        with patch("app.cli.run_theorem_suite", return_value=report):
            code, payload = run_json(capsys, ["theorem-check", "--trials", "1"])

        assert code == 1
        assert payload["total_violations"] == 1

    def test_shortfall_exit_code(self, capsys):
        """Недобор испытаний без нарушений тоже даёт код 1."""
        report = TheoremReport(seed=1, taus=[0.0], trials=3, requested=5)
        with patch("app.cli.run_theorem_suite", return_value=report):
            code, payload = run_json(capsys, ["theorem-check", "--trials", "5"])

        assert code == 1
        assert payload["total_violations"] == 0
        assert payload["passed"] is False


class TestBatchCommand:
    """Тесты команды batch."""

    def test_batch_on_fixture(self, capsys, tmp_path):
        out_dir = tmp_path / "out"
        code, payload = run_json(
            capsys,
            ["batch", "--input", str(FIXTURES / "results.csv"), "--out-dir", str(out_dir), "--svg", "--impute", "uniform:0.65"],
        )

        assert code == 0
        assert payload["rows"] == 3
        assert (out_dir / "election_table.csv").exists()
        assert (out_dir / "svg").is_dir()

    def test_cycles_file(self, capsys, tmp_path):
        code = main(
            [
                "batch",
                "--input",
                str(FIXTURES / "golden_results.csv"),
                "--cycles",
                str(FIXTURES / "cycles.json"),
                "--out-dir",
                str(tmp_path / "out"),
                "--impute",
                "none",
            ]
        )
        assert code == 0

    def test_invalid_impute_mode(self, capsys, tmp_path):
        code = main(["batch", "--input", str(FIXTURES / "results.csv"), "--out-dir", str(tmp_path), "--impute", "mcmc"])
        assert code == 2

    def test_missing_input(self, capsys, tmp_path):
        assert main(["batch", "--input", str(tmp_path / "none.csv"), "--out-dir", str(tmp_path / "out")]) == 2

    def test_negative_threshold(self, capsys, tmp_path):
        code = main(
            ["batch", "--input", str(FIXTURES / "results.csv"), "--out-dir", str(tmp_path), "--threshold", "-1"]
        )
        assert code == 2


class TestConfigOptions:
    """Тесты глобальных параметров --config и --log-level."""

    def test_config_sets_default_taus(self, capsys, tmp_path):
        config = tmp_path / "config.json"
        config.write_text('{"DEFAULT_TAUS": [0.0, 5.0]}', encoding="utf-8")

        _, payload = run_json(capsys, ["--config", str(config), "metrics", "--shares", "0.3,0.7"])
        assert set(payload["tau_gaps"]) == {"0", "5"}

    def test_invalid_config(self, capsys, tmp_path):
        config = tmp_path / "config.json"
        config.write_text('{"UNIFORM_WINNER_SHARE": "много"}', encoding="utf-8")

        assert main(["--config", str(config), "metrics", "--shares", "0.3,0.7"]) == 2
        assert "конфигурации" in capsys.readouterr().err

    def test_run_exits_with_code(self):
        with patch("app.cli.main", return_value=2), pytest.raises(SystemExit) as exc_info:
            run()
        assert exc_info.value.code == 2
