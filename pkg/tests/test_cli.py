import csv
import math
from pathlib import Path

import numpy as np
import pytest

from pursuitlab.cli import (
    emit_curves,
    emit_stats_report,
    emit_summary,
    load_archive,
    main,
    parse_config,
    rolling_mean,
    serialize_config,
    write_archive,
)
from pursuitlab.env import ConfigError
from pursuitlab.harness import (
    PAIRINGS,
    Condition,
    MatrixResult,
    Paradigm,
    RunPlan,
    SeedResult,
    SpeedRegime,
    pairing_key,
)

TINY_ARGS = ["--episodes", "20", "--seeds", "2"]


def fabricate_matrix(plan, regimes=tuple(SpeedRegime), value_of=None):
    """Matrix with synthetic constant series, no training involved."""
    results = {}
    for (pred, prey) in PAIRINGS:
        pairing = pairing_key(pred, prey)
        for regime in regimes:
            for seed in plan.seeds:
                base = (value_of(pairing, regime, seed)
                        if value_of else 25.0)
                n = plan.episodes
                results[(pairing, regime, seed)] = SeedResult(
                    condition=Condition(pred, prey, regime, seed),
                    lengths=np.full(n, int(base), dtype=np.int32),
                    predator_rewards=np.full(n, float(base)),
                    prey_rewards=np.full(n, -float(base)),
                    window=plan.window_size,
                )
    return MatrixResult(plan=plan, results=results)


class TestParseConfig:
    def test_empty_document_gives_paper_defaults(self):
        config = parse_config("")
        plan = config.plan
        assert plan.grid.width == 8 and plan.grid.height == 8
        assert plan.grid.n_predators == 2 and plan.grid.n_prey == 2
        assert plan.grid.stamina_max == 5
        assert plan.grid.gamma == pytest.approx(0.9)
        assert plan.learner.alpha == pytest.approx(0.25)
        assert plan.schedule.start == 1.0 and plan.schedule.end == 0.1
        assert plan.schedule.decay_horizon == 23000
        assert plan.episodes == 40000
        assert plan.seeds == tuple(range(10))
        assert plan.window_size == 10000

    def test_single_override(self):
        config = parse_config("episodes: 500")
        assert config.plan.episodes == 500
        assert config.plan.grid.width == 8
        assert config.plan.window_size == 500  # clamped to episodes

    def test_invalid_gamma_rejected(self):
        with pytest.raises(ConfigError, match="gamma"):
            parse_config("gamma: 1.5")

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="not_a_key"):
            parse_config("not_a_key: 3")

    def test_malformed_yaml_rejected(self):
        with pytest.raises(ConfigError, match="malformed"):
            parse_config("foo: [unclosed")

    def test_round_trip(self):
        config = parse_config("episodes: 120\nseeds: 3\nstamina_max: 4\n")
        again = parse_config(serialize_config(config))
        assert again.plan == config.plan
        assert again.digest() == config.digest()

    def test_digest_changes_with_content(self):
        assert parse_config("").digest() != \
            parse_config("episodes: 5").digest()


class TestSummary:
    def test_zero_variance_cell(self, tmp_path):
        plan = RunPlan(episodes=4, seeds=(0, 1), window_size=4)
        matrix = fabricate_matrix(plan)
        text = emit_summary(matrix, tmp_path)
        assert "25.0 ± 0.0" in text

    def test_sample_sd(self, tmp_path):
        plan = RunPlan(episodes=4, seeds=(0, 1), window_size=4)
        matrix = fabricate_matrix(
            plan, value_of=lambda p, r, s: 20.0 if s == 0 else 30.0)
        text = emit_summary(matrix, tmp_path)
        assert "25.0 ± 7.1" in text

    def test_row_order_and_shape(self, tmp_path):
        plan = RunPlan(episodes=4, seeds=(0,), window_size=4)
        matrix = fabricate_matrix(plan)
        text = emit_summary(matrix, tmp_path)
        lines = [l for l in text.splitlines() if l.startswith(("IQL", "CQL"))]
        assert len(lines) == 12  # 3 regimes x 4 pairings
        assert lines[0].startswith("IQL-IQL")
        with (tmp_path / "summary.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + 12 * 3

    def test_partial_matrix_has_gaps(self, tmp_path):
        plan = RunPlan(episodes=4, seeds=(0,), window_size=4)
        matrix = fabricate_matrix(plan, regimes=(SpeedRegime.EQUAL_BASE,))
        del matrix.results[("cql-cql", SpeedRegime.EQUAL_BASE, 0)]
        text = emit_summary(matrix, tmp_path)
        assert "—" in text


class TestStatsReport:
    def test_separated_configs_and_row_count(self, tmp_path):
        plan = RunPlan(episodes=4, seeds=tuple(range(10)), window_size=4)
        ranks = {"iql-iql": 0, "iql-cql": 300, "cql-iql": 600,
                 "cql-cql": 900}

        matrix = fabricate_matrix(
            plan, regimes=(SpeedRegime.EQUAL_BASE,),
            value_of=lambda p, r, s: ranks[p] + s)
        text = emit_stats_report(matrix, tmp_path)
        with (tmp_path / "stats.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + 18  # one regime x 3 metrics x 6 tests
        for row in rows[1:]:
            p_raw, delta = float(row[4]), float(row[6])
            assert p_raw == pytest.approx(0.001953125, abs=1e-12)
            assert abs(delta) == 1.0
        assert "p=0.001953" in text

    def test_incomplete_matrix_rejected(self, tmp_path):
        plan = RunPlan(episodes=4, seeds=(0,), window_size=4)
        matrix = fabricate_matrix(plan, regimes=(SpeedRegime.EQUAL_BASE,))
        del matrix.results[("cql-cql", SpeedRegime.EQUAL_BASE, 0)]
        with pytest.raises(ValueError, match="cql-cql"):
            emit_stats_report(matrix, tmp_path)


class TestCurves:
    def test_rolling_mean_trailing(self):
        series = np.array([1.0, 2.0, 3.0, 4.0])
        assert rolling_mean(series, 2) == pytest.approx([1.0, 1.5, 2.5, 3.5])

    def test_row_cardinality_stride_one(self, tmp_path):
        plan = RunPlan(episodes=10, seeds=(0,), window_size=10)
        matrix = fabricate_matrix(plan, regimes=(SpeedRegime.EQUAL_BASE,))
        paths = emit_curves(matrix, tmp_path, stride=1)
        rows = Path(paths[0]).read_text().strip().splitlines()
        assert len(rows) == 1 + 10

    def test_row_cardinality_integer_division(self, tmp_path):
        plan = RunPlan(episodes=40000, seeds=(0,), window_size=10000)
        matrix = fabricate_matrix(plan, regimes=(SpeedRegime.EQUAL_BASE,))
        paths = emit_curves(matrix, tmp_path, stride=100)
        rows = Path(paths[0]).read_text().strip().splitlines()
        assert len(rows) == 1 + 400

    def test_constant_series_emits_constant(self, tmp_path):
        plan = RunPlan(episodes=12, seeds=(0, 1), window_size=12)
        matrix = fabricate_matrix(plan)
        paths = emit_curves(matrix, tmp_path, stride=3)
        for path in paths:
            with Path(path).open() as fh:
                reader = csv.reader(fh)
                next(reader)
                for row in reader:
                    for cell in row[1:]:
                        assert abs(abs(float(cell)) - 25.0) < 1e-12

    def test_csv_parses_back_exactly(self, tmp_path):
        plan = RunPlan(episodes=8, seeds=(0,), window_size=8)
        matrix = fabricate_matrix(plan)
        emit_curves(matrix, tmp_path, stride=2)
        path = tmp_path / "curves" / "base_episode_length.csv"
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        expected = rolling_mean(
            matrix.results[("iql-iql", SpeedRegime.EQUAL_BASE, 0)].lengths,
            500)[::2]
        assert np.allclose(data[:, 1], expected, atol=1e-9)


class TestMainCli:
    def test_validate_default_config(self, capsys):
        assert main(["validate"]) == 0
        assert "config OK" in capsys.readouterr().out

    def test_validate_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("gamma: 1.5\n")
        assert main(["validate", "--config", str(cfg)]) == 2
        assert "gamma" in capsys.readouterr().err

    def test_unknown_subcommand_exits_usage(self):
        assert main(["frobnicate"]) == 1

    def test_run_then_report_then_curves(self, tmp_path, capsys):
        out = tmp_path / "archive"
        assert main(["run", "--out", str(out), *TINY_ARGS]) == 0
        assert (out / "manifest.json").exists()
        assert len(list((out / "runs").glob("*.csv"))) == 24

        assert main(["report", "--out", str(out)]) == 0
        captured = capsys.readouterr()
        assert "Final performance" in captured.out
        assert (out / "summary.csv").exists()
        assert (out / "stats.csv").exists()

        assert main(["curves", "--out", str(out), "--stride", "5"]) == 0
        assert len(list((out / "curves").glob("*.csv"))) == 9

    def test_run_respects_regime_and_pairing_filters(self, tmp_path):
        out = tmp_path / "archive"
        code = main(["run", "--out", str(out), "--episodes", "10",
                     "--seeds", "1", "--regime", "base",
                     "--pairing", "iql-iql"])
        assert code == 0
        assert len(list((out / "runs").glob("*.csv"))) == 1

    def test_report_missing_archive(self, tmp_path, capsys):
        missing = tmp_path / "nope"
        assert main(["report", "--out", str(missing)]) == 3
        assert str(missing) in capsys.readouterr().err

    def test_archive_round_trip(self, tmp_path):
        out = tmp_path / "archive"
        main(["run", "--out", str(out), "--episodes", "15", "--seeds", "1",
              "--regime", "base"])
        _, matrix = load_archive(out)
        assert len(matrix.results) == 4
        for result in matrix.results.values():
            assert len(result.lengths) == 15
            assert np.all(np.isfinite(result.predator_rewards))

    def test_archive_rerun_byte_identical_payloads(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            main(["run", "--out", str(out), "--episodes", "12",
                  "--seeds", "1", "--regime", "base"])
            outs.append(out)
        files_a = sorted((outs[0] / "runs").glob("*.csv"))
        files_b = sorted((outs[1] / "runs").glob("*.csv"))
        assert [f.name for f in files_a] == [f.name for f in files_b]
        for fa, fb in zip(files_a, files_b):
            assert fa.read_bytes() == fb.read_bytes()
