import json
import math
import os
from dataclasses import replace

import numpy as np
import numpy.testing as npt
import pandas as pd
import pytest

from conftest import CONFIG_DIR, unit_basis
from config_loader import check_config, load_config_to_env, load_scenario_config, parse_scenario_config
from core.Base.JsonUtil import ConfigError, extract_json_obj, load_json
from core.Base.basis import SplineFunction
from core.Harness.RateRunner import RateReport, decomposition_report, rate_slope, run_scenario
from core.Harness.Scenario import (
    PowerRule,
    RegimeError,
    ScenarioSpec,
    classify_regime,
    expected_exponent_for,
    implied_exponent_for,
)
from core.simulate import TruthFunction
from main import EXIT_INVALID, EXIT_OK, main

KINK = TruthFunction.power_kink(2.5)


def small_spec(**overrides):
    params = dict(
        case_label="II.2",
        model="gaussian",
        m=3,
        q=2,
        truth=KINK,
        knot_rule=PowerRule(1.0, 0.5),
        lambda_rule=PowerRule(0.5, 0.8),
        n_grid=(64, 128, 256),
        replications=3,
        seed=7,
        sigma=0.5,
    )
    params.update(overrides)
    return ScenarioSpec(**params)


class TestRegimes:
    """情形判定与理论指数"""

    def test_expected_exponents(self):
        npt.assert_allclose(expected_exponent_for("II.2", 2, 2, 3), 0.8)
        npt.assert_allclose(expected_exponent_for("I.3", 2, 1, 3), 2 / 3)
        npt.assert_allclose(expected_exponent_for("I.1", 99, 1, 1), 0.8)
        npt.assert_allclose(expected_exponent_for("III.2", 2, 3, 3), 0.8)

    def test_classification(self):
        assert classify_regime(2, 2, 3, 0.5, 0.8) == ["II.2"]
        assert classify_regime(2, 1, 3, 0.5, 2 / 3) == ["I.3"]
        # 最优调参恰好落在 III.1 与 III.2 的分界上
        assert classify_regime(2, 3, 3, 0.2, 1.2) == ["III.1", "III.2"]
        assert "I.1" in classify_regime(4, 2, 3, 0.2, 0.0, lam_zero=True)

    @pytest.mark.parametrize(
        "p, q, m, a, b, expected",
        [(2, 2, 3, 0.5, 0.8, 0.8), (2, 1, 3, 0.5, 2 / 3, 2 / 3), (2, 3, 3, 0.2, 1.2, 0.8)],
    )
    def test_implied_exponent_matches_optimal_tuning(self, p, q, m, a, b, expected):
        npt.assert_allclose(implied_exponent_for(p, q, m, a, b), expected, rtol=1e-12)

    def test_mislabelled_scenario_is_rejected(self):
        with pytest.raises(RegimeError, match="fits \\['II.2'\\]"):
            small_spec(case_label="II.1")

    def test_penalty_order_above_degree(self):
        with pytest.raises(ValueError, match="1 <= q <= m"):
            small_spec(q=4)

    def test_knots_and_lambda(self):
        spec = small_spec()
        assert spec.knots_for(256) == 15
        npt.assert_allclose(spec.lam_for(1024), 0.5 * 1024 ** -0.8)
        assert spec.basis_for(256).dim == 19
        assert spec.dgp_for(64, 4).seed == 11

    def test_spectral_domain(self):
        spec = small_spec(model="spectral", truth=TruthFunction.ar_log_spectrum((0.5,)),
                          case_label="I.3", q=2, lambda_rule=PowerRule(0.5, 0.8))
        assert spec.domain() == (0.0, math.pi)
        declared = small_spec(model="spectral", truth=TruthFunction.ar_log_spectrum((-0.6,), sigma=2.0), case_label="I.3")
        dgp = declared.dgp_for(512, 0)
        assert dgp.ar == (-0.6,) and dgp.ar_sigma == 2.0

    def test_condition_check(self):
        assert all(small_spec(knot_rule=PowerRule(1.0, 0.4)).condition_check().values())
        assert not small_spec(knot_rule=PowerRule(1.0, 0.5)).condition_check()["n_delta2_increasing"]

    def test_power_rule(self):
        assert PowerRule(0.0, 1.0).is_zero
        with pytest.raises(ValueError, match="rule constant"):
            PowerRule(-1.0, 0.5)


class TestRateRunner:
    """Monte Carlo 速度实验"""

    def test_report_shape(self):
        report = run_scenario(small_spec(), workers=1)
        assert [row["n"] for row in report.rows] == [64, 128, 256]
        assert all(row["replications"] == 3 for row in report.rows)
        assert report.pass_defined
        npt.assert_allclose(report.expected, 0.8)
        frame = report.summary_frame()
        assert list(frame.columns) == ["case", "n", "mse_mean", "mse_se", "pen_mean", "slope", "slope_se", "expected", "pass"]
        npt.assert_allclose(frame["expected"], -0.8)

    def test_undecidable_with_one_replication(self):
        report = run_scenario(small_spec(replications=1, n_grid=(64, 128)), workers=1)
        assert report.passed is None
        assert not report.pass_defined

    def test_reproducible_across_worker_counts(self):
        spec = small_spec(n_grid=(64, 128, 256), replications=2)
        serial = run_scenario(spec, workers=1).to_dict(include_wall_clock=False)
        parallel = run_scenario(spec, workers=2).to_dict(include_wall_clock=False)
        assert serial["scenario"] == parallel["scenario"]
        for a, b in zip(serial["rows"], parallel["rows"]):
            assert a.keys() == b.keys()
            for key, value in a.items():
                if isinstance(value, float):
                    npt.assert_allclose(b[key], value, rtol=1e-10)
                else:
                    assert b[key] == value

    def test_json_report_is_lossless(self, tmp_path):
        report = run_scenario(small_spec(replications=2), workers=1)
        path = tmp_path / "report.json"
        report.to_json(path)
        assert RateReport.from_json(path).to_dict() == report.to_dict()

    def test_slope_of_exact_power_law(self):
        slope, se = rate_slope([100, 200, 400], [1.0, 0.5 ** 0.8, 0.25 ** 0.8])
        npt.assert_allclose(slope, -0.8)
        assert se < 1e-12


class TestDecomposition:
    """估计误差与逼近误差"""

    def test_truth_in_spline_space_has_no_approximation_error(self):
        cubic = SplineFunction(unit_basis(3, 0), np.array([0.2, -0.5, 0.8, 0.1]))
        spec = small_spec(
            case_label="I.1",
            truth=TruthFunction.spline_truth(cubic),
            lambda_rule=PowerRule(0.0, 1.0),
            n_grid=(64, 128),
            replications=2,
        )
        table = decomposition_report(spec, workers=1)
        assert (table["approximation"] < 1e-10).all()

    def test_heavy_smoothing_is_approximation_dominated(self):
        spec = small_spec(lambda_rule=PowerRule(1e3, 0.0), sigma=0.1, n_grid=(128, 256), replications=2)
        table = decomposition_report(spec, workers=1)
        assert (table["approximation"] > table["estimation"]).all()

    def test_components_track_total(self):
        table = decomposition_report(small_spec(replications=4), workers=1)
        assert list(table.columns) == ["case", "n", "estimation", "approximation", "component_sum", "total", "ratio"]
        assert ((table["ratio"] > 0.5) & (table["ratio"] < 2.0)).all()

    def test_needs_gaussian(self):
        spec = small_spec(model="logistic", sigma=1.0)
        with pytest.raises(ValueError, match="gaussian"):
            decomposition_report(spec)


class TestScenarioConfig:
    """场景配置文件"""

    @pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.json")), ids=lambda p: p.stem)
    def test_shipped_configs_pass_regime_check(self, path):
        spec = load_scenario_config(path)
        assert spec.case_label in spec.to_dict()["case"]
        assert spec.implied_exponent() == pytest.approx(spec.expected_exponent(), abs=1e-9)

    def test_malformed_json_reports_position(self):
        with pytest.raises(ConfigError, match=r"bad\.json:3:\d+"):
            parse_scenario_config('{\n  "case": "II.2",\n  "model": ,\n}', "bad.json")

    def test_unknown_key_is_located(self):
        text = (CONFIG_DIR / "ii2.json").read_text().replace('"seed"', '"seeds"')
        with pytest.raises(ConfigError, match="unknown key 'seeds'") as info:
            parse_scenario_config(text, "ii2.json")
        assert info.value.line > 1

    def test_bad_rule(self):
        cfg = json.loads((CONFIG_DIR / "ii2.json").read_text())
        cfg["knot_rule"] = {"c": 1.0}
        with pytest.raises(ConfigError, match="knot_rule"):
            parse_scenario_config(json.dumps(cfg, indent=2), "x.json")

    def test_regime_error_keeps_type_and_position(self):
        cfg = json.loads((CONFIG_DIR / "ii2.json").read_text())
        cfg["case"] = "II.1"
        with pytest.raises(RegimeError, match=r"x\.json:\d+:\d+"):
            parse_scenario_config(json.dumps(cfg, indent=2), "x.json")

    def test_quantile_tau_reaches_generator(self):
        cfg = json.loads((CONFIG_DIR / "ii2.json").read_text())
        cfg.update(model="quantile", model_params={"tau": 0.25})
        spec = parse_scenario_config(json.dumps(cfg), "q.json")
        assert spec.dgp_for(256, 0).tau == 0.25

    def test_fenced_json(self):
        assert extract_json_obj('```json\n{"a": 1}\n```') == {"a": 1}
        with pytest.raises(ConfigError, match="top level"):
            extract_json_obj("[1, 2]")


class TestRuntimeSettings:
    """settings.json 与环境变量"""

    def test_defaults(self, isolated_env):
        assert load_config_to_env() is False
        assert os.environ["SPLINE_WORKERS"] == "1"
        assert check_config()

    def test_environment_wins_over_file(self, isolated_env, monkeypatch):
        (isolated_env / "settings.json").write_text('{"SPLINE_WORKERS": 4, "SPLINE_LOG_LEVEL": "DEBUG"}')
        monkeypatch.setenv("SPLINE_WORKERS", "2")
        assert load_config_to_env()
        assert os.environ["SPLINE_WORKERS"] == "2"
        assert os.environ["SPLINE_LOG_LEVEL"] == "DEBUG"

    def test_invalid_worker_count(self, isolated_env, monkeypatch):
        monkeypatch.setenv("SPLINE_WORKERS", "many")
        assert not check_config()


class TestCommandLine:
    """命令行入口与退出码"""

    def test_eigen_csv(self, isolated_env):
        out = isolated_env / "eigen.csv"
        assert main(["eigen", "--m", "3", "--q", "2", "--k", "20", "--out", str(out)]) == EXIT_OK
        frame = pd.read_csv(out)
        assert list(frame.columns) == ["nu", "rho"]
        assert len(frame) == 24
        assert (frame["rho"].iloc[:2] < 1e-6).all()

    def test_basis_json(self, isolated_env):
        out = isolated_env / "basis.json"
        assert main(["basis", "--m", "1", "--k", "0", "--out", str(out)]) == EXIT_OK
        payload = load_json(out)
        assert payload["dim"] == 2
        npt.assert_allclose(payload["complexity_constant"], 2.0, rtol=1e-12)

    def test_simulate_then_fit(self, isolated_env):
        data = isolated_env / "data.csv"
        truth = '{"kind": "smooth_sin"}'
        assert main(["simulate", "--model", "gaussian", "--truth", truth, "--n", "300", "--sigma", "0.3", "--seed", "3",
                     "--out", str(data)]) == EXIT_OK
        fit_path = isolated_env / "fit.json"
        grid = isolated_env / "grid.csv"
        assert main(["fit", "--model", "gaussian", "--input", str(data), "--lam", "1e-4", "--k", "8",
                     "--out", str(fit_path), "--eval", str(grid)]) == EXIT_OK
        payload = load_json(fit_path)
        assert payload["converged"] and len(payload["coeffs"]) == 12
        frame = pd.read_csv(grid)
        assert np.abs(frame["eta_hat"] - np.sin(2 * np.pi * frame["x"])).max() < 0.3

    def test_spectral_fit_emits_density(self, isolated_env):
        data = isolated_env / "pgram.csv"
        truth = '{"kind": "ar_log_spectrum", "phi": [0.5]}'
        assert main(["simulate", "--model", "spectral", "--truth", truth, "--n", "2048", "--seed", "5",
                     "--out", str(data)]) == EXIT_OK
        grid = isolated_env / "spectrum.csv"
        assert main(["fit", "--model", "spectral", "--input", str(data), "--lam", "1e-6", "--k", "8",
                     "--out", str(isolated_env / "fit.json"), "--eval", str(grid)]) == EXIT_OK
        frame = pd.read_csv(grid)
        npt.assert_allclose(frame["spectral_density"], np.exp(frame["eta_hat"]), rtol=1e-12)

    def test_simulate_from_config_with_replications(self, isolated_env):
        out = isolated_env / "sim.csv"
        assert main(["simulate", "--config", str(CONFIG_DIR / "ii2.json"), "--n", "50",
                     "--replications", "2", "--out", str(out)]) == EXIT_OK
        assert (isolated_env / "sim_r000.csv").exists() and (isolated_env / "sim_r001.csv").exists()

    def test_mislabelled_config_exits_2(self, isolated_env):
        cfg = json.loads((CONFIG_DIR / "ii2.json").read_text())
        cfg["case"] = "II.1"
        path = isolated_env / "wrong.json"
        path.write_text(json.dumps(cfg, indent=2))
        assert main(["rates", "--config", str(path)]) == EXIT_INVALID

    def test_rates_and_report(self, isolated_env):
        cfg = json.loads((CONFIG_DIR / "ii2.json").read_text())
        cfg.update(n_grid=[64, 128], replications=1)
        path = isolated_env / "tiny.json"
        path.write_text(json.dumps(cfg, indent=2))
        report = isolated_env / "tiny_report.json"
        assert main(["rates", "--config", str(path), "--out", str(report)]) == EXIT_OK
        summary = isolated_env / "summary.csv"
        assert main(["report", str(report), "--out", str(summary)]) == EXIT_OK
        assert pd.read_csv(summary)["n"].tolist() == [64, 128]

    def test_missing_input_file(self, isolated_env):
        code = main(["fit", "--model", "gaussian", "--input", "nope.csv", "--lam", "0.1"])
        assert code != EXIT_OK
