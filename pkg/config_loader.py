#!/usr/bin/env python3
"""
配置模块
1. 运行时设置：settings.json -> .env -> 环境变量(环境变量优先)
2. 场景配置：configs/*.json，解析为 ScenarioSpec
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Union

from dotenv import load_dotenv

from core.Base.JsonUtil import ConfigError, extract_json_obj, locate_key
from core.Harness.Scenario import CASE_LABELS, PowerRule, RegimeError, ScenarioSpec
from core.Model.ModelFactory import MODEL_NAMES
from core.simulate import DESIGNS, TruthFunction

# 配置文件路径
CONFIG_FILE = "settings.json"
SCENARIO_SCHEMA_VERSION = 1

DEFAULT_SETTINGS = {
    "SPLINE_WORKERS": "1",
    "SPLINE_LOG_LEVEL": "INFO",
    "SPLINE_OUTPUT_DIR": "results",
}
LOG_LEVELS = ("CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG")
LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"

REQUIRED_KEYS = ("case", "model", "m", "q", "truth", "knot_rule", "lambda_rule")
OPTIONAL_KEYS = {
    "schema_version", "name", "description", "n_grid", "replications", "seed", "tolerance", "sigma",
    "design", "knot_scheme", "workers", "model_params", "dgp",
}
DGP_KEYS = {"noise", "tau", "censor_bound", "ar", "ar_sigma", "series_length", "burn_in"}


def load_config_to_env(config_file: str = CONFIG_FILE) -> bool:
    """
    从 settings.json 和 .env 加载运行时设置
    已存在的环境变量不会被覆盖；缺省项写入默认值
    """
    loaded = False
    if os.path.exists(config_file):
        try:
            with open(config_file, "r", encoding="utf-8") as f:
                config = extract_json_obj(f.read(), config_file)
            for key, value in config.items():
                if value is not None and not os.getenv(key):
                    os.environ[key] = str(value)
            print(f"✅ 已从 {config_file} 加载配置")
            loaded = True
        except (OSError, ConfigError) as e:
            print(f"❌ 加载配置文件失败: {e}")
            return False

    # .env 同样不覆盖已存在的变量
    load_dotenv(override=False)
    for key, value in DEFAULT_SETTINGS.items():
        os.environ.setdefault(key, value)
    return loaded


def check_config() -> bool:
    """
    检查运行时设置是否合法
    """
    problems = []
    workers = os.getenv("SPLINE_WORKERS", DEFAULT_SETTINGS["SPLINE_WORKERS"])
    if not workers.lstrip("-").isdigit() or int(workers) == 0:
        problems.append(f"SPLINE_WORKERS={workers} (需要非零整数，-1 表示全部核)")
    level = os.getenv("SPLINE_LOG_LEVEL", DEFAULT_SETTINGS["SPLINE_LOG_LEVEL"]).upper()
    if level not in LOG_LEVELS:
        problems.append(f"SPLINE_LOG_LEVEL={level}")

    if problems:
        print("❌ 运行时设置不合法:")
        for item in problems:
            print(f"   - {item}")
        return False
    return True


def show_current_config():
    """
    显示当前运行时设置（用于调试）
    """
    print("\n📋 当前配置:")
    for var in DEFAULT_SETTINGS:
        value = os.getenv(var)
        print(f"   {var}: {value if value else '未设置'}")


def runtime_workers() -> int:
    return int(os.getenv("SPLINE_WORKERS", DEFAULT_SETTINGS["SPLINE_WORKERS"]))


def setup_logging(level: str = None) -> None:
    level = (level or os.getenv("SPLINE_LOG_LEVEL", DEFAULT_SETTINGS["SPLINE_LOG_LEVEL"])).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)


def _fail(text: str, source: str, key: str, message: str):
    line, col = locate_key(text, key)
    raise ConfigError(source, line, col, message)


def _number(cfg: Dict[str, Any], key: str, text: str, source: str, kind=float, default=None):
    if key not in cfg:
        if default is None:
            _fail(text, source, key, f"missing required key '{key}'")
        return default
    value = cfg[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(text, source, key, f"'{key}' must be a number, got {json.dumps(value)}")
    if kind is int and int(value) != value:
        _fail(text, source, key, f"'{key}' must be an integer, got {value}")
    return kind(value)


def _rule(cfg: Dict[str, Any], key: str, text: str, source: str) -> PowerRule:
    rule = cfg[key]
    if not isinstance(rule, dict) or set(rule) != {"c", "exponent"}:
        _fail(text, source, key, f"'{key}' must be an object with keys 'c' and 'exponent'")
    c = _number(rule, "c", text, source)
    exponent = _number(rule, "exponent", text, source)
    try:
        return PowerRule(c, exponent)
    except ValueError as e:
        _fail(text, source, key, str(e))


def parse_scenario_config(text: str, source: str = "<string>") -> ScenarioSpec:
    """
    场景配置(schema 1):
    {case, model, m, q, truth: {kind, ...}, knot_rule: {c, exponent}, lambda_rule: {c, exponent},
     n_grid, replications, seed, tolerance, sigma, design, knot_scheme, workers, model_params, dgp}
    """
    cfg = extract_json_obj(text, source)
    version = cfg.get("schema_version", SCENARIO_SCHEMA_VERSION)
    if version != SCENARIO_SCHEMA_VERSION:
        _fail(text, source, "schema_version", f"unsupported schema_version {version}")
    for key in REQUIRED_KEYS:
        if key not in cfg:
            raise ConfigError(source, 1, 1, f"missing required key '{key}'")
    unknown = sorted(set(cfg) - set(REQUIRED_KEYS) - OPTIONAL_KEYS)
    if unknown:
        _fail(text, source, unknown[0], f"unknown key '{unknown[0]}'")

    if cfg["case"] not in CASE_LABELS:
        _fail(text, source, "case", f"case must be one of {list(CASE_LABELS)}, got {cfg['case']!r}")
    model = str(cfg["model"]).lower()
    if model not in MODEL_NAMES:
        _fail(text, source, "model", f"model must be one of {list(MODEL_NAMES)}, got {cfg['model']!r}")
    if cfg.get("design", "uniform") not in DESIGNS:
        _fail(text, source, "design", f"design must be one of {list(DESIGNS)}")

    truth_cfg = cfg["truth"]
    if not isinstance(truth_cfg, dict) or "kind" not in truth_cfg:
        _fail(text, source, "truth", "'truth' must be an object with a 'kind'")
    try:
        truth = TruthFunction.from_dict(truth_cfg)
    except (TypeError, ValueError) as e:
        _fail(text, source, "truth", f"invalid truth: {e}")

    n_grid = cfg.get("n_grid")
    if n_grid is not None and (not isinstance(n_grid, list) or not all(isinstance(n, int) for n in n_grid)):
        _fail(text, source, "n_grid", "'n_grid' must be a list of integers")

    model_params = cfg.get("model_params", {})
    dgp = cfg.get("dgp", {})
    if not isinstance(model_params, dict):
        _fail(text, source, "model_params", "'model_params' must be an object")
    if not isinstance(dgp, dict) or set(dgp) - DGP_KEYS:
        _fail(text, source, "dgp", f"'dgp' must be an object with keys among {sorted(DGP_KEYS)}")
    dgp = {k: tuple(v) if isinstance(v, list) else v for k, v in dgp.items()}
    if model == "quantile":
        dgp.setdefault("tau", model_params.get("tau", 0.5))

    workers = cfg.get("workers")
    kwargs = dict(
        case_label=cfg["case"],
        model=model,
        m=_number(cfg, "m", text, source, int),
        q=_number(cfg, "q", text, source, int),
        truth=truth,
        knot_rule=_rule(cfg, "knot_rule", text, source),
        lambda_rule=_rule(cfg, "lambda_rule", text, source),
        replications=_number(cfg, "replications", text, source, int, default=100),
        seed=_number(cfg, "seed", text, source, int, default=0),
        tolerance=_number(cfg, "tolerance", text, source, float, default=0.15),
        sigma=_number(cfg, "sigma", text, source, float, default=1.0),
        design=cfg.get("design", "uniform"),
        knot_scheme=cfg.get("knot_scheme", "equal"),
        model_params=model_params,
        dgp_params=dgp,
        workers=None if workers is None else _number(cfg, "workers", text, source, int),
        name=str(cfg.get("name", Path(source).stem)),
    )
    if n_grid is not None:
        kwargs["n_grid"] = tuple(n_grid)
    try:
        return ScenarioSpec(**kwargs)
    except ConfigError:
        raise
    except ValueError as e:
        # RegimeError 保留原类型，方便调用方区分
        anchor = "lambda_rule" if isinstance(e, RegimeError) else "case"
        line, col = locate_key(text, anchor)
        e.args = (f"{source}:{line}:{col}: {e}",)
        raise


def load_scenario_config(path: Union[str, Path]) -> ScenarioSpec:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return parse_scenario_config(text, str(path))


if __name__ == "__main__":
    # 测试配置加载
    load_config_to_env()
    show_current_config()
    print(f"\n配置完整性检查: {'通过' if check_config() else '失败'}")
