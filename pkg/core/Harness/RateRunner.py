"""
Monte Carlo 收敛速度实验
对 n_grid × replications 逐一生成数据、拟合并记录 ‖η̂-η₀‖² 与 λ J_q(η̂)，
汇总后用对数-对数最小二乘斜率与理论指数比较
"""

import logging
import math
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import linregress

from core.Base.JsonUtil import dump_json, load_json
from core.Base.basis import l2_gram
from core.Base.penalty import penalty_gram
from core.Harness.Scenario import ScenarioSpec
from core.Model.ModelFactory import build_model
from core.simulate import design_density, generate
from core.solver import FitOptions, fit_penalized, l2_error, penalty_value, population_fit_gaussian

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
MAX_NONCONVERGED_SHARE = 0.01
# 不参与可复现性比较的字段
WALL_CLOCK_FIELDS = ("started_at", "wall_clock_seconds", "workers")
SUMMARY_COLUMNS = ["case", "n", "mse_mean", "mse_se", "pen_mean", "slope", "slope_se", "expected", "pass"]


class ScenarioAborted(RuntimeError):
    """未收敛拟合超过允许比例"""


def _float_or_nan(value) -> float:
    # JSON 中 NaN 写作 null
    return float("nan") if value is None else float(value)


@dataclass
class RateReport:
    case: str
    model: str
    expected: float
    implied: float
    tolerance: float
    rows: List[Dict] = field(default_factory=list)
    slope: float = float("nan")
    slope_se: float = float("nan")
    passed: Optional[bool] = None
    nonconverged: int = 0
    scenario: Dict = field(default_factory=dict)
    meta: Dict = field(default_factory=dict)

    @property
    def pass_defined(self) -> bool:
        return self.passed is not None

    def to_dict(self, include_wall_clock: bool = True) -> dict:
        meta = dict(self.meta)
        if not include_wall_clock:
            for key in WALL_CLOCK_FIELDS:
                meta.pop(key, None)
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "case": self.case,
            "model": self.model,
            "expected": self.expected,
            "implied": self.implied,
            "tolerance": self.tolerance,
            "slope": self.slope,
            "slope_se": self.slope_se,
            "passed": self.passed,
            "pass_defined": self.pass_defined,
            "nonconverged": self.nonconverged,
            "rows": self.rows,
            "scenario": self.scenario,
            "meta": meta,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RateReport":
        version = payload.get("schema_version")
        if version != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema version {version}")
        return cls(
            case=payload["case"],
            model=payload["model"],
            expected=payload["expected"],
            implied=payload["implied"],
            tolerance=payload["tolerance"],
            rows=list(payload["rows"]),
            slope=_float_or_nan(payload["slope"]),
            slope_se=_float_or_nan(payload["slope_se"]),
            passed=payload["passed"],
            nonconverged=payload.get("nonconverged", 0),
            scenario=payload.get("scenario", {}),
            meta=payload.get("meta", {}),
        )

    def to_json(self, path: Union[str, Path]) -> None:
        dump_json(self.to_dict(), path)
        logger.info(f"[Harness] 报告已写出 -> {path}")

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "RateReport":
        return cls.from_dict(load_json(path))

    def summary_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows)[["n", "mse_mean", "mse_se", "pen_mean"]]
        frame.insert(0, "case", self.case)
        frame["slope"] = self.slope
        frame["slope_se"] = self.slope_se
        frame["expected"] = -self.expected
        frame["pass"] = self.passed
        return frame[SUMMARY_COLUMNS]


def _error_truth(spec: ScenarioSpec):
    # 对数密度只在 ∫h = 0 的意义下可识别
    if spec.model == "logdensity":
        return spec.truth.centered(spec.domain())
    return spec.truth


def run_replication(spec: ScenarioSpec, n: int, replication: int, opts: Optional[FitOptions] = None) -> Dict:
    """单次重复：生成数据、拟合、计算误差"""
    data = generate(spec.dgp_for(n, replication))
    basis = spec.basis_for(n)
    pen = penalty_gram(basis, spec.q)
    lam = spec.lam_for(n)
    model = build_model(spec.model, **spec.model_params)
    fit = fit_penalized(model, data, basis, pen, lam, opts=opts)

    weight = None
    if spec.model in ("gaussian", "logistic", "poisson", "quantile", "hazard"):
        weight, _ = design_density(spec.design, spec.domain())
    mse = l2_error(fit, _error_truth(spec), weight=weight)
    pen_term = lam * penalty_value(fit, pen)
    return {
        "n": int(n),
        "replication": int(replication),
        "k": basis.knots.count,
        "lambda": lam,
        "mse": mse,
        "pen": pen_term,
        "combined": mse + pen_term,
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "message": fit.message,
    }


def _run_tasks(spec: ScenarioSpec, workers: int, opts: Optional[FitOptions]) -> List[Dict]:
    tasks = [(n, r) for n in spec.n_grid for r in range(spec.replications)]
    results = Parallel(n_jobs=workers)(delayed(run_replication)(spec, n, r, opts) for n, r in tasks)
    # 按 (n, r) 稳定排序，保证与 worker 数无关
    return sorted(results, key=lambda row: (row["n"], row["replication"]))


def _aggregate(records: List[Dict]) -> List[Dict]:
    frame = pd.DataFrame(records)
    rows = []
    for n, group in frame.groupby("n", sort=True):
        count = len(group)
        rows.append({
            "n": int(n),
            "k": int(group["k"].iloc[0]),
            "lambda": float(group["lambda"].iloc[0]),
            "replications": count,
            "mse_mean": float(group["mse"].mean()),
            "mse_se": float(group["mse"].std(ddof=1) / math.sqrt(count)) if count > 1 else float("nan"),
            "pen_mean": float(group["pen"].mean()),
            "combined_mean": float(group["combined"].mean()),
            "nonconverged": int((~group["converged"]).sum()),
        })
    return rows


def rate_slope(ns, errors):
    """log(mean error) 对 log n 的 OLS 斜率及其标准误"""
    fit = linregress(np.log(np.asarray(ns, dtype=float)), np.log(np.asarray(errors, dtype=float)))
    return float(fit.slope), float(fit.stderr)


def run_scenario(spec: ScenarioSpec, workers: Optional[int] = None, opts: Optional[FitOptions] = None) -> RateReport:
    """
    运行一个场景并与理论指数比较
    未收敛拟合在任一 n 上超过 1% 时抛出 ScenarioAborted
    """
    workers = workers or spec.workers or 1
    started = datetime.now()
    t0 = time.perf_counter()
    logger.info(
        f"[Harness] 开始场景 {spec.case_label} ({spec.model}, m={spec.m}, q={spec.q}, p={spec.p}), "
        f"n_grid={list(spec.n_grid)}, R={spec.replications}, workers={workers}"
    )
    spec.condition_check()

    records = _run_tasks(spec, workers, opts)
    rows = _aggregate(records)
    total_bad = sum(row["nonconverged"] for row in rows)
    for row in rows:
        if row["nonconverged"] > MAX_NONCONVERGED_SHARE * row["replications"]:
            failed = [r for r in records if r["n"] == row["n"] and not r["converged"]]
            detail = "; ".join(f"r={r['replication']}: {r['message']}" for r in failed[:5])
            logger.error(f"[Harness] n={row['n']} 有 {row['nonconverged']} 个拟合未收敛: {detail}")
            raise ScenarioAborted(
                f"{spec.case_label}: {row['nonconverged']}/{row['replications']} fits did not converge at n={row['n']} ({detail})"
            )

    means = [row["mse_mean"] for row in rows]
    if any(later >= earlier for earlier, later in zip(means, means[1:])):
        logger.warning(f"[Harness] {spec.case_label}: 平均误差沿 n_grid 不严格下降 {np.round(means, 6).tolist()}")

    expected = spec.expected_exponent()
    report = RateReport(
        case=spec.case_label,
        model=spec.model,
        expected=expected,
        implied=spec.implied_exponent(),
        tolerance=spec.tolerance,
        rows=rows,
        nonconverged=total_bad,
        scenario=spec.to_dict(),
    )
    if len(rows) >= 2:
        report.slope, report.slope_se = rate_slope([r["n"] for r in rows], means)
    if len(rows) >= 3 and spec.replications >= 2:
        report.passed = bool(abs(report.slope + expected) <= spec.tolerance)

    report.meta = {
        "started_at": started.isoformat(timespec="seconds"),
        "wall_clock_seconds": round(time.perf_counter() - t0, 3),
        "workers": workers,
    }
    verdict = {True: "通过", False: "未通过", None: "无法判定"}[report.passed]
    logger.info(
        f"[Harness] 场景 {spec.case_label} 完成: 斜率 {report.slope:.3f} ± {report.slope_se:.3f}, "
        f"理论 -{expected:.3f}, {verdict}"
    )
    return report


def _decompose_one(spec: ScenarioSpec, n: int, replication: int, pop_coeffs: np.ndarray, G: np.ndarray, opts) -> Dict:
    data = generate(spec.dgp_for(n, replication))
    basis = spec.basis_for(n)
    pen = penalty_gram(basis, spec.q)
    weight, _ = design_density(spec.design, spec.domain())
    fit = fit_penalized(build_model("gaussian"), data, basis, pen, spec.lam_for(n), opts=opts)
    diff = fit.coeffs - pop_coeffs
    return {
        "n": int(n),
        "replication": int(replication),
        "estimation": float(diff @ G @ diff),
        "total": l2_error(fit, spec.truth, weight=weight),
    }


def decomposition_report(spec: ScenarioSpec, workers: Optional[int] = None, opts: Optional[FitOptions] = None) -> pd.DataFrame:
    """
    Gaussian 场景的误差分解：‖η̂-η̄‖²(估计误差)与 ‖η̄-η₀‖²(逼近误差)
    η̄ 由 population_fit_gaussian 给出；两个样条之差的范数用 Gram 矩阵精确计算
    """
    if spec.model != "gaussian":
        raise ValueError(f"error decomposition needs the gaussian model, got '{spec.model}'")
    workers = workers or spec.workers or 1
    weight, weight_degree = design_density(spec.design, spec.domain())

    population = {}
    for n in spec.n_grid:
        basis = spec.basis_for(n)
        pen = penalty_gram(basis, spec.q)
        pop = population_fit_gaussian(spec.truth, basis, pen, spec.lam_for(n), weight, weight_degree)
        G = l2_gram(basis, weight, weight_degree)
        population[n] = (pop.coeffs, G, l2_error(pop, spec.truth, weight=weight))

    tasks = [(n, r) for n in spec.n_grid for r in range(spec.replications)]
    records = Parallel(n_jobs=workers)(
        delayed(_decompose_one)(spec, n, r, population[n][0], population[n][1], opts) for n, r in tasks
    )
    frame = pd.DataFrame(sorted(records, key=lambda row: (row["n"], row["replication"])))
    table = frame.groupby("n", sort=True)[["estimation", "total"]].mean().reset_index()
    table["approximation"] = [population[n][2] for n in table["n"]]
    table["component_sum"] = table["estimation"] + table["approximation"]
    table["ratio"] = table["component_sum"] / table["total"]
    table.insert(0, "case", spec.case_label)
    return table[["case", "n", "estimation", "approximation", "component_sum", "total", "ratio"]]
