"""
命令行入口
  basis      导出节点、Gram 矩阵与 A_n
  eigen      惩罚特征谱 (CSV: nu,rho)
  simulate   按场景或参数生成数据 CSV
  fit        对 CSV 数据做惩罚样条拟合
  rates      运行收敛速度场景，输出 RateReport JSON
  report     合并多个 RateReport 为汇总 CSV
  decompose  Gaussian 场景的估计/逼近误差分解 CSV
退出码：0 成功，2 输入或配置错误，3 速度比较未通过，1 其它失败
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from config_loader import check_config, load_config_to_env, load_scenario_config, runtime_workers, setup_logging
from core.Base.JsonUtil import dump_json, extract_json_obj
from core.Base.basis import BasisSpec, complexity_constant, l2_gram, make_knots
from core.Base.penalty import eigen_decompose, eigen_growth_slope, penalty_gram
from core.Harness.RateRunner import RateReport, ScenarioAborted, decomposition_report, run_scenario
from core.Model.Dataset import read_dataset, write_dataset
from core.Model.ModelFactory import DATASET_KIND_OF, MODEL_NAMES, build_model
from core.Model.Spectral import spectral_density
from core.simulate import DGPSpec, TruthFunction, simulate_replications
from core.solver import fit_penalized

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_REJECTED = 3


def _basis_from_args(args) -> BasisSpec:
    knots = make_knots(args.a, args.b, args.k, args.scheme, ratio_bound=args.ratio_bound, seed=args.seed)
    return BasisSpec(knots, args.m)


def _emit_frame(frame: pd.DataFrame, out: Optional[str]) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out, index=False, float_format="%.17g")
        print(f"✅ 已写出 {out}")
    else:
        frame.to_csv(sys.stdout, index=False, float_format="%.17g")


def cmd_basis(args) -> int:
    basis = _basis_from_args(args)
    payload = {
        "degree": basis.degree,
        "domain": list(basis.domain),
        "knots": list(basis.knots.interior),
        "dim": basis.dim,
        "mesh_size": basis.knots.mesh_size,
        "mesh_ratio": basis.knots.mesh_ratio,
        "complexity_constant": complexity_constant(basis, args.grid_density),
        "gram": l2_gram(basis),
    }
    if args.out:
        dump_json(payload, args.out)
        print(f"✅ 基已导出到 {args.out} (N={basis.dim}, A_n={payload['complexity_constant']:.6g})")
    else:
        print(f"N={basis.dim}, δ={basis.knots.mesh_size:.6g}, A_n={payload['complexity_constant']:.6g}")
    return EXIT_OK


def cmd_eigen(args) -> int:
    basis = _basis_from_args(args)
    system = eigen_decompose(penalty_gram(basis, args.q), l2_gram(basis))
    _emit_frame(pd.DataFrame({"nu": np.arange(system.size), "rho": system.rho}), args.out)
    try:
        slope = eigen_growth_slope(system)
        logger.info(f"[Penalty] 特征值增长斜率 {slope:.3f} (理论 {2 * args.q})")
    except ValueError as e:
        logger.warning(f"[Penalty] 无法计算增长斜率: {e}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.config:
        spec = load_scenario_config(args.config)
        n = args.n or spec.n_grid[0]
        dgp = spec.dgp_for(n, 0)
    else:
        if not args.model or not args.truth or not args.n:
            raise ValueError("simulate needs --config, or --model, --truth and --n")
        truth = TruthFunction.from_dict(extract_json_obj(args.truth, "--truth"))
        domain = (0.0, np.pi) if args.model == "spectral" else (0.0, 1.0)
        dgp = DGPSpec(model=args.model, truth=truth, n=args.n, sigma=args.sigma, tau=args.tau,
                      design=args.design, domain=domain)
    if args.seed is not None:
        dgp = dgp.with_seed(args.seed)

    out = Path(args.out or "data.csv")
    for r, data in simulate_replications(dgp, args.replications):
        target = out if args.replications == 1 else out.with_name(f"{out.stem}_r{r:03d}{out.suffix}")
        target.parent.mkdir(parents=True, exist_ok=True)
        write_dataset(data, target)
    print(f"✅ 已生成 {args.replications} 份 {dgp.model} 数据 (n={dgp.n}, seed={dgp.seed})")
    return EXIT_OK


def cmd_fit(args) -> int:
    params = {}
    if args.model == "quantile":
        params = {"tau": args.tau, "smoothing": args.smoothing}
    model = build_model(args.model, **params)
    data = read_dataset(args.input, DATASET_KIND_OF[args.model])
    if args.model == "spectral":
        args.a, args.b = 0.0, float(np.pi)
    basis = _basis_from_args(args)
    pen = penalty_gram(basis, args.q)
    fit = fit_penalized(model, data, basis, pen, args.lam)

    payload = {"model": model.describe(), "q": args.q, **fit.to_dict()}
    out = args.out or "fit.json"
    dump_json(payload, out)
    marker = "✅" if fit.converged else "⚠️ "
    print(f"{marker} 拟合{'收敛' if fit.converged else '未收敛'}: iter={fit.iterations}, "
          f"pℓ={fit.objective_value:.10g}, |grad|={fit.grad_norm:.3e} -> {out}")
    if args.eval:
        grid = np.linspace(basis.domain[0], basis.domain[1], args.eval_points)
        frame = pd.DataFrame({"x": grid, "eta_hat": fit(grid)})
        if args.model == "spectral":
            frame["spectral_density"] = spectral_density(fit, grid)
        _emit_frame(frame, args.eval)
    return EXIT_OK


def cmd_rates(args) -> int:
    spec = load_scenario_config(args.config)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.replications:
        spec = replace(spec, replications=args.replications)
    workers = args.workers or spec.workers or runtime_workers()
    report = run_scenario(spec, workers=workers)
    report.to_json(args.out or f"{spec.name or spec.case_label}.json")

    if report.passed is None:
        print(f"⚠️  {spec.case_label}: 斜率 {report.slope:.3f}，网格或重复数不足，无法判定")
        return EXIT_OK
    if report.passed:
        print(f"✅ {spec.case_label}: 斜率 {report.slope:.3f} ± {report.slope_se:.3f}，理论 -{report.expected:.3f}")
        return EXIT_OK
    print(f"❌ {spec.case_label}: 斜率 {report.slope:.3f} 偏离理论 -{report.expected:.3f} 超过 {report.tolerance}")
    return EXIT_REJECTED


def cmd_report(args) -> int:
    frames = [RateReport.from_json(path).summary_frame() for path in args.inputs]
    _emit_frame(pd.concat(frames, ignore_index=True), args.out)
    return EXIT_OK


def cmd_decompose(args) -> int:
    spec = load_scenario_config(args.config)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.replications:
        spec = replace(spec, replications=args.replications)
    table = decomposition_report(spec, workers=args.workers or spec.workers or runtime_workers())
    _emit_frame(table, args.out)
    return EXIT_OK


def _add_basis_flags(parser: argparse.ArgumentParser, q: bool = False) -> None:
    parser.add_argument("--m", type=int, default=3, help="样条次数")
    parser.add_argument("--k", type=int, default=10, help="内节点个数")
    parser.add_argument("--a", type=float, default=0.0, help="区间左端点")
    parser.add_argument("--b", type=float, default=1.0, help="区间右端点")
    parser.add_argument("--scheme", choices=["equal", "jittered"], default="equal")
    parser.add_argument("--ratio-bound", type=float, default=2.0)
    if q:
        parser.add_argument("--q", type=int, default=2, help="惩罚阶数")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="随机种子")
    common.add_argument("--out", default=None, help="输出文件")
    common.add_argument("--log-level", default=None, help="覆盖 SPLINE_LOG_LEVEL")

    parser = argparse.ArgumentParser(description="惩罚样条收敛速度实验工具")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("basis", parents=[common], help="导出节点、Gram 矩阵与 A_n")
    _add_basis_flags(p)
    p.add_argument("--grid-density", type=int, default=64)
    p.set_defaults(func=cmd_basis)

    p = sub.add_parser("eigen", parents=[common], help="惩罚特征谱 CSV")
    _add_basis_flags(p, q=True)
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("simulate", parents=[common], help="生成数据 CSV")
    p.add_argument("--config", default=None, help="场景配置文件")
    p.add_argument("--model", choices=MODEL_NAMES, default=None)
    p.add_argument("--truth", default=None, help='真值函数 JSON，例如 {"kind": "power_kink", "s": 2.5, "c": 0.5}')
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--design", choices=["uniform", "linear"], default="uniform")
    p.add_argument("--replications", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="惩罚样条拟合")
    _add_basis_flags(p, q=True)
    p.add_argument("--model", choices=MODEL_NAMES, required=True)
    p.add_argument("--input", required=True, help="数据 CSV")
    p.add_argument("--lam", type=float, required=True, help="惩罚参数 λ")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--smoothing", type=float, default=0.0)
    p.add_argument("--eval", default=None, help="在等距网格上求值并写出 CSV (x,eta_hat)")
    p.add_argument("--eval-points", type=int, default=201)
    p.set_defaults(func=cmd_fit)

    for name, func, text in (
        ("rates", cmd_rates, "运行收敛速度场景"),
        ("decompose", cmd_decompose, "估计/逼近误差分解"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--config", required=True, help="场景配置文件")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--replications", type=int, default=None)
        p.set_defaults(func=func)

    p = sub.add_parser("report", parents=[common], help="合并 RateReport 为汇总 CSV")
    p.add_argument("inputs", nargs="+", help="RateReport JSON 文件")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    load_config_to_env()
    setup_logging(args.log_level)
    if not check_config():
        return EXIT_INVALID
    try:
        return args.func(args)
    except ValueError as e:
        print(f"❌ {e}")
        return EXIT_INVALID
    except (ScenarioAborted, OSError) as e:
        print(f"❌ {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
