"""
收敛速度情形(七种)的场景定义
δ_n = c_δ n^{-a}，λ_n = c_λ n^{-b}；构造时检查 (a, b) 确实落在所标情形的区域内
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.Base.basis import BasisSpec, make_knots
from core.simulate import SMOOTH_P, DGPSpec, TruthFunction

logger = logging.getLogger(__name__)

CASE_LABELS = ("I.1", "I.2", "I.3", "II.1", "II.2", "III.1", "III.2")
DEFAULT_N_GRID = (256, 512, 1024, 2048, 4096, 8192)
# 指数比较的容差
EXPONENT_TOL = 1e-9


class RegimeError(ValueError):
    """场景的调参指数与所标情形不符"""


@dataclass(frozen=True)
class PowerRule:
    """c · n^{-exponent}"""

    c: float
    exponent: float

    def __post_init__(self):
        if self.c < 0 or not math.isfinite(self.c):
            raise ValueError(f"rule constant must be finite and >= 0, got {self.c}")

    def __call__(self, n: float) -> float:
        return self.c * float(n) ** (-self.exponent)

    @property
    def is_zero(self) -> bool:
        return self.c == 0

    def to_dict(self) -> dict:
        return {"c": self.c, "exponent": self.exponent}


def effective_smoothness(p: int, m: int) -> int:
    """p' = min(p, m + 1)"""
    return min(p, m + 1)


def _case_family(p: int, q: int, m: int) -> str:
    pp = effective_smoothness(p, m)
    if q < pp:
        return "I"
    if q == pp:
        return "II"
    return "III"


def _below(a: float, b: float, power: float, lam_zero: bool) -> bool:
    """λ ≲ δ^{power}：λ 的衰减指数 b 不小于 power·a"""
    return lam_zero or b >= power * a - EXPONENT_TOL


def _above(a: float, b: float, power: float, lam_zero: bool) -> bool:
    """λ ≳ δ^{power}"""
    return (not lam_zero) and b <= power * a + EXPONENT_TOL


def regime_holds(label: str, p: int, q: int, m: int, a: float, b: float, lam_zero: bool = False) -> bool:
    if label not in CASE_LABELS:
        raise ValueError(f"unknown case label '{label}', expected one of {CASE_LABELS}")
    family = label.split(".")[0]
    if family != _case_family(p, q, m):
        return False
    pp = effective_smoothness(p, m)
    if label == "I.1":
        return _below(a, b, 2 * pp, lam_zero)
    if label == "I.2":
        return _above(a, b, 2 * pp, lam_zero) and _below(a, b, 2 * q, lam_zero)
    if label == "I.3":
        return _above(a, b, 2 * q, lam_zero)
    if label == "II.1":
        return _below(a, b, 2 * p, lam_zero)
    if label == "II.2":
        return _above(a, b, 2 * p, lam_zero)
    if label == "III.1":
        return _below(a, b, 2 * q, lam_zero)
    return _above(a, b, 2 * q, lam_zero)


def classify_regime(p: int, q: int, m: int, a: float, b: float, lam_zero: bool = False) -> List[str]:
    """所有与 (p, q, m, a, b) 相容的情形标签；在区域边界上可能不止一个"""
    return [label for label in CASE_LABELS if regime_holds(label, p, q, m, a, b, lam_zero)]


def expected_exponent_for(label: str, p: int, q: int, m: int) -> float:
    """最优调参下 MSE ~ n^{-e} 的 e"""
    pp = effective_smoothness(p, m)
    if label in ("I.1", "I.2"):
        return 2 * pp / (2 * pp + 1)
    if label == "I.3":
        return 2 * q / (2 * q + 1)
    if label in ("II.1", "II.2", "III.1", "III.2"):
        return 2 * p / (2 * p + 1)
    raise ValueError(f"unknown case label '{label}'")


def implied_exponent_for(p: int, q: int, m: int, a: float, b: float, lam_zero: bool = False) -> float:
    """
    一般界 δ^{2p'} ∨ λ δ^{2(p'-q)∧0} + (nλ^{1/(2q)})^{-1} ∧ (nδ)^{-1}
    在 δ = n^{-a}、λ = n^{-b} 下的衰减指数
    """
    pp = effective_smoothness(p, m)
    bias = 2 * pp * a
    variance = 1 - a
    if not lam_zero:
        bias = min(bias, b + min(2 * (pp - q), 0) * a)
        variance = max(variance, 1 - b / (2 * q))
    return min(bias, variance)


@dataclass(frozen=True)
class ScenarioSpec:
    case_label: str
    model: str
    m: int
    q: int
    truth: TruthFunction
    knot_rule: PowerRule
    lambda_rule: PowerRule
    n_grid: Tuple[int, ...] = DEFAULT_N_GRID
    replications: int = 100
    seed: int = 0
    tolerance: float = 0.15
    sigma: float = 1.0
    design: str = "uniform"
    knot_scheme: str = "equal"
    model_params: Dict = field(default_factory=dict)
    dgp_params: Dict = field(default_factory=dict)
    workers: Optional[int] = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if self.case_label not in CASE_LABELS:
            raise ValueError(f"unknown case label '{self.case_label}', expected one of {CASE_LABELS}")
        if not 1 <= self.q <= self.m:
            raise ValueError(f"penalty order must satisfy 1 <= q <= m, got q={self.q}, m={self.m}")
        if self.p < 1:
            raise ValueError(f"truth smoothness must be >= 1, got p={self.p}")
        if self.knot_rule.c <= 0:
            raise ValueError("knot rule constant must be positive")
        if not self.n_grid or any(n < 1 for n in self.n_grid) or list(self.n_grid) != sorted(set(self.n_grid)):
            raise ValueError(f"n_grid must be strictly increasing positive sizes, got {self.n_grid}")
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")
        if self.tolerance <= 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        self.check_regime()

    @property
    def p(self) -> int:
        return self.truth.smoothness

    @property
    def p_prime(self) -> int:
        return effective_smoothness(self.p, self.m)

    def check_regime(self) -> None:
        """
        λ_n / δ_n^{2s} 沿 n_grid 的单调方向只取决于 b - 2s·a 的符号，
        因此按指数比较即可判断所标情形
        """
        a, b = self.knot_rule.exponent, self.lambda_rule.exponent
        lam_zero = self.lambda_rule.is_zero
        if not regime_holds(self.case_label, self.p, self.q, self.m, a, b, lam_zero):
            consistent = classify_regime(self.p, self.q, self.m, a, b, lam_zero)
            raise RegimeError(
                f"scenario labelled {self.case_label} (p={self.p}, q={self.q}, m={self.m}) has "
                f"δ_n ∝ n^-{a:g}, λ_n ∝ n^-{b:g}, which fits {consistent or 'no case'}"
            )

    def knots_for(self, n: int) -> int:
        """k = round(c_δ^{-1} n^a) - 1"""
        return max(0, int(round(float(n) ** self.knot_rule.exponent / self.knot_rule.c)) - 1)

    def lam_for(self, n: int) -> float:
        return self.lambda_rule(n)

    def domain(self) -> Tuple[float, float]:
        return (0.0, math.pi) if self.model == "spectral" else (0.0, 1.0)

    def basis_for(self, n: int, seed: Optional[int] = None) -> BasisSpec:
        lo, hi = self.domain()
        knots = make_knots(lo, hi, self.knots_for(n), self.knot_scheme, seed=self.seed if seed is None else seed)
        return BasisSpec(knots, self.m)

    def dgp_for(self, n: int, replication: int) -> DGPSpec:
        return DGPSpec(
            model=self.model,
            truth=self.truth,
            n=n,
            sigma=self.sigma,
            design=self.design,
            domain=self.domain(),
            seed=self.seed + replication,
            **self.dgp_params,
        )

    def expected_exponent(self) -> float:
        return expected_exponent_for(self.case_label, self.p, self.q, self.m)

    def implied_exponent(self) -> float:
        return implied_exponent_for(
            self.p, self.q, self.m, self.knot_rule.exponent, self.lambda_rule.exponent, self.lambda_rule.is_zero
        )

    def condition_check(self) -> Dict[str, bool]:
        """
        充分条件诊断：n δ_n² 沿网格增大，λ_n / δ_n^{1+2(q-p)∧0} 沿网格减小；
        不满足只记 warning
        """
        ns = np.asarray(self.n_grid, dtype=float)
        lo, hi = self.domain()
        delta = np.array([(hi - lo) / (self.knots_for(int(n)) + 1) for n in ns])
        lam = np.array([self.lam_for(int(n)) for n in ns])
        growth = ns * delta ** 2
        power = 1 + min(2 * (self.q - self.p), 0)
        result = {
            "n_delta2_increasing": bool(len(ns) < 2 or np.all(np.diff(growth) > 0)),
            "lambda_ratio_decreasing": bool(
                self.lambda_rule.is_zero or len(ns) < 2 or np.all(np.diff(lam / delta ** power) < 0)
            ),
        }
        for key, ok in result.items():
            if not ok:
                logger.warning(f"[Harness] {self.case_label}: 充分条件 {key} 在 n_grid 上不成立")
        return result

    def _truth_dict(self) -> dict:
        try:
            return self.truth.to_dict()
        except ValueError:
            # 样条/自定义真值只记录类型和光滑度，报告不能据此复现
            return {"kind": self.truth.kind, "declared_p": self.p}

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "name": self.name,
            "case": self.case_label,
            "model": self.model,
            "m": self.m,
            "q": self.q,
            "p": self.p if self.p != SMOOTH_P else "smooth",
            "truth": self._truth_dict(),
            "knot_rule": self.knot_rule.to_dict(),
            "lambda_rule": self.lambda_rule.to_dict(),
            "n_grid": list(self.n_grid),
            "replications": self.replications,
            "seed": self.seed,
            "tolerance": self.tolerance,
            "sigma": self.sigma,
            "design": self.design,
            "knot_scheme": self.knot_scheme,
            "model_params": dict(self.model_params),
            "dgp_params": {k: list(v) if isinstance(v, tuple) else v for k, v in self.dgp_params.items()},
        }
