"""
数据生成过程
真值函数(光滑度可控) + 各模型的 DGP，随机数统一用 PCG64，重复 r 使用 seed + r
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import lfilter
from scipy.special import expit
from scipy.stats import norm, t as student_t

from core.Base.basis import SplineFunction
from core.Base.quadrature import adaptive_integrate
from core.Model.Dataset import Dataset, PeriodogramData, PointsData, SurvivalData, XYData
from core.Model.LogDensity import ExpDensity
from core.Model.ModelFactory import MODEL_NAMES

logger = logging.getLogger(__name__)

# 无穷光滑的标记
SMOOTH_P = 99
TRUTH_KINDS = ("smooth_sin", "power_kink", "spline_truth", "ar_log_spectrum", "custom")
DESIGNS = ("uniform", "linear")
NOISES = ("gaussian", "t3")
DEFAULT_AR = (0.5,)


@dataclass(frozen=True, eq=False)
class TruthFunction:
    """
    η₀(x) = scale * f(x) + shift
      smooth_sin       f(x) = sin(2π·freq·x)
      power_kink(s,c)  f(x) = |x - c|^s，J_q 有限当且仅当 q < s + 1/2
      spline_truth     f = 给定样条
      ar_log_spectrum  AR(p) 的 log 谱密度
      custom           任意向量化函数，需自报光滑度
    """

    kind: str
    params: dict = field(default_factory=dict)
    func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    declared_p: Optional[int] = None
    scale: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in TRUTH_KINDS:
            raise ValueError(f"unknown truth kind '{self.kind}', expected one of {TRUTH_KINDS}")
        if self.kind == "power_kink" and self.params.get("s", 0) <= 0:
            raise ValueError("power_kink exponent s must be positive")
        if self.kind in ("spline_truth", "custom") and self.func is None:
            raise ValueError(f"truth kind '{self.kind}' needs a function")
        if self.kind == "ar_log_spectrum":
            check_stationary(self.params.get("phi", ()))

    @classmethod
    def smooth_sin(cls, freq: float = 1.0, scale: float = 1.0, shift: float = 0.0) -> "TruthFunction":
        return cls("smooth_sin", {"freq": freq}, scale=scale, shift=shift)

    @classmethod
    def power_kink(cls, s: float, c: float = 0.5, scale: float = 1.0, shift: float = 0.0) -> "TruthFunction":
        return cls("power_kink", {"s": s, "c": c}, scale=scale, shift=shift)

    @classmethod
    def spline_truth(cls, spline: SplineFunction, scale: float = 1.0, shift: float = 0.0) -> "TruthFunction":
        # 样条属于 W^m 但 J_{m+1} 含 Dirac 项
        return cls("spline_truth", {"degree": spline.basis.degree}, func=spline,
                   declared_p=spline.basis.degree, scale=scale, shift=shift)

    @classmethod
    def ar_log_spectrum(cls, phi: Sequence[float], sigma: float = 1.0) -> "TruthFunction":
        return cls("ar_log_spectrum", {"phi": tuple(float(v) for v in phi), "sigma": float(sigma)})

    @classmethod
    def custom(cls, func: Callable, declared_p: int, scale: float = 1.0, shift: float = 0.0) -> "TruthFunction":
        return cls("custom", {}, func=func, declared_p=declared_p, scale=scale, shift=shift)

    def _base(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "smooth_sin":
            return np.sin(2 * math.pi * self.params.get("freq", 1.0) * x)
        if self.kind == "power_kink":
            return np.abs(x - self.params.get("c", 0.5)) ** self.params["s"]
        if self.kind == "ar_log_spectrum":
            return ar_log_spectral_density(x, self.params["phi"], self.params.get("sigma", 1.0))
        return np.asarray(self.func(x), dtype=float)

    def __call__(self, x):
        xs = np.asarray(x, dtype=float)
        out = self.scale * self._base(xs) + self.shift
        return float(out) if np.ndim(out) == 0 else out

    @property
    def smoothness(self) -> int:
        if self.declared_p is not None:
            return self.declared_p
        if self.kind == "power_kink":
            s = self.params["s"]
            if float(s).is_integer() and int(s) % 2 == 0:
                return SMOOTH_P
            return max(0, math.ceil(s + 0.5) - 1)
        return SMOOTH_P

    def centered(self, domain=(0.0, 1.0)) -> "TruthFunction":
        """减去区间均值，对应对数密度的 ∫h = 0 归一化"""
        lo, hi = domain
        mean = adaptive_integrate(lambda x: np.asarray(self(x), dtype=float), np.array([lo, hi])) / (hi - lo)
        return replace(self, shift=self.shift - mean)

    def to_dict(self) -> dict:
        if self.kind in ("spline_truth", "custom"):
            raise ValueError(f"truth kind '{self.kind}' cannot be serialized")
        out = {"kind": self.kind, **self.params}
        if self.kind == "ar_log_spectrum":
            out["phi"] = list(self.params["phi"])
        else:
            out.update(scale=self.scale, shift=self.shift)
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "TruthFunction":
        data = dict(payload)
        kind = data.pop("kind", None)
        if kind == "smooth_sin":
            return cls.smooth_sin(**data)
        if kind == "power_kink":
            return cls.power_kink(**data)
        if kind == "ar_log_spectrum":
            return cls.ar_log_spectrum(**data)
        raise ValueError(f"truth kind '{kind}' is not configurable; use one of smooth_sin, power_kink, ar_log_spectrum")


def truth_eval(t: TruthFunction, x):
    return t(x)


def truth_smoothness(t: TruthFunction) -> int:
    return t.smoothness


def check_stationary(phi: Sequence[float]) -> None:
    """1 - φ_1 z - ... - φ_p z^p 的根必须都在单位圆外"""
    coeffs = np.asarray(phi, dtype=float)
    if coeffs.size == 0:
        return
    roots = np.roots(np.concatenate([-coeffs[::-1], [1.0]]))
    if np.any(np.abs(roots) <= 1.0 + 1e-12):
        raise ValueError(f"AR coefficients {tuple(coeffs)} are not stationary (root inside the unit circle)")


def ar_log_spectral_density(lam, phi: Sequence[float], sigma: float = 1.0) -> np.ndarray:
    """log f(λ) = log(σ²/2π) - log|1 - Σ φ_j e^{-ijλ}|²"""
    lam = np.asarray(lam, dtype=float)
    j = np.arange(1, len(phi) + 1)
    transfer = 1.0 - np.exp(-1j * np.multiply.outer(lam, j)) @ np.asarray(phi, dtype=float)
    return math.log(sigma ** 2 / (2 * math.pi)) - np.log(np.abs(transfer) ** 2)


def design_density(design: str, domain=(0.0, 1.0)) -> Tuple[Callable[[np.ndarray], np.ndarray], int]:
    """设计密度及其多项式次数：uniform 或 ∝ 1 + u/2(u 为映射到 [0,1] 的位置)"""
    lo, hi = domain
    width = hi - lo
    if design == "uniform":
        return (lambda x: np.full_like(np.asarray(x, dtype=float), 1.0 / width)), 0
    if design == "linear":
        return (lambda x: (1.0 + 0.5 * (np.asarray(x, dtype=float) - lo) / width) / (1.25 * width)), 1
    raise ValueError(f"unknown design '{design}', expected one of {DESIGNS}")


def draw_design(rng: np.random.Generator, n: int, design: str, domain=(0.0, 1.0)) -> np.ndarray:
    lo, hi = domain
    u = rng.uniform(size=n)
    if design == "uniform":
        return lo + (hi - lo) * u
    if design == "linear":
        # F(v) = (v + v²/4) / 1.25 的逆
        return lo + (hi - lo) * (-2.0 + 2.0 * np.sqrt(1.0 + 1.25 * u))
    raise ValueError(f"unknown design '{design}', expected one of {DESIGNS}")


@dataclass(frozen=True)
class DGPSpec:
    model: str
    truth: TruthFunction
    n: int
    sigma: float = 1.0
    noise: str = "gaussian"
    tau: float = 0.5
    censor_bound: float = 2.0
    # 未给出时取 ar_log_spectrum 真值的参数
    ar: Optional[Tuple[float, ...]] = None
    ar_sigma: Optional[float] = None
    series_length: Optional[int] = None
    burn_in: int = 500
    design: str = "uniform"
    domain: Tuple[float, float] = (0.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODEL_NAMES:
            raise ValueError(f"unknown model '{self.model}', expected one of {MODEL_NAMES}")
        if self.n < 1:
            raise ValueError(f"sample size must be >= 1, got {self.n}")
        if self.sigma < 0 or (self.sigma == 0 and self.model != "gaussian"):
            raise ValueError(f"sigma must be positive (zero allowed only for gaussian), got {self.sigma}")
        if self.noise not in NOISES:
            raise ValueError(f"unknown noise '{self.noise}', expected one of {NOISES}")
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.censor_bound <= 0:
            raise ValueError(f"censor bound must be positive, got {self.censor_bound}")
        if self.design not in DESIGNS:
            raise ValueError(f"unknown design '{self.design}', expected one of {DESIGNS}")
        if self.model == "spectral":
            self._resolve_ar()
            if self.ar_sigma <= 0:
                raise ValueError(f"AR innovation sd must be positive, got {self.ar_sigma}")
            check_stationary(self.ar)
            if self.length < 4:
                raise ValueError(f"series length must be >= 4, got {self.length}")

    def _resolve_ar(self) -> None:
        """谱数据按真值声明的 AR 过程生成；显式给出的 ar / ar_sigma 必须与之一致"""
        ar = None if self.ar is None else tuple(float(v) for v in self.ar)
        ar_sigma = None if self.ar_sigma is None else float(self.ar_sigma)
        if self.truth.kind == "ar_log_spectrum":
            phi = tuple(self.truth.params["phi"])
            sigma = float(self.truth.params.get("sigma", 1.0))
            if ar is not None and ar != phi:
                raise ValueError(f"AR coefficients {ar} disagree with the truth's phi={phi}")
            if ar_sigma is not None and not math.isclose(ar_sigma, sigma):
                raise ValueError(f"AR innovation sd {ar_sigma} disagrees with the truth's sigma={sigma}")
            ar, ar_sigma = phi, sigma
        object.__setattr__(self, "ar", DEFAULT_AR if ar is None else ar)
        object.__setattr__(self, "ar_sigma", 1.0 if ar_sigma is None else ar_sigma)

    @property
    def length(self) -> int:
        return self.n if self.series_length is None else self.series_length

    def with_seed(self, seed: int) -> "DGPSpec":
        return replace(self, seed=seed)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def simulate_ar(rng: np.random.Generator, phi: Sequence[float], sigma: float, length: int, burn_in: int = 500) -> np.ndarray:
    check_stationary(phi)
    shocks = sigma * rng.standard_normal(length + burn_in)
    series = lfilter([1.0], np.concatenate([[1.0], -np.asarray(phi, dtype=float)]), shocks)
    return series[burn_in:]


def periodogram(series: np.ndarray) -> PeriodogramData:
    """I(λ_k) = |Σ_t x_t e^{-iλ_k t}|² / (2πT)，k = 1..[T/2]"""
    x = np.asarray(series, dtype=float)
    T = len(x)
    dft = np.fft.rfft(x)[1: T // 2 + 1]
    k = np.arange(1, T // 2 + 1)
    return PeriodogramData(2 * math.pi * k / T, np.abs(dft) ** 2 / (2 * math.pi * T), T)


def _quantile_noise(rng: np.random.Generator, dgp: DGPSpec) -> np.ndarray:
    # 平移使噪声的 τ 分位数为 0
    if dgp.noise == "gaussian":
        return dgp.sigma * (rng.standard_normal(dgp.n) - norm.ppf(dgp.tau))
    return dgp.sigma * (rng.standard_t(3, size=dgp.n) - student_t.ppf(dgp.tau, 3))


def generate(dgp: DGPSpec) -> Dataset:
    """按 DGPSpec 生成数据；相同 spec(含 seed)得到逐位相同的数据"""
    rng = make_rng(dgp.seed)
    truth = dgp.truth

    if dgp.model == "spectral":
        series = simulate_ar(rng, dgp.ar, dgp.ar_sigma, dgp.length, dgp.burn_in)
        return periodogram(series)

    if dgp.model == "logdensity":
        dist = ExpDensity(truth, dgp.domain)
        return PointsData(dist.sample(rng, dgp.n))

    x = draw_design(rng, dgp.n, dgp.design, dgp.domain)
    eta = truth(x)
    if dgp.model == "gaussian":
        return XYData(x, eta + dgp.sigma * rng.standard_normal(dgp.n))
    if dgp.model == "logistic":
        return XYData(x, (rng.uniform(size=dgp.n) < expit(eta)).astype(float))
    if dgp.model == "poisson":
        return XYData(x, rng.poisson(np.exp(eta)).astype(float))
    if dgp.model == "quantile":
        return XYData(x, eta + _quantile_noise(rng, dgp))
    if dgp.model == "hazard":
        survival = rng.exponential(1.0 / np.exp(eta))
        censor = rng.uniform(0.0, dgp.censor_bound, size=dgp.n)
        data = SurvivalData(x, np.minimum(survival, censor), survival <= censor)
        logger.debug(f"[Simulate] hazard 删失比例 {data.censoring_rate:.3f}")
        return data
    raise ValueError(f"no generator for model '{dgp.model}'")


def simulate_replications(dgp: DGPSpec, replications: int):
    """重复 r 使用 seed + r"""
    for r in range(replications):
        yield r, generate(dgp.with_seed(dgp.seed + r))
