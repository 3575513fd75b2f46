"""
对数密度估计
ℓ(h) = (1/n) Σ h(X_i) - log ∫ exp h，在 ∫ h = 0 的子空间上可识别

ExpDensity 把任意对数密度(未归一化)变成带 pdf / cdf / ppf 的分布，
用于拟合后的 KS 检验以及模拟时的逆 CDF 抽样。
"""

import logging
import math
from typing import Callable, Optional

import numpy as np

from core.Base.basis import BasisSpec, SplineFunction, eval_basis
from core.Base.quadrature import adaptive_rule, gauss_legendre_rule, piecewise_nodes
from core.Model.Constraints import zero_integral_constraint
from core.Model.Dataset import PointsData
from core.Model.ModelBase import Likelihood, ModelSpec

logger = logging.getLogger(__name__)

NORMALIZER_RTOL = 1e-10


class LogDensityLikelihood(Likelihood):
    def __init__(self, model: "LogDensity", data: PointsData, basis: BasisSpec):
        super().__init__(model, data, basis)
        self.mean_basis = eval_basis(basis, data.x).mean(axis=0)
        self._cache_key: Optional[bytes] = None
        self._cache = None

    def _moments(self, coeffs: np.ndarray):
        """log Z 以及当前密度下基函数的均值与二阶矩，同一自适应划分上计算"""
        key = coeffs.tobytes()
        if key == self._cache_key:
            return self._cache
        spline = SplineFunction(self.basis, coeffs)
        # 以粗网格最大值平移，避免 exp 溢出
        coarse, _ = piecewise_nodes(self.basis.breakpoints, self.basis.degree + 2)
        shift = float(np.max(spline(coarse)))
        if not np.isfinite(shift):
            self._cache_key, self._cache = key, None
            return None
        rule = adaptive_rule(lambda x: np.exp(spline(x) - shift), self.basis.breakpoints, rtol=NORMALIZER_RTOL)
        z = float(rule.value)
        if not np.isfinite(z) or z <= 0:
            self._cache_key, self._cache = key, None
            return None
        B = eval_basis(self.basis, rule.nodes)
        p = rule.weights * np.exp(spline(rule.nodes) - shift) / z
        mean = p @ B
        second = (B * p[:, None]).T @ B
        self._cache_key, self._cache = key, (shift + math.log(z), mean, second)
        return self._cache

    def value(self, coeffs) -> float:
        c = np.asarray(coeffs, dtype=float)
        moments = self._moments(c)
        if moments is None:
            return -np.inf
        return float(self.mean_basis @ c - moments[0])

    def gradient(self, coeffs) -> np.ndarray:
        moments = self._moments(np.asarray(coeffs, dtype=float))
        if moments is None:
            raise ValueError("log-normalizer is not finite at these coefficients")
        return self.mean_basis - moments[1]

    def curvature(self, coeffs) -> np.ndarray:
        moments = self._moments(np.asarray(coeffs, dtype=float))
        if moments is None:
            raise ValueError("log-normalizer is not finite at these coefficients")
        _, mean, second = moments
        H = -(second - np.outer(mean, mean))
        return 0.5 * (H + H.T)

    def log_normalizer(self, coeffs) -> float:
        moments = self._moments(np.asarray(coeffs, dtype=float))
        return np.inf if moments is None else moments[0]


class LogDensity(ModelSpec):
    name = "logdensity"
    dataset_type = PointsData

    def _bind(self, data: PointsData, basis: BasisSpec) -> LogDensityLikelihood:
        return LogDensityLikelihood(self, data, basis)

    def default_constraints(self, basis: BasisSpec):
        return zero_integral_constraint(basis)


class ExpDensity:
    """
    [lo, hi] 上密度 ∝ exp(log_density(x))
    把区间细分成 cells 个小格，每格用 Gauss–Legendre 积分建立 CDF 表；
    cdf 在格内再做一次 Gauss 积分，ppf 用带保护的 Newton 迭代
    """

    def __init__(
        self,
        log_density: Callable[[np.ndarray], np.ndarray],
        domain=(0.0, 1.0),
        breakpoints: Optional[np.ndarray] = None,
        cells: int = 2048,
        n_nodes: int = 12,
    ):
        lo, hi = float(domain[0]), float(domain[1])
        if not lo < hi:
            raise ValueError(f"density domain must satisfy lo < hi, got [{lo}, {hi}]")
        base = np.array([lo, hi]) if breakpoints is None else np.asarray(breakpoints, dtype=float)
        per = max(1, math.ceil(cells / (len(base) - 1)))
        t = np.linspace(0.0, 1.0, per + 1)[:-1]
        edges = (base[:-1, None] + np.diff(base)[:, None] * t[None, :]).ravel()
        self.edges = np.append(edges, base[-1])
        self.lo, self.hi = lo, hi
        self._log_density = log_density
        self._n_nodes = n_nodes

        x, w = piecewise_nodes(self.edges, n_nodes)
        logf = np.asarray(log_density(x), dtype=float)
        if np.any(~np.isfinite(logf)):
            raise ValueError("log-density must be finite on the domain")
        self.shift = float(logf.max())
        mass = (w * np.exp(logf - self.shift)).reshape(-1, n_nodes).sum(axis=1)
        self.total = float(mass.sum())
        self.log_normalizer = self.shift + math.log(self.total)
        self.cumulative = np.concatenate([[0.0], np.cumsum(mass) / self.total])

    def pdf(self, x) -> np.ndarray:
        xs = np.asarray(x, dtype=float)
        return np.exp(np.asarray(self._log_density(xs), dtype=float) - self.log_normalizer)

    def cdf(self, x) -> np.ndarray:
        xs = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        flat = np.atleast_1d(xs).ravel()
        cell = np.clip(np.searchsorted(self.edges, flat, side="right") - 1, 0, len(self.edges) - 2)
        left = self.edges[cell]
        t, wt = gauss_legendre_rule(self._n_nodes)
        half = 0.5 * (flat - left)
        pts = (left + half)[:, None] + half[:, None] * t[None, :]
        partial = (half[:, None] * wt[None, :] * self.pdf(pts.ravel()).reshape(pts.shape)).sum(axis=1)
        out = np.clip(self.cumulative[cell] + partial, 0.0, 1.0)
        return out.reshape(xs.shape) if xs.ndim else float(out[0])

    def ppf(self, u, tol: float = 1e-10, max_iter: int = 60) -> np.ndarray:
        """逆 CDF：先在所在小格内线性插值，再做限制在小格内的 Newton 迭代"""
        us = np.atleast_1d(np.asarray(u, dtype=float))
        if np.any((us < 0) | (us > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        cell = np.clip(np.searchsorted(self.cumulative, us, side="right") - 1, 0, len(self.edges) - 2)
        a, b = self.edges[cell], self.edges[cell + 1]
        fa, fb = self.cumulative[cell], self.cumulative[cell + 1]
        frac = np.where(fb > fa, (us - fa) / np.where(fb > fa, fb - fa, 1.0), 0.0)
        x = a + frac * (b - a)
        for _ in range(max_iter):
            resid = self.cdf(x) - us
            if np.max(np.abs(resid)) <= tol:
                break
            dens = self.pdf(x)
            step = np.where(dens > 0, resid / np.where(dens > 0, dens, 1.0), 0.0)
            x = np.clip(x - step, a, b)
        return x if np.ndim(u) else float(x[0])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.ppf(rng.uniform(size=size))


def fitted_density(basis: BasisSpec, coeffs, cells: int = 2048) -> ExpDensity:
    """拟合结果 exp(ĥ) 归一化后的分布(pdf 积分为 1，带 cdf)"""
    spline = SplineFunction(basis, coeffs)
    return ExpDensity(spline, basis.domain, breakpoints=basis.breakpoints, cells=cells)
