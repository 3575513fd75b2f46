"""
周期图的 Whittle 型对数似然
ℓ(h) = (1/[T/2]) Σ_k (δ_π(λ_k)/2 - 1) [h(λ_k) + I_k exp(-h(λ_k))]，k = 1..[T/2]
在约束空间 g'(0) = g'''(0) = g'(π) = g'''(π) = 0 上拟合 log 谱密度
"""

import math

import numpy as np

from core.Base.basis import BasisSpec
from core.Model.Constraints import spectral_boundary_constraints
from core.Model.Dataset import PeriodogramData
from core.Model.ModelBase import ETA_LIMIT, PointwiseModel, guard_exponent


class Spectral(PointwiseModel):
    name = "spectral"
    dataset_type = PeriodogramData

    def pointwise(self, eta, data: PeriodogramData):
        weight = np.where(data.is_boundary, -0.5, -1.0)
        scaled = data.periodogram * np.exp(-np.clip(eta, -ETA_LIMIT, ETA_LIMIT))
        values = guard_exponent(eta, weight * (eta + scaled), self.name)
        return values, weight * (1.0 - scaled), weight * scaled

    def scale(self, data: PeriodogramData) -> float:
        return data.half_length

    def check_data(self, data, basis: BasisSpec) -> None:
        super().check_data(data, basis)
        lo, hi = basis.domain
        if abs(lo) > 1e-12 or abs(hi - math.pi) > 1e-12:
            raise ValueError(f"spectral basis must live on [0, π], got [{lo}, {hi}]")

    def default_constraints(self, basis: BasisSpec):
        return spectral_boundary_constraints(basis)

    def initial_coeffs(self, data: PeriodogramData, basis: BasisSpec) -> np.ndarray:
        # 常数 log(mean I)：B 样条单位分解，常数函数的系数全相同
        level = math.log(max(float(np.mean(data.periodogram)), 1e-300))
        return np.full(basis.dim, level)


def spectral_density(fit_spline, lam) -> np.ndarray:
    """exp(η̂(λ))：拟合的谱密度"""
    return np.exp(fit_spline(lam))
