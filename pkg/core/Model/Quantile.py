"""
分位数回归
ℓ(h) = -(1/n) Σ ρ_τ(Y_i - h(X_i))

smoothing ε > 0 时用平滑 check 函数：|u| <= ε 上为二次 u²/(2ε)，外侧为 |u| - ε/2，
在 ±ε 处值与斜率连续，再按 τ / (1-τ) 加权。ε = 0 为原始 check 函数，
梯度取 ψ_τ(u) = τ - 1{u < 0}(u = 0 处取右导数)，没有 Hessian。
"""

import numpy as np

from core.Model.Dataset import XYData
from core.Model.ModelBase import PointwiseModel


def check_loss(u: np.ndarray, tau: float, smoothing: float = 0.0) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    side = np.where(u >= 0, tau, 1.0 - tau)
    if smoothing == 0:
        return side * np.abs(u)
    inside = np.abs(u) <= smoothing
    return side * np.where(inside, u ** 2 / (2 * smoothing), np.abs(u) - smoothing / 2)


class Quantile(PointwiseModel):
    name = "quantile"
    dataset_type = XYData

    def __init__(self, tau: float = 0.5, smoothing: float = 0.0):
        if not 0 < tau < 1:
            raise ValueError(f"tau must lie in (0, 1), got {tau}")
        if smoothing < 0:
            raise ValueError(f"smoothing must be >= 0, got {smoothing}")
        self.tau = float(tau)
        self.smoothing = float(smoothing)

    def with_smoothing(self, smoothing: float) -> "Quantile":
        return Quantile(self.tau, smoothing)

    @property
    def twice_differentiable(self) -> bool:
        return self.smoothing > 0

    def describe(self) -> dict:
        return {"name": self.name, "tau": self.tau, "smoothing": self.smoothing}

    def pointwise(self, eta, data: XYData):
        u = data.y - eta
        eps = self.smoothing
        values = -check_loss(u, self.tau, eps)
        side = np.where(u >= 0, self.tau, 1.0 - self.tau)
        if eps == 0:
            # d/dη [-ρ(y-η)] = ψ(u)
            return values, np.where(u < 0, self.tau - 1.0, self.tau), None
        inside = np.abs(u) <= eps
        d1 = side * np.where(inside, u / eps, np.sign(u))
        d2 = np.where(inside, -side / eps, 0.0)
        return values, d1, d2
