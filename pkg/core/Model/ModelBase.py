"""
凹扩展线性模型的公共接口
ModelSpec.bind(data, basis) 得到 Likelihood，后者提供系数空间上的
objective / gradient / curvature。逐点模型只需实现 pointwise(eta, data)。
"""

import logging
from abc import ABC, abstractmethod
from typing import Optional, Tuple

import numpy as np
from scipy.sparse import diags_array

from core.Base.basis import BasisSpec, design_matrix
from core.Model.Dataset import Dataset

logger = logging.getLogger(__name__)

# 指数项的安全范围，超出即视为发散
ETA_LIMIT = 30.0


class Likelihood(ABC):
    """绑定了数据和基的对数似然 ℓ(c)"""

    def __init__(self, model: "ModelSpec", data: Dataset, basis: BasisSpec):
        self.model = model
        self.data = data
        self.basis = basis

    @abstractmethod
    def value(self, coeffs: np.ndarray) -> float:
        ...

    @abstractmethod
    def gradient(self, coeffs: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def curvature(self, coeffs: np.ndarray) -> np.ndarray:
        ...


class ModelSpec(ABC):
    name: str = "model"
    dataset_type: type = object

    def check_data(self, data: Dataset, basis: BasisSpec) -> None:
        if not isinstance(data, self.dataset_type):
            raise ValueError(
                f"model '{self.name}' expects {self.dataset_type.__name__}, got {type(data).__name__}"
            )
        if data.size == 0:
            raise ValueError(f"model '{self.name}' needs a non-empty dataset")
        basis.check_points(data.locations)

    def bind(self, data: Dataset, basis: BasisSpec) -> Likelihood:
        self.check_data(data, basis)
        return self._bind(data, basis)

    @abstractmethod
    def _bind(self, data: Dataset, basis: BasisSpec) -> Likelihood:
        ...

    def default_constraints(self, basis: BasisSpec):
        """模型自带的可识别性约束，默认无"""
        return None

    def initial_coeffs(self, data: Dataset, basis: BasisSpec) -> np.ndarray:
        return np.zeros(basis.dim)

    @property
    def twice_differentiable(self) -> bool:
        return True

    def describe(self) -> dict:
        return {"name": self.name}

    def __repr__(self) -> str:
        params = ", ".join(f"{k}={v}" for k, v in self.describe().items() if k != "name")
        return f"{type(self).__name__}({params})"


class PointwiseLikelihood(Likelihood):
    """ℓ(c) = (1/scale) Σ_i l_i(η_i)，η = B c，B 为稀疏设计矩阵"""

    def __init__(self, model: "PointwiseModel", data: Dataset, basis: BasisSpec):
        super().__init__(model, data, basis)
        self.design = design_matrix(basis, data.locations)
        self.scale = float(model.scale(data))

    def _terms(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        return self.model.pointwise(self.design @ c, self.data)

    def value(self, coeffs) -> float:
        values, _, _ = self._terms(coeffs)
        total = float(np.sum(values)) / self.scale
        return total if np.isfinite(total) else -np.inf

    def gradient(self, coeffs) -> np.ndarray:
        _, d1, _ = self._terms(coeffs)
        return self.design.T @ d1 / self.scale

    def curvature(self, coeffs) -> np.ndarray:
        if not self.model.twice_differentiable:
            raise ValueError(f"model '{self.model.name}' is not twice differentiable; use the smoothed variant")
        _, _, d2 = self._terms(coeffs)
        H = (self.design.T @ diags_array(d2) @ self.design).toarray() / self.scale
        return 0.5 * (H + H.T)


class PointwiseModel(ModelSpec):
    """对数似然是 η(X_i) 的逐点函数之和的模型"""

    @abstractmethod
    def pointwise(self, eta: np.ndarray, data: Dataset) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        """返回每个观测的 (l_i, dl_i/dη, d²l_i/dη²)；二阶导不存在时返回 None"""

    def scale(self, data: Dataset) -> float:
        return data.size

    def _bind(self, data: Dataset, basis: BasisSpec) -> Likelihood:
        return PointwiseLikelihood(self, data, basis)


def guard_exponent(eta: np.ndarray, values: np.ndarray, name: str) -> np.ndarray:
    """|η| 超出 ETA_LIMIT 时把对应项置为 -inf，交给求解器作为发散处理"""
    bad = np.abs(eta) > ETA_LIMIT
    if np.any(bad):
        logger.warning(f"[{name}] 线性预测值超出 ±{ETA_LIMIT:g}，目标函数视为发散 ({int(bad.sum())} 个观测)")
        values = np.where(bad, -np.inf, values)
    return values


def _resolve(model: ModelSpec, basis: BasisSpec, coeffs, constraints):
    c = np.asarray(coeffs, dtype=float)
    if constraints is not None and c.shape == (constraints.nullbasis.shape[1],):
        return constraints.expand(c), True
    if c.shape != (basis.dim,):
        raise ValueError(f"expected {basis.dim} coefficients, got shape {c.shape}")
    return c, False


def objective(model: ModelSpec, data: Dataset, basis: BasisSpec, coeffs, constraints=None) -> float:
    """ℓ(g)，coeffs 可以是完整系数或约束下的约化坐标"""
    c, _ = _resolve(model, basis, coeffs, constraints)
    return model.bind(data, basis).value(c)


def gradient(model: ModelSpec, data: Dataset, basis: BasisSpec, coeffs, constraints=None) -> np.ndarray:
    c, reduced = _resolve(model, basis, coeffs, constraints)
    g = model.bind(data, basis).gradient(c)
    return constraints.nullbasis.T @ g if reduced else g


def curvature(model: ModelSpec, data: Dataset, basis: BasisSpec, coeffs, constraints=None) -> np.ndarray:
    c, reduced = _resolve(model, basis, coeffs, constraints)
    H = model.bind(data, basis).curvature(c)
    if reduced:
        Z = constraints.nullbasis
        return Z.T @ H @ Z
    return H
