"""
均值回归与指数族回归
  Gaussian:  ℓ(h) = -(1/n) Σ (Y_i - h(X_i))^2
  ExpFamily: ℓ(h) = (1/n) Σ [B(h(X_i)) Y_i - C(h(X_i))]，内置 Logistic 与 Poisson
"""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from core.Model.Dataset import XYData
from core.Model.ModelBase import ETA_LIMIT, PointwiseModel, guard_exponent

logger = logging.getLogger(__name__)

ScalarMap = Callable[[np.ndarray], np.ndarray]


class Gaussian(PointwiseModel):
    name = "gaussian"
    dataset_type = XYData

    def pointwise(self, eta, data: XYData):
        r = data.y - eta
        return -r ** 2, 2.0 * r, np.full_like(r, -2.0)


@dataclass(frozen=True)
class ExpFamilyLink:
    """B、C 及其一、二阶导，mean 为 A = C'/B'"""

    natural: ScalarMap
    natural_d1: ScalarMap
    natural_d2: ScalarMap
    cumulant: ScalarMap
    cumulant_d1: ScalarMap
    cumulant_d2: ScalarMap
    mean: ScalarMap
    eta_limit: float = np.inf


def _identity(eta):
    return eta


def _ones(eta):
    return np.ones_like(eta)


def _zeros(eta):
    return np.zeros_like(eta)


def _logistic_variance(eta):
    p = expit(eta)
    return p * (1.0 - p)


LOGISTIC_LINK = ExpFamilyLink(
    natural=_identity,
    natural_d1=_ones,
    natural_d2=_zeros,
    cumulant=lambda eta: np.logaddexp(0.0, eta),
    cumulant_d1=expit,
    cumulant_d2=_logistic_variance,
    mean=expit,
)

POISSON_LINK = ExpFamilyLink(
    natural=_identity,
    natural_d1=_ones,
    natural_d2=_zeros,
    cumulant=np.exp,
    cumulant_d1=np.exp,
    cumulant_d2=np.exp,
    mean=np.exp,
    eta_limit=ETA_LIMIT,
)


class ExpFamily(PointwiseModel):
    dataset_type = XYData

    def __init__(self, link: ExpFamilyLink, name: str = "expfamily"):
        self.link = link
        self.name = name

    def pointwise(self, eta, data: XYData):
        lk = self.link
        y = data.y
        if np.isfinite(lk.eta_limit):
            # 先截断再取指数，避免溢出
            safe = np.clip(eta, -lk.eta_limit, lk.eta_limit)
        else:
            safe = eta
        values = y * lk.natural(safe) - lk.cumulant(safe)
        d1 = y * lk.natural_d1(safe) - lk.cumulant_d1(safe)
        d2 = y * lk.natural_d2(safe) - lk.cumulant_d2(safe)
        if np.isfinite(lk.eta_limit):
            values = guard_exponent(eta, values, self.name)
        return values, d1, d2


class Logistic(ExpFamily):
    def __init__(self):
        super().__init__(LOGISTIC_LINK, name="logistic")

    def check_data(self, data, basis):
        super().check_data(data, basis)
        if not np.all(np.isin(data.y, (0.0, 1.0))):
            raise ValueError("logistic responses must be 0/1")


class Poisson(ExpFamily):
    def __init__(self):
        super().__init__(POISSON_LINK, name="poisson")

    def check_data(self, data, basis):
        super().check_data(data, basis)
        if np.any(data.y < 0) or np.any(data.y != np.round(data.y)):
            raise ValueError("poisson responses must be non-negative integers")
