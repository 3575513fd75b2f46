"""
时间不变协变量的风险函数模型
ℓ(h) = (1/n) Σ [event_i h(X_i) - (T_i∧C_i) exp h(X_i)]
"""

import numpy as np

from core.Model.Dataset import SurvivalData
from core.Model.ModelBase import ETA_LIMIT, PointwiseModel, guard_exponent


class Hazard(PointwiseModel):
    name = "hazard"
    dataset_type = SurvivalData

    def pointwise(self, eta, data: SurvivalData):
        exposure = data.time * np.exp(np.clip(eta, -ETA_LIMIT, ETA_LIMIT))
        event = data.event.astype(float)
        values = guard_exponent(eta, event * eta - exposure, self.name)
        return values, event - exposure, -exposure
