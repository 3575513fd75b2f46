"""
按名称构造模型
"""

from core.Model.Hazard import Hazard
from core.Model.LogDensity import LogDensity
from core.Model.ModelBase import ModelSpec
from core.Model.Quantile import Quantile
from core.Model.Regression import Gaussian, Logistic, Poisson
from core.Model.Spectral import Spectral

MODEL_NAMES = ("gaussian", "logistic", "poisson", "logdensity", "hazard", "quantile", "spectral")

DATASET_KIND_OF = {
    "gaussian": "xy",
    "logistic": "xy",
    "poisson": "xy",
    "quantile": "xy",
    "logdensity": "points",
    "hazard": "survival",
    "spectral": "periodogram",
}


def build_model(name: str, **params) -> ModelSpec:
    """
    name 不区分大小写；只有 quantile 接受参数(tau, smoothing)
    """
    key = name.lower()
    if key == "quantile":
        return Quantile(**params)
    builders = {
        "gaussian": Gaussian,
        "logistic": Logistic,
        "poisson": Poisson,
        "logdensity": LogDensity,
        "hazard": Hazard,
        "spectral": Spectral,
    }
    if key not in builders:
        raise ValueError(f"unknown model '{name}', expected one of {MODEL_NAMES}")
    if params:
        raise ValueError(f"model '{name}' takes no parameters, got {sorted(params)}")
    return builders[key]()
