import math
from pathlib import Path

import numpy as np
import pytest

from core.Base.basis import BasisSpec, make_knots
from core.Base.penalty import penalty_gram
from core.simulate import DGPSpec, TruthFunction, generate

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

# 七个模型；分位数用小 ε 的平滑版本，保证最优解唯一
CERTIFICATE_MODELS = [
    ("gaussian", {}),
    ("logistic", {}),
    ("poisson", {}),
    ("hazard", {}),
    ("logdensity", {}),
    ("spectral", {}),
    ("quantile", {"tau": 0.3, "smoothing": 0.01}),
]


def unit_basis(m: int, k: int, scheme: str = "equal", seed: int = 0, a: float = 0.0, b: float = 1.0) -> BasisSpec:
    return BasisSpec(make_knots(a, b, k, scheme, seed=seed), m)


def certificate_problem(name: str, seed: int, n: int = 300):
    """第 seed 个随机实例：真值参数随 seed 变化，返回 (data, basis, pen)"""
    draw = np.random.default_rng(seed)
    if name == "spectral":
        truth = TruthFunction.ar_log_spectrum((float(draw.uniform(-0.6, 0.6)),))
        basis = unit_basis(3, 6, b=math.pi)
        data = generate(DGPSpec("spectral", truth, n=256, seed=seed))
    else:
        truth = TruthFunction.smooth_sin(
            freq=float(draw.uniform(0.5, 1.5)),
            scale=float(draw.uniform(0.3, 1.0)),
            shift=float(draw.uniform(-0.3, 0.3)),
        )
        basis = unit_basis(3, 6)
        data = generate(DGPSpec(name, truth, n=n, seed=seed))
    return data, basis, penalty_gram(basis, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def isolated_env(tmp_path, monkeypatch):
    """在空目录中运行，运行时设置只来自默认值"""
    monkeypatch.chdir(tmp_path)
    for key in ("SPLINE_WORKERS", "SPLINE_LOG_LEVEL", "SPLINE_OUTPUT_DIR"):
        monkeypatch.delenv(key, raising=False)
    return tmp_path
