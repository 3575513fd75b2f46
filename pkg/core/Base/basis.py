"""
B 样条基
节点向量、基函数及导数求值、L2 Gram 矩阵、最佳 L2 投影、复杂度常数 A_n 与经验范数比
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from core.Base.quadrature import adaptive_integrate, piecewise_nodes

logger = logging.getLogger(__name__)

KNOT_SCHEMES = ("equal", "jittered")
# 权函数 w(x) > 0，向量化
WeightFunction = Optional[Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class KnotVector:
    """[domain_lo, domain_hi] 上严格递增的内节点，mesh ratio 不超过 ratio_bound"""

    domain_lo: float
    domain_hi: float
    interior: Tuple[float, ...] = ()
    ratio_bound: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "interior", tuple(float(t) for t in self.interior))
        if not self.domain_lo < self.domain_hi:
            raise ValueError(f"domain must satisfy lo < hi, got [{self.domain_lo}, {self.domain_hi}]")
        if self.ratio_bound < 1:
            raise ValueError(f"ratio_bound must be >= 1, got {self.ratio_bound}")
        bp = self.breakpoints
        if np.any(np.diff(bp) <= 0):
            raise ValueError("interior knots must be strictly increasing and inside the open domain")
        if self.mesh_ratio > self.ratio_bound * (1 + 1e-9):
            raise ValueError(f"mesh ratio {self.mesh_ratio:.4g} exceeds bound {self.ratio_bound}")

    @property
    def count(self) -> int:
        return len(self.interior)

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array((self.domain_lo, *self.interior, self.domain_hi), dtype=float)

    @property
    def spacings(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def mesh_size(self) -> float:
        return float(self.spacings.max())

    @property
    def mesh_ratio(self) -> float:
        h = self.spacings
        return float(h.max() / h.min())


def make_knots(
    a: float,
    b: float,
    k: int,
    scheme: str = "equal",
    ratio_bound: float = 2.0,
    seed: Optional[int] = None,
) -> KnotVector:
    """
    生成 k 个内节点
    - equal: 等距
    - jittered: 间距 h(1+u)，u ~ U[-r, r]，r = (bound-1)/(bound+1)，保证 mesh ratio <= bound
    """
    if k < 0:
        raise ValueError(f"knot count must be >= 0, got {k}")
    if not a < b:
        raise ValueError(f"knot request needs a < b, got a={a}, b={b}")
    if ratio_bound < 1:
        raise ValueError(f"ratio_bound must be >= 1, got {ratio_bound}")

    if scheme == "equal":
        interior = np.linspace(a, b, k + 2)[1:-1]
        return KnotVector(a, b, tuple(interior), ratio_bound=max(ratio_bound, 1.0))
    if scheme == "jittered":
        r = (ratio_bound - 1.0) / (ratio_bound + 1.0)
        rng = np.random.default_rng(seed)
        h = 1.0 + r * rng.uniform(-1.0, 1.0, size=k + 1)
        cuts = np.cumsum(h)[:-1] / h.sum()
        interior = a + (b - a) * cuts
        return KnotVector(a, b, tuple(interior), ratio_bound=ratio_bound)
    raise ValueError(f"unknown knot scheme '{scheme}', expected one of {KNOT_SCHEMES}")


@dataclass(frozen=True)
class BasisSpec:
    """m 次 B 样条基，维数 N = m + k + 1"""

    knots: KnotVector
    degree: int

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 0:
            raise ValueError(f"degree must be a non-negative integer, got {self.degree}")

    @property
    def dim(self) -> int:
        return self.degree + self.knots.count + 1

    @property
    def domain(self) -> Tuple[float, float]:
        return self.knots.domain_lo, self.knots.domain_hi

    @property
    def breakpoints(self) -> np.ndarray:
        return self.knots.breakpoints

    @cached_property
    def full_knots(self) -> np.ndarray:
        """两端各重复 m+1 次的完整节点序列"""
        lo, hi = self.domain
        m = self.degree
        return np.concatenate([np.full(m + 1, lo), np.asarray(self.knots.interior), np.full(m + 1, hi)])

    @cached_property
    def _identity(self) -> BSpline:
        return BSpline(self.full_knots, np.eye(self.dim), self.degree, extrapolate=False)

    def check_points(self, x) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        lo, hi = self.domain
        slack = 1e-12 * (hi - lo)
        if xs.size and (np.any(~np.isfinite(xs)) or xs.min() < lo - slack or xs.max() > hi + slack):
            raise ValueError(f"evaluation points must lie in [{lo}, {hi}]")
        return np.clip(xs, lo, hi)


def eval_basis(basis: BasisSpec, x, deriv: int = 0) -> np.ndarray:
    """
    返回 B_j^{(deriv)}(x)，形状 (len(x), N)；标量 x 返回 (N,)
    在内节点处取右导数，右端点属于最后一个区间
    """
    if deriv < 0 or deriv > basis.degree:
        raise ValueError(f"derivative order {deriv} outside [0, {basis.degree}]")
    scalar = np.ndim(x) == 0
    xs = basis.check_points(x)
    values = basis._identity(xs, nu=deriv)
    return values[0] if scalar else values


def design_matrix(basis: BasisSpec, x) -> "scipy.sparse.csr_array":
    """稀疏设计矩阵(每行最多 m+1 个非零元)"""
    xs = basis.check_points(x)
    return BSpline.design_matrix(xs, basis.full_knots, basis.degree)


@dataclass(frozen=True, eq=False)
class SplineFunction:
    """基上的系数向量 g = sum_j c_j B_j"""

    basis: BasisSpec
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.basis.dim,):
            raise ValueError(f"expected {self.basis.dim} coefficients, got shape {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @cached_property
    def _spline(self) -> BSpline:
        return BSpline(self.basis.full_knots, self.coeffs, self.basis.degree, extrapolate=False)

    def __call__(self, x, deriv: int = 0):
        if deriv < 0 or deriv > self.basis.degree:
            raise ValueError(f"derivative order {deriv} outside [0, {self.basis.degree}]")
        scalar = np.ndim(x) == 0
        values = self._spline(self.basis.check_points(x), nu=deriv)
        return float(values[0]) if scalar else values

    def continuity_defect(self, step: float = 1e-9) -> float:
        """内节点处 0..m-1 阶导数左右跳跃的最大值(数值检验 C^{m-1} 连续)"""
        knots = np.asarray(self.basis.knots.interior)
        if knots.size == 0 or self.basis.degree == 0:
            return 0.0
        h = step * (self.basis.domain[1] - self.basis.domain[0])
        jumps = [
            np.abs(self._spline(knots + h, nu=r) - self._spline(knots - h, nu=r)).max()
            for r in range(self.basis.degree)
        ]
        return float(max(jumps))


def _weight_values(weight: WeightFunction, x: np.ndarray) -> np.ndarray:
    if weight is None:
        return np.ones_like(x)
    wx = np.broadcast_to(np.asarray(weight(x), dtype=float), x.shape)
    if np.any(~np.isfinite(wx)) or np.any(wx <= 0):
        raise ValueError("weight function must be positive on the domain")
    return wx


def l2_gram(basis: BasisSpec, weight: WeightFunction = None, weight_degree: int = 0) -> np.ndarray:
    """
    G_ij = ∫ B_i B_j w
    每个节点区间用 ceil((2m + deg(w) + 1)/2) 个 Gauss 节点，w 为多项式时精确；
    |i-j| > m 的元素严格为零
    """
    m = basis.degree
    n_nodes = max(1, math.ceil((2 * m + weight_degree + 1) / 2))
    x, w = piecewise_nodes(basis.breakpoints, n_nodes)
    wx = _weight_values(weight, x)
    B = eval_basis(basis, x)
    G = (B * (w * wx)[:, None]).T @ B
    return 0.5 * (G + G.T)


class Projection(NamedTuple):
    spline: SplineFunction
    l2_error: float


def best_l2_projection(
    basis: BasisSpec,
    f: Callable[[np.ndarray], np.ndarray],
    weight: WeightFunction = None,
    weight_degree: int = 0,
    rtol: float = 1e-10,
) -> Projection:
    """argmin_g ||g - f||_{2,w}：自适应积分得到右端项，解 G c = r，并报告残差范数"""
    G = l2_gram(basis, weight, weight_degree)
    rhs = adaptive_integrate(
        lambda x: eval_basis(basis, x) * (np.asarray(f(x), dtype=float) * _weight_values(weight, x))[:, None],
        basis.breakpoints,
        rtol=rtol,
    )
    try:
        coeffs = cho_solve(cho_factor(G), rhs)
    except LinAlgError as e:
        raise ValueError(f"Gram matrix is not positive definite: {e}") from e
    spline = SplineFunction(basis, coeffs)
    err2 = adaptive_integrate(
        lambda x: (spline(x) - f(x)) ** 2 * _weight_values(weight, x),
        basis.breakpoints,
        rtol=rtol,
    )
    return Projection(spline, math.sqrt(max(err2, 0.0)))


def complexity_constant(basis: BasisSpec, grid_density: int = 64) -> float:
    """
    A_n = sup_x sup_g |g(x)| / ||g||_2 = sup_x sqrt(b(x)^T G^{-1} b(x))
    在每个节点区间取 grid_density 个点(含端点)求上确界
    """
    if grid_density < 16:
        raise ValueError(f"grid_density must be >= 16, got {grid_density}")
    bp = basis.breakpoints
    t = np.linspace(0.0, 1.0, grid_density)
    grid = np.unique((bp[:-1, None] + np.diff(bp)[:, None] * t[None, :]).ravel())
    B = eval_basis(basis, grid)
    G = l2_gram(basis)
    solved = cho_solve(cho_factor(G), B.T)
    quad = np.einsum("ij,ji->i", B, solved)
    return float(math.sqrt(quad.max()))


def uniform_density(basis: BasisSpec) -> Callable[[np.ndarray], np.ndarray]:
    lo, hi = basis.domain
    return lambda x: np.full_like(np.asarray(x, dtype=float), 1.0 / (hi - lo))


def empirical_norm_ratio(
    basis: BasisSpec,
    sample,
    trials: int = 200,
    density: WeightFunction = None,
    density_degree: int = 0,
    sample_weights: Optional[np.ndarray] = None,
    seed: int = 0,
) -> float:
    """
    随机系数 g 上 max |‖g‖_n / ‖g‖ - 1|
    ‖g‖ 用设计密度(默认均匀)加权的 Gram 矩阵；sample_weights 给出时 ‖g‖_n 为加权平均
    """
    xs = np.asarray(sample, dtype=float)
    if xs.size == 0:
        raise ValueError("empirical norm needs a non-empty sample")
    if density is None:
        density = uniform_density(basis)
    G = l2_gram(basis, density, density_degree)
    B = eval_basis(basis, np.atleast_1d(xs))
    if sample_weights is None:
        p = np.full(B.shape[0], 1.0 / B.shape[0])
    else:
        sw = np.asarray(sample_weights, dtype=float)
        p = sw / sw.sum()

    rng = np.random.default_rng(seed)
    C = rng.standard_normal((basis.dim, trials))
    vals = B @ C
    emp = p @ vals ** 2
    theo = np.einsum("it,ij,jt->t", C, G, C)
    ratio = np.sqrt(emp / theo)
    dev = float(np.abs(ratio - 1.0).max())
    logger.debug(f"[Basis] 经验范数比: n={xs.size}, N={basis.dim}, max|ratio-1|={dev:.4g}")
    return dev
